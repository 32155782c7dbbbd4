import numpy as np
import pytest

from tamio.errors import ConfigError, OverlapError, UnwrittenReadError
from tamio.model import (AggregatorLayout, ProcRequest, RequestList, SimFile, StripeConfig, Topology, fill_bytes,
                         origin_key, rank_to_node, split_origin, stripe_of)


@pytest.mark.parametrize("rank, q, node", [(0, 8, 0), (7, 8, 0), (8, 8, 1), (65, 64, 1)])
def test_rank_to_node(rank, q, node):
    assert rank_to_node(rank, Topology(4, q)) == node


@pytest.mark.parametrize("rank", [-1, 32])
def test_rank_to_node_out_of_range(rank):
    with pytest.raises(ConfigError):
        rank_to_node(rank, Topology(4, 8))


@pytest.mark.parametrize("offset, stripe", [(0, 0), (1048576, 1), (2_500_000, 2)])
def test_stripe_of(offset, stripe):
    assert stripe_of(offset, StripeConfig(1 << 20)) == stripe


def test_topology():
    topo = Topology.from_counts(24, 3)
    assert topo.procs_per_node == 8
    assert sum(len(topo.ranks_on_node(n)) for n in range(topo.num_nodes)) == topo.nprocs
    with pytest.raises(ConfigError):
        Topology.from_counts(10, 3)
    with pytest.raises(ConfigError):
        Topology(0, 4)


def test_stripe_config_rejects_bad_values():
    with pytest.raises(ConfigError) as err:
        StripeConfig(0)
    assert err.value.field == 'stripe_size'
    with pytest.raises(ConfigError):
        StripeConfig(64, 0)


def test_fill_bytes_formula():
    assert list(fill_bytes(0, 0, 2)) == [5, 18]
    assert fill_bytes(3, 10, 1)[0] == (3 * 167 + 10 * 13 + 5) % 256


def test_proc_request_stream():
    p = ProcRequest(2, RequestList.from_pairs([(0, 3), (10, 2)]))
    assert p.fill_seed == 2
    assert p.total_bytes == 5
    assert p.stream_positions() == [0, 3]
    assert np.array_equal(p.data(), fill_bytes(2, 0, 5))


def test_origin_key_orders_by_rank_then_seq():
    assert origin_key(1, 0) > origin_key(0, 1000)
    assert split_origin(origin_key(5, 7)) == (5, 7)


def test_layout_rejects_global_that_is_not_local():
    topo = Topology(1, 4)
    with pytest.raises(ConfigError) as err:
        AggregatorLayout(topo, (0,), (1,), (0, 0, 0, 0))
    assert err.value.field == 'global_aggs'


def test_layout_rejects_bad_group():
    topo = Topology(2, 2)
    with pytest.raises(ConfigError):
        # rank 2 lives on node 1 but is assigned to rank 0
        AggregatorLayout(topo, (0, 3), (0,), (0, 0, 0, 3))


def test_layout_members():
    topo = Topology(1, 5)
    layout = AggregatorLayout(topo, (0, 3), (0,), (0, 0, 0, 3, 3))
    assert layout.members(0) == (0, 1, 2)
    assert layout.members(3) == (3, 4)
    assert not layout.is_two_phase()


class TestSimFile:

    def test_write_read(self):
        f = SimFile(page_size=16)
        data = np.frombuffer(b'ABCDEFGH', dtype=np.uint8)
        f.write(0, data)
        assert f.read(0, 8).tobytes() == b'ABCDEFGH'

    def test_write_across_pages(self):
        f = SimFile(page_size=16)
        data = np.arange(40, dtype=np.uint8)
        f.write(10, data)
        assert np.array_equal(f.read(10, 40), data)
        assert f.page_numbers() == [0, 1, 2, 3]
        assert [tuple(e) for e in f.extents()] == [(10, 40)]

    def test_unwritten_read_is_detected(self):
        f = SimFile(page_size=16)
        f.write(0, np.zeros(4, dtype=np.uint8))
        with pytest.raises(UnwrittenReadError) as err:
            f.read(0, 6)
        assert err.value.offset == 4
        with pytest.raises(UnwrittenReadError):
            f.read(100, 1)

    def test_strict_overlap_names_both_origins(self):
        f = SimFile(page_size=16)
        f.write(0, np.zeros(8, dtype=np.uint8), origin=origin_key(2, 0))
        with pytest.raises(OverlapError) as err:
            f.write(6, np.ones(4, dtype=np.uint8), origin=origin_key(5, 1))
        assert err.value.first == (2, 0)
        assert err.value.second == (5, 1)
        assert err.value.offset == 6
        # nothing of the rejected write landed
        assert not f.is_written(8, 2)

    def test_last_writer_keeps_higher_origin(self):
        f = SimFile(page_size=16)
        f.write(0, np.full(8, 5, dtype=np.uint8), origin=origin_key(5, 0), policy='last_writer')
        f.write(4, np.full(8, 2, dtype=np.uint8), origin=origin_key(2, 0), policy='last_writer')
        assert list(f.read(0, 12)) == [5] * 8 + [2] * 4

    def test_extents_are_coalesced(self):
        f = SimFile(page_size=8)
        f.write(0, np.zeros(4, dtype=np.uint8))
        f.write(4, np.zeros(6, dtype=np.uint8), origin=1)
        f.write(20, np.zeros(2, dtype=np.uint8), origin=2)
        assert [tuple(e) for e in f.extents()] == [(0, 10), (20, 2)]
        assert f.written_bytes == 12
