import pytest

from tamio.errors import ConfigError
from tamio.model import Topology, rank_to_node
from tamio.selection import (GlobalPolicy, assign_groups, build_layout, select_global_aggregators,
                             select_local_aggregators, two_phase_layout)


@pytest.mark.parametrize("q, c, expected", [
    (5, 2, [0, 3]),
    (8, 4, [0, 2, 4, 6]),
    (7, 1, [0]),
    (4, 4, [0, 1, 2, 3]),
    (10, 4, [0, 3, 6, 8]),
])
def test_select_local_aggregators(q, c, expected):
    assert select_local_aggregators(q, c) == expected


@pytest.mark.parametrize("q, c", [(4, 0), (4, 5)])
def test_select_local_aggregators_rejects(q, c):
    with pytest.raises(ConfigError) as err:
        select_local_aggregators(q, c)
    assert err.value.field == 'local_aggs_per_node'


def test_local_selection_gaps_differ_by_at_most_one():
    for q in range(1, 20):
        for c in range(1, q + 1):
            ranks = select_local_aggregators(q, c)
            assert ranks[0] == 0
            gaps = [b - a for a, b in zip(ranks, ranks[1:] + [q])]
            assert min(gaps) >= 1
            assert max(gaps) - min(gaps) <= 1


@pytest.mark.parametrize("q, aggs, groups", [
    (5, [0, 3], [(0, 1, 2), (3, 4)]),
    (8, [0, 2, 4, 6], [(0, 1), (2, 3), (4, 5), (6, 7)]),
    (4, [0], [(0, 1, 2, 3)]),
])
def test_assign_groups(q, aggs, groups):
    group_of = assign_groups(Topology(1, q), aggs)
    found = [tuple(r for r in range(q) if group_of[r] == a) for a in aggs]
    assert found == groups


def test_round_robin_placement():
    topo = Topology(2, 64)
    assert select_global_aggregators(topo, 4, GlobalPolicy.ROUND_ROBIN, [0, 64]) == [0, 64, 1, 65]


def test_round_robin_one_per_node_takes_first_ranks():
    topo = Topology(4, 8)
    assert select_global_aggregators(topo, 4, 'round_robin', [0, 8, 16, 24]) == [0, 8, 16, 24]


def test_spread_even_picks_nodes_0_2_4():
    topo = Topology(6, 8)
    layout = build_layout(topo, 4, 3, GlobalPolicy.SPREAD_EVEN)
    assert [rank_to_node(g, topo) for g in layout.global_aggs] == [0, 2, 4]
    assert layout.global_aggs == (0, 16, 32)
    assert layout.promoted == ()
    assert layout.n_local == 24


def test_spread_even_single_node():
    assert select_global_aggregators(Topology(1, 4), 1, 'spread_even', [0]) == [0]


def test_spread_even_wraps_onto_more_local_aggregators():
    topo = Topology(2, 8)
    layout = build_layout(topo, 4, 4)
    assert [rank_to_node(g, topo) for g in layout.global_aggs] == [0, 1, 0, 1]
    assert set(layout.global_aggs) <= set(layout.local_aggs)
    assert layout.promoted == ()


def test_node_slot_rotates_the_pick():
    topo = Topology(2, 8)
    assert build_layout(topo, 4, 2).global_aggs == (0, 8)
    assert build_layout(topo, 4, 2, node_slot=1).global_aggs == (2, 10)


def test_round_robin_promotes_missing_local_aggregators():
    topo = Topology(2, 64)
    layout = build_layout(topo, 1, 4, GlobalPolicy.ROUND_ROBIN)
    assert layout.global_aggs == (0, 64, 1, 65)
    assert layout.promoted == (1, 65)
    assert layout.local_aggs == (0, 1, 64, 65)
    assert layout.members(1) == tuple(range(1, 64))


@pytest.mark.parametrize("n_global", [0, 9])
def test_global_count_out_of_range(n_global):
    with pytest.raises(ConfigError):
        select_global_aggregators(Topology(2, 4), n_global, 'spread_even', [0, 4])


def test_two_phase_layout_makes_everyone_local():
    topo = Topology(2, 4)
    layout = two_phase_layout(topo, 2)
    assert layout.local_aggs == tuple(range(8))
    assert layout.is_two_phase()
    assert all(layout.members(r) == (r,) for r in range(8))
