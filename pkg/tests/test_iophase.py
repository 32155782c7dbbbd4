import numpy as np
import pytest

from tamio.errors import StripeDisciplineError
from tamio.evaluation import compare, serial_oracle
from tamio.iophase import RoundEntry, check_discipline, dump_sidecar, execute_write, load_sidecar, plan_rounds
from tamio.model import SimFile, StripeConfig, Topology, stripe_of
from tamio.pipeline import build_placement_map, run_tam
from tamio.requests import CoalescedExtent, CoalescedList, TaggedExtent, split_by_domain
from tamio.selection import build_layout
from tamio.workloads import gen_s3d


def region(start, length, rank=0):
    seg = TaggedExtent(start, length, rank, 0, rank, 0)
    return CoalescedList((CoalescedExtent(start, length, (seg,)),))


def domains(start, length, cfg, n_global):
    return split_by_domain(region(start, length), cfg, n_global)


def test_three_stripes_three_aggregators_one_round():
    cfg = StripeConfig(16, 3)
    plan = plan_rounds(domains(0, 48, cfg, 3), cfg)
    assert plan.n_rounds == 1
    assert [e.stripes for e in plan.schedule[1]] == [(1,)]


def test_eight_stripes_three_aggregators():
    cfg = StripeConfig(16, 3)
    plan = plan_rounds(domains(0, 8 * 16, cfg, 3), cfg)
    assert [e.stripes for e in plan.schedule[0]] == [(0,), (3,), (6,)]
    assert plan.rounds_of(2) == 2
    assert plan.n_rounds == 3
    assert plan.round_of(0, 6) == 2


def test_round_lookup_by_offset():
    cfg = StripeConfig(16, 2)
    plan = plan_rounds(domains(0, 6 * 16, cfg, 2), cfg)
    assert plan.cfg is cfg
    for offset, g, r in [(0, 0, 0), (20, 1, 0), (40, 0, 1), (70, 0, 2), (90, 1, 2)]:
        assert stripe_of(offset, cfg) % 2 == g
        assert plan.round_of(g, stripe_of(offset, cfg)) == r


def test_empty_aggregator_has_no_rounds():
    cfg = StripeConfig(16, 2)
    plan = plan_rounds([region(0, 8), CoalescedList()], cfg)
    assert plan.rounds_of(1) == 0
    assert plan.n_rounds == 1


def test_several_stripes_per_round():
    cfg = StripeConfig(16, 1)
    plan = plan_rounds(domains(0, 5 * 16, cfg, 1), cfg, stripes_per_round=2)
    assert [e.stripes for e in plan.schedule[0]] == [(0, 1), (2, 3), (4,)]


def test_discipline_rejects_foreign_stripe():
    cfg = StripeConfig(16, 2)
    entry = RoundEntry(0, (1,), region(16, 8))
    with pytest.raises(StripeDisciplineError):
        check_discipline(0, entry, 2, cfg)


def test_discipline_rejects_segment_outside_round():
    cfg = StripeConfig(16, 2)
    entry = RoundEntry(0, (0,), region(8, 16))
    with pytest.raises(StripeDisciplineError):
        check_discipline(0, entry, 2, cfg)


def test_discipline_counts_distinct_bytes():
    cfg = StripeConfig(16, 1)
    segs = (TaggedExtent(0, 12, 0, 0, 0, 0),)
    other = (TaggedExtent(4, 12, 1, 0, 1, 0),)
    entry = RoundEntry(0, (0,), CoalescedList((CoalescedExtent(0, 12, segs), CoalescedExtent(4, 12, other))))
    assert check_discipline(0, entry, 1, cfg) == 16


def test_write_single_extent():
    cfg = StripeConfig(16, 1)
    data = np.frombuffer(b'ABCDEFGH', dtype=np.uint8)
    plan = plan_rounds([region(0, 8)], cfg)
    maps = {(0, 0): build_placement_map(plan.schedule[0][0].extents, 0, 0)}
    file, stats = execute_write(plan, maps, {(0, 0, 0): data}, cfg=cfg)
    assert file.read(0, 8).tobytes() == b'ABCDEFGH'
    assert stats.bytes_per_round == [8]
    assert stats.segments_written == 1


def test_round_bytes_and_ownership_on_s3d():
    procs = gen_s3d(8, 2, 2, 2)
    layout = build_layout(Topology(2, 4), 2, 4)
    cfg = StripeConfig(512, 4)
    result = run_tam(procs, layout, cfg)
    for (g, r), nbytes in result.stats.bytes_per_agg_round.items():
        assert nbytes <= cfg.stripe_size
        for seg in result.plan.schedule[g][r].extents.segments():
            assert stripe_of(seg.offset, cfg) % layout.n_global == g
    assert result.stats.max_round_bytes <= cfg.stripe_size
    assert compare(result.file, serial_oracle(procs)) is None


def test_sidecar(tmp_path):
    file = SimFile()
    file.write(3, np.arange(10, dtype=np.uint8))
    file.write(5000, np.full(3, 7, dtype=np.uint8), origin=1)
    path = str(tmp_path / 'image.bin')
    dump_sidecar(file, path)
    back = load_sidecar(path)
    assert compare(file, back) is None
    assert [tuple(e) for e in back.extents()] == [(3, 10), (5000, 3)]


def test_sidecar_rejects_other_files(tmp_path):
    path = tmp_path / 'junk.bin'
    path.write_bytes(b'not a sidecar')
    with pytest.raises(ValueError):
        load_sidecar(str(path))
