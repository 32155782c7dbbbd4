import math
from collections import Counter

import pytest

from tamio.config import WorkloadSpec
from tamio.errors import WorkloadError
from tamio.workloads import (btio_request_count, btio_total_bytes, from_spec, gen_btio, gen_contiguous1d,
                             gen_e3sm_like, gen_s3d, load_decomp, process_grid, s3d_request_count, s3d_total_bytes,
                             write_decomp)

GiB = 1 << 30


def all_extents(procs):
    return sorted((e.offset, e.length) for p in procs for e in p.requests)


def assert_disjoint(procs):
    extents = all_extents(procs)
    for (o1, n1), (o2, _) in zip(extents, extents[1:]):
        assert o1 + n1 <= o2


def test_contiguous():
    procs = gen_contiguous1d(4, 100)
    assert [tuple(p.requests[0]) for p in procs] == [(0, 100), (100, 100), (200, 100), (300, 100)]
    assert [p.fill_seed for p in procs] == [0, 1, 2, 3]


def test_seed_shifts_fill_seeds():
    assert [p.fill_seed for p in gen_contiguous1d(4, 8, seed=2)] == [8, 9, 10, 11]


@pytest.mark.parametrize("P, block", [(0, 8), (4, 0)])
def test_contiguous_rejects(P, block):
    with pytest.raises(WorkloadError):
        gen_contiguous1d(P, block)


class TestBtio:

    def test_checkpoint_size_formula(self):
        assert btio_total_bytes(512) == 200 * GiB

    def test_request_count(self):
        assert btio_request_count(16, 4) == 20480
        assert btio_request_count(16, 16) == 40 * 16 ** 2 * 4

    def test_generated_extents_match_the_formulas(self):
        procs = gen_btio(8, 4, nvars=3)
        assert sum(len(p.requests) for p in procs) == btio_request_count(8, 4, nvars=3)
        assert sum(p.requests.total_bytes for p in procs) == btio_total_bytes(8, nvars=3)
        assert_disjoint(procs)

    @pytest.mark.parametrize("P, count", [(4, 20480), (16, 40960)])
    def test_default_checkpoint_extent_count(self, P, count):
        procs = gen_btio(16, P)
        assert sum(len(p.requests) for p in procs) == count == btio_request_count(16, P)
        assert_disjoint(procs)

    @pytest.mark.parametrize("P", [4, 16])
    def test_every_rank_visits_each_z_slab_once(self, P):
        n, s = 16, math.isqrt(P)
        b = n // s
        plane = n * n * 5 * 8
        var_bytes = n * plane
        for p in gen_btio(n, P, nvars=1):
            slabs = Counter((e.offset % var_bytes) // plane // b for e in p.requests)
            assert slabs == {t: b * b for t in range(s)}

    def test_every_rank_holds_the_same_amount(self):
        procs = gen_btio(8, 4, nvars=2)
        assert len({len(p.requests) for p in procs}) == 1

    def test_row_length(self):
        procs = gen_btio(8, 4, nvars=1)
        assert {e.length for e in procs[0].requests} == {4 * 5 * 8}

    @pytest.mark.parametrize("n, P", [(8, 3), (9, 4), (8, 0)])
    def test_rejects(self, n, P):
        with pytest.raises(WorkloadError):
            gen_btio(n, P)


class TestS3d:

    def test_checkpoint_size_formula(self):
        assert s3d_total_bytes(800) == 8 * 16 * 800 ** 3
        assert round(s3d_total_bytes(800) / GiB) == 61

    def test_generated_extents_match_the_formulas(self):
        procs = gen_s3d(8, 2, 2, 2)
        assert sum(len(p.requests) for p in procs) == s3d_request_count(8, 2, 2, 2) == 2048
        assert sum(p.requests.total_bytes for p in procs) == s3d_total_bytes(8)
        assert_disjoint(procs)

    def test_pressure_runs_per_process(self):
        procs = gen_s3d(8, 2, 2, 2, variables=(('pressure', 1),))
        assert [len(p.requests) for p in procs] == [16] * 8
        assert {e.length for p in procs for e in p.requests} == {4 * 8}

    def test_rank_order(self):
        procs = gen_s3d(4, 2, 1, 1, variables=(('pressure', 1),))
        assert procs[0].requests[0].offset == 0
        assert procs[1].requests[0].offset == 2 * 8

    def test_rejects_indivisible_grid(self):
        with pytest.raises(WorkloadError):
            gen_s3d(8, 3, 1, 1)

    @pytest.mark.parametrize("P, grid", [(1, (1, 1, 1)), (8, (2, 2, 2)), (12, (2, 2, 3)), (7, (1, 1, 7))])
    def test_process_grid(self, P, grid):
        assert process_grid(P) == grid


class TestDecomp:

    def test_fixture_onto_four_ranks(self, decomp_fixture):
        procs = load_decomp(decomp_fixture, 4)
        assert len(procs) == 4
        offsets = [e.offset // 8 for e in procs[0].requests]
        assert offsets == [0, 8, 18, 26, 28, 35, 53, 61, 69]
        assert procs[0].requests.total_bytes == (10 + 7) * 8

    def test_conservation(self, decomp_fixture):
        for P in (1, 3, 8):
            procs = load_decomp(decomp_fixture, P)
            assert sum(len(p.requests) for p in procs) == 36
            assert sum(p.requests.total_bytes for p in procs) == 78 * 8
            assert_disjoint(procs)

    def test_more_ranks_than_recorded(self, decomp_fixture):
        with pytest.raises(WorkloadError):
            load_decomp(decomp_fixture, 9)

    @pytest.mark.parametrize("doc", [
        {},
        {'header': {'element_size': 8, 'total_elements': 10}, 'decomposition': [{'rank': 0, 'offsets': [0]}]},
        {'header': {'element_size': 8, 'total_elements': 10},
         'decomposition': [{'rank': 0, 'offsets': [0, 4], 'lengths': [4]}]},
        {'header': {'element_size': 8, 'total_elements': 10},
         'decomposition': [{'rank': 0, 'offsets': [8], 'lengths': [4]}]},
        {'header': {'element_size': 8, 'total_elements': 10},
         'decomposition': [{'rank': 1, 'offsets': [0], 'lengths': [4]}]},
    ])
    def test_malformed(self, doc):
        with pytest.raises(WorkloadError):
            load_decomp(doc, 1)

    def test_unreadable_file(self, tmp_path):
        path = tmp_path / 'broken.json'
        path.write_text('{not json')
        with pytest.raises(WorkloadError):
            load_decomp(str(path), 1)

    def test_generated_decomposition(self, tmp_path):
        doc = gen_e3sm_like(6, 200, seed=3)
        assert all(rec['offsets'] for rec in doc['decomposition'])
        path = str(tmp_path / 'decomp.json')
        write_decomp(doc, path)
        procs = load_decomp(path, 6)
        assert sum(p.requests.total_bytes for p in procs) == 200 * 8
        assert_disjoint(procs)
        assert gen_e3sm_like(6, 200, seed=3) == doc


@pytest.mark.parametrize("spec, P", [
    ({'kind': 'contiguous1d', 'block_bytes': 32}, 4),
    ({'kind': 'btio', 'n': 4, 'nvars': 2}, 4),
    ({'kind': 's3d', 'n': 4}, 8),
    ({'kind': 's3d', 'n': 4, 'process_grid': (1, 2, 2)}, 4),
    ({'kind': 'decomp_file'}, 5),
])
def test_from_spec(spec, P):
    procs = from_spec(WorkloadSpec(**spec), P)
    assert len(procs) == P
    assert_disjoint(procs)


def test_from_spec_grid_mismatch():
    with pytest.raises(WorkloadError):
        from_spec(WorkloadSpec(kind='s3d', n=4, process_grid=(2, 2, 2)), 4)
