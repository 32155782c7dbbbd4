"""
Shared fixtures: small topologies, stripe configurations and workloads.
"""

import pytest

from tamio.model import ProcRequest, RequestList, StripeConfig, Topology
from tamio.workloads import FIXTURE, gen_contiguous1d


def _make_procs(pairs_by_rank):
    return [ProcRequest(r, RequestList.from_pairs(pairs)) for r, pairs in enumerate(pairs_by_rank)]


@pytest.fixture
def make_procs():
    """Build ProcRequests from per-rank (offset, length) lists."""
    return _make_procs


@pytest.fixture
def topo_2x4():
    return Topology(2, 4)


@pytest.fixture
def stripes_64x4():
    return StripeConfig(64, 4)


@pytest.fixture
def contiguous_8():
    """8 ranks of 64 bytes, 512 bytes in total."""
    return gen_contiguous1d(8, 64)


@pytest.fixture
def decomp_fixture():
    return FIXTURE
