""" Request patterns: 1D contiguous, BTIO, S3D and recorded decompositions. """

import json
import logging
import math
import os

import numpy as np

from .errors import WorkloadError
from .model import ProcRequest, RequestList

logger = logging.getLogger(__name__)

ELEMENT_SIZE = 8
BTIO_CELL_DOUBLES = 5
S3D_VARIABLES = (('mass', 11), ('velocity', 3), ('pressure', 1), ('temperature', 1))
FIXTURE = os.path.join(os.path.dirname(__file__), 'data', 'e3sm_like.json')


def _procs(pairs_by_rank, seed=0):
    nprocs = len(pairs_by_rank)
    return [ProcRequest(r, RequestList.from_pairs(sorted(pairs)), fill_seed=seed * nprocs + r)
            for r, pairs in enumerate(pairs_by_rank)]


def gen_contiguous1d(P, block_bytes, seed=0):
    '''
    Rank p writes the single extent (p * block_bytes, block_bytes).

    Parameters
    ----------
    P           : int
                  Number of processes.
    block_bytes : int
                  Bytes per process.
    seed        : int, optional
                  Run seed shifting the fill seeds.

    Returns
    -------
    procs : list of ProcRequest
    '''
    if P < 1:
        raise WorkloadError('At least one process is required.')
    if block_bytes <= 0:
        raise WorkloadError('The block size must be positive.')
    return _procs([[(p * block_bytes, block_bytes)] for p in range(P)], seed)


def btio_total_bytes(n, nvars=40):
    """Bytes written by one BTIO checkpoint: nvars arrays of n^3 cells of 5 doubles."""
    return ELEMENT_SIZE * nvars * n ** 3 * BTIO_CELL_DOUBLES


def btio_request_count(n, P, nvars=40):
    """Noncontiguous extents of one BTIO checkpoint over all processes: nvars * n^2 * sqrt(P)."""
    return nvars * n ** 2 * math.isqrt(P)


def gen_btio(n, P, nvars=40, seed=0):
    '''
    Block-tridiagonal (BTIO) checkpoint pattern.

    The grid is cut into s x s x s cells, s = sqrt(P). Process (r, c), rank
    r + c*s, owns in every z-slab t the cell (i=(r+t) mod s, j=c, k=t). Each
    cell contributes (n/s)^2 x-rows of (n/s) * 5 doubles per variable.

    Parameters
    ----------
    n     : int
            Grid edge.
    P     : int
            Number of processes, a perfect square whose root divides n.
    nvars : int, optional
            Number of successive arrays (checkpoint variables). Default 40.
    seed  : int, optional

    Returns
    -------
    procs : list of ProcRequest
    '''
    s = math.isqrt(P) if P > 0 else 0
    if P < 1 or s * s != P:
        raise WorkloadError('BTIO requires a square number of processes, got {}.'.format(P))
    if n % s != 0:
        raise WorkloadError('The grid edge {} is not divisible by sqrt(P) = {}.'.format(n, s))
    if nvars < 1:
        raise WorkloadError('At least one variable is required.')
    b = n // s
    row = b * BTIO_CELL_DOUBLES * ELEMENT_SIZE
    var_bytes = n ** 3 * BTIO_CELL_DOUBLES * ELEMENT_SIZE
    pairs_by_rank = [[] for _ in range(P)]
    for c in range(s):
        for r in range(s):
            pairs = pairs_by_rank[r + c * s]
            for v in range(nvars):
                for t in range(s):
                    i = (r + t) % s
                    for z in range(t * b, (t + 1) * b):
                        for y in range(c * b, (c + 1) * b):
                            x = i * b
                            pairs.append((v * var_bytes + ((z * n + y) * n + x) * BTIO_CELL_DOUBLES * ELEMENT_SIZE,
                                          row))
    logger.info('btio: n=%d P=%d vars=%d', n, P, nvars)
    return _procs(pairs_by_rank, seed)


def s3d_total_bytes(n, variables=S3D_VARIABLES):
    """Bytes written by one S3D checkpoint: 8 * (sum of fourth dimensions) * n^3."""
    return ELEMENT_SIZE * sum(d for _, d in variables) * n ** 3


def s3d_request_count(n, px, py, pz, variables=S3D_VARIABLES):
    """Noncontiguous extents of one S3D checkpoint over all processes (x-fastest layout)."""
    return px * py * pz * sum(d for _, d in variables) * (n // py) * (n // pz)


def process_grid(P):
    """Factor P into (px, py, pz) as evenly as possible, px <= py <= pz."""
    best = None
    for px in range(1, P + 1):
        if P % px:
            continue
        for py in range(px, P // px + 1):
            if (P // px) % py:
                continue
            pz = P // px // py
            if pz < py:
                continue
            spread = pz - px
            if best is None or spread < best[0]:
                best = (spread, (px, py, pz))
    return best[1]


def gen_s3d(n, px, py, pz, variables=S3D_VARIABLES, seed=0):
    '''
    S3D checkpoint pattern: block-block-block partitioning of 4D variables.

    Variables are stored one after another, each with its fourth dimension
    slowest and x fastest. Rank is x + px * (y + py * z).

    Parameters
    ----------
    n          : int
                 Grid edge.
    px, py, pz : int
                 Process grid, each dividing n.
    variables  : sequence of (name, fourth-dimension length), optional
                 Default mass (11), velocity (3), pressure (1), temperature (1).
    seed       : int, optional

    Returns
    -------
    procs : list of ProcRequest
    '''
    for name, p in (('px', px), ('py', py), ('pz', pz)):
        if p < 1 or n % p != 0:
            raise WorkloadError('{} = {} does not divide the grid edge {}.'.format(name, p, n))
    bx, by, bz = n // px, n // py, n // pz
    P = px * py * pz
    pairs_by_rank = [[] for _ in range(P)]
    base = 0
    for _, dim4 in variables:
        for gz in range(pz):
            for gy in range(py):
                for gx in range(px):
                    pairs = pairs_by_rank[gx + px * (gy + py * gz)]
                    for d in range(dim4):
                        for z in range(gz * bz, (gz + 1) * bz):
                            for y in range(gy * by, (gy + 1) * by):
                                pairs.append((base + (((d * n + z) * n + y) * n + gx * bx) * ELEMENT_SIZE,
                                              bx * ELEMENT_SIZE))
        base += dim4 * n ** 3 * ELEMENT_SIZE
    logger.info('s3d: n=%d grid=%dx%dx%d', n, px, py, pz)
    return _procs(pairs_by_rank, seed)


def _check_decomp(doc):
    try:
        header = doc['header']
        element_size = int(header['element_size'])
        total = int(header['total_elements'])
        records = doc['decomposition']
    except (KeyError, TypeError, ValueError) as exc:
        raise WorkloadError('Malformed decomposition document: {!r}.'.format(exc))
    if element_size <= 0:
        raise WorkloadError('The element size must be positive.')
    by_rank = {}
    for rec in records:
        try:
            rank = int(rec['rank'])
            offsets = [int(o) for o in rec['offsets']]
            lengths = [int(n) for n in rec['lengths']]
        except (KeyError, TypeError, ValueError) as exc:
            raise WorkloadError('Malformed decomposition record: {!r}.'.format(exc))
        if len(offsets) != len(lengths):
            raise WorkloadError('Record of rank {} has {} offsets but {} lengths.'.format(
                rank, len(offsets), len(lengths)))
        if rank in by_rank:
            raise WorkloadError('Rank {} is recorded twice.'.format(rank))
        for o, n in zip(offsets, lengths):
            if o < 0 or n <= 0 or o + n > total:
                raise WorkloadError('Record of rank {} has extent ({}, {}) outside [0, {}).'.format(
                    rank, o, n, total))
        by_rank[rank] = list(zip(offsets, lengths))
    if sorted(by_rank) != list(range(len(by_rank))):
        raise WorkloadError('Recorded ranks must be 0..{}.'.format(len(by_rank) - 1))
    return element_size, [by_rank[r] for r in range(len(by_rank))]


def load_decomp(path, P_target, seed=0):
    '''
    Repartition a recorded decomposition onto P_target ranks.

    Recorded process i goes to rank i mod P_target; each rank's extents are
    merged in offset order and scaled from elements to bytes.

    Parameters
    ----------
    path     : str or dict
               JSON file, or the already parsed document:
               {"header": {"element_size", "total_elements"},
                "decomposition": [{"rank", "offsets", "lengths"}, ...]}
               with offsets and lengths in elements.
    P_target : int
    seed     : int, optional

    Returns
    -------
    procs : list of ProcRequest
    '''
    if isinstance(path, dict):
        doc = path
    else:
        try:
            with open(path) as f:
                doc = json.load(f)
        except (OSError, ValueError) as exc:
            raise WorkloadError('Cannot read decomposition {}: {}'.format(path, exc))
    element_size, recorded = _check_decomp(doc)
    if P_target < 1 or P_target > len(recorded):
        raise WorkloadError('Cannot place {} recorded processes onto {} ranks.'.format(len(recorded), P_target))
    pairs_by_rank = [[] for _ in range(P_target)]
    for i, pairs in enumerate(recorded):
        pairs_by_rank[i % P_target].extend((o * element_size, n * element_size) for o, n in pairs)
    return _procs(pairs_by_rank, seed)


def gen_e3sm_like(n_recorded, total_elements, max_run=4, element_size=ELEMENT_SIZE, seed=0):
    '''
    Synthetic recorded decomposition with many short interleaved runs.

    The element range is cut into runs of 1..max_run elements; every recorded
    process gets at least one run and the remaining runs go to random owners,
    so per-process run counts vary slightly.

    Returns
    -------
    doc : dict
          Decomposition document accepted by load_decomp.
    '''
    if n_recorded < 1 or total_elements < n_recorded or max_run < 1:
        raise WorkloadError('Cannot cut {} elements into runs for {} processes.'.format(
            total_elements, n_recorded))
    rng = np.random.default_rng(seed)
    bounds = [0]
    while bounds[-1] < total_elements:
        bounds.append(min(total_elements, bounds[-1] + int(rng.integers(1, max_run + 1))))
    n_runs = len(bounds) - 1
    if n_runs < n_recorded:
        bounds = list(range(total_elements + 1))
        n_runs = total_elements
    owners = np.concatenate([rng.permutation(n_recorded), rng.integers(0, n_recorded, n_runs - n_recorded)])
    records = [{'rank': r, 'offsets': [], 'lengths': []} for r in range(n_recorded)]
    for j in range(n_runs):
        rec = records[int(owners[j])]
        rec['offsets'].append(bounds[j])
        rec['lengths'].append(bounds[j + 1] - bounds[j])
    return {'header': {'element_size': element_size, 'total_elements': total_elements},
            'decomposition': records}


def write_decomp(doc, path):
    _check_decomp(doc)
    with open(path, 'w') as f:
        json.dump(doc, f, indent=1)


def from_spec(spec, nprocs, seed=0):
    '''
    Generate the workload a WorkloadSpec describes.

    Parameters
    ----------
    spec   : WorkloadSpec
    nprocs : int
    seed   : int, optional

    Returns
    -------
    procs : list of ProcRequest
    '''
    if spec.kind == 'contiguous1d':
        return gen_contiguous1d(nprocs, spec.block_bytes, seed=seed)
    if spec.kind == 'btio':
        return gen_btio(spec.n, nprocs, nvars=spec.nvars, seed=seed)
    if spec.kind == 's3d':
        px, py, pz = spec.process_grid or process_grid(nprocs)
        if px * py * pz != nprocs:
            raise WorkloadError('Process grid {}x{}x{} does not match {} processes.'.format(px, py, pz, nprocs))
        variables = tuple((v[0], v[1]) for v in spec.variables) if spec.variables else S3D_VARIABLES
        return gen_s3d(spec.n, px, py, pz, variables=variables, seed=seed)
    if spec.kind == 'decomp_file':
        return load_decomp(spec.path or FIXTURE, nprocs, seed=seed)
    raise WorkloadError('Unknown workload kind {!r}.'.format(spec.kind))
