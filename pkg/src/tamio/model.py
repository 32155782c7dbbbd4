""" Shared data model: requests, topology, aggregator layout, striping and the simulated file. """

import logging
from dataclasses import dataclass, field
from typing import Dict, NamedTuple, Optional, Tuple

import numpy as np

from .errors import ConfigError, OverlapError, UnwrittenReadError

logger = logging.getLogger(__name__)

MAX_OFFSET = 2 ** 63 - 1
PAGE_SIZE = 4096
UNWRITTEN = -1
_SEQ_BITS = 32


class OffsetLength(NamedTuple):
    """One contiguous file extent, in bytes."""
    offset: int
    length: int

    @property
    def end(self):
        return self.offset + self.length


def origin_key(rank, seq):
    """Pack an origin (rank, sequence index) into one orderable integer."""
    return (rank << _SEQ_BITS) | seq


def split_origin(key):
    return int(key) >> _SEQ_BITS, int(key) & ((1 << _SEQ_BITS) - 1)


def fill_bytes(seed, start, length):
    '''
    Deterministic data stream of a process.

    Byte i of the stream of a process with fill seed s is (s*167 + i*13 + 5) mod 256.
    The value depends on the position in the stream, not on the file offset, so
    misplaced data is detectable.

    Parameters
    ----------
    seed   : int
             Fill seed of the process (its rank unless a run seed shifts it).
    start  : int
             Position of the first byte within the stream.
    length : int
             Number of bytes to generate.

    Returns
    -------
    data : ndarray of uint8
    '''
    idx = np.arange(start, start + length, dtype=np.int64)
    return ((seed * 167 + idx * 13 + 5) % 256).astype(np.uint8)


@dataclass(frozen=True)
class RequestList:
    """
    Offset-sorted sequence of extents of one process.

    The constructor does not check ordering or lengths; `requests.validate`
    reports violations, and the pipeline validates every list on entry.
    """
    extents: Tuple[OffsetLength, ...] = ()

    @classmethod
    def from_pairs(cls, pairs):
        return cls(tuple(OffsetLength(int(o), int(n)) for o, n in pairs))

    @property
    def total_bytes(self):
        return sum(e.length for e in self.extents)

    def __len__(self):
        return len(self.extents)

    def __iter__(self):
        return iter(self.extents)

    def __getitem__(self, i):
        return self.extents[i]


@dataclass(frozen=True)
class ProcRequest:
    """
    The collective-write request of one process.

    Data bytes are not stored; `data()` generates the stream from `fill_seed`
    in extent order.
    """
    rank: int
    requests: RequestList
    fill_seed: Optional[int] = None

    def __post_init__(self):
        if self.rank < 0:
            raise ConfigError('The rank must be non-negative.', field='rank')
        if self.fill_seed is None:
            object.__setattr__(self, 'fill_seed', self.rank)

    @property
    def total_bytes(self):
        return self.requests.total_bytes

    def stream_positions(self):
        """Position of the first byte of every extent within the data stream."""
        pos = []
        acc = 0
        for e in self.requests:
            pos.append(acc)
            acc += e.length
        return pos

    def data(self):
        return fill_bytes(self.fill_seed, 0, self.total_bytes)


@dataclass(frozen=True)
class Topology:
    """Uniform grid of `num_nodes` compute nodes running `procs_per_node` processes each."""
    num_nodes: int
    procs_per_node: int

    def __post_init__(self):
        if self.num_nodes < 1:
            raise ConfigError('The number of nodes must be at least 1.', field='nodes')
        if self.procs_per_node < 1:
            raise ConfigError('The number of processes per node must be at least 1.', field='procs_per_node')

    @classmethod
    def from_counts(cls, nprocs, num_nodes):
        if num_nodes < 1 or nprocs % num_nodes != 0:
            raise ConfigError('{} processes cannot be placed uniformly on {} nodes.'.format(nprocs, num_nodes),
                              field='nodes')
        return cls(num_nodes, nprocs // num_nodes)

    @property
    def nprocs(self):
        return self.num_nodes * self.procs_per_node

    def ranks_on_node(self, node):
        q = self.procs_per_node
        return range(node * q, (node + 1) * q)


def rank_to_node(rank, topo):
    '''
    Node hosting a rank.

    Parameters
    ----------
    rank : int
           Global process rank, 0 <= rank < P.
    topo : Topology

    Returns
    -------
    node : int
           floor(rank / q).
    '''
    if rank < 0 or rank >= topo.nprocs:
        raise ConfigError('Rank {} is outside [0, {}).'.format(rank, topo.nprocs), field='rank')
    return rank // topo.procs_per_node


@dataclass(frozen=True)
class StripeConfig:
    """Lustre-style striping: fixed `stripe_size` bytes dealt round-robin over `stripe_count` OSTs."""
    stripe_size: int
    stripe_count: int = 1

    def __post_init__(self):
        if self.stripe_size <= 0:
            raise ConfigError('The stripe size must be positive.', field='stripe_size')
        if self.stripe_count < 1:
            raise ConfigError('The stripe count must be at least 1.', field='stripe_count')


def stripe_of(offset, cfg):
    """Index of the stripe holding `offset`, i.e. floor(offset / stripe_size)."""
    return offset // cfg.stripe_size


@dataclass(frozen=True)
class AggregatorLayout:
    """
    Selected local and global aggregators of one collective operation.

    Parameters
    ----------
    topology    : Topology
    local_aggs  : tuple of int
                  Sorted global ranks acting as local aggregators (P_L of them).
    global_aggs : tuple of int
                  Global aggregators; position g owns the stripes congruent to g mod P_G.
    group_of    : tuple of int
                  group_of[r] is the local aggregator gathering the requests of rank r.
    promoted    : tuple of int, optional
                  Ranks made local aggregators only because a global policy demanded them.
    """
    topology: Topology
    local_aggs: Tuple[int, ...]
    global_aggs: Tuple[int, ...]
    group_of: Tuple[int, ...]
    promoted: Tuple[int, ...] = ()
    _members: Dict[int, Tuple[int, ...]] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        topo = self.topology
        if list(self.local_aggs) != sorted(set(self.local_aggs)):
            raise ConfigError('The local aggregators must be sorted and unique.', field='local_aggs')
        if len(self.group_of) != topo.nprocs:
            raise ConfigError('The group map does not cover every rank.', field='group_of')
        if not self.global_aggs:
            raise ConfigError('At least one global aggregator is required.', field='global_aggs')
        if len(set(self.global_aggs)) != len(self.global_aggs):
            raise ConfigError('The global aggregators must be distinct.', field='global_aggs')
        local = set(self.local_aggs)
        for g in self.global_aggs:
            if g not in local:
                raise ConfigError('Global aggregator {} is not a local aggregator.'.format(g), field='global_aggs')

        per_node = [0] * topo.num_nodes
        for a in self.local_aggs:
            per_node[rank_to_node(a, topo)] += 1
        if min(per_node) == 0:
            raise ConfigError('Every node must host a local aggregator.', field='local_aggs')
        if not self.promoted and len(set(per_node)) != 1:
            raise ConfigError('Every node must host the same number of local aggregators.', field='local_aggs')

        members = {a: [] for a in self.local_aggs}
        for r, a in enumerate(self.group_of):
            if a not in local or rank_to_node(a, topo) != rank_to_node(r, topo) or a > r:
                raise ConfigError('Rank {} is assigned to invalid local aggregator {}.'.format(r, a),
                                  field='group_of')
            members[a].append(r)
        object.__setattr__(self, '_members', {a: tuple(m) for a, m in members.items()})

    @property
    def n_local(self):
        return len(self.local_aggs)

    @property
    def n_global(self):
        return len(self.global_aggs)

    def members(self, agg):
        """Ranks in the group of local aggregator `agg`, ascending, itself first."""
        return self._members[agg]

    def local_aggs_on_node(self, node):
        return tuple(a for a in self.local_aggs if rank_to_node(a, self.topology) == node)

    def is_two_phase(self):
        return self.n_local == self.topology.nprocs


class SimFile:
    """
    Sparse simulated shared file.

    Bytes are kept in fixed-size pages created on first write. Each page holds
    the data and, per byte, the origin key of the extent that wrote it
    (UNWRITTEN for bytes never written), so overlap and unwritten reads are
    detectable. Single writer only.

    Methods
    -------
    write(offset, data, origin=0, policy='strict')
        Store bytes, resolving overlaps by policy.
    read(offset, length)
        Return stored bytes; raises UnwrittenReadError on a hole.
    extents()
        Written extents, coalesced, ascending.
    """

    def __init__(self, page_size=PAGE_SIZE):
        self.page_size = page_size
        self._pages = {}

    def _page(self, number, create=False):
        page = self._pages.get(number)
        if page is None and create:
            page = (np.zeros(self.page_size, dtype=np.uint8),
                    np.full(self.page_size, UNWRITTEN, dtype=np.int64))
            self._pages[number] = page
        return page

    def _chunks(self, offset, length):
        # (page number, start in page, start in buffer, count)
        pos = offset
        end = offset + length
        while pos < end:
            number, start = divmod(pos, self.page_size)
            count = min(self.page_size - start, end - pos)
            yield number, start, pos - offset, count
            pos += count

    def write(self, offset, data, origin=0, policy='strict'):
        '''
        Write `data` at `offset` on behalf of origin key `origin`.

        Parameters
        ----------
        offset : int
        data   : ndarray of uint8
        origin : int, optional
                 Origin key (see origin_key) of the extent the bytes belong to.
        policy : str, optional
                 'strict' raises OverlapError if any target byte is already
                 written; 'last_writer' keeps, per byte, the bytes of the
                 higher origin key.
        '''
        data = np.asarray(data, dtype=np.uint8)
        if offset < 0 or offset + len(data) > MAX_OFFSET:
            raise ConfigError('Extent ({}, {}) is outside the file offset range.'.format(offset, len(data)))
        if policy == 'strict':
            for number, start, _, count in self._chunks(offset, len(data)):
                page = self._page(number)
                if page is None:
                    continue
                owners = page[1][start:start + count]
                hit = np.flatnonzero(owners != UNWRITTEN)
                if hit.size:
                    raise OverlapError(split_origin(owners[hit[0]]), split_origin(origin),
                                       number * self.page_size + start + int(hit[0]))
        for number, start, pos, count in self._chunks(offset, len(data)):
            buf, owners = self._page(number, create=True)
            chunk = data[pos:pos + count]
            if policy == 'strict':
                buf[start:start + count] = chunk
                owners[start:start + count] = origin
            else:
                win = owners[start:start + count] <= origin
                buf[start:start + count] = np.where(win, chunk, buf[start:start + count])
                owners[start:start + count] = np.where(win, origin, owners[start:start + count])

    def read(self, offset, length):
        out = np.empty(length, dtype=np.uint8)
        for number, start, pos, count in self._chunks(offset, length):
            page = self._page(number)
            if page is None:
                raise UnwrittenReadError(number * self.page_size + start)
            owners = page[1][start:start + count]
            hole = np.flatnonzero(owners == UNWRITTEN)
            if hole.size:
                raise UnwrittenReadError(number * self.page_size + start + int(hole[0]))
            out[pos:pos + count] = page[0][start:start + count]
        return out

    def is_written(self, offset, length):
        """True if any byte of the extent was written."""
        for number, start, _, count in self._chunks(offset, length):
            page = self._page(number)
            if page is not None and np.any(page[1][start:start + count] != UNWRITTEN):
                return True
        return False

    def page_view(self, number):
        """(data, written mask) of one page, or None if the page was never touched."""
        page = self._page(number)
        if page is None:
            return None
        return page[0], page[1] != UNWRITTEN

    def page_numbers(self):
        return sorted(self._pages)

    def extents(self):
        """Written extents of the file, coalesced and ascending (the written-extent index)."""
        out = []
        for number in self.page_numbers():
            mask = self._pages[number][1] != UNWRITTEN
            if not mask.any():
                continue
            edges = np.flatnonzero(np.diff(np.concatenate(([0], mask.astype(np.int8), [0]))))
            base = number * self.page_size
            for start, stop in zip(edges[0::2], edges[1::2]):
                length = int(stop - start)
                start = base + int(start)
                if out and out[-1].end == start:
                    out[-1] = OffsetLength(out[-1].offset, out[-1].length + length)
                else:
                    out.append(OffsetLength(start, length))
        return out

    @property
    def written_bytes(self):
        return int(sum(int(np.count_nonzero(p[1] != UNWRITTEN)) for p in self._pages.values()))

    def __repr__(self):
        return '<SimFile {} bytes written in {} pages>'.format(self.written_bytes, len(self._pages))
