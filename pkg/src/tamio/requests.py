""" Request kernels: validation, k-way merging, coalescing and file-domain splitting. """

import logging
from dataclasses import dataclass
from typing import NamedTuple, Tuple

from .errors import OverlapError, UnsortedInputError
from .model import MAX_OFFSET, OffsetLength, stripe_of

logger = logging.getLogger(__name__)

OVERLAP_POLICIES = ('strict', 'last_writer')


class TaggedExtent(NamedTuple):
    """
    An extent (or a piece of one) that remembers where it came from.

    `rank` and `seq` identify the origin extent; `holder` is the process whose
    buffer currently stores the bytes and `buf_pos` their position there.
    """
    offset: int
    length: int
    rank: int
    seq: int
    holder: int
    buf_pos: int

    @property
    def extent(self):
        return OffsetLength(self.offset, self.length)

    @property
    def source(self):
        return self.rank, self.seq

    @property
    def end(self):
        return self.offset + self.length


class CoalescedExtent(NamedTuple):
    """A contiguous extent built from one or more adjacent source segments, in file order."""
    offset: int
    length: int
    segments: Tuple[TaggedExtent, ...]

    @property
    def end(self):
        return self.offset + self.length

    @property
    def extent(self):
        return OffsetLength(self.offset, self.length)


@dataclass(frozen=True)
class CoalescedList:
    """Offset-sorted coalesced extents of one holder."""
    extents: Tuple[CoalescedExtent, ...] = ()

    @property
    def total_bytes(self):
        return sum(e.length for e in self.extents)

    @property
    def n_segments(self):
        return sum(len(e.segments) for e in self.extents)

    def segments(self):
        for e in self.extents:
            yield from e.segments

    def __len__(self):
        return len(self.extents)

    def __iter__(self):
        return iter(self.extents)

    def __getitem__(self, i):
        return self.extents[i]


class Violation(NamedTuple):
    index: int
    reason: str


class MergeResult(NamedTuple):
    items: list
    comparisons: int


def tag_request(proc):
    """TaggedExtents of a ProcRequest, held by the process itself at its stream positions."""
    return [TaggedExtent(e.offset, e.length, proc.rank, seq, proc.rank, pos)
            for seq, (e, pos) in enumerate(zip(proc.requests, proc.stream_positions()))]


def sort_key(item):
    """Merge order: offset, then origin rank, then sequence index within the origin."""
    if isinstance(item, CoalescedExtent):
        head = item.segments[0]
        return item.offset, head.rank, head.seq
    return item.offset, item.rank, item.seq


def validate(reqlist):
    '''
    Check a request list: positive lengths, non-negative in-range offsets,
    nondecreasing offsets.

    Parameters
    ----------
    reqlist : RequestList or sequence of (offset, length)

    Returns
    -------
    violation : Violation or None
                The first offending index and a description, None if the list is valid.
    '''
    prev = None
    for i, (offset, length) in enumerate(reqlist):
        if length <= 0:
            return Violation(i, 'length {} is not positive'.format(length))
        if offset < 0:
            return Violation(i, 'offset {} is negative'.format(offset))
        if offset + length > MAX_OFFSET:
            return Violation(i, 'extent ({}, {}) overflows the file offset range'.format(offset, length))
        if prev is not None and offset < prev:
            return Violation(i, 'offset {} decreases after {}'.format(offset, prev))
        prev = offset
    return None


def heap_merge(lists, key=sort_key):
    '''
    Merge individually sorted lists into one sorted list.

    A tournament tree of losers is kept over the list heads, so every output
    element costs at most ceil(log2 m) key comparisons for m lists, plus at
    most m - 1 to build the tree. Comparisons against exhausted lists are free.

    Parameters
    ----------
    lists : sequence of sequences
            Each sorted by `key`.
    key   : callable, optional
            Sort key (the default is offset, origin rank, sequence index).

    Returns
    -------
    result : MergeResult
             Merged items and the number of key comparisons made.
    '''
    lists = [list(l) for l in lists]
    keys = []
    for li, l in enumerate(lists):
        ks = [key(x) for x in l]
        for pos in range(1, len(ks)):
            if ks[pos] < ks[pos - 1]:
                raise UnsortedInputError(li, pos)
        keys.append(ks)

    m = len(lists)
    if m == 0:
        return MergeResult([], 0)
    size = 1
    while size < m:
        size *= 2

    heads = [0] * m
    comparisons = 0

    def beats(a, b):
        # a wins against b: smaller head key, list index breaking ties
        nonlocal comparisons
        if a < 0 or heads[a] >= len(lists[a]):
            return False
        if b < 0 or heads[b] >= len(lists[b]):
            return True
        comparisons += 1
        return (keys[a][heads[a]], a) < (keys[b][heads[b]], b)

    winners = [-1] * (2 * size)
    for i in range(m):
        winners[size + i] = i
    losers = [-1] * size
    for node in range(size - 1, 0, -1):
        a, b = winners[2 * node], winners[2 * node + 1]
        if beats(a, b):
            winners[node], losers[node] = a, b
        else:
            winners[node], losers[node] = b, a
    winner = winners[1]

    out = []
    while winner >= 0 and heads[winner] < len(lists[winner]):
        out.append(lists[winner][heads[winner]])
        heads[winner] += 1
        cand = winner
        node = (winner + size) // 2
        while node >= 1:
            if beats(losers[node], cand):
                losers[node], cand = cand, losers[node]
            node //= 2
        winner = cand
    return MergeResult(out, comparisons)


def _as_coalesced(item):
    if isinstance(item, CoalescedExtent):
        return item
    return CoalescedExtent(item.offset, item.length, (item,))


def coalesce(items, policy='strict'):
    '''
    Merge exactly adjacent extents of a sorted list.

    Parameters
    ----------
    items  : sequence of TaggedExtent or CoalescedExtent
             Sorted by offset.
    policy : str, optional
             'strict' raises OverlapError on overlapping neighbours;
             'last_writer' keeps overlapping extents apart and lets the write
             resolve them.

    Returns
    -------
    coalesced : CoalescedList
                Each extent lists the source segments composing it, in file order.
    '''
    out = []
    cur_off = cur_len = None
    segs = []

    def flush():
        if segs:
            out.append(CoalescedExtent(cur_off, cur_len, tuple(segs)))

    for item in items:
        ce = _as_coalesced(item)
        if cur_off is not None and ce.offset < cur_off + cur_len:
            if policy == 'strict':
                first = next((s for s in reversed(segs) if s.offset <= ce.offset < s.end), segs[-1])
                raise OverlapError(first.source, ce.segments[0].source, ce.offset)
            flush()
            cur_off, cur_len, segs = ce.offset, ce.length, list(ce.segments)
        elif cur_off is not None and ce.offset == cur_off + cur_len:
            cur_len += ce.length
            segs.extend(ce.segments)
        else:
            flush()
            cur_off, cur_len, segs = ce.offset, ce.length, list(ce.segments)
    flush()
    return CoalescedList(tuple(out))


def _cut_segment(seg, at):
    head = at - seg.offset
    return (seg._replace(length=head),
            seg._replace(offset=at, length=seg.length - head, buf_pos=seg.buf_pos + head))


def cut_extent(extent, at):
    '''
    Split a coalesced extent at file offset `at` (strictly inside it).

    Returns
    -------
    left, right : CoalescedExtent
    '''
    left, right = [], []
    for seg in extent.segments:
        if seg.end <= at:
            left.append(seg)
        elif seg.offset >= at:
            right.append(seg)
        else:
            a, b = _cut_segment(seg, at)
            left.append(a)
            right.append(b)
    return (CoalescedExtent(extent.offset, at - extent.offset, tuple(left)),
            CoalescedExtent(at, extent.end - at, tuple(right)))


def cut_at_stripes(extent, cfg):
    """Pieces of a coalesced extent, none of which crosses a stripe boundary of `cfg`."""
    pieces = []
    while True:
        boundary = (stripe_of(extent.offset, cfg) + 1) * cfg.stripe_size
        if extent.end <= boundary:
            pieces.append(extent)
            return pieces
        left, extent = cut_extent(extent, boundary)
        pieces.append(left)


def split_by_domain(clist, cfg, layout):
    '''
    Cut extents at stripe boundaries and route every piece to the global
    aggregator owning its stripe (stripe index mod P_G).

    Parameters
    ----------
    clist  : CoalescedList
             Sorted by offset.
    cfg    : StripeConfig
    layout : AggregatorLayout or int
             The layout, or P_G directly.

    Returns
    -------
    domains : list of CoalescedList
              One sorted list per global aggregator index.
    '''
    n_global = layout if isinstance(layout, int) else layout.n_global
    routed = [[] for _ in range(n_global)]
    for extent in clist:
        for piece in cut_at_stripes(_as_coalesced(extent), cfg):
            routed[stripe_of(piece.offset, cfg) % n_global].append(piece)
    return [CoalescedList(tuple(r)) for r in routed]


def merge_and_coalesce(lists, policy='strict'):
    """heap_merge followed by coalesce; returns (CoalescedList, comparisons, merged item count)."""
    merged = heap_merge(lists)
    return coalesce(merged.items, policy=policy), merged.comparisons, len(merged.items)
