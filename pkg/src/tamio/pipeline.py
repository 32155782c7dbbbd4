""" The two-layer aggregation pipeline: intra-node aggregation, inter-node exchange and placement maps. """

import json
import logging
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, NamedTuple, Tuple

import numpy as np

from .errors import ConfigError, WorkloadError
from .iophase import ROUND_ORDERS, execute_write, plan_rounds
from .metrics import Tally, measure
from .model import rank_to_node, stripe_of
from .requests import (OVERLAP_POLICIES, CoalescedList, coalesce, heap_merge, merge_and_coalesce,
                       sort_key, split_by_domain, tag_request, validate)

logger = logging.getLogger(__name__)

METADATA_HEADER_BYTES = 8
METADATA_PAIR_BYTES = 16

_PHASE_ORDER = {'intra': 0, 'inter': 1}
_KIND_ORDER = {'metadata': 0, 'data': 1}


def metadata_bytes(n_pairs):
    """Modeled size of a metadata message: an 8-byte count followed by 16 bytes per offset-length pair."""
    return METADATA_HEADER_BYTES + METADATA_PAIR_BYTES * n_pairs


class Message(NamedTuple):
    src: int
    dst: int
    kind: str
    nbytes: int
    phase: str
    round: int = 0

    @property
    def is_self(self):
        return self.src == self.dst

    def to_dict(self):
        return {'src': self.src, 'dst': self.dst, 'kind': self.kind, 'bytes': self.nbytes,
                'phase': self.phase, 'round': self.round}


def canonical_order(messages):
    """Messages sorted by phase, then (round, src, dst), metadata before data."""
    return sorted(messages, key=lambda m: (_PHASE_ORDER[m.phase], m.round, m.src, m.dst, _KIND_ORDER[m.kind]))


def write_trace(messages, path):
    """Write a message trace as JSON lines, one message per line."""
    with open(path, 'w') as f:
        for m in messages:
            f.write(json.dumps(m.to_dict()) + '\n')


def read_trace(path):
    with open(path) as f:
        return [Message(d['src'], d['dst'], d['kind'], d['bytes'], d['phase'], d['round'])
                for d in map(json.loads, f) if d]


class PlacementEntry(NamedTuple):
    """`length` bytes at `src_pos` of the payload from `src` land at `dest` of the write buffer."""
    src: int
    src_pos: int
    dest: int
    length: int


@dataclass(frozen=True)
class PlacementMap:
    agg_index: int
    round: int
    entries: Tuple[PlacementEntry, ...]
    size: int


@dataclass
class LocalAggregate:
    """
    Output of one local aggregator.

    `extents` are the coalesced extents it forwards; their segments are held by
    the aggregator (holder = rank) at their positions in `buffer`, which stores
    the gathered data in sorted-offset order.
    """
    rank: int
    members: Tuple[int, ...]
    extents: CoalescedList
    buffer: np.ndarray
    extents_in: int = 0
    comparisons: int = 0


@dataclass
class GlobalAggregate:
    index: int
    rank: int
    merged: CoalescedList
    senders: Tuple[int, ...]
    fragments_in: int = 0
    comparisons: int = 0


@dataclass
class PipelineResult:
    method: str
    file: object
    messages: List[Message]
    metrics: object
    plan: object
    stats: object
    local: Dict[int, LocalAggregate] = field(default_factory=dict)
    global_aggs: List[GlobalAggregate] = field(default_factory=list)


def segment_key(seg):
    """Order of the segments a local aggregator packs into one round payload."""
    return seg.offset, seg.rank, seg.seq


def _check_proc(proc):
    violation = validate(proc.requests)
    if violation is not None:
        raise WorkloadError('Request list of rank {} is invalid at index {}: {}.'.format(
            proc.rank, violation.index, violation.reason))


def _relocate(rank, clist, data):
    # copy the segments into one buffer in file order, now held by `rank`
    buf = np.empty(sum(s.length for s in clist.segments()), dtype=np.uint8)
    pos = 0
    out = []
    for ce in clist:
        segs = []
        for s in ce.segments:
            buf[pos:pos + s.length] = data[s.holder][s.buf_pos:s.buf_pos + s.length]
            segs.append(s._replace(holder=rank, buf_pos=pos))
            pos += s.length
        out.append(ce._replace(segments=tuple(segs)))
    return CoalescedList(tuple(out)), buf


def own_aggregate(proc, policy='strict'):
    '''
    A process acting as its own local aggregator, with no intra-node traffic.

    Returns
    -------
    aggregate : LocalAggregate
    '''
    items = tag_request(proc)
    clist, buf = _relocate(proc.rank, coalesce(items, policy=policy), {proc.rank: proc.data()})
    return LocalAggregate(proc.rank, (proc.rank,), clist, buf, extents_in=len(items))


def intra_node_aggregate(procs, layout, policy='strict'):
    '''
    Gather, merge and coalesce the requests of every group on one node.

    Parameters
    ----------
    procs  : sequence of ProcRequest
             All processes of one node.
    layout : AggregatorLayout
    policy : str, optional
             Overlap policy of the coalescing step.

    Returns
    -------
    aggregates : dict
                 Local aggregator rank -> LocalAggregate.
    messages   : list of Message
                 One metadata and one data message per group member (self-delivery included).
    tally      : Tally
    '''
    by_rank = {p.rank: p for p in procs}
    nodes = {rank_to_node(r, layout.topology) for r in by_rank}
    if len(nodes) != 1:
        raise ConfigError('intra_node_aggregate expects the processes of exactly one node.', field='procs')
    node = nodes.pop()

    aggregates = {}
    messages = []
    tally = Tally()
    for agg in layout.local_aggs_on_node(node):
        members = layout.members(agg)
        lists = []
        for r in members:
            proc = by_rank[r]
            _check_proc(proc)
            messages.append(Message(r, agg, 'metadata', metadata_bytes(len(proc.requests)), 'intra'))
            messages.append(Message(r, agg, 'data', proc.total_bytes, 'intra'))
            lists.append(tag_request(proc))
        merged = heap_merge(lists)
        clist = coalesce(merged.items, policy=policy)
        clist, buf = _relocate(agg, clist, {r: by_rank[r].data() for r in members})
        aggregates[agg] = LocalAggregate(agg, members, clist, buf, len(merged.items), merged.comparisons)

        tally.add('intra_comparisons', merged.comparisons)
        tally.add('intra_memmove_bytes', len(buf))
        tally.peak('max_comparisons_local', merged.comparisons)
        tally.peak('max_extents_per_local', len(merged.items))
        logger.debug('local aggregator %d: %d members, %d extents -> %d', agg, len(members),
                     len(merged.items), len(clist))
    return aggregates, messages, tally


def inter_node_exchange(aggregates, layout, cfg, policy='strict', workers=1):
    '''
    Route the local aggregators' extents to the global aggregators and merge them there.

    Every local aggregator splits its list by file domain and sends one metadata
    message per nonempty destination; every global aggregator merges its
    incoming sorted sublists.

    Parameters
    ----------
    aggregates : dict
                 Local aggregator rank -> LocalAggregate.
    layout     : AggregatorLayout
    cfg        : StripeConfig
    policy     : str, optional
    workers    : int, optional
                 Threads used for the per-global-aggregator merges.

    Returns
    -------
    merged   : list of GlobalAggregate
               By global aggregator index.
    outgoing : dict
               (local aggregator rank, global index) -> CoalescedList of fragments.
    messages : list of Message
    tally    : Tally
    '''
    outgoing = {}
    messages = []
    tally = Tally()
    for agg in sorted(aggregates):
        for g, lst in enumerate(split_by_domain(aggregates[agg].extents, cfg, layout)):
            if not len(lst):
                continue
            lst = CoalescedList(tuple(sorted(lst, key=sort_key)))
            outgoing[(agg, g)] = lst
            messages.append(Message(agg, layout.global_aggs[g], 'metadata', metadata_bytes(len(lst)), 'inter'))
            tally.add('myreq_fragments', len(lst))

    def merge_one(g):
        senders = tuple(a for a in sorted(aggregates) if (a, g) in outgoing)
        clist, comparisons, n = merge_and_coalesce([outgoing[(a, g)] for a in senders], policy=policy)
        return GlobalAggregate(g, layout.global_aggs[g], clist, senders, n, comparisons)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            merged = list(pool.map(merge_one, range(layout.n_global)))
    else:
        merged = [merge_one(g) for g in range(layout.n_global)]

    for ga in merged:
        tally.add('inter_comparisons', ga.comparisons)
        tally.add('extents_merged_global', ga.fragments_in)
        tally.add('extents_after_inter', len(ga.merged))
        tally.peak('max_comparisons_global', ga.comparisons)
    logger.info('inter-node exchange: %d fragments to %d global aggregators', len(outgoing), layout.n_global)
    return merged, outgoing, messages, tally


def exchange_round_data(aggregates, outgoing, plan, layout):
    '''
    Pack, per round, the bytes every local aggregator sends to every global aggregator.

    A payload holds the sender's segments of that (aggregator, round) ordered by
    segment_key.

    Returns
    -------
    payloads : dict
               (local aggregator rank, global index, round) -> ndarray of uint8.
    messages : list of Message
    '''
    pieces = defaultdict(list)
    for (agg, g), lst in outgoing.items():
        for ce in lst:
            r = plan.round_of(g, stripe_of(ce.offset, plan.cfg))
            pieces[(agg, g, r)].extend(ce.segments)

    payloads = {}
    messages = []
    for (agg, g, r), segs in sorted(pieces.items()):
        buf = aggregates[agg].buffer
        segs.sort(key=segment_key)
        payloads[(agg, g, r)] = np.concatenate([buf[s.buf_pos:s.buf_pos + s.length] for s in segs])
        messages.append(Message(agg, layout.global_aggs[g], 'data', len(payloads[(agg, g, r)]), 'inter', r))
    return payloads, messages


def build_placement_map(extents, agg_index, round_index):
    '''
    Placement of the incoming payloads into the contiguous write buffer of one round.

    The buffer holds the round's segments in merge order. The source position
    of a segment is its position in the sender's payload, whose segments are
    ordered by segment_key; entries that are contiguous in both the payload and
    the buffer are joined.

    Parameters
    ----------
    extents     : CoalescedList
                  The round's extents of the global aggregator, in merge order.
    agg_index   : int
    round_index : int

    Returns
    -------
    pmap : PlacementMap
    '''
    dest = 0
    placed = []
    by_src = defaultdict(list)
    for seg in extents.segments():
        placed.append((seg, dest))
        by_src[seg.holder].append(seg)
        dest += seg.length

    src_pos = {}
    for src, segs in by_src.items():
        pos = 0
        for s in sorted(segs, key=segment_key):
            src_pos[(src, segment_key(s))] = pos
            pos += s.length

    entries = []
    for seg, d in placed:
        e = PlacementEntry(seg.holder, src_pos[(seg.holder, segment_key(seg))], d, seg.length)
        if entries:
            last = entries[-1]
            if (last.src == e.src and last.src_pos + last.length == e.src_pos
                    and last.dest + last.length == e.dest):
                entries[-1] = last._replace(length=last.length + e.length)
                continue
        entries.append(e)
    return PlacementMap(agg_index, round_index, tuple(entries), dest)


class CollectiveWrite:
    """
    One collective write through local and global aggregators.

    With one local aggregator per process (P_L = P) the intra-node step is
    skipped and the operation is two-phase I/O.

    Parameters
    ----------
    procs  : sequence of ProcRequest
             One per rank 0..P-1.
    layout : AggregatorLayout
    cfg    : StripeConfig
    overlap_policy    : str, optional
                        'strict' (default) or 'last_writer'.
    stripes_per_round : int, optional
                        Default 1.
    workers           : int, optional
                        Threads for per-node and per-aggregator work. Default 1.
    round_order       : str, optional
                        'ascending' (default) or 'descending'.
    method            : str, optional
                        Label of the run, 'tam' or 'two_phase'. Defaults by layout.

    Methods
    -------
    run(file=None)
        Execute every step and return a PipelineResult.
    """

    def __init__(self, procs, layout, cfg, **kwargs):
        self.procs = sorted(procs, key=lambda p: p.rank)
        self.layout = layout
        self.cfg = cfg
        self.overlap_policy = kwargs.get('overlap_policy', 'strict')
        self.stripes_per_round = kwargs.get('stripes_per_round', 1)
        self.workers = kwargs.get('workers', 1)
        self.round_order = kwargs.get('round_order', 'ascending')
        self.method = kwargs.get('method', 'two_phase' if layout.is_two_phase() else 'tam')

        if [p.rank for p in self.procs] != list(range(layout.topology.nprocs)):
            raise ConfigError('Expected one request per rank 0..{}.'.format(layout.topology.nprocs - 1),
                              field='procs')
        if self.overlap_policy not in OVERLAP_POLICIES:
            raise ConfigError('The overlap policy must be one of {}.'.format(OVERLAP_POLICIES),
                              field='overlap_policy')
        if self.stripes_per_round < 1:
            raise ConfigError('At least one stripe per round is required.', field='stripes_per_round')
        if self.workers < 1:
            raise ConfigError('At least one worker is required.', field='workers')
        if self.round_order not in ROUND_ORDERS:
            raise ConfigError('The round order must be one of {}.'.format(ROUND_ORDERS), field='round_order')

    def _map(self, fn, items):
        if self.workers > 1:
            with ThreadPoolExecutor(max_workers=self.workers) as pool:
                return list(pool.map(fn, items))
        return [fn(x) for x in items]

    def aggregate_intra(self):
        """Local aggregates, intra messages and tally of the intra-node step."""
        topo = self.layout.topology
        if self.layout.is_two_phase():
            for p in self.procs:
                _check_proc(p)
            aggregates = {p.rank: own_aggregate(p, self.overlap_policy) for p in self.procs}
            tally = Tally()
            for a in aggregates.values():
                tally.add('intra_memmove_bytes', len(a.buffer))
                tally.peak('max_extents_per_local', a.extents_in)
            logger.info('intra-node aggregation skipped: every process is a local aggregator')
            return aggregates, [], tally

        def per_node(node):
            return intra_node_aggregate([self.procs[r] for r in topo.ranks_on_node(node)],
                                        self.layout, self.overlap_policy)

        parts = self._map(per_node, range(topo.num_nodes))
        aggregates = {}
        messages = []
        for aggs, msgs, _ in parts:
            aggregates.update(aggs)
            messages.extend(msgs)
        logger.info('intra-node aggregation: %d local aggregators', len(aggregates))
        return aggregates, messages, Tally.combine(t for _, _, t in parts)

    def run(self, file=None):
        '''
        Execute intra-node aggregation, the inter-node exchange and the I/O phase.

        Parameters
        ----------
        file : SimFile, optional
               Target file, created if omitted.

        Returns
        -------
        result : PipelineResult
        '''
        tally = Tally()
        tally.add('bytes_in', sum(p.total_bytes for p in self.procs))
        tally.add('extents_in', sum(len(p.requests) for p in self.procs))

        aggregates, intra_msgs, intra_tally = self.aggregate_intra()
        tally = tally.merge(intra_tally)
        tally.add('extents_after_intra', sum(len(a.extents) for a in aggregates.values()))

        merged, outgoing, inter_msgs, inter_tally = inter_node_exchange(
            aggregates, self.layout, self.cfg, self.overlap_policy, self.workers)
        tally = tally.merge(inter_tally)

        plan = plan_rounds([ga.merged for ga in merged], self.cfg, self.stripes_per_round)
        payloads, data_msgs = exchange_round_data(aggregates, outgoing, plan, self.layout)
        maps = {(g, e.round): build_placement_map(e.extents, g, e.round) for g, e in plan.entries()}
        tally.add('placement_entries', sum(len(m.entries) for m in maps.values()))

        file, stats = execute_write(plan, maps, payloads, file, cfg=self.cfg,
                                    overlap_policy=self.overlap_policy, n_global=self.layout.n_global,
                                    round_order=self.round_order)
        tally.add('bytes_written', stats.bytes_written)

        messages = canonical_order(intra_msgs + inter_msgs + data_msgs)
        report = measure(self.method, self.layout, self.cfg, tally, messages, plan.n_rounds,
                         stats.max_round_bytes)
        return PipelineResult(self.method, file, messages, report, plan, stats, aggregates, merged)


def run_tam(procs, layout, cfg, **kwargs):
    """Collective write through the layout's local and global aggregators."""
    kwargs.setdefault('method', 'tam')
    return CollectiveWrite(procs, layout, cfg, **kwargs).run(kwargs.get('file'))


def run_two_phase(procs, layout, cfg, **kwargs):
    """Two-phase I/O: the same pipeline on a layout where every process is a local aggregator."""
    if not layout.is_two_phase():
        raise ConfigError('Two-phase I/O needs P_L = P, got P_L = {} for P = {}.'.format(
            layout.n_local, layout.topology.nprocs), field='local_aggs')
    kwargs.setdefault('method', 'two_phase')
    return CollectiveWrite(procs, layout, cfg, **kwargs).run(kwargs.get('file'))
