""" Round-based write of aggregated data into the simulated striped file. """

import logging
import struct
from dataclasses import dataclass, field
from typing import Dict, List, NamedTuple, Tuple

import numpy as np

from .errors import StripeDisciplineError
from .model import SimFile, StripeConfig, origin_key, stripe_of
from .requests import CoalescedList, cut_at_stripes, sort_key

logger = logging.getLogger(__name__)

ROUND_ORDERS = ('ascending', 'descending')

_SIDECAR_MAGIC = b'TAMSIM01'
_TRIPLET_HEADER = struct.Struct('<QQ')


class RoundEntry(NamedTuple):
    """Stripes one global aggregator handles in one round and its extents there, in merge order."""
    round: int
    stripes: Tuple[int, ...]
    extents: CoalescedList


@dataclass(frozen=True)
class RoundPlan:
    """
    Per global aggregator, the ordered rounds of its file domain.

    `schedule[g]` lists the RoundEntry objects of aggregator g; round r covers
    its (r+1)-th group of accessed stripes.
    """
    schedule: Tuple[Tuple[RoundEntry, ...], ...]
    cfg: StripeConfig
    stripes_per_round: int = 1
    _index: Dict[Tuple[int, int], int] = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        index = {}
        for g, entries in enumerate(self.schedule):
            for entry in entries:
                for s in entry.stripes:
                    index[(g, s)] = entry.round
        object.__setattr__(self, '_index', index)

    @property
    def n_rounds(self):
        return max((len(e) for e in self.schedule), default=0)

    def rounds_of(self, agg_index):
        return len(self.schedule[agg_index])

    def round_of(self, agg_index, stripe):
        """Round in which aggregator `agg_index` writes `stripe`."""
        return self._index[(agg_index, stripe)]

    def entries(self):
        """(aggregator index, RoundEntry) pairs, aggregator-major."""
        for g, entries in enumerate(self.schedule):
            for entry in entries:
                yield g, entry


@dataclass
class WriteStats:
    """Bytes and segments written, per round and per (aggregator, round)."""
    bytes_per_round: List[int] = field(default_factory=list)
    bytes_per_agg_round: Dict[Tuple[int, int], int] = field(default_factory=dict)
    segments_written: int = 0

    @property
    def bytes_written(self):
        return sum(self.bytes_per_round)

    @property
    def max_round_bytes(self):
        return max(self.bytes_per_agg_round.values(), default=0)


def plan_rounds(merged_lists, cfg, stripes_per_round=1):
    '''
    Enumerate the accessed stripes of every global aggregator and assign them to rounds.

    Parameters
    ----------
    merged_lists      : sequence of CoalescedList
                        Merged, coalesced list of every global aggregator, by index.
    cfg               : StripeConfig
    stripes_per_round : int, optional
                        Stripes an aggregator handles per round (collective
                        buffer of stripes_per_round * stripe_size bytes).

    Returns
    -------
    plan : RoundPlan
    '''
    if stripes_per_round < 1:
        raise ValueError('stripes_per_round must be at least 1.')
    schedule = []
    for lst in merged_lists:
        by_stripe = {}
        for extent in lst:
            for piece in cut_at_stripes(extent, cfg):
                by_stripe.setdefault(stripe_of(piece.offset, cfg), []).append(piece)
        stripes = sorted(by_stripe)
        entries = []
        for r, first in enumerate(range(0, len(stripes), stripes_per_round)):
            chunk = tuple(stripes[first:first + stripes_per_round])
            pieces = sorted((p for s in chunk for p in by_stripe[s]), key=sort_key)
            entries.append(RoundEntry(r, chunk, CoalescedList(tuple(pieces))))
        schedule.append(tuple(entries))
    plan = RoundPlan(tuple(schedule), cfg, stripes_per_round)
    logger.info('round plan: %d rounds over %d global aggregators', plan.n_rounds, len(schedule))
    return plan


def _covered_bytes(extents):
    # distinct bytes covered by possibly overlapping sorted extents
    total = 0
    reach = None
    for e in sorted(extents, key=lambda x: x.offset):
        start = e.offset if reach is None else max(e.offset, reach)
        if e.end > start:
            total += e.end - start
        reach = e.end if reach is None else max(reach, e.end)
    return total


def check_discipline(agg_index, entry, n_global, cfg, stripes_per_round=1):
    '''
    Raise StripeDisciplineError unless the round respects stripe ownership and the round budget.

    Every segment must lie inside one of the round's stripes, every stripe must
    be congruent to the aggregator index mod P_G, and the round may cover at
    most stripes_per_round * stripe_size distinct bytes.
    '''
    stripes = set(entry.stripes)
    for s in entry.stripes:
        if s % n_global != agg_index:
            raise StripeDisciplineError('Aggregator {} handles stripe {} it does not own.'.format(agg_index, s))
    for seg in entry.extents.segments():
        s = stripe_of(seg.offset, cfg)
        if s not in stripes or stripe_of(seg.end - 1, cfg) != s:
            raise StripeDisciplineError('Aggregator {} round {} writes ({}, {}) outside its stripes.'.format(
                agg_index, entry.round, seg.offset, seg.length))
    covered = _covered_bytes(entry.extents)
    if covered > stripes_per_round * cfg.stripe_size:
        raise StripeDisciplineError('Aggregator {} round {} writes {} bytes, over the budget of {}.'.format(
            agg_index, entry.round, covered, stripes_per_round * cfg.stripe_size))
    return covered


def assemble_buffer(pmap, payloads):
    '''
    Contiguous write buffer of one (aggregator, round), filled through its placement map.

    Parameters
    ----------
    pmap     : PlacementMap
    payloads : dict
               (source rank, aggregator index, round) -> ndarray of uint8 payload.

    Returns
    -------
    buffer : ndarray of uint8
    '''
    buf = np.empty(pmap.size, dtype=np.uint8)
    for e in pmap.entries:
        src = payloads[(e.src, pmap.agg_index, pmap.round)]
        buf[e.dest:e.dest + e.length] = src[e.src_pos:e.src_pos + e.length]
    return buf


def execute_write(plan, placement_maps, payloads, file=None, **kwargs):
    '''
    Run the I/O phase: every global aggregator writes its rounds into the file.

    Parameters
    ----------
    plan           : RoundPlan
    placement_maps : dict
                     (aggregator index, round) -> PlacementMap.
    payloads       : dict
                     (source rank, aggregator index, round) -> payload bytes.
    file           : SimFile, optional
                     Target file; a new one is created if omitted.
    overlap_policy : str, optional
                     'strict' (default) or 'last_writer'.
    n_global       : int, optional
                     P_G (defaults to the number of scheduled aggregators).
    cfg            : StripeConfig
    round_order    : str, optional
                     'ascending' (default) or 'descending' execution of rounds.

    Returns
    -------
    file  : SimFile
    stats : WriteStats
    '''
    cfg = kwargs['cfg']
    policy = kwargs.get('overlap_policy', 'strict')
    n_global = kwargs.get('n_global', len(plan.schedule))
    round_order = kwargs.get('round_order', 'ascending')
    if round_order not in ROUND_ORDERS:
        raise ValueError('round_order must be one of {}.'.format(ROUND_ORDERS))
    file = SimFile() if file is None else file

    stats = WriteStats(bytes_per_round=[0] * plan.n_rounds)
    rounds = range(plan.n_rounds)
    if round_order == 'descending':
        rounds = reversed(rounds)
    for r in rounds:
        for g, entries in enumerate(plan.schedule):
            if r >= len(entries):
                continue
            entry = entries[r]
            covered = check_discipline(g, entry, n_global, cfg, plan.stripes_per_round)
            buf = assemble_buffer(placement_maps[(g, r)], payloads)
            pos = 0
            for seg in entry.extents.segments():
                file.write(seg.offset, buf[pos:pos + seg.length], origin=origin_key(seg.rank, seg.seq),
                           policy=policy)
                pos += seg.length
                stats.segments_written += 1
            stats.bytes_per_round[r] += covered
            stats.bytes_per_agg_round[(g, r)] = covered
            logger.debug('aggregator %d round %d wrote %d bytes', g, r, covered)
    return file, stats


def dump_sidecar(file, path):
    '''
    Write the written extents of a SimFile as (offset, length, bytes) triplets.

    Layout: an 8-byte magic, then per extent a little-endian uint64 offset and
    uint64 length followed by the bytes.
    '''
    with open(path, 'wb') as f:
        f.write(_SIDECAR_MAGIC)
        for e in file.extents():
            f.write(_TRIPLET_HEADER.pack(e.offset, e.length))
            f.write(file.read(e.offset, e.length).tobytes())


def load_sidecar(path):
    """SimFile rebuilt from a sidecar written by dump_sidecar."""
    file = SimFile()
    with open(path, 'rb') as f:
        if f.read(len(_SIDECAR_MAGIC)) != _SIDECAR_MAGIC:
            raise ValueError('{} is not a tamio sidecar.'.format(path))
        while True:
            header = f.read(_TRIPLET_HEADER.size)
            if not header:
                break
            offset, length = _TRIPLET_HEADER.unpack(header)
            file.write(offset, np.frombuffer(f.read(length), dtype=np.uint8))
    return file
