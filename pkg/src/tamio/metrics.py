""" Measured counters of a collective write and the analytic predictions they are checked against. """

import json
import logging
import math
import os
from collections import defaultdict
from dataclasses import dataclass, field
from functools import reduce
from typing import Dict, List, NamedTuple, Optional

import numpy as np
import pandas as pd

from .errors import ConfigError

logger = logging.getLogger(__name__)

PHASES = ('intra', 'inter')
KINDS = ('metadata', 'data')

# Stable order of the counters in reports and CSV rows.
COUNTERS = (
    'bytes_in', 'bytes_written',
    'extents_in', 'extents_after_intra', 'myreq_fragments', 'extents_merged_global', 'extents_after_inter',
    'intra_metadata_remote', 'intra_metadata_self', 'intra_data_remote', 'intra_data_self',
    'intra_bytes_remote', 'intra_bytes_self',
    'inter_metadata_remote', 'inter_metadata_self', 'inter_data_remote', 'inter_data_self',
    'inter_bytes_remote', 'inter_bytes_self',
    'othersreq_messages', 'othersreq_potential',
    'intra_memmove_bytes', 'placement_entries',
    'intra_comparisons', 'inter_comparisons',
    'max_extents_per_local', 'max_comparisons_local', 'max_comparisons_global',
    'max_senders_local', 'mean_senders_local', 'max_senders_global', 'mean_senders_global',
    'max_pending_sends', 'rounds', 'max_round_bytes',
    'k', 'coalesce_ratio_intra', 'coalesce_ratio_inter',
)

CONFIG_COLUMNS = ('method', 'workload', 'P', 'nodes', 'q', 'P_L', 'P_G', 'stripe_size', 'stripe_count')

CSV_COLUMNS = CONFIG_COLUMNS + COUNTERS + ('verified',)


@dataclass
class Tally:
    """
    Mergeable partial counters.

    Sums add and peaks take the maximum when two tallies merge, so partial
    tallies of independent workers combine in any order to the same result.
    """
    sums: Dict[str, int] = field(default_factory=dict)
    peaks: Dict[str, int] = field(default_factory=dict)

    def add(self, name, value=1):
        self.sums[name] = self.sums.get(name, 0) + value

    def peak(self, name, value):
        self.peaks[name] = max(self.peaks.get(name, value), value)

    def merge(self, other):
        sums = dict(self.sums)
        for k, v in other.sums.items():
            sums[k] = sums.get(k, 0) + v
        peaks = dict(self.peaks)
        for k, v in other.peaks.items():
            peaks[k] = max(peaks.get(k, v), v)
        return Tally(sums, peaks)

    @classmethod
    def combine(cls, tallies):
        return reduce(lambda a, b: a.merge(b), tallies, cls())


class Prediction(NamedTuple):
    value: float
    formula: str


class Verdict(NamedTuple):
    name: str
    measured: float
    predicted: float
    kind: str
    passed: bool


def predict(P, P_L, P_G, k):
    '''
    Analytic receive counts and sort-work surrogates of TAM and two-phase I/O.

    Big-O terms are evaluated with constant 1 and base-2 logarithms.

    Parameters
    ----------
    P   : int
          Processes.
    P_L : int
          Local aggregators (P_L = P is two-phase I/O).
    P_G : int
          Global aggregators.
    k   : float
          Mean extents per process before aggregation.

    Returns
    -------
    predicted : dict of str to Prediction
    '''
    for name, value in (('P', P), ('P_L', P_L), ('P_G', P_G), ('k', k)):
        if value is None or value < 1:
            raise ConfigError('must be at least 1 to evaluate the predictions', field=name)
    intra_sort = (P * k / P_L) * math.log2(P / P_L)
    inter_sort = (P * k / P_G) * math.log2(P_L)
    two_phase_sort = (P * k / P_G) * math.log2(P)
    return {
        'intra_receives_per_local': Prediction(P / P_L, 'P/P_L'),
        'inter_receives_per_global': Prediction(P_L / P_G, 'P_L/P_G'),
        'two_phase_receives_per_global': Prediction(P / P_G, 'P/P_G'),
        'senders_per_global': Prediction(min(P_L, P), 'P_L'),
        'othersreq_potential': Prediction(P_L * P_G, 'P_L*P_G'),
        'intra_sort': Prediction(intra_sort, '(P*k/P_L)*log2(P/P_L)'),
        'inter_sort': Prediction(inter_sort, '(P*k/P_G)*log2(P_L)'),
        'two_phase_sort': Prediction(two_phase_sort, '(P*k/P_G)*log2(P)'),
        'tam_sort': Prediction(inter_sort + intra_sort, '(P*k/P_G)*log2(P_L)+(P*k/P_L)*log2(P/P_L)'),
        'tam_sort_cheaper': Prediction(float(inter_sort + intra_sort <= two_phase_sort), 'tam_sort<=two_phase_sort'),
        'congestion_reduction': Prediction(P / P_L, 'P/P_L'),
    }


@dataclass
class MetricsReport:
    """
    Counters of one collective write.

    Parameters
    ----------
    method    : str
                'tam' or 'two_phase'.
    config    : dict
                P, nodes, q, P_L, P_G, stripe_size, stripe_count.
    counters  : dict
                Measured values keyed by the names in COUNTERS.
    predicted : dict of str to Prediction
    workload  : str, optional
    verified  : bool, optional
                Oracle verdict, None when verification did not run.
    verdicts  : list of Verdict, optional
    """
    method: str
    config: Dict[str, int]
    counters: Dict[str, float]
    predicted: Dict[str, Prediction] = field(default_factory=dict)
    workload: str = ''
    verified: Optional[bool] = None
    verdicts: List[Verdict] = field(default_factory=list)

    def __getitem__(self, name):
        if name in self.counters:
            return self.counters[name]
        return self.config[name]

    def to_dict(self):
        return {
            'method': self.method,
            'workload': self.workload,
            'config': dict(self.config),
            'counters': {name: _plain(self.counters[name]) for name in COUNTERS},
            'predicted': {name: {'value': _plain(p.value), 'formula': p.formula}
                          for name, p in self.predicted.items()},
            'verdicts': [v._asdict() for v in self.verdicts],
            'verified': self.verified,
        }

    def to_json(self, **kwargs):
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_dict(cls, doc):
        return cls(method=doc['method'],
                   config=dict(doc['config']),
                   counters=dict(doc['counters']),
                   predicted={k: Prediction(v['value'], v['formula']) for k, v in doc.get('predicted', {}).items()},
                   workload=doc.get('workload', ''),
                   verified=doc.get('verified'),
                   verdicts=[Verdict(**v) for v in doc.get('verdicts', [])])

    def row(self):
        """One CSV row in CSV_COLUMNS order."""
        values = {'method': self.method, 'workload': self.workload, 'verified': self.verified}
        values.update(self.config)
        values.update(self.counters)
        return [_plain(values.get(c)) for c in CSV_COLUMNS]

    def without_method(self):
        """Dict form with the method label removed, for comparing runs of different methods."""
        doc = self.to_dict()
        doc.pop('method')
        return doc


def _plain(value):
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    return value


def _ratio(num, den):
    return float(num) / den if den else 0.0


def message_counters(messages):
    '''
    Message, byte, sender and pending-send counters derived from a message trace.

    Parameters
    ----------
    messages : iterable of Message

    Returns
    -------
    counters : dict
    '''
    out = {}
    for phase in PHASES:
        for kind in KINDS:
            out['{}_{}_remote'.format(phase, kind)] = 0
            out['{}_{}_self'.format(phase, kind)] = 0
        out['{}_bytes_remote'.format(phase)] = 0
        out['{}_bytes_self'.format(phase)] = 0
    senders = defaultdict(set)
    batches = defaultdict(int)
    for m in messages:
        where = 'self' if m.src == m.dst else 'remote'
        out['{}_{}_{}'.format(m.phase, m.kind, where)] += 1
        out['{}_bytes_{}'.format(m.phase, where)] += m.nbytes
        if m.phase == 'inter' and m.kind == 'metadata':
            senders[m.dst].add(m.src)
        if where == 'remote':
            batches[(m.src, m.phase, m.round, m.kind)] += 1
    out['othersreq_messages'] = out['inter_metadata_remote'] + out['inter_metadata_self']
    out['max_pending_sends'] = max(batches.values()) if batches else 0
    return out, senders


def measure(method, layout, cfg, tally, messages, rounds, max_round_bytes):
    '''
    Assemble the MetricsReport of one run.

    Parameters
    ----------
    method          : str
    layout          : AggregatorLayout
    cfg             : StripeConfig
    tally           : Tally
                      Merged partial counters of the aggregation steps.
    messages        : list of Message
                      Canonically ordered trace.
    rounds          : int
    max_round_bytes : int

    Returns
    -------
    report : MetricsReport
    '''
    topo = layout.topology
    P = topo.nprocs
    counters, senders = message_counters(messages)
    group_sizes = [len(layout.members(a)) for a in layout.local_aggs]
    global_senders = [len(senders.get(g, ())) for g in layout.global_aggs]

    for name in ('bytes_in', 'bytes_written', 'extents_in', 'extents_after_intra', 'myreq_fragments',
                 'extents_merged_global', 'extents_after_inter', 'intra_memmove_bytes', 'placement_entries',
                 'intra_comparisons', 'inter_comparisons'):
        counters[name] = tally.sums.get(name, 0)
    for name in ('max_extents_per_local', 'max_comparisons_local', 'max_comparisons_global'):
        counters[name] = tally.peaks.get(name, 0)
    counters['othersreq_potential'] = layout.n_local * layout.n_global
    counters['max_senders_local'] = max(group_sizes)
    counters['mean_senders_local'] = float(np.mean(group_sizes))
    counters['max_senders_global'] = max(global_senders)
    counters['mean_senders_global'] = float(np.mean(global_senders))
    counters['rounds'] = rounds
    counters['max_round_bytes'] = max_round_bytes
    counters['k'] = _ratio(counters['extents_in'], P)
    counters['coalesce_ratio_intra'] = _ratio(counters['extents_in'], counters['extents_after_intra'])
    counters['coalesce_ratio_inter'] = _ratio(counters['extents_merged_global'], counters['extents_after_inter'])

    config = {'P': P, 'nodes': topo.num_nodes, 'q': topo.procs_per_node, 'P_L': layout.n_local,
              'P_G': layout.n_global, 'stripe_size': cfg.stripe_size, 'stripe_count': cfg.stripe_count}
    predicted = {}
    if counters['k'] > 0:
        predicted = predict(P, layout.n_local, layout.n_global, max(counters['k'], 1))
    else:
        logger.info('empty workload: no predictions')
    return MetricsReport(method=method, config=config, counters=counters, predicted=predicted)


def _count_verdict(name, measured, predicted):
    if measured == predicted:
        return Verdict(name, measured, predicted, 'exact', True)
    return Verdict(name, measured, predicted, 'bound', measured <= predicted)


def _ratio_verdict(name, measured, predicted, limit=2.0):
    if predicted == 0:
        return Verdict(name, measured, predicted, 'ratio', measured == 0)
    return Verdict(name, measured, predicted, 'ratio', measured / predicted <= limit)


def check(measured, predicted=None):
    '''
    Compare measured counters with the analytic predictions.

    Count-type predictions match exactly when every sender holds data for
    every receiver and are upper bounds otherwise; comparison counts pass when
    within twice their sort-work surrogate.

    The inter surrogate counts extents before the stripe split, while the
    global merges run over stripe-cut fragments, so small stripes can push
    `inter_sort` past its limit. `inter_merge_bound` checks the same
    comparisons against the merge bound n*ceil(log2 m) + m instead, with n the
    fragments merged and m the senders per global aggregator.

    Parameters
    ----------
    measured  : MetricsReport
    predicted : dict of str to Prediction, optional
                Defaults to measured.predicted.

    Returns
    -------
    verdicts : list of Verdict
    '''
    predicted = measured.predicted if predicted is None else predicted
    if not predicted:
        return []
    P = measured.config['P']
    P_L = measured.config['P_L']
    P_G = measured.config['P_G']
    verdicts = [
        _count_verdict('senders_per_local', measured['max_senders_local'], math.ceil(P / P_L)),
        _count_verdict('senders_per_global', measured['max_senders_global'], predicted['senders_per_global'].value),
        _count_verdict('othersreq_messages', measured['othersreq_messages'], predicted['othersreq_potential'].value),
    ]
    if P_L < P:
        verdicts.append(_ratio_verdict('intra_sort', measured['intra_comparisons'] / P_L,
                                       predicted['intra_sort'].value))
    verdicts.append(_ratio_verdict('inter_sort', measured['inter_comparisons'] / P_G,
                                   predicted['inter_sort'].value))
    m = max(int(measured['max_senders_global']), 1)
    bound = measured['extents_merged_global'] * math.ceil(math.log2(m)) + P_G * m
    verdicts.append(_count_verdict('inter_merge_bound', measured['inter_comparisons'], bound))
    return verdicts


def reports_to_frame(reports):
    """pandas DataFrame with one row per report, columns in CSV_COLUMNS order."""
    return pd.DataFrame([r.row() for r in reports], columns=list(CSV_COLUMNS))


def write_csv(reports, path, append=True):
    '''
    Write report rows to a CSV file.

    Parameters
    ----------
    reports : list of MetricsReport
    path    : str
    append  : bool, optional
              Append to an existing file (the header is written only when the
              file is new).
    '''
    frame = reports_to_frame(reports)
    exists = append and os.path.exists(path)
    frame.to_csv(path, mode='a' if exists else 'w', header=not exists, index=False)


def load_reports(path):
    '''
    Read reports written by `write_json` (a single report or a list of them).

    Returns
    -------
    reports : list of MetricsReport
    '''
    with open(path) as f:
        doc = json.load(f)
    if isinstance(doc, dict) and 'reports' in doc:
        doc = doc['reports']
    if isinstance(doc, dict):
        doc = [doc]
    return [MetricsReport.from_dict(d) for d in doc]


def write_json(reports, path, **extra):
    """Serialize reports as one JSON document: {"reports": [...], **extra}."""
    doc = {'reports': [r.to_dict() for r in reports]}
    doc.update(extra)
    with open(path, 'w') as f:
        json.dump(doc, f, indent=2, sort_keys=False)
