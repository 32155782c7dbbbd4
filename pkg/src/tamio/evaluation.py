""" Serial oracle, byte-exact comparison and verified runs of TAM and two-phase I/O. """

import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, NamedTuple, Optional

import numpy as np
import pandas as pd

from .errors import WorkloadError
from .iophase import dump_sidecar
from .metrics import check, write_csv, write_json
from .model import SimFile, origin_key
from .pipeline import run_tam, run_two_phase, write_trace
from .requests import validate
from .selection import build_layout, two_phase_layout
from .workloads import from_spec

logger = logging.getLogger(__name__)

METHODS = ('tam', 'two_phase')


class Divergence(NamedTuple):
    """First differing byte; a byte is None where that file was never written."""
    offset: int
    byte_a: Optional[int]
    byte_b: Optional[int]


def serial_oracle(procs, policy='strict'):
    '''
    Reference image: every process writes its own extents directly, in ascending rank order.

    Parameters
    ----------
    procs  : sequence of ProcRequest
    policy : str, optional
             Overlap policy, as in the pipeline.

    Returns
    -------
    file : SimFile
    '''
    file = SimFile()
    for p in sorted(procs, key=lambda p: p.rank):
        violation = validate(p.requests)
        if violation is not None:
            raise WorkloadError('Request list of rank {} is invalid at index {}: {}.'.format(
                p.rank, violation.index, violation.reason))
        data = p.data()
        for seq, (e, pos) in enumerate(zip(p.requests, p.stream_positions())):
            file.write(e.offset, data[pos:pos + e.length], origin=origin_key(p.rank, seq), policy=policy)
    return file


def compare(file_a, file_b):
    '''
    Byte-exact comparison over the union of the written extents of two files.

    Returns
    -------
    divergence : Divergence or None
                 None when the images are equal.
    '''
    if file_a.page_size != file_b.page_size:
        raise ValueError('Files with different page sizes cannot be compared page by page.')
    size = file_a.page_size
    empty = (np.zeros(size, dtype=np.uint8), np.zeros(size, dtype=bool))
    for number in sorted(set(file_a.page_numbers()) | set(file_b.page_numbers())):
        data_a, mask_a = file_a.page_view(number) or empty
        data_b, mask_b = file_b.page_view(number) or empty
        differ = (mask_a != mask_b) | (mask_a & mask_b & (data_a != data_b))
        hit = np.flatnonzero(differ)
        if hit.size:
            i = int(hit[0])
            return Divergence(number * size + i,
                              int(data_a[i]) if mask_a[i] else None,
                              int(data_b[i]) if mask_b[i] else None)
    return None


@dataclass
class RunOutcome:
    """Reports, oracle verdicts and pipeline results of one run, keyed by method."""
    reports: List = field(default_factory=list)
    divergences: Dict[str, Optional[Divergence]] = field(default_factory=dict)
    results: Dict[str, object] = field(default_factory=dict)
    summary: Dict[str, float] = field(default_factory=dict)

    @property
    def verified(self):
        return all(d is None for d in self.divergences.values())

    def report(self, method):
        return next(r for r in self.reports if r.method == method)


def _per_method(path, method, several):
    if path is None or not several:
        return path
    stem, ext = os.path.splitext(path)
    return '{}.{}{}'.format(stem, method, ext)


class Evaluation:
    """
    Verified runs of one configuration.

    Parameters
    ----------
    config : RunConfig

    Methods
    -------
    eval()
        Run the configured method(s), verify them and write the requested outputs.
    sweep(c_values, jobs=1)
        Run once per local-aggregator count and tabulate the cost proxies.
    """

    def __init__(self, config, **kwargs):
        self.config = config
        self.procs = kwargs.get('procs')
        if self.procs is None:
            self.procs = from_spec(config.workload, config.procs, seed=config.seed)

    def methods(self):
        return METHODS if self.config.method == 'both' else (self.config.method,)

    def layout(self, method):
        c = self.config
        if method == 'two_phase':
            return two_phase_layout(c.topology(), c.n_global, c.global_policy, c.node_slot)
        return build_layout(c.topology(), c.local_aggs_per_node, c.n_global, c.global_policy, c.node_slot)

    def run_method(self, method, oracle=None):
        c = self.config
        runner = run_two_phase if method == 'two_phase' else run_tam
        result = runner(self.procs, self.layout(method), c.stripe_config(),
                        overlap_policy=c.overlap_policy, stripes_per_round=c.stripes_per_round,
                        workers=c.workers, round_order=c.round_order)
        divergence = compare(result.file, oracle) if oracle is not None else None
        report = result.metrics
        report.workload = c.workload.kind
        report.verified = (divergence is None) if oracle is not None else None
        report.verdicts = check(report)
        if divergence is not None:
            logger.warning('%s image differs from the oracle at offset %d: %s vs %s', method,
                           divergence.offset, divergence.byte_a, divergence.byte_b)
        else:
            logger.info('%s: %s', method, 'verified' if oracle is not None else 'not verified')
        return result, divergence

    def eval(self):
        '''
        Returns
        -------
        outcome : RunOutcome
        '''
        c = self.config
        oracle = serial_oracle(self.procs, c.overlap_policy) if c.verify else None
        outcome = RunOutcome()
        methods = self.methods()
        for method in methods:
            result, divergence = self.run_method(method, oracle)
            outcome.results[method] = result
            outcome.reports.append(result.metrics)
            if oracle is not None:
                outcome.divergences[method] = divergence
            several = len(methods) > 1
            if c.trace:
                write_trace(result.messages, _per_method(c.trace, method, several))
            if c.dump:
                dump_sidecar(result.file, _per_method(c.dump, method, several))
        if len(methods) > 1:
            tam, base = outcome.report('tam'), outcome.report('two_phase')
            outcome.summary['congestion_reduction'] = (
                base['max_senders_global'] / tam['max_senders_global'] if tam['max_senders_global'] else 0.0)
        if c.out:
            write_json(outcome.reports, c.out, summary=outcome.summary)
        if c.csv:
            write_csv(outcome.reports, c.csv)
        return outcome

    def sweep(self, c_values, jobs=1):
        '''
        Run the configuration once per local aggregators per node value.

        Each point gets intra cost proxy f = max extents merged by a local
        aggregator and inter cost proxy g = max distinct senders per global
        aggregator + inter merge comparisons. The TAM point with the smallest
        f/max(f) + g/max(g) is flagged best.

        Parameters
        ----------
        c_values : sequence of int
        jobs     : int, optional
                   Points run concurrently.

        Returns
        -------
        outcomes : list of RunOutcome
        table    : pandas.DataFrame
        '''
        points = [self.config.replace(local_aggs_per_node=int(cv), out=None, csv=None, trace=None, dump=None)
                  for cv in c_values]

        def one(cfg):
            return Evaluation(cfg, procs=self.procs).eval()

        if jobs > 1:
            with ThreadPoolExecutor(max_workers=jobs) as pool:
                outcomes = list(pool.map(one, points))
        else:
            outcomes = [one(p) for p in points]

        rows = []
        for cv, outcome in zip(c_values, outcomes):
            for r in outcome.reports:
                rows.append({'c': int(cv), 'P_L': r.config['P_L'], 'method': r.method,
                             'f': r['max_extents_per_local'],
                             'g': r['max_senders_global'] + r['inter_comparisons'],
                             'max_senders_global': r['max_senders_global'],
                             'verified': r.verified})
        table = pd.DataFrame(rows, columns=['c', 'P_L', 'method', 'f', 'g', 'max_senders_global', 'verified'])
        table['score'] = np.nan
        table['best'] = False
        tam = table['method'] == 'tam'
        if tam.any():
            f, g = table.loc[tam, 'f'], table.loc[tam, 'g']
            table.loc[tam, 'score'] = f / max(f.max(), 1) + g / max(g.max(), 1)
            table.loc[table.loc[tam, 'score'].idxmin(), 'best'] = True

        reports = [r for o in outcomes for r in o.reports]
        if self.config.out:
            write_json(reports, self.config.out, sweep=json.loads(table.to_json(orient='records')))
        if self.config.csv:
            write_csv(reports, self.config.csv)
        return outcomes, table


def run(config):
    """Verified run of one RunConfig; see Evaluation.eval."""
    return Evaluation(config).eval()


def sweep(config, c_values, jobs=1):
    """Local-aggregator sweep of one RunConfig; see Evaluation.sweep."""
    return Evaluation(config).sweep(c_values, jobs=jobs)
