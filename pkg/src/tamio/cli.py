""" Command-line front end: tamsim run | sweep | report. """

import argparse
import logging
import sys

import pandas as pd

from .config import load_config
from .errors import StripeDisciplineError, TamError
from .evaluation import run, sweep
from .metrics import load_reports, reports_to_frame, write_csv

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_MISMATCH = 1
EXIT_CONFIG = 2

SHOWN_COLUMNS = ['method', 'workload', 'P', 'P_L', 'P_G', 'k', 'max_senders_local', 'max_senders_global',
                 'othersreq_messages', 'intra_comparisons', 'inter_comparisons', 'extents_after_intra',
                 'rounds', 'verified']


def _add_run_flags(p):
    p.add_argument('--config', type=str, default=None, help='JSON config file; flags override its fields')
    p.add_argument('--workload', choices=['contiguous1d', 'btio', 's3d', 'decomp_file'], default=None)
    p.add_argument('--n', type=int, default=None, help='grid edge of btio and s3d')
    p.add_argument('--block-bytes', type=int, default=None, help='bytes per process of contiguous1d')
    p.add_argument('--nvars', type=int, default=None, help='btio variables')
    p.add_argument('--process-grid', type=int, nargs=3, default=None, metavar=('PX', 'PY', 'PZ'))
    p.add_argument('--decomp', type=str, default=None, help='decomposition JSON (default: bundled fixture)')
    p.add_argument('--procs', type=int, default=None)
    p.add_argument('--nodes', type=int, default=None)
    p.add_argument('--local-aggs-per-node', type=int, default=None)
    p.add_argument('--global-aggs', type=int, default=None, help='P_G (default: stripe count)')
    p.add_argument('--stripe-size', type=int, default=None)
    p.add_argument('--stripe-count', type=int, default=None)
    p.add_argument('--global-policy', choices=['spread_even', 'round_robin'], default=None)
    p.add_argument('--node-slot', type=int, default=None)
    p.add_argument('--method', choices=['tam', 'two_phase', 'both'], default=None)
    p.add_argument('--overlap-policy', choices=['strict', 'last_writer'], default=None)
    p.add_argument('--seed', type=int, default=None)
    p.add_argument('--stripes-per-round', type=int, default=None)
    p.add_argument('--workers', type=int, default=None)
    p.add_argument('--round-order', choices=['ascending', 'descending'], default=None)
    p.add_argument('--out', type=str, default=None, help='JSON report path')
    p.add_argument('--csv', type=str, default=None, help='CSV file to append report rows to')
    p.add_argument('--trace', type=str, default=None, help='JSON-lines message trace path')
    p.add_argument('--dump', type=str, default=None, help='binary sidecar of the final file image')
    p.add_argument('--verify', action=argparse.BooleanOptionalAction, default=None,
                   help='compare every image with the serial oracle (default: on)')


def build_parser():
    parser = argparse.ArgumentParser(prog='tamsim',
                                     description='Simulate collective writes with TAM and two-phase I/O.')
    parser.add_argument('--log-level', default='WARNING',
                        choices=['DEBUG', 'INFO', 'WARNING', 'ERROR', 'CRITICAL'])
    sub = parser.add_subparsers(dest='command', required=True)

    p_run = sub.add_parser('run', help='run one configuration and verify it')
    _add_run_flags(p_run)

    p_sweep = sub.add_parser('sweep', help='run once per local aggregators per node value')
    _add_run_flags(p_sweep)
    p_sweep.add_argument('--c-values', type=int, nargs='+', default=[1, 2, 4])
    p_sweep.add_argument('--jobs', type=int, default=1, help='points run concurrently')

    p_report = sub.add_parser('report', help='tabulate JSON reports')
    p_report.add_argument('reports', nargs='+')
    p_report.add_argument('--csv', type=str, default=None, help='also append the rows to a CSV file')
    return parser


def config_from_args(args):
    workload = {'kind': args.workload, 'n': args.n, 'block_bytes': args.block_bytes, 'nvars': args.nvars,
                'process_grid': args.process_grid, 'path': args.decomp}
    return load_config(args.config, workload=workload,
                       procs=args.procs, nodes=args.nodes, local_aggs_per_node=args.local_aggs_per_node,
                       global_aggs=args.global_aggs, stripe_size=args.stripe_size,
                       stripe_count=args.stripe_count, global_policy=args.global_policy,
                       node_slot=args.node_slot, method=args.method, overlap_policy=args.overlap_policy,
                       seed=args.seed, stripes_per_round=args.stripes_per_round, workers=args.workers,
                       round_order=args.round_order, out=args.out, csv=args.csv, trace=args.trace,
                       dump=args.dump, verify=args.verify)


def _show(frame):
    print(frame.to_string(index=False))


def cmd_run(args):
    outcome = run(config_from_args(args))
    _show(reports_to_frame(outcome.reports)[SHOWN_COLUMNS])
    for name, value in outcome.summary.items():
        print('{}: {:g}'.format(name, value))
    for method, d in outcome.divergences.items():
        if d is not None:
            print('{}: image differs at offset {} ({} vs {})'.format(method, d.offset, d.byte_a, d.byte_b))
    return EXIT_OK if outcome.verified else EXIT_MISMATCH


def cmd_sweep(args):
    config = config_from_args(args)
    outcomes, table = sweep(config, args.c_values, jobs=args.jobs)
    _show(table)
    return EXIT_OK if all(o.verified for o in outcomes) else EXIT_MISMATCH


def cmd_report(args):
    reports = [r for path in args.reports for r in load_reports(path)]
    frame = reports_to_frame(reports)
    _show(frame[SHOWN_COLUMNS])
    if args.csv:
        write_csv(reports, args.csv)
    return EXIT_OK


COMMANDS = {'run': cmd_run, 'sweep': cmd_sweep, 'report': cmd_report}


def main(argv=None):
    '''
    Entry point of the tamsim command.

    Returns
    -------
    status : int
             0 when every image matched the oracle, 1 on a mismatch, 2 on a
             configuration or workload error.
    '''
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level),
                        format='%(asctime)s %(name)s %(levelname)s %(message)s', stream=sys.stderr)
    pd.set_option('display.width', 200)
    try:
        return COMMANDS[args.command](args)
    except StripeDisciplineError as exc:
        print('error: {}'.format(exc), file=sys.stderr)
        return EXIT_MISMATCH
    except (TamError, OSError) as exc:
        print('error: {}'.format(exc), file=sys.stderr)
        return EXIT_CONFIG


if __name__ == '__main__':
    sys.exit(main())
