"""Run local aggregator sweeps and TAM vs two-phase comparisons on the simulated workloads."""

import os
import logging
import numpy as np
import pandas as pd
from tamio.config import parse_config
from tamio.evaluation import run, sweep
from tamio.metrics import predict, reports_to_frame

logging.basicConfig(level=logging.INFO, format='%(asctime)s %(name)s %(levelname)s %(message)s')

# ------------ PARAMETERS ------------
procs = 64 # (int) simulated processes
nodes = 4 # (int) simulated nodes, must divide procs
stripe_size = 4096 # (int) file system stripe size in bytes
stripe_count = 8 # (int) stripes per round-robin cycle, also the number of global aggregators
c_values = [1, 2, 4, 8, 16] # (list of int) local aggregators per node to sweep
jobs = 4 # (int) sweep points run concurrently
run_sweep = 1 # (boolean) sweep the local aggregator count on every workload
run_compare = 1 # (boolean) one verified TAM and two-phase run per workload
run_scaling = 0 # (boolean) tabulate the analytic receive counts and sort surrogates at large scale
out_dir = 'results' # (str) output directory
# -------------------------------------

workloads = {
    'contiguous1d': {'kind': 'contiguous1d', 'block_bytes': 16384},
    'btio': {'kind': 'btio', 'n': 32, 'nvars': 4},
    's3d': {'kind': 's3d', 'n': 16},
    'decomp_file': {'kind': 'decomp_file'},
}

os.makedirs(out_dir, exist_ok=True)


def base_config(workload):
    P = procs
    if workload['kind'] == 'decomp_file':
        # the bundled decomposition records 8 processes
        P = 8
    return parse_config({'workload': workload, 'procs': P, 'nodes': min(nodes, P), 'stripe_size': stripe_size,
                         'stripe_count': min(stripe_count, P)})


if run_sweep == 1:
    tables = []
    for name, workload in workloads.items():
        cfg = base_config(workload)
        usable = [c for c in c_values if c <= cfg.q]
        outcomes, table = sweep(cfg, usable, jobs=jobs)
        table.insert(0, 'workload', name)
        tables.append(table)
        print(name)
        print(table.to_string(index=False))
    pd.concat(tables).to_csv(os.path.join(out_dir, 'pl_sweep.csv'), index=False)


if run_compare == 1:
    reports = []
    summary = []
    for name, workload in workloads.items():
        outcome = run(base_config(workload))
        reports.extend(outcome.reports)
        summary.append({'workload': name, 'verified': outcome.verified, **outcome.summary})
    frame = reports_to_frame(reports)
    frame.to_csv(os.path.join(out_dir, 'compare.csv'), index=False)
    print(pd.DataFrame(summary).to_string(index=False))


if run_scaling == 1:
    """ Receive counts and sort surrogates for a range of process counts."""
    rows = []
    for P in [1024, 4096, 16384]:
        for P_L in [P // 64, P // 16, P // 4]:
            p = predict(P, P_L, 56, 1)
            rows.append({'P': P, 'P_L': P_L, 'P_G': 56,
                         **{name: np.round(pred.value, 3) for name, pred in p.items()}})
    table = pd.DataFrame(rows)
    table.to_csv(os.path.join(out_dir, 'scaling.csv'), index=False)
    print(table.to_string(index=False))
