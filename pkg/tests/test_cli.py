import json

import pandas as pd
import pytest

from tamio import cli
from tamio.errors import StripeDisciplineError
from tamio.evaluation import Divergence, RunOutcome
from tamio.iophase import load_sidecar
from tamio.metrics import CSV_COLUMNS, load_reports
from tamio.pipeline import read_trace

SMALL = ['--workload', 'contiguous1d', '--procs', '8', '--nodes', '2', '--block-bytes', '64',
         '--stripe-size', '128', '--stripe-count', '2']


def test_run_writes_every_output(tmp_path, capsys):
    out, csv, trace, dump = (str(tmp_path / name) for name in ('r.json', 'r.csv', 'trace.jsonl', 'image.bin'))
    status = cli.main(['run'] + SMALL + ['--out', out, '--csv', csv, '--trace', trace, '--dump', dump])
    assert status == cli.EXIT_OK
    printed = capsys.readouterr().out
    assert 'congestion_reduction: 2' in printed

    reports = load_reports(out)
    assert [r.method for r in reports] == ['tam', 'two_phase']
    assert all(r.verified for r in reports)
    assert list(pd.read_csv(csv).columns) == list(CSV_COLUMNS)

    messages = read_trace(str(tmp_path / 'trace.tam.jsonl'))
    assert {m.phase for m in messages} == {'intra', 'inter'}
    assert load_sidecar(str(tmp_path / 'image.two_phase.bin')).written_bytes == 512


def test_single_method_keeps_paths(tmp_path):
    trace = str(tmp_path / 'trace.jsonl')
    assert cli.main(['run'] + SMALL + ['--method', 'tam', '--trace', trace]) == cli.EXIT_OK
    assert read_trace(trace)


def test_flags_override_the_config_file(tmp_path):
    path = tmp_path / 'cfg.json'
    path.write_text(json.dumps({'workload': {'kind': 's3d', 'n': 4}, 'procs': 8, 'nodes': 2,
                                'stripe_size': 256, 'method': 'two_phase'}))
    out = str(tmp_path / 'r.json')
    assert cli.main(['run', '--config', str(path), '--method', 'tam', '--out', out]) == cli.EXIT_OK
    (report,) = load_reports(out)
    assert report.method == 'tam'
    assert report.workload == 's3d'
    assert report.config['stripe_size'] == 256


def test_no_verify(tmp_path):
    out = str(tmp_path / 'r.json')
    assert cli.main(['run'] + SMALL + ['--no-verify', '--out', out]) == cli.EXIT_OK
    assert all(r.verified is None for r in load_reports(out))


@pytest.mark.parametrize("flags", [
    ['--procs', '6', '--nodes', '4'],
    ['--procs', '8', '--nodes', '2', '--local-aggs-per-node', '5'],
    ['--workload', 'btio', '--procs', '8', '--nodes', '2'],
    ['--workload', 'decomp_file', '--decomp', '/nonexistent/decomp.json'],
])
def test_bad_configuration_exits_2(flags, capsys):
    assert cli.main(['run'] + flags) == cli.EXIT_CONFIG
    assert 'error:' in capsys.readouterr().err


def test_unreadable_config_file(tmp_path):
    path = tmp_path / 'cfg.json'
    path.write_text('[1, 2]')
    assert cli.main(['run', '--config', str(path)]) == cli.EXIT_CONFIG


def test_mismatch_exits_1(monkeypatch, capsys):
    monkeypatch.setattr(cli, 'run', lambda config: RunOutcome(divergences={'tam': Divergence(5, 1, None)}))
    assert cli.main(['run'] + SMALL) == cli.EXIT_MISMATCH
    assert 'offset 5' in capsys.readouterr().out


def test_stripe_discipline_exits_1(monkeypatch):
    def fail(config):
        raise StripeDisciplineError('round 0 of aggregator 1 spans two stripes')

    monkeypatch.setattr(cli, 'run', fail)
    assert cli.main(['run'] + SMALL) == cli.EXIT_MISMATCH


def test_sweep(tmp_path, capsys):
    out = str(tmp_path / 'sweep.json')
    args = ['sweep', '--workload', 'contiguous1d', '--procs', '16', '--nodes', '2', '--block-bytes', '64',
            '--stripe-size', '16', '--stripe-count', '2', '--c-values', '1', '2', '4', '--out', out]
    assert cli.main(args) == cli.EXIT_OK
    with open(out) as f:
        doc = json.load(f)
    assert [row['c'] for row in doc['sweep'] if row['method'] == 'tam'] == [1, 2, 4]
    assert len(doc['reports']) == 6
    assert 'best' in capsys.readouterr().out


def test_report(tmp_path, capsys):
    out = str(tmp_path / 'r.json')
    cli.main(['run'] + SMALL + ['--out', out])
    capsys.readouterr()
    csv = str(tmp_path / 'all.csv')
    assert cli.main(['report', out, out, '--csv', csv]) == cli.EXIT_OK
    assert 'two_phase' in capsys.readouterr().out
    assert len(pd.read_csv(csv)) == 4
