from __future__ import annotations

import shutil
import subprocess
import sys

import pytest

from dnsflow import cli, colstore
from dnsflow.aggregates import load_plot_data
from dnsflow.enrich import SubscriberAssignment, write_cdr

SUBCOMMANDS = ["generate", "run", "aggregate", "plan", "compare", "inspect"]


@pytest.fixture(autouse=True)
def _no_env_root(monkeypatch):
    monkeypatch.delenv(cli.OUTPUT_ROOT_ENV, raising=False)


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    gen = root / "gen"
    assert cli.main(["generate", "--seed", "3", "--subscribers", "60", "--days", "2", "--out", str(gen)]) == 0
    out = root / "ds"
    args = ["run", "--logs", str(gen / "logs" / "*.log"), "--cdr", str(gen / "cdr.csv"), "--crm", str(gen / "crm.csv"),
            "--rules", str(gen / "rules.csv"), "--out", str(out), "--workers", "2", "--chunk", "500"]
    assert cli.main(args) == 0
    return gen, out


def _run_args(gen, out, **over):
    args = {"--logs": str(gen / "logs" / "*.log"), "--cdr": str(gen / "cdr.csv"), "--crm": str(gen / "crm.csv"),
            "--rules": str(gen / "rules.csv"), "--out": str(out)}
    args.update(over)
    return ["run", *[x for kv in args.items() for x in kv]]


@pytest.mark.parametrize("command", SUBCOMMANDS)
def test_help_exits_zero_and_lists_flags(command, capsys):
    assert cli.main([command, "--help"]) == 0
    text = capsys.readouterr().out
    parser = cli.build_parser()
    sub = next(a for a in parser._actions if a.dest == "command").choices[command]
    for action in sub._actions:
        for flag in action.option_strings:
            assert flag in text


def test_top_level_usage_errors(capsys):
    assert cli.main([]) == 1
    assert cli.main(["frobnicate"]) == 1
    assert cli.main(["--help"]) == 0


def test_generate_prints_manifest_path(tmp_path, capsys):
    assert cli.main(["generate", "--seed", "1", "--subscribers", "5", "--days", "1", "--out", str(tmp_path / "g")]) == 0
    assert str(tmp_path / "g" / "manifest.txt") in capsys.readouterr().out


def test_generate_from_spec_file(tmp_path):
    spec = tmp_path / "spec.json"
    spec.write_text('{"seed": 5, "subscriber_count": 10, "days": 1}')
    assert cli.main(["generate", "--spec", str(spec), "--out", str(tmp_path / "g")]) == 0
    assert len(list((tmp_path / "g" / "logs").glob("*.log"))) == 3


def test_generate_missing_out_is_usage_error():
    assert cli.main(["generate", "--seed", "1"]) == 1


def test_generate_env_default_out(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUTPUT_ROOT_ENV, str(tmp_path))
    assert cli.main(["generate", "--subscribers", "5", "--days", "1"]) == 0
    assert (tmp_path / "generated" / "manifest.txt").exists()


def test_generate_unwritable_dir_is_io_error(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert cli.main(["generate", "--subscribers", "5", "--days", "1", "--out", str(blocker / "sub")]) == 3


def test_generate_bad_values_are_usage_errors(tmp_path):
    assert cli.main(["generate", "--subscribers", "0", "--out", str(tmp_path)]) == 1
    assert cli.main(["generate", "--seed", "-1", "--out", str(tmp_path)]) == 1


def test_run_end_to_end(dataset, capsys):
    gen, out = dataset
    assert list(colstore.segments_in(out))
    assert (out / "run_report.txt").exists()


def test_run_bad_glob_is_usage_error(tmp_path):
    assert cli.main(_run_args(tmp_path, tmp_path / "o", **{"--logs": str(tmp_path / "nothing*.log")})) == 1


def test_run_overlapping_cdr_is_data_error(dataset, tmp_path):
    gen, _ = dataset
    bad = tmp_path / "cdr.csv"
    write_cdr(bad, [SubscriberAssignment(1, 7, 0, 100), SubscriberAssignment(2, 7, 50, 150)])
    assert cli.main(_run_args(gen, tmp_path / "o", **{"--cdr": str(bad)})) == 2


def test_run_missing_reference_file_is_io_error(dataset, tmp_path):
    gen, _ = dataset
    assert cli.main(_run_args(gen, tmp_path / "o", **{"--crm": str(tmp_path / "none.csv")})) == 3


def test_run_bad_workers_is_usage_error(dataset, tmp_path):
    gen, _ = dataset
    assert cli.main(_run_args(gen, tmp_path / "o", **{"--workers": "0"})) == 1


def test_run_into_existing_dataset_is_data_error(dataset):
    gen, out = dataset
    assert cli.main(_run_args(gen, out)) == 2


def test_aggregate_hourly_users(dataset, tmp_path):
    _, out = dataset
    assert cli.main(["aggregate", "--dataset", str(out), "--report", "hourly-users", "--out", str(tmp_path / "h.csv")]) == 0
    rows = load_plot_data(tmp_path / "h.csv").rows
    assert 0 < len(rows) <= 24 * 2 * 3


@pytest.mark.parametrize("report", ["category", "region"])
def test_aggregate_other_reports(dataset, tmp_path, report):
    _, out = dataset
    args = ["aggregate", "--dataset", str(out), "--report", report, "--from", "2019-05-07", "--to", "2019-05-07",
            "--out", str(tmp_path / "r.csv")]
    assert cli.main(args) == 0
    assert {r[0] for r in load_plot_data(tmp_path / "r.csv").rows} == {"2019-05-07"}


def test_aggregate_unknown_report_is_usage_error(dataset, tmp_path):
    _, out = dataset
    assert cli.main(["aggregate", "--dataset", str(out), "--report", "bogus", "--out", str(tmp_path / "x.csv")]) == 1


def test_aggregate_empty_range_is_data_error(dataset, tmp_path):
    _, out = dataset
    args = ["aggregate", "--dataset", str(out), "--report", "region", "--from", "2020-01-01", "--to", "2020-01-02",
            "--out", str(tmp_path / "x.csv")]
    assert cli.main(args) == 2
    assert cli.main(["aggregate", "--dataset", str(out), "--report", "region", "--from", "2019-13-01",
                     "--out", str(tmp_path / "x.csv")]) == 1


def test_aggregate_missing_dataset_is_io_error(tmp_path):
    assert cli.main(["aggregate", "--dataset", str(tmp_path / "nope"), "--report", "region", "--out", str(tmp_path / "x.csv")]) == 3


def test_plan_r5_anchor(capsys):
    assert cli.main(["plan", "--instance", "r5.4xlarge", "--nodes", "10", "--runtime-min", "13"]) == 0
    out = capsys.readouterr().out
    assert "cores=5 memory=37 overhead=5" in out
    assert "total_usd=0.5999" in out


def test_plan_errors(tmp_path):
    assert cli.main(["plan", "--instance", "t2.nano", "--nodes", "10"]) == 2
    assert cli.main(["plan", "--instance", "r5.4xlarge", "--nodes", "0"]) == 1
    assert cli.main(["plan", "--instance", "r5.4xlarge", "--nodes", "1", "--catalog", str(tmp_path / "no.csv")]) == 3
    bad = tmp_path / "bad.csv"
    bad.write_text("nope\n")
    assert cli.main(["plan", "--instance", "r5.4xlarge", "--nodes", "1", "--catalog", str(bad)]) == 2


def test_compare_default_table(capsys):
    assert cli.main(["compare"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert [line.split(",")[-1] for line in lines[1:]] == ["0.3520", "0.3872", "0.5999"]


def test_compare_custom_scenarios(tmp_path):
    out = tmp_path / "c.csv"
    assert cli.main(["compare", "--scenario", "r5.4xlarge:2:10", "--scenario", "m5.xlarge:2:10", "--out", str(out)]) == 0
    assert out.read_text().splitlines()[1].startswith("m5.xlarge,2,")
    assert cli.main(["compare", "--scenario", "r5.4xlarge:2"]) == 1
    assert cli.main(["compare", "--scenario", "t9.huge:2:10"]) == 2


def test_inspect_valid_segment(dataset, capsys):
    _, out = dataset
    seg = next(colstore.segments_in(out))
    assert cli.main(["inspect", "--segment", str(seg)]) == 0
    text = capsys.readouterr().out
    assert "record_count:" in text and "query_name" in text and "dict-string" in text


def test_inspect_corrupt_and_missing(dataset, tmp_path):
    _, out = dataset
    seg = next(colstore.segments_in(out))
    corrupt = tmp_path / "bad.tnc"
    data = bytearray(seg.read_bytes())
    data[0] = ord("X")
    corrupt.write_bytes(bytes(data))
    assert cli.main(["inspect", "--segment", str(corrupt)]) == 2
    trunc = tmp_path / "trunc.tnc"
    trunc.write_bytes(seg.read_bytes()[:-1])
    assert cli.main(["inspect", "--segment", str(trunc)]) == 2
    assert cli.main(["inspect", "--segment", str(tmp_path / "missing.tnc")]) == 3


def test_console_script_installed():
    exe = shutil.which("dnsflow")
    cmd = [exe] if exe else [sys.executable, "-m", "dnsflow.cli"]
    proc = subprocess.run([*cmd, "plan", "--instance", "r5.4xlarge", "--nodes", "10"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "cores=5 memory=37 overhead=5" in proc.stdout
