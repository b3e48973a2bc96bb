import csv

import pytest

import relab
from relab.cli import main


def test_no_arguments_is_usage_error(capsys):
    assert main([]) == 1


def test_help_exits_zero():
    assert main(["--help"]) == 0


def test_gen_writes_readable_relation(tmp_path, capsys):
    out = tmp_path / "rel.bin"
    code = main(
        ["gen", "--n", "500", "--key-domain", "50", "--payload-width", "16",
         "--seed", "3", "--out", str(out)]
    )
    assert code == 0
    rel = relab.read_relation(out)
    assert rel.row_count == 500
    assert rel.schema.row_width == 24


def test_join_auto_small_prints_row_path(tmp_path, capsys):
    code = main(
        ["join", "--n", "1000", "--budget", "64MB", "--policy", "auto",
         "--reps", "2", "--warmup", "0", "--temp-dir", str(tmp_path)]
    )
    assert code == 0
    out = capsys.readouterr().out
    assert "path: row (reason: fits_in_memory)" in out
    assert "digest:" in out


def test_join_csv_appends_rows(tmp_path):
    csv_path = tmp_path / "rows.csv"
    for _ in range(2):
        assert main(
            ["join", "--n", "400", "--reps", "2", "--warmup", "0",
             "--temp-dir", str(tmp_path), "--csv", str(csv_path)]
        ) == 0
    rows = relab.bench.read_sweep_csv(csv_path)
    assert len(rows) == 2
    # identical except for wall-clock fields
    a, b = rows
    skip = {"p50_s", "p95_s", "p99_s", "max_s"}
    for field in relab.bench.SWEEP_COLUMNS:
        if field not in skip:
            assert getattr(a, field) == getattr(b, field)


def test_sort_desc_keys(tmp_path, capsys):
    code = main(
        ["sort", "--n", "2000", "--keys", "key:desc,payload", "--reps", "2",
         "--warmup", "0", "--budget", "64MB", "--temp-dir", str(tmp_path)]
    )
    assert code == 0
    assert "path:" in capsys.readouterr().out


def test_bench_fit_report_round_trip(tmp_path, capsys):
    cfg = tmp_path / "sweep.cfg"
    cfg.write_text(
        f"""
[DEFAULT]
operation = join
payload_width = 92
repetitions = 3
warmup = 1
seed = 7
temp_dir = {tmp_path}

[cells]
n = 1000, 3000, 6000, 11000, 22000
key_domain = n
budget = 1MB
policy = force_row, force_tensor
"""
    )
    sweep_csv = tmp_path / "sweep.csv"
    assert main(["bench", "--config", str(cfg), "--out", str(sweep_csv)]) == 0
    rows = relab.bench.read_sweep_csv(sweep_csv)
    assert len(rows) == 10

    # row path spills beyond the threshold, tensor never does
    spills = {r.n_left: r.temp_blocks for r in rows if r.policy == "force_row"}
    assert spills[1000] == 0 and spills[22000] > 0
    assert all(r.temp_blocks == 0 for r in rows if r.policy == "force_tensor")

    fit_csv = tmp_path / "fit.csv"
    assert main(["fit", "--input", str(sweep_csv), "--out", str(fit_csv)]) == 0
    out = capsys.readouterr().out
    assert "join/row/budget=1048576" in out
    assert "alpha(" in out

    out_dir = tmp_path / "series"
    assert main(
        ["report", "--input", str(sweep_csv), "--out-dir", str(out_dir)]
    ) == 0
    for name in (
        "join_scaling.csv",
        "peak_memory.csv",
        "tail_latency.csv",
        "p99_vs_input.csv",
        "temp_io.csv",
    ):
        series = out_dir / name
        assert series.exists()
        with open(series) as f:
            data = list(csv.reader(f))
        assert len(data) > 1


def test_experiment_failure_exit_code(tmp_path, capsys):
    code = main(
        ["join", "--n", "3000", "--key-domain", "1", "--payload-width", "0",
         "--policy", "force_tensor", "--max-output-rows", "1000",
         "--reps", "1", "--warmup", "0", "--temp-dir", str(tmp_path)]
    )
    assert code == 2
    assert "OutputTooLarge" in capsys.readouterr().err
