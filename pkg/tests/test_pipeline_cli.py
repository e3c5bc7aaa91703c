import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from csshred.cli import EXIT_DOMAIN, EXIT_IO, main
from csshred.config import RunConfig, load_config
from csshred.errors import ConfigError, ConfigMismatchError
from csshred.field import Field, read_field
from csshred.metrics import MetricReport
from csshred.pipeline import (
    ARTIFACTS,
    compare,
    load_field,
    prepare_data,
    reevaluate,
    run_pipeline,
    train_and_evaluate,
)
from csshred.synthetic import SyntheticSpec, generate_synthetic

SMOKE = RunConfig(nx=16, ny=16, nt=80, n_sensors=1, epochs=50, n_cols_sub=8, n_snap_sub=24,
                  hidden_size=16, l1_param=32, l2_param=32)


def smoke_flags(cfg=SMOKE):
    keys = ("nx", "ny", "nt", "n_sensors", "epochs", "n_cols_sub", "n_snap_sub", "hidden_size",
            "l1_param", "l2_param", "model", "seed")
    out = []
    for k in keys:
        out += ["--" + k.replace("_", "-"), str(getattr(cfg, k))]
    return out


def last_json(stderr: str) -> dict:
    return json.loads(stderr.strip().splitlines()[-1])


# ---------------------------------------------------------------- config


def test_config_text_round_trip():
    cfg = SMOKE.replace(solver_lambda=0.25, max_freq=7, split_input_weights=True, lr=3e-4)
    assert RunConfig.from_text(cfg.to_text()) == cfg


@given(st.integers(1, 500), st.floats(1e-6, 1.0), st.booleans(), st.sampled_from(["minmax", "zscore"]))
def test_config_round_trip_property(hidden, lr, split, norm):
    cfg = RunConfig(hidden_size=hidden, lr=lr, split_input_weights=split, normalization=norm)
    assert RunConfig.from_text(cfg.to_text()) == cfg


def test_config_file_with_overrides(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("# comment\nhidden_size = 12\nmodel = shred  # trailing\n")
    cfg = load_config(path, hidden_size="20")
    assert cfg.hidden_size == 20 and cfg.model == "shred"


@pytest.mark.parametrize("text", ["bogus = 1\n", "hidden_size = many\n", "no equals sign\n"])
def test_config_parse_errors(text):
    with pytest.raises(ConfigError):
        RunConfig.from_text(text)


@pytest.mark.parametrize("kw", [{"model": "cnn"}, {"n_cols_sub": 99}, {"lags": 1}, {"dropout": 1.0},
                                {"n_sensors": 0}, {"lr": -1.0}])
def test_config_validation(kw):
    with pytest.raises(ConfigError):
        SMOKE.replace(**kw).validate()


# ---------------------------------------------------------------- synthetic data


def test_generate_is_deterministic():
    spec = SyntheticSpec(dims=(8, 8, 40), seed=4)
    assert np.array_equal(generate_synthetic(spec).values, generate_synthetic(spec).values)


@pytest.mark.parametrize("n_modes", [1, 3])
def test_generated_series_have_sparse_dft_support(tmp_path, n_modes):
    out = tmp_path / "f.cssf"
    assert main(["generate", "--nx", "6", "--ny", "5", "--nt", "64", "--n-modes", str(n_modes),
                 "--out", str(out)]) == 0
    fld = read_field(out)
    spec = np.fft.fft(fld.values, axis=2)
    support = np.abs(spec) > 1e-8 * np.abs(spec).max(axis=2, keepdims=True)
    counts = support.sum(axis=2)
    assert np.all(counts <= 2 * n_modes)
    if n_modes == 1:
        assert np.all(counts == 2)


# ---------------------------------------------------------------- data pipeline


def test_scaler_ignores_everything_after_the_training_portion():
    fld = load_field(SMOKE)
    base = prepare_data(SMOKE, fld)
    n_fit = len(base.train) + SMOKE.lags
    poisoned = fld.values.copy()
    poisoned[..., n_fit:] = 1e6
    other = prepare_data(SMOKE, Field(poisoned, fld.name))
    assert other.scaler == base.scaler
    np.testing.assert_array_equal(other.train.inputs, base.train.inputs)
    # and it does react to the training portion itself
    poisoned[..., n_fit - 1] = 1e6
    assert prepare_data(SMOKE, Field(poisoned, fld.name)).scaler != base.scaler


def test_test_targets_come_from_the_original_field():
    data = prepare_data(SMOKE)
    assert data.test.target_source == "original"
    assert data.train.target_source == "subsampled"


# ---------------------------------------------------------------- pipeline runs


def test_cli_smoke_run_writes_every_artifact(tmp_path, capsys):
    run_dir = tmp_path / "run"
    assert main(["train", *smoke_flags(), "--run-dir", str(run_dir)]) == 0
    for name in ARTIFACTS.values():
        assert (run_dir / name).is_file(), name
    assert not (run_dir / "error.json").exists()
    assert RunConfig.from_text((run_dir / "config.txt").read_text()) == SMOKE
    assert np.loadtxt(run_dir / ARTIFACTS["snapshot"]).shape == (16, 16)
    assert "run directory" in capsys.readouterr().out


def test_rerun_gives_identical_report(tmp_path):
    a = run_pipeline(SMOKE, run_dir=tmp_path / "a")
    b = run_pipeline(SMOKE, run_dir=tmp_path / "b")
    assert a.report == b.report
    assert (tmp_path / "a/metrics.tsv").read_bytes() == (tmp_path / "b/metrics.tsv").read_bytes()
    assert (tmp_path / "a/history.tsv").read_bytes() == (tmp_path / "b/history.tsv").read_bytes()


def test_timestamped_run_dirs_do_not_collide(tmp_path):
    cfg = SMOKE.replace(epochs=2)
    a = run_pipeline(cfg, out_root=tmp_path)
    b = run_pipeline(cfg, out_root=tmp_path)
    assert a.run_dir != b.run_dir and a.run_dir.parent == tmp_path


def test_library_call_matches_cli_for_shred_on_complete_data(tmp_path):
    cfg = SMOKE.replace(model="shred", n_cols_sub=0)
    _, _, report, _ = train_and_evaluate(cfg)
    run_dir = tmp_path / "cli"
    assert main(["train", *smoke_flags(cfg), "--run-dir", str(run_dir)]) == 0
    text = (run_dir / "metrics.tsv").read_text()
    assert MetricReport.from_record(text) == report
    assert text.split("\n", 1)[1] == report.to_record()


def test_reevaluate_reproduces_metrics(tmp_path, capsys):
    res = run_pipeline(SMOKE, run_dir=tmp_path / "r")
    assert reevaluate(res.run_dir) == res.report
    assert main(["evaluate", str(res.run_dir), "--write"]) == 0
    written = (res.run_dir / "metrics_reevaluated.tsv").read_text()
    assert MetricReport.from_record(written) == res.report


def test_failed_run_leaves_error_record(tmp_path):
    with pytest.raises(ConfigError):
        run_pipeline(SMOKE.replace(model="cnn"), run_dir=tmp_path / "bad")
    record = json.loads((tmp_path / "bad/error.json").read_text())
    assert record["error"] == "ConfigError"


# ---------------------------------------------------------------- compare


def test_compare_with_itself_has_zero_deltas():
    cfg = SMOKE.replace(epochs=5)
    table, a, b = compare(cfg, cfg, write=False)
    assert a.report == b.report
    rows = table.splitlines()
    assert rows[0].startswith("metric\t")
    for row in rows[1:-1]:
        assert float(row.split("\t")[3]) == 0.0
    assert rows[-1].startswith("LPIPS\tunavailable")


def test_compare_rejects_mismatched_seeds():
    with pytest.raises(ConfigMismatchError):
        compare(SMOKE, SMOKE.replace(seed=1), write=False)


def test_cli_compare_writes_table_and_both_runs(tmp_path):
    table = tmp_path / "table.tsv"
    rc = main(["compare", *smoke_flags(SMOKE.replace(epochs=3)), "--out-root", str(tmp_path / "runs"),
               "--table", str(table)])
    assert rc == 0
    assert "Normalized Error" in table.read_text()
    assert len(list((tmp_path / "runs").iterdir())) == 2


def test_cli_compare_mismatch_exit_code(tmp_path, capsys):
    other = tmp_path / "b.cfg"
    other.write_text(SMOKE.replace(seed=5).to_text())
    rc = main(["compare", *smoke_flags(), "--config-b", str(other), "--out-root", str(tmp_path)])
    assert rc == EXIT_DOMAIN
    assert last_json(capsys.readouterr().err)["error"] == "ConfigMismatchError"


# ---------------------------------------------------------------- other subcommands and exit codes


def test_cli_subsample_zeroes_planned_entries(tmp_path):
    src, out = tmp_path / "f.cssf", tmp_path / "s.cssf"
    assert main(["generate", "--nx", "8", "--ny", "6", "--nt", "30", "--out", str(src)]) == 0
    assert main(["subsample", "--nx", "8", "--ny", "6", "--nt", "30", "--n-cols-sub", "3",
                 "--n-snap-sub", "10", "--input", str(src), "--out", str(out)]) == 0
    before, after = read_field(src).values, read_field(out).values
    zeroed = (after == 0) & (before != 0)
    assert zeroed.sum() == 8 * 3 * 10
    assert (tmp_path / "s.cssf.plan").read_text()


def test_cli_recover_fills_gaps(tmp_path, capsys):
    t = np.arange(16)
    y = np.cos(2 * np.pi * 3 * t / 16)
    vals = [("nan" if k in (2, 7, 11) else repr(float(v))) for k, v in enumerate(y)]
    win, out = tmp_path / "w.txt", tmp_path / "r.txt"
    win.write_text(" ".join(vals))
    assert main(["recover", str(win), "--out", str(out), "--solver-lambda-scale", "1e-4"]) == 0
    rec = np.loadtxt(out)
    assert np.linalg.norm(rec - y) / np.linalg.norm(y) < 1e-2
    assert "iterations=" in capsys.readouterr().err


def test_cli_domain_error_exit_code(capsys):
    assert main(["train", "--model", "cnn"]) == EXIT_DOMAIN
    err = last_json(capsys.readouterr().err)
    assert err == {"error": "ConfigError", "message": err["message"], "exit_code": EXIT_DOMAIN}


def test_cli_io_error_exit_code(tmp_path, capsys):
    assert main(["generate", "--config", str(tmp_path / "missing.cfg"), "--out", "x"]) == EXIT_IO
    assert last_json(capsys.readouterr().err)["exit_code"] == EXIT_IO


def test_cli_usage_error_exits_2():
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2
