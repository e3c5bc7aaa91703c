"""End-to-end orchestration: data, corruption, sensors, training, evaluation, artefacts."""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import SHARED_KEYS, RunConfig
from .errors import ConfigMismatchError
from .field import (
    Field,
    ScalerParams,
    SensorSet,
    SequenceDataset,
    apply_scaler,
    build_dataset,
    fit_scaler,
    from_time_major,
    invert_scaler,
    place_sensors,
    read_field,
    split_dataset,
    split_sizes,
    to_time_major,
    valid_locations,
    write_field,
)
from .metrics import METRIC_HEADER, MetricReport, evaluate, per_snapshot
from .shred import ShredModel, init_params, load_params, save_params
from .subsample import SubsamplePlan, apply_plan, make_plan, plan_mask
from .synthetic import generate_synthetic
from .training import History, fit

log = logging.getLogger(__name__)

ARTIFACTS = {
    "config": "config.txt",
    "plan": "plan.txt",
    "sensors": "sensors.txt",
    "checkpoint": "model.bin",
    "history": "history.tsv",
    "metrics": "metrics.tsv",
    "snapshot": "snapshot_last_pred.txt",
}


@dataclass
class PreparedData:
    field: Field
    field_sub: Field
    plan: SubsamplePlan
    sensors: SensorSet
    scaler: ScalerParams
    train: SequenceDataset
    val: SequenceDataset
    test: SequenceDataset

    @property
    def grid(self) -> tuple[int, int]:
        return self.field.dims[:2]


@dataclass
class RunResult:
    run_dir: Path | None
    report: MetricReport
    history: History
    model: ShredModel
    data: PreparedData


def load_field(cfg: RunConfig) -> Field:
    if cfg.dataset == "synthetic":
        return generate_synthetic(cfg.synthetic_spec())
    return read_field(cfg.dataset)


def prepare_data(cfg: RunConfig, fld: Field | None = None) -> PreparedData:
    """Corrupt, place sensors, normalise (train-only statistics) and split."""
    fld = fld if fld is not None else load_field(cfg)
    plan = make_plan(fld.dims, cfg.n_cols_sub, cfg.n_snap_sub, cfg.seed)
    fld_sub = apply_plan(fld, plan)
    valid = valid_locations(fld_sub, cfg.eps_valid) if cfg.valid_filter else np.arange(fld.n_space)
    sensors = place_sensors(valid, cfg.n_sensors, cfg.seed)

    x = fld.time_major()
    x_sub = fld_sub.time_major()
    missing = to_time_major(plan_mask(plan))

    n_train, _, _ = split_sizes(fld.n_t - cfg.lags)
    # the training portion is every snapshot touched by a training window or target
    scaler = fit_scaler(x_sub[: n_train + cfg.lags], cfg.normalization)
    x_sub_n = apply_scaler(x_sub, scaler)
    x_n = apply_scaler(x, scaler)

    use_mask = cfg.recovery and cfg.availability == "mask"
    ds = build_dataset(x_sub_n, sensors, cfg.lags, missing=missing if use_mask else None)
    train, val, test = split_dataset(ds, original_states=x_n)
    return PreparedData(fld, fld_sub, plan, sensors, scaler, train, val, test)


def build_model(cfg: RunConfig, data: PreparedData) -> ShredModel:
    params = init_params(
        sensors=data.sensors.count,
        hidden_size=cfg.hidden_size,
        hidden_layers=cfg.hidden_layers,
        state_dim=data.field.n_space,
        decoder_dims=(cfg.l1_param, cfg.l2_param),
        seed=cfg.seed,
        final_activation=cfg.final_activation,
        split_input_weights=cfg.split_input_weights,
        dropout=cfg.dropout,
    )
    return ShredModel(params, recovery=cfg.recovery, solver=cfg.solver_config(),
                      recovery_mode=cfg.recovery_mode)


def train_and_evaluate(cfg: RunConfig, data: PreparedData | None = None):
    """Library entry point without any file output."""
    cfg.validate()
    data = data if data is not None else prepare_data(cfg)
    model, history = fit(build_model(cfg, data), data.train, data.val,
                         cfg.train_config(), cfg.loss_weights())
    report = evaluate(model, data.test, data.scaler, data.grid)
    return model, history, report, data


def _new_run_dir(out_root: Path, cfg: RunConfig) -> Path:
    stamp = time.strftime("%Y%m%d-%H%M%S")
    base = out_root / f"{stamp}_{cfg.model}_seed{cfg.seed}"
    run_dir, k = base, 1
    while run_dir.exists():
        run_dir = Path(f"{base}_{k}")
        k += 1
    run_dir.mkdir(parents=True)
    return run_dir


def _write_grid(path: Path, grid: np.ndarray) -> None:
    np.savetxt(path, grid, fmt="%.17g")


def write_artifacts(run_dir: Path, cfg: RunConfig, result: RunResult) -> None:
    data, model = result.data, result.model
    (run_dir / ARTIFACTS["config"]).write_text(cfg.to_text())
    (run_dir / ARTIFACTS["plan"]).write_text(data.plan.to_text())
    (run_dir / ARTIFACTS["sensors"]).write_text(data.sensors.to_text())
    save_params(run_dir / ARTIFACTS["checkpoint"], model.params,
                {"model": cfg.model, "lags": cfg.lags, "seed": cfg.seed})
    (run_dir / ARTIFACTS["history"]).write_text(result.history.to_text())
    (run_dir / ARTIFACTS["metrics"]).write_text(METRIC_HEADER + "\n" + result.report.to_record())
    (run_dir / "summary.txt").write_text(result.report.summary())

    n_x, n_y = data.grid
    pred = invert_scaler(model.predict(data.test.inputs, data.test.missing), data.scaler)
    truth = invert_scaler(data.test.targets, data.scaler)
    pred = pred.reshape(-1, n_x, n_y)
    truth = truth.reshape(-1, n_x, n_y)
    _write_grid(run_dir / ARTIFACTS["snapshot"], pred[-1])
    _write_grid(run_dir / "snapshot_last_true.txt", truth[-1])
    write_field(run_dir / "test_prediction.cssf",
                Field(from_time_major(pred.reshape(pred.shape[0], -1), n_x, n_y), "test_prediction"))
    err, s, p, mse = per_snapshot(pred, truth, float(truth.max() - truth.min()))
    times = data.test.times
    for name, series in (("normalized_error", err), ("ssim", s), ("psnr", p), ("mse", mse)):
        np.savetxt(run_dir / f"series_{name}.txt", np.column_stack([times, series]), fmt="%.17g",
                   header=f"t {name}")


def run_pipeline(cfg: RunConfig, out_root="runs", run_dir=None, fld: Field | None = None) -> RunResult:
    """Run every stage and write the artefacts to a fresh run directory.

    On failure an ``error.json`` record is left in the run directory and the
    exception propagates.
    """
    run_dir = Path(run_dir) if run_dir is not None else _new_run_dir(Path(out_root), cfg)
    run_dir.mkdir(parents=True, exist_ok=True)
    try:
        cfg.validate()
        model, history, report, data = train_and_evaluate(cfg, prepare_data(cfg, fld))
        result = RunResult(run_dir, report, history, model, data)
        write_artifacts(run_dir, cfg, result)
    except Exception as exc:
        record = {"error": type(exc).__name__, "message": str(exc)}
        (run_dir / "error.json").write_text(json.dumps(record, indent=2) + "\n")
        raise
    log.info("run written to %s", run_dir)
    return result


def reevaluate(run_dir) -> MetricReport:
    """Recompute the metrics of a finished run from its config and checkpoint."""
    run_dir = Path(run_dir)
    cfg = RunConfig.from_text((run_dir / ARTIFACTS["config"]).read_text())
    data = prepare_data(cfg)
    params = load_params(run_dir / ARTIFACTS["checkpoint"])
    model = ShredModel(params, recovery=cfg.recovery, solver=cfg.solver_config(),
                       recovery_mode=cfg.recovery_mode)
    return evaluate(model, data.test, data.scaler, data.grid)


def check_comparable(cfg_a: RunConfig, cfg_b: RunConfig) -> None:
    diff = [k for k in SHARED_KEYS if getattr(cfg_a, k) != getattr(cfg_b, k)]
    if diff:
        raise ConfigMismatchError(f"configs differ in shared keys: {', '.join(diff)}")


COMPARE_ROWS = (
    ("Normalized Error", "normalized_error_mean"),
    ("Normalized Error (Last Snapshot)", "normalized_error_last"),
    ("SSIM (Last Snapshot)", "ssim_last"),
    ("PSNR (Last Snapshot) (dB)", "psnr_last_db"),
    ("SSIM (Mean)", "ssim_mean"),
    ("PSNR (Mean) (dB)", "psnr_mean_db"),
)


def comparison_table(name_a: str, rep_a: MetricReport, name_b: str, rep_b: MetricReport) -> str:
    lines = [f"metric\t{name_a}\t{name_b}\tdelta"]
    for label, key in COMPARE_ROWS:
        a, b = getattr(rep_a, key), getattr(rep_b, key)
        delta = a - b if np.isfinite(a) and np.isfinite(b) else (0.0 if a == b else float("nan"))
        lines.append(f"{label}\t{a:.5f}\t{b:.5f}\t{delta:+.5f}")
    lines.append("LPIPS\tunavailable\tunavailable\t")
    return "\n".join(lines) + "\n"


def compare(cfg_a: RunConfig, cfg_b: RunConfig, out_root="runs", write=True):
    """Run both configs on byte-identical corrupted data; return ``(table, res_a, res_b)``."""
    check_comparable(cfg_a, cfg_b)
    fld = load_field(cfg_a)
    results = []
    for cfg in (cfg_a, cfg_b):
        if write:
            res = run_pipeline(cfg, out_root, fld=fld)
        else:
            cfg.validate()
            model, history, report, data = train_and_evaluate(cfg, prepare_data(cfg, fld))
            res = RunResult(None, report, history, model, data)
        results.append(res)
    a, b = results
    if a.data.field_sub.values.tobytes() != b.data.field_sub.values.tobytes():
        raise ConfigMismatchError("runs did not see identical corrupted data")
    table = comparison_table(cfg_a.model, a.report, cfg_b.model, b.report)
    return table, a, b
