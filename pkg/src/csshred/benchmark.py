"""Desk-scale CS-SHRED vs SHRED comparison on a subsampled synthetic field."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .config import RunConfig
from .metrics import MetricReport
from .pipeline import compare

# 32x32x300 field, half the columns dropped in 30% of the snapshots, 3 sensors, 10 lags.
# Frequencies sit on multiples of nt // lags, so every sensor window is exactly
# sparse in its own length-10 DFT basis. Both models get the same training budget.
DESK_BENCHMARK = RunConfig(
    nx=32, ny=32, nt=300, n_modes=1, freq_step=30, normalization="zscore",
    n_cols_sub=16, n_snap_sub=90,
    n_sensors=3, lags=10,
    epochs=600, lr=3e-3, patience=100,
)


@dataclass(frozen=True)
class BenchmarkRow:
    seed: int
    cs_shred: MetricReport
    shred: MetricReport
    seconds: float


def run_benchmark(seeds=(0, 1, 2), base: RunConfig = DESK_BENCHMARK, **overrides) -> list[BenchmarkRow]:
    """Train both models per seed on identical corrupted data, without writing run directories."""
    rows = []
    for seed in seeds:
        cfg = base.replace(seed=seed, model="cs-shred", **overrides)
        t0 = time.perf_counter()
        _, a, b = compare(cfg, cfg.replace(model="shred"), write=False)
        rows.append(BenchmarkRow(seed, a.report, b.report, time.perf_counter() - t0))
    return rows


def benchmark_table(rows: list[BenchmarkRow]) -> str:
    lines = ["seed\tcs_err\tshred_err\tcs_ssim_last\tshred_ssim_last\tseconds"]
    for r in rows:
        lines.append(f"{r.seed}\t{r.cs_shred.normalized_error_mean:.5f}\t{r.shred.normalized_error_mean:.5f}\t"
                     f"{r.cs_shred.ssim_last:.5f}\t{r.shred.ssim_last:.5f}\t{r.seconds:.1f}")
    mean = lambda f: np.mean([f(r) for r in rows])
    lines.append(
        f"mean\t{mean(lambda r: r.cs_shred.normalized_error_mean):.5f}\t"
        f"{mean(lambda r: r.shred.normalized_error_mean):.5f}\t"
        f"{mean(lambda r: r.cs_shred.ssim_last):.5f}\t{mean(lambda r: r.shred.ssim_last):.5f}\t"
    )
    return "\n".join(lines) + "\n"
