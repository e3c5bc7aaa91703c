"""Reconstruction quality: normalised error, PSNR and SSIM.

SSIM uses the common single-scale setting: an 11x11 Gaussian window with
sigma 1.5, K1 = 0.01, K2 = 0.03, averaged over all fully-contained window
positions. Images smaller than 11 pixels on a side get the largest odd
window that fits, with sigma scaled proportionally.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .errors import ImageTooSmallError, ZeroReferenceError
from .field import invert_scaler

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03
METRIC_HEADER = (
    f"# ssim: gaussian window {SSIM_WINDOW}x{SSIM_WINDOW}, sigma={SSIM_SIGMA}, "
    f"K1={SSIM_K1}, K2={SSIM_K2}, valid positions; psnr/ssim data_range = max-min of "
    "ground-truth test sequence; lpips unavailable"
)


def normalized_error(x_hat_seq, x_seq) -> float:
    """Mean over snapshots of ``||x_hat(t) - x(t)||^2 / ||x(t)||^2``.

    Both inputs are ``(n_t, ...)``; every non-leading axis is flattened.
    """
    x_hat = np.asarray(x_hat_seq, dtype=np.float64)
    x = np.asarray(x_seq, dtype=np.float64)
    if x_hat.shape != x.shape:
        raise ValueError(f"shape mismatch {x_hat.shape} vs {x.shape}")
    x_hat = x_hat.reshape(x.shape[0], -1)
    x = x.reshape(x.shape[0], -1)
    ref = np.sum(x * x, axis=1)
    if np.any(ref == 0):
        raise ZeroReferenceError("a reference snapshot has zero norm")
    return float(np.mean(np.sum((x_hat - x) ** 2, axis=1) / ref))


def psnr(x_hat, x, data_range: float) -> float:
    """Peak signal-to-noise ratio in dB; ``inf`` for identical inputs."""
    if not data_range > 0:
        raise ValueError("data_range must be > 0")
    mse = float(np.mean((np.asarray(x_hat, dtype=np.float64) - np.asarray(x, dtype=np.float64)) ** 2))
    if mse == 0.0:
        return float("inf")
    return float(10.0 * np.log10(data_range ** 2 / mse))


def gaussian_window(size: int, sigma: float) -> np.ndarray:
    ax = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(ax ** 2) / (2.0 * sigma ** 2))
    w = np.outer(g, g)
    return w / w.sum()


def _window_size(shape) -> int:
    if max(shape) < 3:
        raise ImageTooSmallError(f"image {shape} is too small for SSIM")
    win = min(SSIM_WINDOW, *shape)
    return win if win % 2 else win - 1


def ssim(x_hat, x, data_range: float) -> float:
    a = np.asarray(x_hat, dtype=np.float64)
    b = np.asarray(x, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 2:
        raise ValueError(f"ssim needs two 2-d images of equal shape, got {a.shape}, {b.shape}")
    if not data_range > 0:
        raise ValueError("data_range must be > 0")
    win = _window_size(a.shape)
    w = gaussian_window(win, SSIM_SIGMA * win / SSIM_WINDOW)

    def filt(img):
        patches = np.lib.stride_tricks.sliding_window_view(img, (win, win))
        return np.einsum("ijkl,kl->ij", patches, w)

    mu_a, mu_b = filt(a), filt(b)
    var_a = filt(a * a) - mu_a ** 2
    var_b = filt(b * b) - mu_b ** 2
    cov = filt(a * b) - mu_a * mu_b
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2
    num = (2 * mu_a * mu_b + c1) * (2 * cov + c2)
    den = (mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2)
    return float(np.mean(num / den))


@dataclass(frozen=True)
class MetricReport:
    normalized_error_mean: float
    normalized_error_last: float
    ssim_mean: float
    ssim_last: float
    psnr_mean_db: float
    psnr_last_db: float
    n_snapshots: int
    mse_mean: float = 0.0
    mse_last: float = 0.0

    def to_record(self) -> str:
        """Tab-delimited header line plus one value line."""
        d = asdict(self)
        d["lpips"] = "unavailable"
        keys = list(d)
        return "\t".join(keys) + "\n" + "\t".join(_fmt(d[k]) for k in keys) + "\n"

    @classmethod
    def from_record(cls, text: str) -> "MetricReport":
        lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
        rec = dict(zip(lines[0].split("\t"), lines[1].split("\t")))
        rec.pop("lpips", None)
        rec["n_snapshots"] = int(rec["n_snapshots"])
        return cls(**{k: (v if k == "n_snapshots" else float(v)) for k, v in rec.items()})

    def summary(self) -> str:
        return (
            f"normalized error (mean/last): {self.normalized_error_mean:.5f} / {self.normalized_error_last:.5f}\n"
            f"SSIM (mean/last):             {self.ssim_mean:.5f} / {self.ssim_last:.5f}\n"
            f"PSNR dB (mean/last):          {self.psnr_mean_db:.2f} / {self.psnr_last_db:.2f}\n"
            f"MSE (mean/last):              {self.mse_mean:.6g} / {self.mse_last:.6g}\n"
            f"LPIPS:                        unavailable\n"
            f"test snapshots:               {self.n_snapshots}\n"
        )


def _fmt(v) -> str:
    if isinstance(v, float):
        return "inf" if v == float("inf") else repr(v)
    return str(v)


def per_snapshot(pred, truth, data_range: float):
    """Per-snapshot ``(normalized_error, ssim, psnr, mse)`` arrays for ``(n_t, n_x, n_y)`` input."""
    n_t = truth.shape[0]
    err = np.array([normalized_error(pred[t:t + 1], truth[t:t + 1]) for t in range(n_t)])
    s = np.array([ssim(pred[t], truth[t], data_range) for t in range(n_t)])
    p = np.array([psnr(pred[t], truth[t], data_range) for t in range(n_t)])
    mse = np.mean((pred - truth).reshape(n_t, -1) ** 2, axis=1)
    return err, s, p, mse


def report_from_arrays(pred, truth) -> MetricReport:
    """Build a report from physical-unit ``(n_t, n_x, n_y)`` predictions and truth."""
    data_range = float(truth.max() - truth.min())
    err, s, p, mse = per_snapshot(pred, truth, data_range)
    return MetricReport(
        normalized_error_mean=float(err.mean()),
        normalized_error_last=float(err[-1]),
        ssim_mean=float(s.mean()),
        ssim_last=float(s[-1]),
        psnr_mean_db=float(p.mean()),
        psnr_last_db=float(p[-1]),
        n_snapshots=int(truth.shape[0]),
        mse_mean=float(mse.mean()),
        mse_last=float(mse[-1]),
    )


def evaluate(model, test_ds, scaler, dims) -> MetricReport:
    """Run ``model`` on the test windows and score it in physical units.

    ``model`` is anything with ``predict(inputs, missing)`` returning
    normalised ``(B, n)`` states; ``dims`` is ``(n_x, n_y)``.
    """
    n_x, n_y = dims
    pred = invert_scaler(model.predict(test_ds.inputs, test_ds.missing), scaler)
    truth = invert_scaler(test_ds.targets, scaler)
    return report_from_arrays(pred.reshape(-1, n_x, n_y), truth.reshape(-1, n_x, n_y))
