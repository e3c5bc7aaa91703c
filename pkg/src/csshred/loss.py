"""Piecewise SNR-adaptive training loss and its gradient w.r.t. the prediction.

With ``snr`` in decibels the loss is

    snr > 0 :  lam_snr * min(1 / (snr + eps), snr_cap) + lam_l2 * MSE + lam_l1 * MAE + w * R
    snr <= 0:  -lam_snr * snr                          + lam_l2 * MSE + lam_l1 * MAE + w * R

where ``R`` is the sum of squared parameters. The two branches do not meet
at ``snr = 0``; that discontinuity is kept as is.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NonFiniteLossError

DB = 10.0 / np.log(10.0)


@dataclass(frozen=True)
class LossWeights:
    lambda_snr: float = 0.0
    lambda_l2: float = 1.0
    lambda_l1: float = 0.0
    weight_decay: float = 0.0
    epsilon: float = 1e-8
    snr_cap: float = 100.0
    snr_numerator: str = "truth"  # or "prediction"
    mae_target: str = "output"  # or "residual"

    def __post_init__(self):
        for name in ("lambda_snr", "lambda_l2", "lambda_l1", "weight_decay"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be > 0")
        if not self.snr_cap > 0:
            raise ValueError("snr_cap must be > 0")
        if self.snr_numerator not in ("truth", "prediction"):
            raise ValueError("snr_numerator must be 'truth' or 'prediction'")
        if self.mae_target not in ("output", "residual"):
            raise ValueError("mae_target must be 'output' or 'residual'")


def compute_snr(x_hat, x, epsilon: float = 1e-8, numerator: str = "truth") -> float:
    """SNR in dB of a reconstruction, summed over every entry."""
    x_hat = np.asarray(x_hat, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if x_hat.shape != x.shape:
        raise ValueError(f"shape mismatch {x_hat.shape} vs {x.shape}")
    signal = np.sum(x * x) if numerator == "truth" else np.sum(x_hat * x_hat)
    noise = np.sum((x_hat - x) ** 2)
    with np.errstate(divide="ignore", invalid="ignore"):
        return float(DB * np.log(signal / (noise + epsilon)))


def param_sq_norm(params) -> float:
    if params is None:
        return 0.0
    return float(sum(np.sum(t * t) for t in params.named().values()))


def loss_and_grad(x_hat, x, weights: LossWeights, params=None):
    """Loss value, its parts, and d(loss)/d(x_hat).

    The regulariser's parameter gradient (``2 w theta``) is left to the
    caller since it does not pass through ``x_hat``.
    """
    x_hat = np.asarray(x_hat, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    if x_hat.shape != x.shape:
        raise ValueError(f"shape mismatch {x_hat.shape} vs {x.shape}")
    n = x.size
    w = weights
    resid = x_hat - x

    mse = float(np.mean(resid * resid))
    grad = w.lambda_l2 * 2.0 * resid / n

    mae_src = x_hat if w.mae_target == "output" else resid
    mae = float(np.mean(np.abs(mae_src)))
    grad = grad + w.lambda_l1 * np.sign(mae_src) / n

    snr = compute_snr(x_hat, x, w.epsilon, w.snr_numerator)
    snr_term = 0.0
    if w.lambda_snr > 0:
        noise = float(np.sum(resid * resid)) + w.epsilon
        d_snr = -DB * 2.0 * resid / noise
        if w.snr_numerator == "prediction":
            d_snr = d_snr + DB * 2.0 * x_hat / float(np.sum(x_hat * x_hat))
        if snr > 0:
            ratio = 1.0 / (snr + w.epsilon)
            if ratio < w.snr_cap:
                snr_term = w.lambda_snr * ratio
                grad = grad - w.lambda_snr * ratio * ratio * d_snr
            else:
                snr_term = w.lambda_snr * w.snr_cap
        else:
            snr_term = -w.lambda_snr * snr
            grad = grad - w.lambda_snr * d_snr

    reg = param_sq_norm(params) if w.weight_decay > 0 else 0.0
    loss = snr_term + w.lambda_l2 * mse + w.lambda_l1 * mae + w.weight_decay * reg
    if not np.isfinite(loss):
        raise NonFiniteLossError(f"loss is not finite (snr={snr}, mse={mse})")
    parts = {"snr_db": snr, "snr_term": snr_term, "mse": mse, "mae": mae, "reg": reg, "loss": loss}
    return loss, parts, grad


def compute_loss(x_hat, x, params, weights: LossWeights):
    loss, parts, _ = loss_and_grad(x_hat, x, weights, params)
    return loss, parts
