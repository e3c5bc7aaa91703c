"""Deterministic synthetic fields used as desk-scale stand-ins for real data."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .field import Field
from .rng import stream

KINDS = ("fourier-sparse", "traveling-waves", "gaussian-blobs")


@dataclass(frozen=True)
class SyntheticSpec:
    kind: str = "fourier-sparse"
    dims: tuple = (32, 32, 300)
    n_modes: int = 3
    amplitude_law: str = "uniform"  # or "decay": mode k scaled by 1/(k+1)
    noise: float = 0.0
    offset: float = 0.0
    max_freq: int | None = None
    seed: int = 0
    freq_step: int = 1  # fourier-sparse bins are drawn from multiples of this

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}")
        if len(self.dims) != 3 or min(self.dims) < 1:
            raise ValueError("dims must be three positive integers")
        if self.n_modes < 1:
            raise ValueError("n_modes must be >= 1")
        if self.amplitude_law not in ("uniform", "decay"):
            raise ValueError("amplitude_law must be 'uniform' or 'decay'")
        if self.noise < 0:
            raise ValueError("noise must be >= 0")
        if self.freq_step < 1:
            raise ValueError("freq_step must be >= 1")


def _amplitudes(spec, rng):
    if spec.amplitude_law == "decay":
        return 1.0 / (1.0 + np.arange(spec.n_modes))
    return rng.uniform(0.5, 1.5, spec.n_modes)


def _smooth_pattern(rng, n_x, n_y, terms=3):
    gx, gy = np.meshgrid(np.linspace(0, 1, n_x), np.linspace(0, 1, n_y), indexing="ij")
    out = np.zeros((n_x, n_y))
    for _ in range(terms):
        kx, ky = rng.integers(1, 4, size=2)
        out += rng.uniform(0.5, 1.0) * np.cos(np.pi * (kx * gx + ky * gy) + rng.uniform(0, 2 * np.pi))
    return out / terms


def _fourier_sparse(spec, rng):
    """Each pixel: ``n_modes`` cosines at shared integer DFT bins.

    With ``freq_step = n_t // L`` every bin is also a bin of the length-``L``
    DFT, so each length-``L`` window is exactly sparse as well.
    """
    n_x, n_y, n_t = spec.dims
    top = spec.max_freq or max(spec.n_modes, n_t // 2 - 1)
    top = min(top, (n_t - 1) // 2)
    bins = np.arange(spec.freq_step, top + 1, spec.freq_step)
    if bins.size < spec.n_modes:
        raise ValueError("not enough distinct frequency bins for n_modes")
    freqs = rng.permutation(bins)[: spec.n_modes]
    t = np.arange(n_t)
    amps = _amplitudes(spec, rng)
    out = np.zeros((n_x, n_y, n_t))
    for a, f in zip(amps, freqs):
        mag = a * (1.0 + 0.5 * _smooth_pattern(rng, n_x, n_y))
        phase = np.pi * _smooth_pattern(rng, n_x, n_y)
        out += mag[..., None] * np.cos(2 * np.pi * f * t / n_t + phase[..., None])
    return out


def _traveling_waves(spec, rng):
    n_x, n_y, n_t = spec.dims
    gx, gy = np.meshgrid(np.arange(n_x), np.arange(n_y), indexing="ij")
    t = np.arange(n_t)
    amps = _amplitudes(spec, rng)
    out = np.zeros((n_x, n_y, n_t))
    for a in amps:
        kx, ky = rng.uniform(-2, 2, size=2) * 2 * np.pi / max(n_x, n_y)
        omega = 2 * np.pi * rng.integers(1, max(2, n_t // 20)) / n_t
        out += a * np.cos((kx * gx + ky * gy)[..., None] - omega * t + rng.uniform(0, 2 * np.pi))
    return out


def _gaussian_blobs(spec, rng):
    n_x, n_y, n_t = spec.dims
    gx, gy = np.meshgrid(np.arange(n_x), np.arange(n_y), indexing="ij")
    t = np.arange(n_t)
    amps = _amplitudes(spec, rng)
    out = np.zeros((n_x, n_y, n_t))
    for a in amps:
        cx0, cy0 = rng.uniform(0, n_x), rng.uniform(0, n_y)
        rx, ry = rng.uniform(0.15, 0.35) * n_x, rng.uniform(0.15, 0.35) * n_y
        omega = 2 * np.pi * rng.integers(1, max(2, n_t // 30)) / n_t
        width = rng.uniform(0.1, 0.2) * min(n_x, n_y)
        cx = cx0 + rx * np.cos(omega * t)
        cy = cy0 + ry * np.sin(omega * t)
        d2 = (gx[..., None] - cx) ** 2 + (gy[..., None] - cy) ** 2
        out += a * np.exp(-d2 / (2 * width ** 2))
    return out


def generate_synthetic(spec: SyntheticSpec) -> Field:
    rng = stream(spec.seed, "synthetic")
    build = {"fourier-sparse": _fourier_sparse, "traveling-waves": _traveling_waves,
             "gaussian-blobs": _gaussian_blobs}[spec.kind]
    values = build(spec, rng) + spec.offset
    if spec.noise > 0:
        values = values + spec.noise * rng.standard_normal(values.shape)
    return Field(values, name=f"synthetic-{spec.kind}")
