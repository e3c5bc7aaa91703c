"""Spatiotemporal field data model, scaling, sensor placement and windowing.

Fields are stored as ``(n_x, n_y, n_t)`` arrays. Everything downstream of
ingestion works on the time-major view ``(n_t, n_x * n_y)`` where the flat
spatial index is ``p = x * n_y + y``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field as dc_field
from pathlib import Path

import numpy as np

from .errors import (
    ConstantDataError,
    DimMismatchError,
    InsufficientLocationsError,
    LagTooLargeError,
    NoValidLocationsError,
    NonFiniteError,
    TooFewSamplesError,
)
from .rng import partial_shuffle, stream

FIELD_MAGIC = b"CSSF"
SPLIT_FRACTIONS = (0.7, 0.2, 0.1)
DEFAULT_EPS_VALID = 1e-10


@dataclass(frozen=True)
class Field:
    """Dense real field indexed ``values[x, y, t]``."""

    values: np.ndarray
    name: str = "field"

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 3 or min(v.shape) < 1:
            raise DimMismatchError(f"field must be a non-empty 3-d array, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise NonFiniteError("field contains NaN or Inf")
        object.__setattr__(self, "values", v)

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(int(d) for d in self.values.shape)

    @property
    def n_space(self) -> int:
        return self.dims[0] * self.dims[1]

    @property
    def n_t(self) -> int:
        return self.dims[2]

    def time_major(self) -> np.ndarray:
        """Return a ``(n_t, n_x * n_y)`` copy."""
        return to_time_major(self.values)


def to_time_major(values: np.ndarray) -> np.ndarray:
    n_x, n_y, n_t = values.shape
    return np.ascontiguousarray(values.reshape(n_x * n_y, n_t).T)


def from_time_major(x: np.ndarray, n_x: int, n_y: int) -> np.ndarray:
    n_t = x.shape[0]
    return np.ascontiguousarray(x.T.reshape(n_x, n_y, n_t))


# ---------------------------------------------------------------- IO


def write_field(path, fld: Field) -> None:
    """Write ``fld`` in the CSSF binary format plus a ``.label`` sidecar."""
    path = Path(path)
    n_x, n_y, n_t = fld.dims
    with open(path, "wb") as fh:
        fh.write(FIELD_MAGIC + struct.pack("<3I", n_x, n_y, n_t))
        fh.write(fld.values.astype("<f8").tobytes(order="C"))
    path.with_suffix(path.suffix + ".label").write_text(fld.name + "\n")


def read_field(path) -> Field:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < 16 or raw[:4] != FIELD_MAGIC:
        raise DimMismatchError(f"{path} is not a CSSF field file")
    n_x, n_y, n_t = struct.unpack("<3I", raw[4:16])
    count = n_x * n_y * n_t
    if len(raw) != 16 + 8 * count:
        raise DimMismatchError(
            f"{path}: header declares {count} values, payload holds {(len(raw) - 16) / 8:g}"
        )
    values = np.frombuffer(raw, dtype="<f8", offset=16).reshape(n_x, n_y, n_t)
    label = path.with_suffix(path.suffix + ".label")
    name = label.read_text().strip() if label.exists() else path.stem
    return Field(values.astype(np.float64), name=name)


# ---------------------------------------------------------------- scaling


@dataclass(frozen=True)
class ScalerParams:
    """Affine normalisation ``(x - shift) / scale``.

    For min-max scaling ``min``/``max`` are the training extrema. For
    z-scoring the same two numbers hold ``mean`` and ``mean + std`` so the
    affine map is shared by both modes.
    """

    min: float
    max: float
    fitted_on: str = "train"
    mode: str = "minmax"

    def __post_init__(self):
        if not self.max > self.min:
            raise ConstantDataError(f"degenerate scaler bounds ({self.min}, {self.max})")
        if self.fitted_on != "train":
            raise ValueError("scaler must be fitted on the training split")

    @property
    def scale(self) -> float:
        return self.max - self.min


def fit_scaler(train_values, mode: str = "minmax") -> ScalerParams:
    """Fit normalisation statistics on training values only."""
    v = np.asarray(train_values, dtype=np.float64)
    if v.size == 0:
        raise ValueError("cannot fit a scaler on empty data")
    if not np.all(np.isfinite(v)):
        raise NonFiniteError("training values contain NaN or Inf")
    if mode == "minmax":
        lo, hi = float(v.min()), float(v.max())
    elif mode == "zscore":
        lo = float(v.mean())
        hi = lo + float(v.std())
    else:
        raise ValueError(f"unknown normalisation mode {mode!r}")
    if not hi > lo:
        raise ConstantDataError("training values are constant")
    return ScalerParams(lo, hi, "train", mode)


def apply_scaler(x, s: ScalerParams) -> np.ndarray:
    # no clipping: val/test values may fall outside [0, 1]
    return (np.asarray(x, dtype=np.float64) - s.min) / s.scale


def invert_scaler(x_norm, s: ScalerParams) -> np.ndarray:
    return np.asarray(x_norm, dtype=np.float64) * s.scale + s.min


# ---------------------------------------------------------------- sensors


@dataclass(frozen=True)
class SensorSet:
    indices: tuple[int, ...]

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if len(idx) < 1:
            raise ValueError("a sensor set needs at least one sensor")
        if len(set(idx)) != len(idx):
            raise ValueError("sensor indices must be distinct")
        object.__setattr__(self, "indices", idx)

    @property
    def count(self) -> int:
        return len(self.indices)

    def to_text(self) -> str:
        return "\n".join(str(i) for i in self.indices) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "SensorSet":
        return cls(tuple(int(tok) for tok in text.split()))


def valid_locations(field_sub: Field, eps_valid: float = DEFAULT_EPS_VALID) -> np.ndarray:
    """Flat spatial indices whose temporal mean magnitude exceeds ``eps_valid``."""
    mu = field_sub.values.mean(axis=2).reshape(-1)
    valid = np.flatnonzero(np.abs(mu) > eps_valid)
    if valid.size == 0:
        raise NoValidLocationsError(f"no location has |temporal mean| > {eps_valid:g}")
    return valid


def place_sensors(valid, m: int, rng_seed: int) -> SensorSet:
    """Pick ``m`` distinct locations from ``valid`` uniformly at random."""
    pool = np.sort(np.asarray(list(valid), dtype=np.int64))
    if m < 1:
        raise ValueError("need at least one sensor")
    if pool.size < m:
        raise InsufficientLocationsError(f"{m} sensors requested, {pool.size} valid locations")
    chosen = partial_shuffle(pool, m, stream(rng_seed, "sensors"))
    return SensorSet(tuple(int(i) for i in chosen))


# ---------------------------------------------------------------- sequences


@dataclass
class SequenceDataset:
    """Lagged sensor windows and the full-state targets they map to.

    ``missing`` flags window entries removed by the subsample plan, and
    ``times`` holds the time index of each target snapshot.
    """

    inputs: np.ndarray
    targets: np.ndarray | None = None
    lag: int = 1
    split: str = "all"
    target_source: str = "subsampled"
    missing: np.ndarray | None = None
    times: np.ndarray = dc_field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def __len__(self):
        return self.inputs.shape[0]

    def subset(self, idx, split: str) -> "SequenceDataset":
        return SequenceDataset(
            inputs=self.inputs[idx],
            targets=None if self.targets is None else self.targets[idx],
            lag=self.lag,
            split=split,
            target_source=self.target_source,
            missing=None if self.missing is None else self.missing[idx],
            times=self.times[idx],
        )


def _windows(series: np.ndarray, lag: int) -> np.ndarray:
    """``(n_t, m)`` -> ``(n_t - lag, lag, m)`` of overlapping windows."""
    n_t = series.shape[0]
    win = np.lib.stride_tricks.sliding_window_view(series, lag, axis=0)[: n_t - lag]
    return np.ascontiguousarray(np.swapaxes(win, 1, 2))


def extract_sequences(field: Field, sensors: SensorSet, lag: int) -> SequenceDataset:
    """Sensor windows ``inputs[k, j, s] = field[sensor s, time k + j]``."""
    if lag < 1:
        raise ValueError("lag must be >= 1")
    if lag >= field.n_t:
        raise LagTooLargeError(f"lag {lag} must be smaller than n_t = {field.n_t}")
    if max(sensors.indices) >= field.n_space or min(sensors.indices) < 0:
        raise DimMismatchError("sensor index outside the spatial grid")
    series = field.time_major()[:, list(sensors.indices)]
    return SequenceDataset(
        inputs=_windows(series, lag),
        lag=lag,
        times=np.arange(lag, field.n_t, dtype=np.int64),
    )


def build_dataset(
    states: np.ndarray,
    sensors: SensorSet,
    lag: int,
    missing: np.ndarray | None = None,
) -> SequenceDataset:
    """Windows and aligned targets from a time-major state array.

    Target ``k`` is the full state at time ``k + lag``, the first snapshot
    after window ``k``.
    """
    n_t = states.shape[0]
    if lag >= n_t:
        raise LagTooLargeError(f"lag {lag} must be smaller than n_t = {n_t}")
    cols = list(sensors.indices)
    return SequenceDataset(
        inputs=_windows(states[:, cols], lag),
        targets=np.ascontiguousarray(states[lag:]),
        lag=lag,
        missing=None if missing is None else _windows(missing[:, cols], lag),
        times=np.arange(lag, n_t, dtype=np.int64),
    )


def split_sizes(n_samples: int, fractions=SPLIT_FRACTIONS) -> tuple[int, int, int]:
    if n_samples < 10:
        raise TooFewSamplesError(f"need at least 10 samples to split, got {n_samples}")
    n_train = int(np.floor(fractions[0] * n_samples + 1e-9))
    n_val = int(np.floor(fractions[1] * n_samples + 1e-9))
    return n_train, n_val, n_samples - n_train - n_val


def split_dataset(ds: SequenceDataset, original_states: np.ndarray | None = None,
                  fractions=SPLIT_FRACTIONS):
    """Contiguous train/val/test split in temporal order.

    When ``original_states`` (time-major, uncorrupted) is given, the test
    targets are taken from it instead of the subsampled data.
    """
    n_train, n_val, _ = split_sizes(len(ds), fractions)
    n = len(ds)
    train = ds.subset(slice(0, n_train), "train")
    val = ds.subset(slice(n_train, n_train + n_val), "val")
    test = ds.subset(slice(n_train + n_val, n), "test")
    if original_states is not None:
        test.targets = np.ascontiguousarray(original_states[test.times])
        test.target_source = "original"
    return train, val, test
