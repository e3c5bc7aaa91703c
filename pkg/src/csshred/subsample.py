"""Column/snapshot dropout that simulates sensor-network outages.

Entries whose column lies in ``y_sub`` *and* whose snapshot lies in
``t_sub`` are zeroed. The final snapshot is always part of ``t_sub``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimMismatchError, OutOfRangeError
from .field import Field
from .rng import partial_shuffle, stream


@dataclass(frozen=True)
class SubsamplePlan:
    y_sub: tuple[int, ...]
    t_sub: tuple[int, ...]
    seed: int
    dims: tuple[int, int, int]

    def __post_init__(self):
        n_x, n_y, n_t = self.dims
        y = tuple(sorted(int(v) for v in self.y_sub))
        t = tuple(sorted(int(v) for v in self.t_sub))
        if len(set(y)) != len(y) or len(set(t)) != len(t):
            raise OutOfRangeError("duplicate indices in subsample plan")
        if any(not 0 <= v < n_y for v in y) or any(not 0 <= v < n_t for v in t):
            raise OutOfRangeError("subsample index outside the field")
        object.__setattr__(self, "y_sub", y)
        object.__setattr__(self, "t_sub", t)
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))

    def to_text(self) -> str:
        return (
            f"seed={self.seed}\n"
            f"dims={' '.join(map(str, self.dims))}\n"
            f"y_sub={' '.join(map(str, self.y_sub))}\n"
            f"t_sub={' '.join(map(str, self.t_sub))}\n"
        )

    @classmethod
    def from_text(cls, text: str) -> "SubsamplePlan":
        rec = {}
        for line in text.splitlines():
            if "=" in line:
                k, v = line.split("=", 1)
                rec[k.strip()] = [int(tok) for tok in v.split()]
        return cls(tuple(rec["y_sub"]), tuple(rec["t_sub"]), rec["seed"][0], tuple(rec["dims"]))


def make_plan(dims, n_cols: int, n_snap: int, seed: int) -> SubsamplePlan:
    n_x, n_y, n_t = (int(d) for d in dims)
    if not 0 <= n_cols <= n_y:
        raise OutOfRangeError(f"n_cols={n_cols} outside [0, {n_y}]")
    if not 1 <= n_snap <= n_t:
        raise OutOfRangeError(f"n_snap={n_snap} outside [1, {n_t}]")
    rng = stream(seed, "mask")
    y_sub = partial_shuffle(np.arange(n_y), n_cols, rng)
    # final snapshot is always subsampled; the rest are drawn from 0..n_t-2
    t_rest = partial_shuffle(np.arange(n_t - 1), n_snap - 1, rng)
    t_sub = np.append(t_rest, n_t - 1)
    return SubsamplePlan(tuple(y_sub.tolist()), tuple(t_sub.tolist()), seed, (n_x, n_y, n_t))


def plan_mask(plan: SubsamplePlan) -> np.ndarray:
    """Boolean ``(n_x, n_y, n_t)`` array, True where the plan zeroes."""
    n_x, n_y, n_t = plan.dims
    cols = np.zeros(n_y, dtype=bool)
    cols[list(plan.y_sub)] = True
    snaps = np.zeros(n_t, dtype=bool)
    snaps[list(plan.t_sub)] = True
    return np.broadcast_to(cols[None, :, None] & snaps[None, None, :], (n_x, n_y, n_t)).copy()


def apply_plan(fld: Field, plan: SubsamplePlan) -> Field:
    if fld.dims != plan.dims:
        raise DimMismatchError(f"field dims {fld.dims} do not match plan dims {plan.dims}")
    out = fld.values.copy()
    out[plan_mask(plan)] = 0.0
    return Field(out, name=fld.name + "_sub")
