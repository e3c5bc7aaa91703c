"""Matrix-free linear operators: restriction, unitary DFT and their composition."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import IndexOutOfRangeError, ShapeMismatchError


@dataclass(frozen=True)
class LinearOperator:
    """A linear map given by its forward and adjoint actions.

    ``synthesis`` optionally holds the full-length map from coefficients to
    signal (used by the recovery solver to report the time-domain result).
    """

    shape: tuple[int, int]
    forward: Callable[[np.ndarray], np.ndarray]
    adjoint: Callable[[np.ndarray], np.ndarray]
    name: str = "op"
    synthesis: "LinearOperator | None" = None

    def __matmul__(self, x):
        return self.matvec(x)

    def matvec(self, x):
        x = np.asarray(x)
        if x.shape[-1] != self.shape[1]:
            raise ShapeMismatchError(f"{self.name}: expected length {self.shape[1]}, got {x.shape[-1]}")
        return self.forward(x)

    def rmatvec(self, y):
        y = np.asarray(y)
        if y.shape[-1] != self.shape[0]:
            raise ShapeMismatchError(f"{self.name}^H: expected length {self.shape[0]}, got {y.shape[-1]}")
        return self.adjoint(y)

    @property
    def H(self) -> "LinearOperator":
        return LinearOperator((self.shape[1], self.shape[0]), self.adjoint, self.forward,
                              name=f"{self.name}^H")

    def todense(self) -> np.ndarray:
        eye = np.eye(self.shape[1], dtype=complex)
        return np.stack([self.forward(col) for col in eye], axis=1)


def dense(matrix) -> LinearOperator:
    a = np.asarray(matrix)
    ah = a.conj().T
    return LinearOperator(a.shape, lambda x: a @ x, lambda y: ah @ y, name="dense")


def identity(n: int) -> LinearOperator:
    return LinearOperator((n, n), lambda x: np.array(x, dtype=complex),
                          lambda y: np.array(y, dtype=complex), name="I")


def check_iava(length: int, iava) -> np.ndarray:
    idx = np.asarray(iava, dtype=np.int64).reshape(-1)
    if idx.size and (idx.min() < 0 or idx.max() >= length):
        raise IndexOutOfRangeError(f"available indices must lie in [0, {length})")
    if np.unique(idx).size != idx.size:
        raise IndexOutOfRangeError("available indices must be distinct")
    return np.sort(idx)


def restriction(length: int, iava) -> LinearOperator:
    """Select the entries at ``iava``; the adjoint scatters them back."""
    idx = check_iava(length, iava)

    def fwd(x):
        return np.asarray(x)[..., idx]

    def adj(y):
        y = np.asarray(y)
        out = np.zeros(y.shape[:-1] + (length,), dtype=np.result_type(y, float))
        out[..., idx] = y
        return out

    return LinearOperator((idx.size, length), fwd, adj, name="R")


def unitary_dft(length: int) -> LinearOperator:
    """Orthonormal DFT; its adjoint is the inverse transform."""
    if length < 1:
        raise ValueError("DFT length must be >= 1")
    return LinearOperator(
        (length, length),
        lambda x: np.fft.fft(x, norm="ortho"),
        lambda y: np.fft.ifft(y, norm="ortho"),
        name="F",
    )


def hermitian_part(xi) -> np.ndarray:
    """Project DFT coefficients onto the spectra of real signals.

    Averages ``xi[k]`` with ``conj(xi[-k])`` so that the unitary inverse DFT
    of the result is exactly real up to round-off.
    """
    xi = np.asarray(xi, dtype=complex)
    mirrored = np.conj(np.roll(xi[::-1], 1))
    return 0.5 * (xi + mirrored)


def compose_theta(r: LinearOperator, f: LinearOperator) -> LinearOperator:
    """``R F^H``: Fourier coefficients to observed time samples."""
    if r.shape[1] != f.shape[0]:
        raise ShapeMismatchError(f"cannot compose R {r.shape} with F^H of {f.shape}")
    return LinearOperator(
        (r.shape[0], f.shape[1]),
        lambda xi: r.forward(f.adjoint(xi)),
        lambda y: f.forward(r.adjoint(y)),
        name="Theta",
        synthesis=f.H,
    )


def adjoint_residual(op: LinearOperator, u, v) -> float:
    """Relative mismatch ``|<Au, v> - <u, A^H v>|`` for the dot test."""
    lhs = np.vdot(v, op.matvec(u))
    rhs = np.vdot(op.rmatvec(v), u)
    scale = max(abs(lhs), abs(rhs), np.finfo(float).tiny)
    return float(abs(lhs - rhs) / scale)
