"""l1-regularised Fourier-domain recovery of incomplete sensor windows.

Each window ``y`` of length ``L`` with available indices ``iava`` is
recovered by solving

    min_xi  ||R F^H xi - R y||_2^2 + lam * ||xi||_1

over complex coefficients ``xi`` and returning ``Re(F^H xi)``.
"""

from __future__ import annotations

import logging
import threading
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import AllMissingError, NumericalFailureError, ShapeMismatchError
from .linops import LinearOperator, compose_theta, hermitian_part, restriction, unitary_dft

log = logging.getLogger(__name__)

STEP_RULES = ("fixed", "barzilai-borwein")
AVAILABILITY_RULES = ("sentinel", "strict", "mask")


@dataclass(frozen=True)
class SolverConfig:
    """Settings for :func:`solve_bpdn`.

    ``lam`` is an absolute l1 weight. When it is None the weight is
    ``lam_scale * ||Theta^H b||_inf``, computed per problem.
    ``acceleration`` (FISTA momentum) applies to the fixed step rule only.
    """

    lam: float | None = None
    lam_scale: float = 0.01
    max_iters: int = 2000
    tol: float = 1e-8
    step_rule: str = "barzilai-borwein"
    acceleration: bool = False
    availability: str = "sentinel"
    memory: int = 10

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not self.tol > 0:
            raise ValueError("tol must be > 0")
        if self.lam is not None and self.lam < 0:
            raise ValueError("lam must be >= 0")
        if self.lam_scale < 0:
            raise ValueError("lam_scale must be >= 0")
        if self.step_rule not in STEP_RULES:
            raise ValueError(f"step_rule must be one of {STEP_RULES}")
        if self.acceleration and self.step_rule != "fixed":
            raise ValueError("acceleration requires the fixed step rule")
        if self.availability not in AVAILABILITY_RULES:
            raise ValueError(f"availability must be one of {AVAILABILITY_RULES}")


@dataclass
class RecoveryResult:
    y_star: np.ndarray | None
    xi: np.ndarray
    iterations: int
    objective: float
    converged: bool
    lam: float = 0.0
    objectives: list = field(default_factory=list)


def soft_threshold(z, tau: float) -> np.ndarray:
    """Proximal map of ``tau * ||.||_1`` for complex (or real) vectors."""
    if tau < 0:
        raise ValueError("tau must be >= 0")
    z = np.asarray(z)
    mag = np.abs(z)
    with np.errstate(divide="ignore", invalid="ignore"):
        shrink = np.where(mag > 0, np.maximum(mag - tau, 0.0) / mag, 0.0)
    return z * shrink


def _operator_norm_sq(theta: LinearOperator, iters: int = 50) -> float:
    rng = np.random.default_rng(0)
    v = rng.standard_normal(theta.shape[1]) + 1j * rng.standard_normal(theta.shape[1])
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(iters):
        w = theta.adjoint(theta.forward(v))
        est = float(np.linalg.norm(w))
        if est == 0.0:
            return 0.0
        v = w / est
    return est


def default_lambda(theta: LinearOperator, b, scale: float = 0.01) -> float:
    return scale * float(np.max(np.abs(theta.adjoint(np.asarray(b, dtype=complex))), initial=0.0))


def solve_bpdn(theta: LinearOperator, b, cfg: SolverConfig = SolverConfig(),
               synthesis: LinearOperator | None = None, project=None) -> RecoveryResult:
    """Minimise ``||theta xi - b||^2 + lam ||xi||_1`` by proximal gradient.

    The returned coefficients are the best iterate seen; ``objectives``
    records the running best objective, which never increases.

    ``project`` optionally maps every candidate onto a subspace that
    commutes with the prox and leaves the objective invariant (for real
    windows: :func:`~csshred.linops.hermitian_part`). Large spectral steps
    otherwise amplify round-off out of that subspace.
    """
    prox = soft_threshold if project is None else (lambda z, tau: project(soft_threshold(z, tau)))
    b = np.asarray(b).reshape(-1)
    real_input = not np.iscomplexobj(b)
    b = b.astype(np.float64 if real_input else complex)
    if b.shape[0] != theta.shape[0]:
        raise ShapeMismatchError(f"b has length {b.shape[0]}, operator has {theta.shape[0]} rows")
    synthesis = synthesis if synthesis is not None else theta.synthesis
    lam = cfg.lam if cfg.lam is not None else default_lambda(theta, b, cfg.lam_scale)

    def objective(xi, r):
        return float(np.vdot(r, r).real + lam * np.sum(np.abs(xi)))

    lip = 2.0 * _operator_norm_sq(theta) * 1.01
    t_safe = 1.0 / lip if lip > 0 else 1.0

    n = theta.shape[1]
    xi = np.zeros(n, dtype=complex)
    r = theta.forward(xi) - b
    g = 2.0 * theta.adjoint(r)
    F = objective(xi, r)
    best_xi, best_F = xi, F
    history = [best_F]
    converged = False
    it = 0

    if cfg.step_rule == "fixed" and cfg.acceleration:
        # monotone FISTA
        y, tk = xi.copy(), 1.0
        for it in range(1, cfg.max_iters + 1):
            gy = 2.0 * theta.adjoint(theta.forward(y) - b)
            z = prox(y - t_safe * gy, t_safe * lam)
            rz = theta.forward(z) - b
            Fz = objective(z, rz)
            if not np.isfinite(Fz):
                raise NumericalFailureError(f"objective became non-finite at iteration {it}")
            x_prev, F_prev = xi, F
            if Fz <= F:
                xi, F = z, Fz
            tk_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * tk * tk))
            y = xi + (tk / tk_next) * (z - xi) + ((tk - 1.0) / tk_next) * (xi - x_prev)
            tk = tk_next
            if F < best_F:
                best_xi, best_F = xi, F
            history.append(best_F)
            if abs(Fz - F_prev) <= cfg.tol * max(abs(F_prev), 1e-300):
                converged = True
                break
    else:
        bb = cfg.step_rule == "barzilai-borwein"
        recent = deque([F], maxlen=cfg.memory if bb else 1)
        t = t_safe
        for it in range(1, cfg.max_iters + 1):
            while True:
                z = prox(xi - t * g, t * lam)
                d = z - xi
                rz = theta.forward(z) - b
                Fz = objective(z, rz)
                if not np.isfinite(Fz):
                    raise NumericalFailureError(f"objective became non-finite at iteration {it}")
                dd = float(np.vdot(d, d).real)
                if t <= t_safe or Fz <= max(recent) - 1e-4 * dd / (2.0 * t):
                    break
                t = max(0.5 * t, t_safe)
            gz = 2.0 * theta.adjoint(rz)
            F_prev = F
            if bb:
                sy = float(np.vdot(d, gz - g).real)
                t = min(max(dd / sy, t_safe), 1e10) if sy > 0 else t_safe
            xi, r, g, F = z, rz, gz, Fz
            recent.append(F)
            if F < best_F:
                best_xi, best_F = xi, F
            history.append(best_F)
            if dd == 0.0 or abs(F - F_prev) <= cfg.tol * max(abs(F_prev), 1e-300):
                converged = True
                break

    y_star = None
    if synthesis is not None:
        sig = synthesis.forward(best_xi)
        y_star = np.real(sig).copy()
        imag = float(np.linalg.norm(np.imag(sig)))
        if real_input and imag > 1e-8 * max(np.linalg.norm(y_star), np.linalg.norm(b), 1e-300):
            raise NumericalFailureError(f"recovered signal has imaginary part {imag:.3g}")
    return RecoveryResult(y_star, best_xi, it, best_F, converged, lam, history)


def availability_index(y_sub, rule: str = "sentinel", missing=None) -> np.ndarray:
    """Indices treated as observed in one window."""
    y_sub = np.asarray(y_sub)
    if missing is not None:
        return np.flatnonzero(~np.asarray(missing, dtype=bool))
    if rule == "strict":
        return np.flatnonzero(y_sub > 0)
    if rule in ("sentinel", "mask"):
        return np.flatnonzero(y_sub != 0)
    raise ValueError(f"unknown availability rule {rule!r}")


def recover_window(y_sub, cfg: SolverConfig = SolverConfig(), availability=None) -> RecoveryResult:
    """Fill the missing entries of one window.

    ``availability`` may be None (use ``cfg.availability``'s sentinel rule),
    a boolean *missing* mask of the window's length, or an explicit array
    of available indices.
    """
    y_sub = np.asarray(y_sub, dtype=np.float64).reshape(-1)
    L = y_sub.shape[0]
    if availability is None:
        iava = availability_index(y_sub, cfg.availability)
    else:
        av = np.asarray(availability)
        if av.dtype == bool:
            if av.shape != y_sub.shape:
                raise ShapeMismatchError("missing mask must match the window length")
            iava = np.flatnonzero(~av)
        else:
            iava = av.astype(np.int64)
    if iava.size == 0:
        raise AllMissingError("window has no available samples")
    r = restriction(L, iava)
    theta = compose_theta(r, unitary_dft(L))
    res = solve_bpdn(theta, r.forward(y_sub), cfg, project=hermitian_part)
    log.debug("window L=%d |iava|=%d iters=%d obj=%.3e", L, iava.size, res.iterations, res.objective)
    return res


class RecoveryCache:
    """Thread-safe memo of recovered windows keyed by window content."""

    def __init__(self):
        self._store: dict = {}
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    @staticmethod
    def key(window: np.ndarray, missing: np.ndarray | None, cfg: SolverConfig):
        m = b"" if missing is None else np.packbits(missing).tobytes()
        return (window.tobytes(), m, cfg)

    def get(self, key):
        with self._lock:
            val = self._store.get(key)
            if val is None:
                self.misses += 1
            else:
                self.hits += 1
            return val

    def put(self, key, value):
        with self._lock:
            self._store.setdefault(key, value)

    def __len__(self):
        return len(self._store)


def _window_missing(window, missing, cfg):
    if missing is not None:
        return missing
    avail = np.zeros(window.shape, dtype=bool)
    avail[availability_index(window, cfg.availability)] = True
    return ~avail


def _recover_one(window, missing, cfg, cache):
    miss = _window_missing(window, missing, cfg)
    if not miss.any():
        return window.copy()
    key = None
    if cache is not None:
        key = RecoveryCache.key(window, miss, cfg)
        hit = cache.get(key)
        if hit is not None:
            return hit.copy()
    try:
        out = recover_window(window, cfg, availability=miss).y_star
    except AllMissingError:
        log.warning("window with no available samples; zero-filled")
        out = np.zeros_like(window)
    if cache is not None:
        cache.put(key, out.copy())
    return out


def recover_batch(sequences, cfg: SolverConfig = SolverConfig(), missing=None,
                  cache: RecoveryCache | None = None, workers: int = 1) -> np.ndarray:
    """Recover every ``(sample, sensor)`` window of a ``(B, l, m)`` batch.

    ``missing`` is an optional ``(B, l, m)`` boolean mask; without it the
    availability rule of ``cfg`` decides which entries are missing.
    """
    seq = np.asarray(sequences, dtype=np.float64)
    if seq.ndim != 3:
        raise ShapeMismatchError(f"expected a (batch, lag, sensors) array, got {seq.shape}")
    if seq.shape[1] < 2:
        raise ShapeMismatchError("recovery needs windows of length >= 2")
    if missing is not None:
        missing = np.asarray(missing, dtype=bool)
        if missing.shape != seq.shape:
            raise ShapeMismatchError("missing mask must match the batch shape")
    B, _, m = seq.shape
    jobs = [(b, s) for b in range(B) for s in range(m)]

    def run(job):
        b, s = job
        w = np.ascontiguousarray(seq[b, :, s])
        miss = None if missing is None else np.ascontiguousarray(missing[b, :, s])
        return _recover_one(w, miss, cfg, cache)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, jobs))
    else:
        results = [run(j) for j in jobs]
    out = np.empty_like(seq)
    for (b, s), w in zip(jobs, results):
        out[b, :, s] = w
    return out
