import logging
import threading

import numpy as np
import pytest
from hypothesis import given, strategies as st

from csshred.bpdn import (
    RecoveryCache,
    SolverConfig,
    availability_index,
    default_lambda,
    recover_batch,
    recover_window,
    soft_threshold,
    solve_bpdn,
)
from csshred.errors import AllMissingError, ShapeMismatchError
from csshred.linops import compose_theta, dense, restriction, unitary_dft


def theta_for(L, iava):
    return compose_theta(restriction(L, iava), unitary_dft(L))


def sparse_cosines(rng, L, k):
    t = np.arange(L)
    freqs = rng.choice(np.arange(1, L // 2), size=k, replace=False)
    amps = rng.uniform(0.5, 1.5, size=k)
    phases = rng.uniform(0, 2 * np.pi, size=k)
    return sum(a * np.cos(2 * np.pi * f * t / L + p) for a, f, p in zip(amps, freqs, phases))


def ray_argmin(z, tau):
    """Minimise 0.5|w - z|^2 + tau|w| along the ray through z.

    A coarse grid brackets the minimiser, then bisection on the sign of the
    directional derivative pins it down to round-off.
    """
    u = z / abs(z) if z != 0 else 1.0
    obj = lambda r: 0.5 * abs(r * u - z) ** 2 + tau * abs(r)  # noqa: E731
    slope = lambda r: np.real(np.conj(u) * (r * u - z)) + tau * np.sign(r)  # noqa: E731
    grid = np.linspace(-abs(z) - 1, abs(z) + 1, 2001)
    i = int(np.argmin([obj(r) for r in grid]))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, grid.size - 1)]
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if slope(mid) > 0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi) * u

# ---------------------------------------------------------------- prox


def test_soft_threshold_examples():
    np.testing.assert_allclose(soft_threshold(np.array([3.0]), 1.0), [2.0])
    np.testing.assert_allclose(soft_threshold(np.array([0.5j]), 1.0), [0.0])
    np.testing.assert_array_equal(soft_threshold(np.zeros(3, dtype=complex), 1.0), np.zeros(3))


def test_soft_threshold_negative_tau():
    with pytest.raises(ValueError):
        soft_threshold(np.ones(2), -0.1)


def test_soft_threshold_matches_scalar_oracle(rng):
    z = rng.normal(size=1000) * 2 + 1j * rng.normal(size=1000) * (rng.random(1000) < 0.5)
    taus = rng.uniform(0, 2, size=1000)
    got = np.array([soft_threshold(np.array([zi]), ti)[0] for zi, ti in zip(z, taus)])
    want = np.array([ray_argmin(zi, ti) for zi, ti in zip(z, taus)])
    assert np.max(np.abs(got - want)) <= 1e-10


@given(st.complex_numbers(max_magnitude=1e3), st.floats(0, 1e3))
def test_soft_threshold_magnitude(z, tau):
    w = soft_threshold(np.array([z]), tau)[0]
    assert abs(abs(w) - max(abs(z) - tau, 0.0)) <= 1e-9 * max(1.0, abs(z))


# ---------------------------------------------------------------- solver


def test_full_observation_zero_lambda_returns_data(rng):
    b = rng.normal(size=16)
    res = solve_bpdn(theta_for(16, range(16)), b, SolverConfig(lam=0.0))
    assert np.max(np.abs(res.y_star - b)) <= 1e-8


def test_single_exponential_recovered(rng):
    L = 64
    x = np.exp(2j * np.pi * 3 * np.arange(L) / L)
    iava = np.sort(rng.choice(L, size=int(0.6 * L), replace=False))
    theta = theta_for(L, iava)
    res = solve_bpdn(theta, x[iava], SolverConfig(lam_scale=1e-3))
    # oracle: best single-frequency least-squares fit on the observed samples
    t = iava
    best = min(range(L), key=lambda f: np.linalg.norm(
        x[t] - np.exp(2j * np.pi * f * t / L) * np.vdot(np.exp(2j * np.pi * f * t / L), x[t]) / t.size))
    assert best == 3
    x_hat = np.fft.ifft(res.xi, norm="ortho")
    assert np.linalg.norm(x_hat - x) <= 1e-3 * np.linalg.norm(x)


def test_large_lambda_gives_zero(rng):
    for _ in range(20):
        L = int(rng.integers(8, 64))
        iava = np.sort(rng.choice(L, size=L // 2, replace=False))
        theta = theta_for(L, iava)
        b = rng.normal(size=iava.size)
        lam = 2.0 * np.max(np.abs(theta.rmatvec(b))) * rng.uniform(1.0, 3.0)
        res = solve_bpdn(theta, b, SolverConfig(lam=lam))
        assert np.all(res.xi == 0)


@pytest.mark.parametrize("cfg", [
    SolverConfig(),
    SolverConfig(step_rule="fixed"),
    SolverConfig(step_rule="fixed", acceleration=True),
])
def test_recorded_objective_non_increasing(rng, cfg):
    L = 32
    y = sparse_cosines(rng, L, 3)
    iava = np.sort(rng.choice(L, size=20, replace=False))
    res = solve_bpdn(theta_for(L, iava), y[iava], cfg)
    obj = np.array(res.objectives)
    assert np.all(np.diff(obj) <= 0)
    assert obj[-1] == res.objective


def test_step_rules_agree(rng):
    L = 48
    y = sparse_cosines(rng, L, 3)
    iava = np.sort(rng.choice(L, size=30, replace=False))
    theta = theta_for(L, iava)
    tight = dict(tol=1e-14, max_iters=20000)
    objs = [solve_bpdn(theta, y[iava], SolverConfig(step_rule=s, acceleration=a, lam=0.05, **tight)).objective
            for s, a in (("barzilai-borwein", False), ("fixed", False), ("fixed", True))]
    assert max(objs) - min(objs) <= 1e-8 * max(objs)


def test_matches_dense_proximal_gradient_reference(rng):
    for _ in range(5):
        n_rows, n = int(rng.integers(3, 10)), int(rng.integers(4, 17))
        A = rng.normal(size=(n_rows, n)) + 1j * rng.normal(size=(n_rows, n))
        b = rng.normal(size=n_rows) + 1j * rng.normal(size=n_rows)
        lam = 0.3 * np.max(np.abs(A.conj().T @ b))
        step = 1.0 / (2.0 * np.linalg.norm(A, 2) ** 2)
        xi = np.zeros(n, dtype=complex)
        for _ in range(20000):
            z = xi - step * 2.0 * A.conj().T @ (A @ xi - b)
            mag = np.abs(z)
            xi = z * np.maximum(mag - step * lam, 0) / np.where(mag > 0, mag, 1)
        ref = np.linalg.norm(A @ xi - b) ** 2 + lam * np.abs(xi).sum()
        res = solve_bpdn(dense(A), b, SolverConfig(lam=lam, tol=1e-15, max_iters=20000))
        assert abs(res.objective - ref) <= 1e-6 * max(1.0, ref)


def test_default_lambda_is_scaled_correlation(rng):
    theta = theta_for(16, [0, 3, 5, 9])
    b = rng.normal(size=4)
    assert default_lambda(theta, b, 0.01) == pytest.approx(0.01 * np.max(np.abs(theta.rmatvec(b))))
    assert solve_bpdn(theta, b).lam == pytest.approx(default_lambda(theta, b))


def test_shape_mismatch():
    with pytest.raises(ShapeMismatchError):
        solve_bpdn(theta_for(8, [0, 1]), np.ones(3))


def test_solver_config_validation():
    for bad in (dict(max_iters=0), dict(tol=0.0), dict(lam=-1.0), dict(step_rule="newton"),
                dict(acceleration=True), dict(availability="maybe")):
        with pytest.raises(ValueError):
            SolverConfig(**bad)


# ---------------------------------------------------------------- windows


def test_availability_rules():
    y = np.array([0.5, 0.0, -0.2, 1.0])
    np.testing.assert_array_equal(availability_index(y, "sentinel"), [0, 2, 3])
    np.testing.assert_array_equal(availability_index(y, "strict"), [0, 3])
    np.testing.assert_array_equal(availability_index(y, missing=[False, True, True, False]), [0, 3])


def test_recover_fully_observed_window(rng):
    y = rng.normal(size=12)
    res = recover_window(y, SolverConfig(lam_scale=1e-9, tol=1e-14))
    assert np.max(np.abs(res.y_star - y)) <= 1e-6


def test_recover_all_zero_window():
    with pytest.raises(AllMissingError):
        recover_window(np.zeros(8))


def test_recover_sparse_window_with_gaps(rng):
    L = 64
    y = sparse_cosines(rng, L, 3)
    gaps = rng.choice(L, size=int(0.4 * L), replace=False)
    y_sub = y.copy()
    y_sub[gaps] = 0.0
    res = recover_window(y_sub, SolverConfig(lam_scale=1e-3))
    assert np.linalg.norm(res.y_star - y) <= 1e-2 * np.linalg.norm(y)
    assert np.linalg.norm(np.delete(res.y_star - y, gaps)) <= 1e-2 * np.linalg.norm(y)


def test_recover_window_mask_and_index_forms_agree(rng):
    y = rng.normal(size=10)
    miss = np.zeros(10, dtype=bool)
    miss[[2, 7]] = True
    a = recover_window(y, availability=miss)
    b = recover_window(y, availability=np.flatnonzero(~miss))
    np.testing.assert_array_equal(a.y_star, b.y_star)


def test_recovered_signal_is_real(rng):
    y = rng.normal(size=10)
    y[[1, 7, 8]] = 0.0
    res = recover_window(y)
    sig = np.fft.ifft(res.xi, norm="ortho")
    assert np.linalg.norm(sig.imag) <= 1e-8 * np.linalg.norm(res.y_star)


# ---------------------------------------------------------------- batches


def test_batch_without_gaps_is_unchanged(rng):
    seq = rng.uniform(0.1, 1.0, size=(4, 6, 3))
    np.testing.assert_array_equal(recover_batch(seq), seq)


def test_batch_matches_looped_windows(rng):
    L = 16
    seq = np.stack([np.stack([sparse_cosines(rng, L, 2) for _ in range(3)], axis=1) for _ in range(5)])
    miss = rng.random(seq.shape) < 0.3
    seq[miss] = 0.0
    out = recover_batch(seq, missing=miss)
    for b in range(5):
        for s in range(3):
            if miss[b, :, s].any():
                want = recover_window(seq[b, :, s], availability=miss[b, :, s]).y_star
            else:
                want = seq[b, :, s]
            np.testing.assert_array_equal(out[b, :, s], want)


def test_batch_identical_samples(rng):
    w = rng.normal(size=(1, 8, 2))
    w[0, 3] = 0.0
    out = recover_batch(np.concatenate([w, w]))
    np.testing.assert_array_equal(out[0], out[1])


def test_parallel_matches_sequential(rng):
    seq = rng.normal(size=(12, 8, 3))
    seq[rng.random(seq.shape) < 0.25] = 0.0
    np.testing.assert_array_equal(recover_batch(seq, workers=4), recover_batch(seq))


def test_cache_reuses_results(rng):
    seq = rng.normal(size=(6, 8, 2))
    seq[:, 2] = 0.0
    cache = RecoveryCache()
    first = recover_batch(seq, cache=cache)
    assert cache.misses == 12 and len(cache) == 12
    second = recover_batch(seq, cache=cache)
    assert cache.hits == 12
    np.testing.assert_array_equal(first, second)


def test_cache_concurrent_inserts():
    cache = RecoveryCache()

    def fill(offset):
        for i in range(200):
            cache.put((offset, i), np.array([i]))

    threads = [threading.Thread(target=fill, args=(k,)) for k in range(4)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert len(cache) == 800


def test_dead_window_is_zero_filled(rng, caplog):
    seq = rng.uniform(0.1, 1.0, size=(2, 5, 1))
    seq[1, :, 0] = 0.0
    with caplog.at_level(logging.WARNING):
        out = recover_batch(seq)
    np.testing.assert_array_equal(out[1, :, 0], 0.0)
    np.testing.assert_array_equal(out[0], seq[0])
    assert "no available samples" in caplog.text


def test_batch_needs_two_lags():
    with pytest.raises(ShapeMismatchError):
        recover_batch(np.ones((2, 1, 1)))
