from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hbprobit.kernels import (
    NotPositiveDefiniteError,
    RngStreams,
    TruncationBounds,
    batched_gaussian_draw,
    bayes_linear_update,
    factorize_spd,
    sample_inverse_gamma,
    sample_inverse_wishart,
    sample_mvn,
    sample_truncated_normal,
    truncated_normal,
)

# E[Z | Z >= 1.96] for standard normal Z, from quadrature of x*phi(x) over the tail
TAIL_MEAN_196 = 2.337834605151578


def rng(seed=0):
    return np.random.default_rng(seed)


# --- truncated normal ---------------------------------------------------------------


def test_untruncated_mean():
    x = truncated_normal(np.zeros(100_000), 1.0, -np.inf, np.inf, rng(1))
    assert abs(x.mean()) < 0.02


def test_upper_tail_mean_matches_quadrature():
    x = truncated_normal(np.zeros(100_000), 1.0, 1.96, np.inf, rng(2))
    assert x.min() >= 1.96
    assert abs(x.mean() - TAIL_MEAN_196) < 0.02


def test_far_tail_uses_rejection_and_stays_in_bounds():
    x = truncated_normal(np.zeros(50_000), 1.0, 8.0, np.inf, rng(3))
    assert x.min() >= 8.0
    # E[Z | Z > a] ~ a + 1/a for large a
    assert abs(x.mean() - (8.0 + 1 / 8.0 - 2 / 8.0**3)) < 0.01
    y = truncated_normal(np.zeros(50_000), 1.0, -np.inf, -6.0, rng(4))
    assert y.max() <= -6.0


def test_narrow_tail_window():
    x = truncated_normal(np.zeros(10_000), 1.0, 10.0, 10.01, rng(5))
    assert np.all((x >= 10.0) & (x <= 10.01))


def test_scalar_wrapper_unit_interval():
    g = rng(6)
    for _ in range(200):
        v = sample_truncated_normal(0.3, 2.0, TruncationBounds(0.0, 1.0), g)
        assert 0.0 <= v <= 1.0


def test_invalid_bounds():
    with pytest.raises(ValueError):
        TruncationBounds(1.0, 1.0)
    with pytest.raises(ValueError):
        truncated_normal(0.0, 1.0, 2.0, 1.0, rng())
    with pytest.raises(ValueError):
        truncated_normal(0.0, 0.0, 0.0, 1.0, rng())


def test_bounds_never_violated_bulk():
    g = rng(7)
    n = 1_000_000
    mean = g.normal(0, 5, n)
    a = g.normal(0, 5, n)
    width = g.exponential(2.0, n)
    lower = np.where(g.random(n) < 0.2, -np.inf, a)
    upper = np.where(g.random(n) < 0.2, np.inf, a + width + 1e-9)
    x = truncated_normal(mean, 1.0, lower, upper, g)
    assert np.all((x >= lower) & (x <= upper))


@settings(max_examples=200, deadline=None)
@given(mean=st.floats(-50, 50), sd=st.floats(0.01, 10), lo=st.floats(-60, 60), width=st.floats(1e-6, 30),
       seed=st.integers(0, 2**32 - 1))
def test_bounds_property(mean, sd, lo, width, seed):
    x = truncated_normal(np.full(64, mean), sd, lo, lo + width, np.random.default_rng(seed))
    assert np.all((x >= lo) & (x <= lo + width))


# --- multivariate normal, inverse-Wishart, inverse-gamma --------------------------------


def test_mvn_degenerate_limits():
    mu = np.array([1.0, -2.0, 3.0])
    with pytest.raises(NotPositiveDefiniteError):
        sample_mvn(mu, np.zeros((3, 3)), rng())
    x = sample_mvn(mu, 1e-12 * np.eye(3), rng())
    assert np.max(np.abs(x - mu)) < 1e-4
    with pytest.raises(ValueError):
        sample_mvn(np.zeros(2), np.eye(3), rng())


def test_mvn_sample_covariance():
    C = np.array([[2.0, 0.6, -0.3], [0.6, 1.0, 0.2], [-0.3, 0.2, 0.5]])
    g = rng(8)
    x = np.array([sample_mvn(np.zeros(3), C, g) for _ in range(100_000)])
    assert np.max(np.abs(np.cov(x.T) - C)) < 0.05 * np.abs(C).max()


def test_inverse_wishart_mean():
    p = 3
    df = p + 4
    S = np.array([[1.0, 0.3, 0.0], [0.3, 2.0, -0.4], [0.0, -0.4, 1.5]])
    g = rng(9)
    draws = np.array([sample_inverse_wishart(df, S, g) for _ in range(100_000)])
    expected = S / (df - p - 1)
    # off-diagonal zero entries checked on an absolute scale of the diagonal
    tol = 0.05 * np.maximum(np.abs(expected), np.sqrt(np.outer(np.diag(expected), np.diag(expected))))
    assert np.all(np.abs(draws.mean(axis=0) - expected) <= tol)
    for d in draws[:100]:
        factorize_spd(d)


def test_inverse_wishart_df_condition():
    with pytest.raises(ValueError):
        sample_inverse_wishart(1.0, np.eye(2), rng())
    sample_inverse_wishart(1.5, np.eye(2), rng())


def test_inverse_gamma_mean():
    g = rng(10)
    x = np.array([sample_inverse_gamma(2.5, 1.0, g) for _ in range(100_000)])
    assert abs(x.mean() - 1 / 1.5) < 0.02
    with pytest.raises(ValueError):
        sample_inverse_gamma(0.0, 1.0, g)


# --- linear algebra ----------------------------------------------------------------------


def test_factorize_spd():
    assert np.array_equal(factorize_spd(np.eye(3)), np.eye(3))
    L = factorize_spd([[4.0, 2.0], [2.0, 3.0]])
    np.testing.assert_allclose(L, [[2.0, 0.0], [1.0, math.sqrt(2.0)]], atol=1e-15)
    np.testing.assert_allclose(L @ L.T, [[4.0, 2.0], [2.0, 3.0]], atol=1e-14)
    with pytest.raises(NotPositiveDefiniteError):
        factorize_spd([[1.0, 2.0], [2.0, 1.0]])


@settings(max_examples=50, deadline=None)
@given(k=st.integers(1, 6), seed=st.integers(0, 10_000))
def test_factorize_reconstructs(k, seed):
    A = np.random.default_rng(seed).normal(size=(k, k))
    M = A @ A.T + k * np.eye(k)
    L = factorize_spd(M)
    assert np.allclose(L, np.tril(L))
    np.testing.assert_allclose(L @ L.T, M, rtol=1e-12, atol=1e-12)


def test_linear_update_flat_prior():
    y = np.array([1.5, -2.0, 0.25])
    mean, cov = bayes_linear_update(np.zeros(3), np.zeros((3, 3)), np.eye(3), y, 1.0)
    np.testing.assert_allclose(mean, y, atol=1e-14)
    np.testing.assert_allclose(cov, np.eye(3), atol=1e-14)


def test_linear_update_dogmatic_prior():
    m0 = np.array([0.7, -1.1])
    X = np.array([[1.0, 2.0], [0.5, -1.0], [3.0, 0.0]])
    mean, _ = bayes_linear_update(m0, 1e8 * np.eye(2), X, np.array([10.0, -4.0, 7.0]), 1.0)
    assert np.max(np.abs(mean - m0)) < 1e-4


def test_linear_update_matches_normal_equations():
    X = [[1.0, 2.0], [1.0, -1.0], [1.0, 0.5]]
    y = [3.0, 0.5, 2.0]
    # hand-rolled normal equations: (X'X) b = X'y with an explicit 2x2 inverse
    sxx = [[sum(r[i] * r[j] for r in X) for j in range(2)] for i in range(2)]
    sxy = [sum(r[i] * v for r, v in zip(X, y)) for i in range(2)]
    det = sxx[0][0] * sxx[1][1] - sxx[0][1] * sxx[1][0]
    b0 = (sxx[1][1] * sxy[0] - sxx[0][1] * sxy[1]) / det
    b1 = (sxx[0][0] * sxy[1] - sxx[1][0] * sxy[0]) / det
    mean, cov = bayes_linear_update(np.zeros(2), np.zeros((2, 2)), X, y, 2.0)
    assert abs(mean[0] - b0) < 1e-8 and abs(mean[1] - b1) < 1e-8
    np.testing.assert_allclose(cov, 2.0 * np.linalg.inv(np.array(sxx)), atol=1e-12)


def test_linear_update_errors():
    with pytest.raises(ValueError):
        bayes_linear_update(np.zeros(2), np.eye(2), np.ones((3, 3)), np.ones(3), 1.0)
    with pytest.raises(ValueError):
        bayes_linear_update(np.zeros(2), np.eye(2), np.ones((3, 2)), np.ones(3), 0.0)
    with pytest.raises(np.linalg.LinAlgError):
        bayes_linear_update(np.zeros(2), np.zeros((2, 2)), np.ones((3, 2)), np.ones(3), 1.0)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 10_000), n=st.integers(0, 8))
def test_linear_update_covariance_is_spd(seed, n):
    g = np.random.default_rng(seed)
    P0 = np.diag(g.uniform(0.1, 5.0, 3))
    mean, cov = bayes_linear_update(g.normal(size=3), P0, g.normal(size=(n, 3)), g.normal(size=n), 0.5)
    factorize_spd(cov)
    assert np.all(np.isfinite(mean))


def test_batched_draw_matches_dense_solution():
    g = rng(11)
    A = g.normal(size=(5, 3, 3))
    P = A @ np.swapaxes(A, 1, 2) + np.eye(3)
    b = g.normal(size=(5, 3))
    x = batched_gaussian_draw(P, b, np.zeros((5, 3)))
    np.testing.assert_allclose(x, np.linalg.solve(P, b[..., None])[..., 0], rtol=1e-10)


def test_batched_draw_rows_are_independent_of_order():
    g = rng(12)
    A = g.normal(size=(6, 2, 2))
    P = A @ np.swapaxes(A, 1, 2) + np.eye(2)
    b, z = g.normal(size=(6, 2)), g.normal(size=(6, 2))
    rev = slice(None, None, -1)
    np.testing.assert_array_equal(batched_gaussian_draw(P, b, z)[rev], batched_gaussian_draw(P[rev], b[rev], z[rev]))


def test_batched_draw_covariance():
    P = np.array([[2.0, 0.5], [0.5, 1.0]])
    n = 100_000
    z = rng(13).standard_normal((n, 2))
    x = batched_gaussian_draw(np.broadcast_to(P, (n, 2, 2)), np.zeros((n, 2)), z)
    np.testing.assert_allclose(np.cov(x.T), np.linalg.inv(P), atol=0.02)


# --- streams -----------------------------------------------------------------------------


def test_streams_are_deterministic_and_distinct():
    s = RngStreams(42)
    a = s.generator(0, 5, 1).standard_normal(4)
    assert np.array_equal(a, RngStreams(42).generator(0, 5, 1).standard_normal(4))
    assert not np.array_equal(a, s.generator(0, 5, 2).standard_normal(4))
    assert not np.array_equal(a, RngStreams(43).generator(0, 5, 1).standard_normal(4))
