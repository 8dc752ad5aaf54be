"""Random-variate samplers and linear-algebra primitives for the Gibbs sampler.

All samplers take a ``numpy.random.Generator`` and are pure functions of its
state. ``RngStreams`` hands out independent counter-based (Philox) streams
addressed by integer keys, so a draw depends only on (seed, key) and not on
the order in which other streams were consumed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import linalg, special
from scipy.stats import invwishart

# Beyond this many standard deviations inversion loses precision; switch to
# exponential-proposal rejection.
TAIL_CUTOFF = 4.0


class NotPositiveDefiniteError(np.linalg.LinAlgError):
    """A matrix that must be symmetric positive-definite is not."""


@dataclass(frozen=True)
class TruncationBounds:
    lower: float = -np.inf
    upper: float = np.inf

    def __post_init__(self) -> None:
        if np.isnan(self.lower) or np.isnan(self.upper) or not self.lower < self.upper:
            raise ValueError(f"invalid truncation bounds ({self.lower}, {self.upper})")


class RngStreams:
    """Factory of independent Philox generators keyed by integer tuples."""

    def __init__(self, seed: int) -> None:
        self.seed = int(seed)

    def generator(self, *key: int) -> np.random.Generator:
        ss = np.random.SeedSequence(self.seed, spawn_key=tuple(int(k) for k in key))
        return np.random.Generator(np.random.Philox(ss))


def _tail_rejection(a: NDArray, b: NDArray, rng: np.random.Generator) -> NDArray:
    """Standard normal restricted to [a, b] with a >= TAIL_CUTOFF (vectorized).

    Exponential proposal with the optimal rate; when the window is narrow a
    uniform proposal on [a, b] is used instead.
    """
    out = np.empty_like(a)
    todo = np.arange(a.size)
    while todo.size:
        aa, bb = a[todo], b[todo]
        narrow = (bb - aa) < 1.0 / aa
        lam = 0.5 * (aa + np.sqrt(aa * aa + 4.0))
        e = rng.standard_exponential(todo.size)
        u = rng.random(todo.size)
        w = rng.random(todo.size)
        # exponential branch
        x_exp = aa + e / lam
        ok_exp = (np.log(u) <= -0.5 * (x_exp - lam) ** 2) & (x_exp <= bb)
        # uniform branch: target/proposal ratio exp((a^2 - x^2)/2)
        x_uni = aa + w * (bb - aa)
        ok_uni = np.log(u) <= 0.5 * (aa * aa - x_uni * x_uni)
        x = np.where(narrow, x_uni, x_exp)
        ok = np.where(narrow, ok_uni, ok_exp)
        out[todo[ok]] = x[ok]
        todo = todo[~ok]
    return out


def _std_truncated(a: NDArray, b: NDArray, rng: np.random.Generator) -> NDArray:
    """Standard normal draws restricted to [a, b], elementwise."""
    u = rng.random(a.shape)
    out = np.empty_like(a)
    upper_tail = a >= TAIL_CUTOFF
    lower_tail = b <= -TAIL_CUTOFF
    central = ~(upper_tail | lower_tail)
    if np.any(central):
        ac, bc, uc = a[central], b[central], u[central]
        # work on the side of zero where the cdf has full relative precision
        flip = ac > 0
        lo = np.where(flip, -bc, ac)
        hi = np.where(flip, -ac, bc)
        plo, phi = special.ndtr(lo), special.ndtr(hi)
        x = special.ndtri(plo + uc * (phi - plo))
        x = np.where(flip, -x, x)
        out[central] = np.clip(x, ac, bc)
    if np.any(upper_tail):
        out[upper_tail] = _tail_rejection(a[upper_tail], b[upper_tail], rng)
    if np.any(lower_tail):
        out[lower_tail] = -_tail_rejection(-b[lower_tail], -a[lower_tail], rng)
    return out


def truncated_normal(
    mean: ArrayLike,
    sd: ArrayLike,
    lower: ArrayLike,
    upper: ArrayLike,
    rng: np.random.Generator,
) -> NDArray[np.float64]:
    """Vectorized draws from N(mean, sd^2) restricted to [lower, upper]."""
    mean, sd, lower, upper = np.broadcast_arrays(
        np.asarray(mean, float), np.asarray(sd, float), np.asarray(lower, float), np.asarray(upper, float)
    )
    if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(sd))):
        raise ValueError("mean and sd must be finite")
    if np.any(sd <= 0):
        raise ValueError("sd must be positive")
    if np.any(np.isnan(lower)) or np.any(np.isnan(upper)) or np.any(lower >= upper):
        raise ValueError("truncation bounds must satisfy lower < upper")
    a = ((lower - mean) / sd).ravel()
    b = ((upper - mean) / sd).ravel()
    z = _std_truncated(a, b, rng).reshape(mean.shape)
    x = mean + sd * z
    # rounding in mean + sd*z may step a hair outside the window
    return np.clip(x, np.nextafter(lower, np.inf), np.nextafter(upper, -np.inf))


def sample_truncated_normal(mean: float, sd: float, bounds: TruncationBounds, rng: np.random.Generator) -> float:
    return float(truncated_normal(mean, sd, bounds.lower, bounds.upper, rng))


def factorize_spd(matrix: ArrayLike) -> NDArray[np.float64]:
    """Lower Cholesky factor; raises NotPositiveDefiniteError otherwise."""
    a = np.asarray(matrix, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError("matrix must be square")
    if not np.all(np.isfinite(a)):
        raise NotPositiveDefiniteError("matrix has non-finite entries")
    if not np.allclose(a, a.T, rtol=1e-10, atol=1e-12 * max(1.0, np.abs(a).max())):
        raise NotPositiveDefiniteError("matrix is not symmetric")
    try:
        return np.linalg.cholesky(a)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefiniteError(str(exc)) from exc


def sample_mvn(mean: ArrayLike, cov: ArrayLike, rng: np.random.Generator) -> NDArray[np.float64]:
    mean = np.asarray(mean, dtype=np.float64)
    cov = np.asarray(cov, dtype=np.float64)
    if mean.ndim != 1 or cov.shape != (mean.size, mean.size):
        raise ValueError(f"dimension mismatch: mean {mean.shape}, cov {cov.shape}")
    L = factorize_spd(cov)
    return mean + L @ rng.standard_normal(mean.size)


def sample_inverse_wishart(df: float, scale: ArrayLike, rng: np.random.Generator) -> NDArray[np.float64]:
    scale = np.asarray(scale, dtype=np.float64)
    p = scale.shape[0]
    if scale.shape != (p, p):
        raise ValueError("scale must be square")
    if not df > p - 1:
        raise ValueError(f"inverse-Wishart df={df} must exceed dimension - 1 = {p - 1}")
    factorize_spd(scale)
    draw = invwishart.rvs(df=df, scale=scale, random_state=rng)
    draw = np.atleast_2d(draw)
    return 0.5 * (draw + draw.T)


def sample_inverse_gamma(shape: float, scale: float, rng: np.random.Generator) -> float:
    if not (shape > 0 and scale > 0):
        raise ValueError("inverse-gamma shape and scale must be positive")
    return float(scale / rng.gamma(shape))


def bayes_linear_update(
    prior_mean: ArrayLike,
    prior_precision: ArrayLike,
    X: ArrayLike,
    y: ArrayLike,
    noise_var: float,
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Posterior mean and covariance of a conjugate normal linear regression."""
    m0 = np.asarray(prior_mean, dtype=np.float64)
    P0 = np.asarray(prior_precision, dtype=np.float64)
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64)
    k = m0.size
    if P0.shape != (k, k) or X.shape[1] != k or X.shape[0] != y.size:
        raise ValueError("non-conformable dimensions in linear update")
    if not noise_var > 0:
        raise ValueError("noise_var must be positive")
    precision = P0 + X.T @ X / noise_var
    try:
        cf = linalg.cho_factor(precision, lower=True)
    except linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError("posterior precision is singular") from exc
    cov = linalg.cho_solve(cf, np.eye(k))
    cov = 0.5 * (cov + cov.T)
    mean = linalg.cho_solve(cf, P0 @ m0 + X.T @ y / noise_var)
    return mean, cov


# --- batched helpers used by the sampler --------------------------------------


def batched_gaussian_draw(
    precision: NDArray[np.float64], linear: NDArray[np.float64], z: NDArray[np.float64]
) -> NDArray[np.float64]:
    """Draw x ~ N(P^-1 b, P^-1) for stacks of precisions P (n,k,k), b (n,k).

    ``z`` holds the standard normal innovations, shape (n, k).
    """
    L = np.linalg.cholesky(precision)
    # mean = P^-1 b via two triangular solves; noise = L^-T z
    w = np.linalg.solve(L, linear[..., None])
    return np.linalg.solve(np.swapaxes(L, -1, -2), w + z[..., None])[..., 0]
