"""Tangible / intangible split of brand intercepts and simulated choice probabilities."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd
from numpy.typing import ArrayLike, NDArray

from .data_model import BrandAttributeMatrix, ChoiceOccasion, HouseholdParams
from .sampler import ChainDraws

DECOMPOSITION_COLUMNS = ("household", "brand", "total_mean", "tangible_mean", "intangible_mean",
                         "total_sd", "tangible_sd", "intangible_sd")
_SIM_BATCH = 100_000


def tangible_value(delta: ArrayLike, attr_row: ArrayLike) -> float:
    """Attribute-explained utility: sum_r delta_r * D_r."""
    delta = np.asarray(delta, dtype=np.float64)
    attr_row = np.asarray(attr_row, dtype=np.float64)
    if delta.shape != attr_row.shape or delta.ndim != 1:
        raise ValueError(f"length mismatch: delta {delta.shape}, attributes {attr_row.shape}")
    return float(delta @ attr_row)


def intangible_value(alpha_j: float, delta: ArrayLike, attr_row: ArrayLike) -> float:
    return float(alpha_j) - tangible_value(delta, attr_row)


@dataclass(frozen=True)
class BrandValueDecomposition:
    """Posterior means and sds, each of shape (H, J)."""

    total_mean: NDArray[np.float64]
    tangible_mean: NDArray[np.float64]
    intangible_mean: NDArray[np.float64]
    total_sd: NDArray[np.float64]
    tangible_sd: NDArray[np.float64]
    intangible_sd: NDArray[np.float64]
    household_ids: tuple[str, ...]
    brands: tuple[str, ...]
    max_identity_error: float

    def to_frame(self) -> pd.DataFrame:
        H, J = self.total_mean.shape
        frame = {
            "household": np.repeat(self.household_ids or [str(h) for h in range(H)], J),
            "brand": np.tile(self.brands, H),
        }
        for col in DECOMPOSITION_COLUMNS[2:]:
            frame[col] = getattr(self, col).ravel()
        return pd.DataFrame(frame, columns=list(DECOMPOSITION_COLUMNS))

    def to_csv(self, path: str | Path) -> None:
        self.to_frame().to_csv(path, index=False, float_format="%.6f", encoding="utf-8")


def identity_error(alpha: NDArray, tangible: NDArray, intangible: NDArray) -> float:
    """Largest |alpha - (tangible + intangible)| relative to the cell's magnitude."""
    scale = np.maximum.reduce([np.abs(alpha), np.abs(tangible), np.abs(intangible), np.ones_like(alpha)])
    return float(np.max(np.abs(alpha - (tangible + intangible)) / scale)) if alpha.size else 0.0


def decompose_chain(draws: ChainDraws, attrs: BrandAttributeMatrix | None = None) -> BrandValueDecomposition:
    if draws.n_draws == 0:
        raise ValueError("empty chain")
    D = draws.attribute_values if attrs is None else attrs.values
    if D.shape != (draws.alpha.shape[2], draws.delta.shape[2]):
        raise ValueError("attribute matrix does not match the chain's dimensions")
    tangible = draws.delta @ D.T
    total = draws.alpha
    intangible = draws.intangible
    ddof = 1 if draws.n_draws > 1 else 0
    brands = attrs.brands if attrs is not None else tuple(str(j + 1) for j in range(D.shape[0]))
    return BrandValueDecomposition(
        total_mean=total.mean(axis=0),
        tangible_mean=tangible.mean(axis=0),
        intangible_mean=intangible.mean(axis=0),
        total_sd=total.std(axis=0, ddof=ddof),
        tangible_sd=tangible.std(axis=0, ddof=ddof),
        intangible_sd=intangible.std(axis=0, ddof=ddof),
        household_ids=draws.household_ids,
        brands=tuple(brands),
        max_identity_error=identity_error(total, tangible, intangible),
    )


def choice_probabilities(hp: HouseholdParams, occasion: ChoiceOccasion, n_sims: int,
                         rng: np.random.Generator) -> NDArray[np.float64]:
    """Frequency simulator: share of n_sims noisy utility vectors won by each brand."""
    if n_sims < 1:
        raise ValueError("n_sims must be >= 1")
    x = np.column_stack([occasion.displays, occasion.prices])
    v = np.asarray(hp.alpha, dtype=np.float64) + x @ np.asarray(hp.beta, dtype=np.float64)
    return simulate_shares(v, n_sims, rng)


def simulate_shares(utility: ArrayLike, n_sims: int, rng: np.random.Generator) -> NDArray[np.float64]:
    """Argmax frequencies of ``utility + N(0, I)`` over ``n_sims`` draws."""
    v = np.asarray(utility, dtype=np.float64)
    J = v.size
    wins = np.zeros(J, dtype=np.int64)
    done = 0
    while done < n_sims:
        m = min(_SIM_BATCH, n_sims - done)
        winners = np.argmax(v + rng.standard_normal((m, J)), axis=1)
        wins += np.bincount(winners, minlength=J)
        done += m
    return wins / n_sims


def simulation_standard_error(p: ArrayLike, n_sims: int) -> NDArray[np.float64]:
    p = np.asarray(p, dtype=np.float64)
    return np.sqrt(p * (1.0 - p) / n_sims)
