"""Domain types for household purchase panels and brand attributes.

Prices are kept in the currency units they were read in; every consumer of
the panel works with ``rescaled_prices``, which divides by the panel-wide
maximum so all prices lie in (0, 1].
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np
import pandas as pd
from numpy.typing import NDArray

ATTRIBUTE_COLUMNS = ("saa", "bleach", "package", "g_per_30l", "net_weight")
ATTRIBUTE_LABELS = ("Constant", "S.A.A.", "Bleach", "Package", "g/30l", "net-w")
BINARY_ATTRIBUTES = ("bleach", "package")
MARKETING_LABELS = ("Display", "Price")


class PanelFormatError(ValueError):
    """Input file cannot be parsed into a panel or attribute matrix."""


@dataclass(frozen=True)
class ChoiceOccasion:
    household_id: str
    occasion_index: int
    prices: NDArray[np.float64]
    displays: NDArray[np.float64]
    chosen: int

    @property
    def n_brands(self) -> int:
        return len(self.prices)


@dataclass(frozen=True, eq=False)
class PanelDataset:
    """Purchase occasions stored column-wise, grouped by household.

    Attributes:
        household: canonical household index per occasion, shape (N,)
        occasion: occasion ordinal per row, shape (N,)
        chosen: chosen brand index per row, shape (N,)
        prices: raw prices, shape (N, J)
        displays: display indicators, shape (N, J)
        household_ids: original household labels; position = canonical index
    """

    household: NDArray[np.int64]
    occasion: NDArray[np.int64]
    chosen: NDArray[np.int64]
    prices: NDArray[np.float64]
    displays: NDArray[np.float64]
    household_ids: tuple[str, ...]
    _offsets: NDArray[np.int64] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        for name in ("household", "occasion", "chosen", "prices", "displays"):
            arr = np.array(getattr(self, name), copy=True)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "household_ids", tuple(str(h) for h in self.household_ids))
        if self.prices.ndim != 2 or self.prices.shape != self.displays.shape:
            raise ValueError("prices and displays must both be (N, J) arrays")
        n = len(self.chosen)
        if not (len(self.household) == len(self.occasion) == n == self.prices.shape[0]):
            raise ValueError("per-occasion arrays differ in length")
        if n and np.any(np.diff(self.household) < 0):
            raise ValueError("occasions must be grouped by household (sorted by index)")
        counts = np.bincount(self.household, minlength=self.n_households) if n else np.zeros(self.n_households, int)
        offsets = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
        offsets.setflags(write=False)
        object.__setattr__(self, "_offsets", offsets)

    @property
    def n_households(self) -> int:
        return len(self.household_ids)

    @property
    def n_brands(self) -> int:
        return self.prices.shape[1]

    @property
    def n_occasions(self) -> int:
        return len(self.chosen)

    @property
    def price_scale(self) -> float:
        return float(self.prices.max()) if self.n_occasions else 1.0

    @property
    def rescaled_prices(self) -> NDArray[np.float64]:
        return self.prices / self.price_scale

    @property
    def offsets(self) -> NDArray[np.int64]:
        """Row offsets: household h owns rows ``offsets[h]:offsets[h+1]``."""
        return self._offsets

    def occasions_per_household(self) -> NDArray[np.int64]:
        return np.diff(self._offsets)

    def occasion_at(self, row: int) -> ChoiceOccasion:
        scale = self.price_scale
        return ChoiceOccasion(
            household_id=self.household_ids[self.household[row]],
            occasion_index=int(self.occasion[row]),
            prices=self.prices[row] / scale,
            displays=self.displays[row].copy(),
            chosen=int(self.chosen[row]),
        )

    def occasions(self) -> list[ChoiceOccasion]:
        return [self.occasion_at(i) for i in range(self.n_occasions)]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, PanelDataset):
            return NotImplemented
        return (
            self.household_ids == other.household_ids
            and all(
                np.array_equal(getattr(self, k), getattr(other, k))
                for k in ("household", "occasion", "chosen", "prices", "displays")
            )
        )

    @classmethod
    def from_records(
        cls,
        household_ids: Sequence[str],
        occasions: Sequence[int],
        chosen: Sequence[int],
        prices: NDArray[np.float64],
        displays: NDArray[np.float64],
    ) -> "PanelDataset":
        """Build a panel from unsorted rows with arbitrary household labels.

        Labels are canonicalized to 0..H-1 in order of first appearance; rows
        are then stably sorted by (household, occasion).
        """
        labels = [str(h) for h in household_ids]
        mapping: dict[str, int] = {}
        for lab in labels:
            mapping.setdefault(lab, len(mapping))
        hh = np.array([mapping[lab] for lab in labels], dtype=np.int64)
        occ = np.asarray(occasions, dtype=np.int64)
        order = np.lexsort((occ, hh))
        return cls(
            household=hh[order],
            occasion=occ[order],
            chosen=np.asarray(chosen, dtype=np.int64)[order],
            prices=np.asarray(prices, dtype=np.float64)[order],
            displays=np.asarray(displays, dtype=np.float64)[order],
            household_ids=tuple(mapping),
        )


@dataclass(frozen=True, eq=False)
class BrandAttributeMatrix:
    """J x R physical attributes; column 0 is the constant."""

    values: NDArray[np.float64]
    brands: tuple[str, ...] = ()
    labels: tuple[str, ...] = ATTRIBUTE_LABELS

    def __post_init__(self) -> None:
        vals = np.array(self.values, dtype=np.float64, copy=True)
        if vals.ndim != 2:
            raise ValueError("attribute values must be a 2-D array")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        if not self.brands:
            object.__setattr__(self, "brands", tuple(str(j + 1) for j in range(vals.shape[0])))
        if len(self.labels) != vals.shape[1]:
            object.__setattr__(self, "labels", tuple(f"attr{r}" for r in range(vals.shape[1])))

    @property
    def n_brands(self) -> int:
        return self.values.shape[0]

    @property
    def n_attributes(self) -> int:
        return self.values.shape[1]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, BrandAttributeMatrix):
            return NotImplemented
        return self.brands == other.brands and np.array_equal(self.values, other.values)

    @classmethod
    def from_physical(cls, physical: NDArray[np.float64], brands: Sequence[str] = ()) -> "BrandAttributeMatrix":
        """Prepend the constant column to a J x 5 physical attribute table."""
        physical = np.asarray(physical, dtype=np.float64)
        values = np.column_stack([np.ones(physical.shape[0]), physical])
        return cls(values=values, brands=tuple(str(b) for b in brands))

    @property
    def physical(self) -> NDArray[np.float64]:
        return self.values[:, 1:]


@dataclass(frozen=True)
class HouseholdParams:
    alpha: NDArray[np.float64]
    beta: NDArray[np.float64]
    delta: NDArray[np.float64]
    intangible: NDArray[np.float64]


@dataclass(frozen=True)
class PopulationParams:
    beta_mean: NDArray[np.float64]
    beta_cov: NDArray[np.float64]
    delta_mean: NDArray[np.float64]
    delta_cov: NDArray[np.float64]
    intangible_var: float


@dataclass(frozen=True)
class PriorConfig:
    """Hyper-priors for the population layer.

    Means get normal priors with the given precision (scalar times identity);
    covariances get inverse-Wishart priors with ``df = dim + iw_df_offset``
    and identity scale; the intangible variance gets an inverse-gamma prior.
    """

    beta_mean_prior: tuple[float, ...] = (0.0, 0.0)
    beta_mean_precision: float = 0.01
    delta_mean_prior: tuple[float, ...] | None = None
    delta_mean_precision: float = 0.01
    iw_df_offset: float = 3.0
    iw_scale: float = 1.0
    ig_shape: float = 2.5
    ig_scale: float = 1.0

    def delta_prior_mean(self, n_attributes: int) -> NDArray[np.float64]:
        if self.delta_mean_prior is None:
            return np.zeros(n_attributes)
        m = np.asarray(self.delta_mean_prior, dtype=np.float64)
        if m.shape != (n_attributes,):
            raise ValueError(f"delta_mean_prior needs {n_attributes} entries")
        return m

    def iw_df(self, dim: int) -> float:
        return dim + self.iw_df_offset

    def validate(self, n_attributes: int = 6) -> list[str]:
        problems = []
        if self.beta_mean_precision < 0 or self.delta_mean_precision < 0:
            problems.append("prior precision must be >= 0")
        for dim in (2, n_attributes):
            if self.iw_df(dim) <= dim - 1:
                problems.append(f"inverse-Wishart df must exceed {dim - 1}")
        if self.iw_scale <= 0:
            problems.append("inverse-Wishart scale must be > 0")
        if self.ig_shape <= 0 or self.ig_scale <= 0:
            problems.append("inverse-gamma shape and scale must be > 0")
        return problems


@dataclass(frozen=True)
class McmcConfig:
    n_iterations: int = 4000
    n_burn_in: int = 1000
    thin: int = 1
    rng_seed: int = 0
    hpd_level: float = 0.95

    def validate(self) -> list[str]:
        problems = []
        if self.n_iterations < 1:
            problems.append("n_iterations must be >= 1")
        if not 0 <= self.n_burn_in < self.n_iterations:
            problems.append("n_burn_in must satisfy 0 <= n_burn_in < n_iterations")
        if self.thin < 1:
            problems.append("thin must be >= 1")
        if not 0 < self.hpd_level < 1:
            problems.append("hpd_level must lie in (0, 1)")
        return problems

    @property
    def n_draws(self) -> int:
        return (self.n_iterations - self.n_burn_in) // self.thin


def validate_panel(dataset: PanelDataset, attrs: BrandAttributeMatrix) -> list[str]:
    """Return every invariant violation found; an empty list means valid."""
    problems: list[str] = []
    J = dataset.n_brands
    if attrs.n_brands != J:
        problems.append(f"brand count mismatch: panel has {J} brands, attributes have {attrs.n_brands}")
    if dataset.n_households == 0 or dataset.n_occasions == 0:
        problems.append("panel has no occasions")
        return problems
    if np.any(dataset.occasions_per_household() < 1):
        empty = np.flatnonzero(dataset.occasions_per_household() < 1)
        problems.append(f"households without occasions: {[dataset.household_ids[h] for h in empty]}")
    uniq = np.unique(dataset.household)
    if not np.array_equal(uniq, np.arange(dataset.n_households)):
        problems.append("household indices are not contiguous 0..H-1")
    if not np.all(np.isfinite(dataset.prices)):
        problems.append("non-finite price")
    elif np.any(dataset.prices <= 0):
        problems.append("non-positive price")
    if not np.all(np.isin(dataset.displays, (0.0, 1.0))):
        problems.append("display indicator outside {0,1}")
    bad = (dataset.chosen < 0) | (dataset.chosen >= J)
    if np.any(bad):
        rows = np.flatnonzero(bad)
        problems.append(f"chosen out of range at {len(rows)} occasion(s), first row {int(rows[0])}")
    if np.any(dataset.occasion < 0):
        problems.append("negative occasion index")

    vals = attrs.values
    if not np.all(np.isfinite(vals)):
        problems.append("non-finite attribute value")
    if vals.shape[1] == 0 or not np.all(vals[:, 0] == 1.0):
        problems.append("first attribute column must be the constant 1")
    for name in BINARY_ATTRIBUTES:
        col = ATTRIBUTE_COLUMNS.index(name) + 1
        if col < vals.shape[1] and not np.all(np.isin(vals[:, col], (0.0, 1.0))):
            problems.append(f"attribute {name} must be coded 0/1")
    if vals.shape[0] >= vals.shape[1] and np.all(np.isfinite(vals)):
        if np.linalg.matrix_rank(vals) < vals.shape[1]:
            problems.append("attribute matrix is rank deficient")
    elif vals.shape[0] < vals.shape[1]:
        problems.append("more attributes than brands")
    return problems


def design_row(occasion: ChoiceOccasion, brand: int) -> tuple[float, float]:
    """(display, rescaled price) of ``brand`` at ``occasion``."""
    if not 0 <= brand < occasion.n_brands:
        raise IndexError(f"brand {brand} out of range for {occasion.n_brands} brands")
    return float(occasion.displays[brand]), float(occasion.prices[brand])


def design_tensor(dataset: PanelDataset) -> NDArray[np.float64]:
    """Covariates for every occasion and brand, shape (N, J, 2): display, price."""
    return np.stack([dataset.displays, dataset.rescaled_prices], axis=-1)


# --- CSV I/O -----------------------------------------------------------------


def read_panel(path: str | Path) -> PanelDataset:
    try:
        df = pd.read_csv(path, dtype={"household_id": str}, comment="#", encoding="utf-8",
                         float_precision="round_trip")
    except (OSError, pd.errors.ParserError, UnicodeDecodeError) as exc:
        raise PanelFormatError(f"cannot read panel file {path}: {exc}") from exc
    for col in ("household_id", "occasion", "chosen_brand"):
        if col not in df.columns:
            raise PanelFormatError(f"panel file missing column {col!r}")
    price_cols = sorted((c for c in df.columns if c.startswith("price_")), key=_suffix)
    display_cols = sorted((c for c in df.columns if c.startswith("display_")), key=_suffix)
    J = max(len(price_cols), len(display_cols))
    expected_p = [f"price_{j}" for j in range(1, J + 1)]
    expected_d = [f"display_{j}" for j in range(1, J + 1)]
    if J == 0 or price_cols != expected_p or display_cols != expected_d:
        missing = sorted(set(expected_p + expected_d) - set(price_cols + display_cols))
        raise PanelFormatError(f"panel file missing columns {missing or ['price_1', 'display_1']}")
    try:
        prices = df[price_cols].to_numpy(dtype=np.float64)
        displays = df[display_cols].to_numpy(dtype=np.float64)
        chosen = df["chosen_brand"].to_numpy(dtype=np.int64) - 1
        occ = df["occasion"].to_numpy(dtype=np.int64)
    except (ValueError, TypeError) as exc:
        raise PanelFormatError(f"non-numeric panel entry: {exc}") from exc
    return PanelDataset.from_records(df["household_id"].tolist(), occ, chosen, prices, displays)


def write_panel(dataset: PanelDataset, path: str | Path) -> None:
    """Write the panel in the CSV exchange format (brands numbered from 1)."""
    J = dataset.n_brands
    df = pd.DataFrame(
        {
            "household_id": [dataset.household_ids[h] for h in dataset.household],
            "occasion": dataset.occasion,
            "chosen_brand": dataset.chosen + 1,
        }
    )
    for j in range(J):
        df[f"price_{j + 1}"] = dataset.prices[:, j]
    for j in range(J):
        df[f"display_{j + 1}"] = dataset.displays[:, j].astype(np.int64)
    df.to_csv(path, index=False, float_format="%.17g", encoding="utf-8")


def read_attributes(path: str | Path) -> BrandAttributeMatrix:
    try:
        df = pd.read_csv(path, comment="#", dtype={"brand": str}, encoding="utf-8",
                         float_precision="round_trip")
    except (OSError, pd.errors.ParserError, UnicodeDecodeError) as exc:
        raise PanelFormatError(f"cannot read attribute file {path}: {exc}") from exc
    missing = [c for c in ("brand",) + ATTRIBUTE_COLUMNS if c not in df.columns]
    if missing:
        raise PanelFormatError(f"attribute file missing columns {missing}")
    try:
        physical = df[list(ATTRIBUTE_COLUMNS)].to_numpy(dtype=np.float64)
    except (ValueError, TypeError) as exc:
        raise PanelFormatError(f"non-numeric attribute entry: {exc}") from exc
    return BrandAttributeMatrix.from_physical(physical, brands=df["brand"].tolist())


def write_attributes(attrs: BrandAttributeMatrix, path: str | Path) -> None:
    df = pd.DataFrame(attrs.physical, columns=list(ATTRIBUTE_COLUMNS))
    df.insert(0, "brand", list(attrs.brands))
    df.to_csv(path, index=False, float_format="%.17g", encoding="utf-8")


def default_attributes() -> BrandAttributeMatrix:
    """The bundled synthetic six-brand attribute matrix."""
    ref = resources.files("hbprobit") / "data" / "synthetic_attributes.csv"
    with resources.as_file(ref) as path:
        return read_attributes(path)


def _suffix(col: str) -> int:
    tail = col.rsplit("_", 1)[-1]
    return int(tail) if tail.isdigit() else math.inf  # type: ignore[return-value]
