"""Gibbs sampler for the hierarchical multinomial probit.

Model, per household h, brand j and occasion t::

    U_hjt = alpha_hj + beta_h . x_hjt + e_hjt,   e_hjt ~ N(0, 1)
    chosen_ht = argmax_j U_hjt
    alpha_hj = D_j . delta_h + phi_hj,            phi_hj ~ N(0, s2_phi)
    beta_h ~ N(beta_mean, beta_cov),  delta_h ~ N(delta_mean, delta_cov)

Every conditional is conjugate, so a sweep is a fixed sequence of exact draws:
latent utilities, marketing coefficients, intercepts, engineering parameters
(with intangibles recomputed), a location move, then population parameters.

Because D has a constant column and every brand has an intercept, shifting
all of (U, alpha, delta_const, delta_mean_const) by the same amount leaves the
likelihood unchanged. The location move draws that shift from its exact
conditional, which the prior alone determines; without it the chain drifts
along that direction as a slow random walk.
"""

from __future__ import annotations

import json
import logging
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np
from numpy.typing import NDArray

from . import kernels
from .data_model import (
    BrandAttributeMatrix,
    HouseholdParams,
    McmcConfig,
    PanelDataset,
    PopulationParams,
    PriorConfig,
    design_tensor,
    validate_panel,
)

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1
STAGES = ("latent_utilities", "household_marketing", "household_intercepts",
          "engineering_params", "location_shift", "population_hyperparams")
_STAGE_ID = {name: i for i, name in enumerate(STAGES)}
WORKERS_ENV = "HBPROBIT_WORKERS"


class SamplerError(RuntimeError):
    """A conditional update failed; carries the iteration and stage."""

    def __init__(self, iteration: int, stage: str, cause: BaseException) -> None:
        super().__init__(f"iteration {iteration}, conditional {stage}: {cause}")
        self.iteration = iteration
        self.stage = stage
        self.cause = cause


@dataclass(frozen=True, eq=False)
class ModelData:
    """Panel and attributes precomputed into the arrays the sampler needs."""

    panel: PanelDataset
    attrs: BrandAttributeMatrix
    X: NDArray[np.float64] = field(init=False)  # (N, J, 2)
    XtX: NDArray[np.float64] = field(init=False)  # (H, 2, 2)
    counts: NDArray[np.int64] = field(init=False)  # (H,)
    D: NDArray[np.float64] = field(init=False)  # (J, R)
    DtD: NDArray[np.float64] = field(init=False)
    rows: NDArray[np.int64] = field(init=False)  # household index per occasion
    brand_sums: NDArray[np.float64] = field(init=False)  # (H, J, 2) covariate sums

    def __post_init__(self) -> None:
        X = design_tensor(self.panel)
        H = self.panel.n_households
        hh = self.panel.household
        outer = np.einsum("njk,njl->nkl", X, X)
        XtX = np.stack(
            [np.bincount(hh, weights=outer[:, k, l], minlength=H) for k in range(2) for l in range(2)],
            axis=-1,
        ).reshape(H, 2, 2)
        D = self.attrs.values
        if np.linalg.matrix_rank(D) < D.shape[1]:
            raise np.linalg.LinAlgError("attribute matrix is rank deficient")
        flat = X.reshape(-1, 2)
        if flat.shape[0] and np.any(np.ptp(flat, axis=0) == 0):
            # a covariate constant across brands only shifts every utility equally
            warnings.warn("marketing covariate is constant; household coefficients will be prior-dominated",
                          stacklevel=2)
        J = self.panel.n_brands
        sums = np.stack([np.bincount(hh, weights=X[:, j, k], minlength=H) for j in range(J) for k in range(2)],
                        axis=-1).reshape(H, J, 2)
        for name, val in (("X", X), ("XtX", XtX), ("counts", self.panel.occasions_per_household()),
                          ("D", D), ("DtD", D.T @ D), ("rows", hh), ("brand_sums", sums)):
            object.__setattr__(self, name, val)

    @property
    def n_households(self) -> int:
        return self.panel.n_households

    @property
    def n_brands(self) -> int:
        return self.panel.n_brands

    @property
    def n_attributes(self) -> int:
        return self.D.shape[1]

    def per_household_sum(self, values: NDArray[np.float64]) -> NDArray[np.float64]:
        """Sum rows of an (N, k) array within each household -> (H, k)."""
        H = self.n_households
        return np.stack([np.bincount(self.rows, weights=values[:, k], minlength=H)
                         for k in range(values.shape[1])], axis=-1)


@dataclass
class SamplerState:
    utilities: NDArray[np.float64]  # (N, J)
    alpha: NDArray[np.float64]  # (H, J)
    beta: NDArray[np.float64]  # (H, 2)
    delta: NDArray[np.float64]  # (H, R)
    intangible: NDArray[np.float64]  # (H, J)
    population: PopulationParams

    def copy(self) -> "SamplerState":
        return SamplerState(self.utilities.copy(), self.alpha.copy(), self.beta.copy(),
                            self.delta.copy(), self.intangible.copy(), self.population)

    def household(self, h: int) -> HouseholdParams:
        return HouseholdParams(self.alpha[h].copy(), self.beta[h].copy(),
                               self.delta[h].copy(), self.intangible[h].copy())


def deterministic_utility(state: SamplerState, data: ModelData) -> NDArray[np.float64]:
    """alpha_hj + beta_h . x_hjt for every occasion row, shape (N, J)."""
    hh = data.rows
    return state.alpha[hh] + np.einsum("njk,nk->nj", data.X, state.beta[hh])


def truncation_violations(utilities: NDArray[np.float64], chosen: NDArray[np.int64]) -> int:
    """Occasions whose utility argmax is not the recorded choice."""
    n = len(chosen)
    if n == 0:
        return 0
    u_chosen = utilities[np.arange(n), chosen]
    others = utilities.copy()
    others[np.arange(n), chosen] = -np.inf
    return int(np.count_nonzero(others.max(axis=1) >= u_chosen))


def fit_proxy(state: SamplerState, data: ModelData) -> float:
    """Sum of squared latent-utility residuals."""
    return float(np.sum((state.utilities - deterministic_utility(state, data)) ** 2))


# --- initialization -------------------------------------------------------------


def initial_state(data: ModelData, priors: PriorConfig, rng: np.random.Generator) -> SamplerState:
    """Zero coefficients, hyperparameters at prior means, consistent utilities."""
    H, J, R = data.n_households, data.n_brands, data.n_attributes
    N = data.panel.n_occasions
    chosen = data.panel.chosen
    U = rng.standard_normal((N, J))
    others = U.copy()
    others[np.arange(N), chosen] = -np.inf
    U[np.arange(N), chosen] = kernels.truncated_normal(0.0, 1.0, others.max(axis=1), np.inf, rng)

    pop = PopulationParams(
        beta_mean=np.asarray(priors.beta_mean_prior, dtype=np.float64).copy(),
        beta_cov=priors.iw_scale * np.eye(2) / max(priors.iw_df(2) - 2 - 1, 1.0),
        delta_mean=priors.delta_prior_mean(R).copy(),
        delta_cov=priors.iw_scale * np.eye(R) / max(priors.iw_df(R) - R - 1, 1.0),
        intangible_var=priors.ig_scale / (priors.ig_shape - 1.0) if priors.ig_shape > 1 else priors.ig_scale,
    )
    return SamplerState(U, np.zeros((H, J)), np.zeros((H, 2)), np.zeros((H, R)), np.zeros((H, J)), pop)


# --- conditional updates --------------------------------------------------------


def draw_latent_utilities(state: SamplerState, data: ModelData, rng: np.random.Generator) -> None:
    """Resample U one brand at a time from its truncated normal conditional."""
    U = state.utilities
    N, J = U.shape
    if N == 0:
        return
    chosen = data.panel.chosen
    idx = np.arange(N)
    mean = deterministic_utility(state, data)
    for j in range(J):
        is_chosen = chosen == j
        others = U.copy()
        others[:, j] = -np.inf
        # chosen brand: must stay above every other brand
        lower = np.where(is_chosen, others.max(axis=1), -np.inf)
        # other brands: must stay below the chosen brand
        upper = np.where(is_chosen, np.inf, U[idx, chosen])
        U[:, j] = kernels.truncated_normal(mean[:, j], 1.0, lower, upper, rng)


def draw_household_marketing(state: SamplerState, data: ModelData, rng: np.random.Generator,
                             marginalize_intercepts: bool = True) -> None:
    """Draw beta_h for every household by conjugate regression on (display, price).

    With ``marginalize_intercepts`` the intercepts are integrated out under
    their prior N(D_j . delta_h, s2_phi), so this step followed by the
    intercept step is one exact joint draw of (alpha_h, beta_h). Persistent
    brand price levels make alpha and beta strongly correlated; drawing them
    one given the other mixes very slowly. Without it the responses are
    U - alpha_h as in plain Gibbs.
    """
    H = data.n_households
    pop = state.population
    kernels.factorize_spd(pop.beta_cov)
    prior_prec = np.linalg.inv(pop.beta_cov)
    prior_prec = 0.5 * (prior_prec + prior_prec.T)
    if marginalize_intercepts:
        m = state.delta @ data.D.T  # prior mean of alpha, (H, J)
        y = state.utilities - m[data.rows]
        Xty = data.per_household_sum(np.einsum("njk,nj->nk", data.X, y))
        ysum = data.per_household_sum(y)  # (H, J)
        # brand-j block of the marginal covariance is I + s2 * 11'
        s2 = pop.intangible_var
        c = s2 / (1.0 + data.counts * s2)  # (H,)
        Sx = data.brand_sums  # (H, J, 2)
        XtX = data.XtX - c[:, None, None] * np.einsum("hjk,hjl->hkl", Sx, Sx)
        Xty = Xty - c[:, None] * np.einsum("hjk,hj->hk", Sx, ysum)
    else:
        y = state.utilities - state.alpha[data.rows]
        Xty = data.per_household_sum(np.einsum("njk,nj->nk", data.X, y))
        XtX = data.XtX
    precision = prior_prec[None] + XtX
    linear = (prior_prec @ pop.beta_mean)[None] + Xty
    z = rng.standard_normal((H, 2))
    state.beta = kernels.batched_gaussian_draw(precision, linear, z)


def draw_household_intercepts(state: SamplerState, data: ModelData, rng: np.random.Generator) -> None:
    """Per household and brand: occasion evidence combined with prior N(D_j . delta_h, s2_phi)."""
    H, J = data.n_households, data.n_brands
    s2 = state.population.intangible_var
    resid = state.utilities - np.einsum("njk,nk->nj", data.X, state.beta[data.rows])
    sums = data.per_household_sum(resid)
    prior_mean = state.delta @ data.D.T
    post_var = 1.0 / (data.counts[:, None] + 1.0 / s2)
    post_mean = post_var * (sums + prior_mean / s2)
    z = rng.standard_normal((H, J))
    state.alpha = post_mean + np.sqrt(post_var) * z
    state.intangible = state.alpha - prior_mean


def draw_engineering_params(state: SamplerState, data: ModelData, rng: np.random.Generator) -> None:
    """delta_h | alpha_h by conjugate regression on D; intangibles follow."""
    H, R = data.n_households, data.n_attributes
    pop = state.population
    s2 = pop.intangible_var
    kernels.factorize_spd(pop.delta_cov)
    prior_prec = np.linalg.inv(pop.delta_cov)
    prior_prec = 0.5 * (prior_prec + prior_prec.T)
    precision = prior_prec + data.DtD / s2
    precision = 0.5 * (precision + precision.T)
    kernels.factorize_spd(precision)
    linear = (prior_prec @ pop.delta_mean)[None] + state.alpha @ data.D / s2
    z = rng.standard_normal((H, R))
    state.delta = kernels.batched_gaussian_draw(np.broadcast_to(precision, (H, R, R)), linear, z)
    state.intangible = state.alpha - state.delta @ data.D.T


def draw_location_shift(state: SamplerState, data: ModelData, priors: PriorConfig,
                        rng: np.random.Generator) -> None:
    """Exact draws along the likelihood-flat translation directions.

    Household move: shift U_h, alpha_h and delta_h[0] by c_h, with c_h drawn so
    delta_h[0] comes from its conditional under N(delta_mean, delta_cov).
    Population move: shift every U, alpha, delta_h[0] and delta_mean[0] by one
    c drawn so delta_mean[0] comes from its hyper-prior conditional.
    """
    if not np.all(data.D[:, 0] == 1.0):
        return
    H = data.n_households
    pop = state.population
    Q = np.linalg.inv(pop.delta_cov)
    dev = state.delta[:, 1:] - pop.delta_mean[1:]
    cond_mean = pop.delta_mean[0] - dev @ Q[0, 1:] / Q[0, 0]
    z = rng.standard_normal(H + 1)
    new = cond_mean + z[:H] / np.sqrt(Q[0, 0])
    shift = new - state.delta[:, 0]

    delta_mean = pop.delta_mean.copy()
    p0 = priors.delta_mean_precision
    if p0 > 0:
        # hyper-prior precision is p0 * I, so the constant is independent a priori
        m0 = priors.delta_prior_mean(data.n_attributes)[0]
        g = m0 + z[H] / np.sqrt(p0) - delta_mean[0]
        delta_mean[0] += g
        shift = shift + g
    delta = state.delta.copy()
    delta[:, 0] += shift
    state.delta = delta
    state.alpha = state.alpha + shift[:, None]
    state.utilities = state.utilities + shift[data.rows][:, None]
    state.intangible = state.alpha - state.delta @ data.D.T
    state.population = replace(pop, delta_mean=delta_mean)


def _draw_mean(draws: NDArray, cov: NDArray, prior_mean: NDArray, precision: float,
               rng: np.random.Generator) -> NDArray:
    """Population mean given member draws: whitened conjugate regression."""
    n, k = draws.shape
    Linv = np.linalg.inv(kernels.factorize_spd(cov))
    X = np.tile(Linv, (n, 1))
    y = (draws @ Linv.T).ravel()
    mean, post_cov = kernels.bayes_linear_update(prior_mean, precision * np.eye(k), X, y, 1.0)
    return kernels.sample_mvn(mean, post_cov, rng)


def draw_population_hyperparams(state: SamplerState, priors: PriorConfig, rng: np.random.Generator,
                                data: ModelData | None = None) -> None:
    """Conjugate draws of the population layer.

    Order: beta_mean, beta_cov, delta_mean, delta_cov, then (when ``data`` is
    given) a joint translation of delta_mean and every delta_h, then the
    intangible variance. The translation is the non-centered redraw of
    delta_mean: it leaves each delta_h - delta_mean fixed and is informed by
    all households' intercepts at once, which removes the slow coupling
    between delta_mean and near-constant attribute columns.
    """
    pop = state.population
    H = state.beta.shape[0]
    R = state.delta.shape[1]

    beta_mean = _draw_mean(state.beta, pop.beta_cov, np.asarray(priors.beta_mean_prior, float),
                           priors.beta_mean_precision, rng)
    dev = state.beta - beta_mean
    beta_cov = kernels.sample_inverse_wishart(priors.iw_df(2) + H, priors.iw_scale * np.eye(2) + dev.T @ dev, rng)

    m0 = priors.delta_prior_mean(R)
    delta_mean = _draw_mean(state.delta, pop.delta_cov, m0, priors.delta_mean_precision, rng)
    dev = state.delta - delta_mean
    delta_cov = kernels.sample_inverse_wishart(priors.iw_df(R) + H, priors.iw_scale * np.eye(R) + dev.T @ dev, rng)

    if data is not None and H > 0:
        s2 = pop.intangible_var
        D = data.D
        P0 = priors.delta_mean_precision * np.eye(R)
        resid = (state.alpha - state.delta @ D.T).sum(axis=0)  # sum_h (alpha_h - D delta_h)
        # v shifts delta_mean and all delta_h; prior is on delta_mean + v
        precision = P0 + H * data.DtD / s2
        linear = -P0 @ (delta_mean - m0) + D.T @ resid / s2
        shift = kernels.batched_gaussian_draw(precision[None], linear[None], rng.standard_normal((1, R)))[0]
        delta_mean = delta_mean + shift
        state.delta = state.delta + shift
        state.intangible = state.alpha - state.delta @ D.T

    phi = state.intangible
    s2 = kernels.sample_inverse_gamma(priors.ig_shape + 0.5 * phi.size,
                                      priors.ig_scale + 0.5 * float(np.sum(phi * phi)), rng)
    for cov in (beta_cov, delta_cov):
        kernels.factorize_spd(cov)
    state.population = PopulationParams(beta_mean, beta_cov, delta_mean, delta_cov, s2)


# --- chain output ---------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ChainDraws:
    """Thinned post-burn-in snapshots.

    Household arrays have shape (S, H, .); population arrays (S, .).
    """

    alpha: NDArray[np.float64]
    beta: NDArray[np.float64]
    delta: NDArray[np.float64]
    intangible: NDArray[np.float64]
    beta_mean: NDArray[np.float64]
    beta_cov: NDArray[np.float64]
    delta_mean: NDArray[np.float64]
    delta_cov: NDArray[np.float64]
    intangible_var: NDArray[np.float64]
    attribute_values: NDArray[np.float64]
    household_ids: tuple[str, ...] = ()
    config: McmcConfig = field(default_factory=McmcConfig)
    priors: PriorConfig = field(default_factory=PriorConfig)
    n_chains: int = 1

    ARRAYS = ("alpha", "beta", "delta", "intangible", "beta_mean", "beta_cov",
              "delta_mean", "delta_cov", "intangible_var", "attribute_values")

    @property
    def n_draws(self) -> int:
        return self.alpha.shape[0]

    @property
    def n_households(self) -> int:
        return self.alpha.shape[1]

    def household(self, s: int, h: int) -> HouseholdParams:
        return HouseholdParams(self.alpha[s, h], self.beta[s, h], self.delta[s, h], self.intangible[s, h])

    def population(self, s: int) -> PopulationParams:
        return PopulationParams(self.beta_mean[s], self.beta_cov[s], self.delta_mean[s],
                                self.delta_cov[s], float(self.intangible_var[s]))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ChainDraws):
            return NotImplemented
        return all(np.array_equal(getattr(self, k), getattr(other, k)) for k in self.ARRAYS) and (
            self.household_ids == other.household_ids and self.config == other.config
        )

    def save(self, path: str | Path) -> None:
        meta = {
            "household_ids": list(self.household_ids),
            "config": asdict(self.config),
            "priors": asdict(self.priors),
            "n_chains": self.n_chains,
        }
        with open(path, "wb") as fh:
            np.savez(fh, meta=np.array(json.dumps(meta, sort_keys=True)),
                     **{k: getattr(self, k) for k in self.ARRAYS})

    @classmethod
    def load(cls, path: str | Path) -> "ChainDraws":
        with np.load(path, allow_pickle=False) as z:
            meta = json.loads(str(z["meta"]))
            arrays = {k: z[k] for k in cls.ARRAYS}
        priors = meta["priors"]
        for key in ("beta_mean_prior", "delta_mean_prior"):
            if priors.get(key) is not None:
                priors[key] = tuple(priors[key])
        return cls(**arrays, household_ids=tuple(meta["household_ids"]),
                   config=McmcConfig(**meta["config"]), priors=PriorConfig(**priors),
                   n_chains=meta["n_chains"])

    @classmethod
    def concatenate(cls, chains: list["ChainDraws"]) -> "ChainDraws":
        if not chains:
            raise ValueError("no chains to merge")
        first = chains[0]
        arrays = {k: np.concatenate([getattr(c, k) for c in chains]) for k in cls.ARRAYS if k != "attribute_values"}
        return cls(**arrays, attribute_values=first.attribute_values, household_ids=first.household_ids,
                   config=first.config, priors=first.priors, n_chains=sum(c.n_chains for c in chains))


class _Recorder:
    def __init__(self, n: int, H: int, J: int, R: int) -> None:
        self.alpha = np.empty((n, H, J))
        self.beta = np.empty((n, H, 2))
        self.delta = np.empty((n, H, R))
        self.intangible = np.empty((n, H, J))
        self.beta_mean = np.empty((n, 2))
        self.beta_cov = np.empty((n, 2, 2))
        self.delta_mean = np.empty((n, R))
        self.delta_cov = np.empty((n, R, R))
        self.intangible_var = np.empty(n)
        self.filled = 0

    def record(self, state: SamplerState) -> None:
        i = self.filled
        pop = state.population
        self.alpha[i] = state.alpha
        self.beta[i] = state.beta
        self.delta[i] = state.delta
        self.intangible[i] = state.intangible
        self.beta_mean[i] = pop.beta_mean
        self.beta_cov[i] = pop.beta_cov
        self.delta_mean[i] = pop.delta_mean
        self.delta_cov[i] = pop.delta_cov
        self.intangible_var[i] = pop.intangible_var
        self.filled += 1


# --- checkpoints ------------------------------------------------------------------


def save_checkpoint(path: str | Path, state: SamplerState, iteration: int) -> None:
    pop = state.population
    tmp = Path(str(path) + ".tmp")
    with open(tmp, "wb") as fh:
        np.savez(fh, version=np.array(CHECKPOINT_VERSION), iteration=np.array(iteration),
                 utilities=state.utilities, alpha=state.alpha, beta=state.beta, delta=state.delta,
                 intangible=state.intangible, beta_mean=pop.beta_mean, beta_cov=pop.beta_cov,
                 delta_mean=pop.delta_mean, delta_cov=pop.delta_cov,
                 intangible_var=np.array(pop.intangible_var))
    os.replace(tmp, path)


def load_checkpoint(path: str | Path) -> tuple[SamplerState, int]:
    with np.load(path, allow_pickle=False) as z:
        if int(z["version"]) != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {int(z['version'])}")
        pop = PopulationParams(z["beta_mean"], z["beta_cov"], z["delta_mean"], z["delta_cov"],
                               float(z["intangible_var"]))
        state = SamplerState(z["utilities"], z["alpha"], z["beta"], z["delta"], z["intangible"], pop)
        return state, int(z["iteration"])


# --- driver -------------------------------------------------------------------------

ProgressCallback = Callable[[int, float], None]
UpdateHook = Callable[[str, SamplerState], None]


def run_chain(
    data: PanelDataset,
    attrs: BrandAttributeMatrix,
    priors: PriorConfig | None = None,
    config: McmcConfig | None = None,
    rng: kernels.RngStreams | None = None,
    *,
    chain_id: int = 0,
    progress: ProgressCallback | None = None,
    on_update: UpdateHook | None = None,
    checkpoint_path: str | Path | None = None,
    checkpoint_every: int = 0,
) -> ChainDraws:
    """Run one Gibbs chain and return its thinned post-burn-in draws.

    Randomness for iteration ``i`` and stage ``s`` comes from the stream keyed
    ``(chain_id, i, s)`` under ``config.rng_seed`` (or ``rng``), so results do
    not depend on evaluation order inside a stage.
    """
    priors = priors or PriorConfig()
    config = config or McmcConfig()
    problems = validate_panel(data, attrs) + config.validate() + priors.validate(attrs.n_attributes)
    if problems:
        raise ValueError("; ".join(problems))
    streams = rng or kernels.RngStreams(config.rng_seed)
    md = ModelData(data, attrs)
    state = initial_state(md, priors, streams.generator(chain_id, 2**31 - 1))

    steps: list[tuple[str, Callable[[np.random.Generator], None]]] = [
        ("latent_utilities", lambda g: draw_latent_utilities(state, md, g)),
        ("household_marketing", lambda g: draw_household_marketing(state, md, g)),
        ("household_intercepts", lambda g: draw_household_intercepts(state, md, g)),
        ("engineering_params", lambda g: draw_engineering_params(state, md, g)),
        ("location_shift", lambda g: draw_location_shift(state, md, priors, g)),
        ("population_hyperparams", lambda g: draw_population_hyperparams(state, priors, g, md)),
    ]
    rec = _Recorder(config.n_draws, md.n_households, md.n_brands, md.n_attributes)
    for it in range(config.n_iterations):
        for name, step in steps:
            try:
                step(streams.generator(chain_id, it, _STAGE_ID[name]))
            except (np.linalg.LinAlgError, ValueError, FloatingPointError) as exc:
                raise SamplerError(it, name, exc) from exc
            if on_update is not None:
                on_update(name, state)
        if it >= config.n_burn_in and (it - config.n_burn_in + 1) % config.thin == 0:
            rec.record(state)
        if (it + 1) % 100 == 0:
            proxy = fit_proxy(state, md)
            log.debug("chain %d iteration %d fit %.6g", chain_id, it + 1, proxy)
            if progress is not None:
                progress(it + 1, proxy)
        if checkpoint_path is not None and checkpoint_every > 0 and (it + 1) % checkpoint_every == 0:
            save_checkpoint(checkpoint_path, state, it + 1)

    return ChainDraws(
        alpha=rec.alpha, beta=rec.beta, delta=rec.delta, intangible=rec.intangible,
        beta_mean=rec.beta_mean, beta_cov=rec.beta_cov, delta_mean=rec.delta_mean,
        delta_cov=rec.delta_cov, intangible_var=rec.intangible_var,
        attribute_values=np.array(attrs.values), household_ids=data.household_ids,
        config=config, priors=priors,
    )


def _run_chain_job(args: tuple) -> ChainDraws:
    data, attrs, priors, config, chain_id = args
    return run_chain(data, attrs, priors, config, chain_id=chain_id)


def run_chains(
    data: PanelDataset,
    attrs: BrandAttributeMatrix,
    priors: PriorConfig | None = None,
    config: McmcConfig | None = None,
    n_chains: int = 1,
    workers: int | None = None,
    progress: ProgressCallback | None = None,
) -> ChainDraws:
    """Run ``n_chains`` chains (chain k uses stream prefix k) and concatenate them."""
    priors = priors or PriorConfig()
    config = config or McmcConfig()
    if n_chains < 1:
        raise ValueError("n_chains must be >= 1")
    if workers is None:
        workers = int(os.environ.get(WORKERS_ENV, "1"))
    workers = max(1, min(workers, n_chains))
    if workers == 1:
        chains = [run_chain(data, attrs, priors, config, chain_id=k, progress=progress) for k in range(n_chains)]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chains = list(pool.map(_run_chain_job, [(data, attrs, priors, config, k) for k in range(n_chains)]))
    return ChainDraws.concatenate(chains)
