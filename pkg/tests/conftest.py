from __future__ import annotations

import time

import numpy as np
import pytest

from hbprobit.data_model import BrandAttributeMatrix, McmcConfig, PanelDataset, default_attributes
from hbprobit.sampler import run_chain
from hbprobit.synth import GeneratorSpec, generate_panel

ACCEPTANCE_SEEDS = (1, 2, 3)
ACCEPTANCE_CONFIG = dict(n_iterations=4000, n_burn_in=1000, thin=1)

# one line per acceptance criterion, echoed in the terminal summary
CRITERION_LINES: list[str] = []


def record_criterion(number: int, passed: bool, detail: str) -> None:
    line = f"criterion {number}: {'PASS' if passed else 'FAIL'} - {detail}"
    CRITERION_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if CRITERION_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(CRITERION_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


def small_panel(n_households=2, n_occasions=3, n_brands=6, seed=0) -> PanelDataset:
    rng = np.random.default_rng(seed)
    H, T, J = n_households, n_occasions, n_brands
    return PanelDataset(
        household=np.repeat(np.arange(H), T),
        occasion=np.tile(np.arange(T), H),
        chosen=rng.integers(0, J, H * T),
        prices=rng.uniform(200, 400, (H * T, J)),
        displays=(rng.random((H * T, J)) < 0.3).astype(float),
        household_ids=tuple(f"hh{h}" for h in range(H)),
    )


@pytest.fixture
def attrs() -> BrandAttributeMatrix:
    return default_attributes()


@pytest.fixture(scope="session")
def acceptance_runs():
    """Full-scale synthetic runs (H=98, J=6, T=40, 4000 iterations) for three seeds."""
    runs = {}
    for seed in ACCEPTANCE_SEEDS:
        panel, truth = generate_panel(GeneratorSpec(seed=seed))
        cfg = McmcConfig(rng_seed=seed, **ACCEPTANCE_CONFIG)
        t0 = time.perf_counter()
        chain = run_chain(panel, default_attributes(), config=cfg)
        runs[seed] = (panel, truth, chain, time.perf_counter() - t0)
    return runs


def perfect_chain(truth, n_draws=5):
    """A chain whose every draw equals the generator truth."""
    from hbprobit.sampler import ChainDraws

    def rep(a):
        a = np.asarray(a, dtype=float)
        return np.repeat(a[None], n_draws, axis=0)

    pop = truth.population
    return ChainDraws(
        alpha=rep(truth.alpha), beta=rep(truth.beta), delta=rep(truth.delta), intangible=rep(truth.intangible),
        beta_mean=rep(pop.beta_mean), beta_cov=rep(pop.beta_cov), delta_mean=rep(pop.delta_mean),
        delta_cov=rep(pop.delta_cov), intangible_var=np.full(n_draws, pop.intangible_var),
        attribute_values=np.array(truth.attribute_values), household_ids=truth.household_ids,
    )
