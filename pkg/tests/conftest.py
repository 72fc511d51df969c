"""Shared fixture builders for the test suite."""

import numpy as np
import pytest

from hawkcast import MobilityTensor, Region, RegionPanel


def make_panel(cases, covariates=None, population=None, names=None):
    """RegionPanel from plain arrays, filling unspecified pieces with defaults."""
    cases = np.asarray(cases, dtype=np.int64)
    n, t = cases.shape
    if covariates is None:
        covariates = np.zeros((n, t, 0))
    covariates = np.asarray(covariates, dtype=np.float64)
    if population is None:
        population = np.full(n, 10_000, dtype=np.int64)
    if names is None:
        names = tuple(f"x{j}" for j in range(covariates.shape[2]))
    return RegionPanel(
        cases=cases,
        covariates=covariates,
        population=np.asarray(population, dtype=np.int64),
        covariate_names=tuple(names),
        regions=tuple(Region(i, f"R{i:02d}") for i in range(n)),
    )


def random_panel(rng, n, t, p, max_cases=20):
    cases = rng.integers(0, max_cases, size=(n, t))
    covariates = rng.normal(size=(n, t, p))
    population = rng.integers(1_000, 100_000, size=n)
    return make_panel(cases, covariates, population)


def random_mobility(rng, n, t, z=1, scale=50.0):
    od = rng.uniform(0.0, scale, size=(t, n, n))
    within = rng.uniform(10.0, 500.0, size=(n, t, z))
    return MobilityTensor(od=od, within=within,
                          within_labels=tuple(f"m{k}:p{k}" for k in range(z)))


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
