"""Core data containers for multi-region daily case panels.

Day indices are 1-based in public scalar APIs (t = 1..T); the underlying
arrays are 0-based with axis order (region, day). Containers are frozen and
their arrays are marked read-only after validation.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DataError


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Region:
    """Dense region identity: index is 0..N-1, code is the external label."""

    index: int
    code: str


@dataclass(frozen=True)
class RegionPanel:
    """Daily new-case counts with per-region-day covariates.

    cases: (N, T) non-negative integers.
    covariates: (N, T, p) finite floats; p may be zero.
    population: (N,) positive integers.
    """

    cases: np.ndarray
    covariates: np.ndarray
    population: np.ndarray
    covariate_names: tuple[str, ...]
    regions: tuple[Region, ...]

    def __post_init__(self):
        cases = np.asarray(self.cases)
        if cases.ndim != 2:
            raise DataError(f"cases must be 2-d (region, day), got shape {cases.shape}")
        if cases.size and (not np.issubdtype(cases.dtype, np.integer)):
            as_int = cases.astype(np.int64)
            if not np.array_equal(as_int, cases):
                raise DataError("cases must be integer counts")
            cases = as_int
        cases = cases.astype(np.int64, copy=False)
        if np.any(cases < 0):
            raise DataError("cases must be non-negative")
        n, t_len = cases.shape

        cov = np.asarray(self.covariates, dtype=np.float64)
        if cov.ndim != 3 or cov.shape[0] != n or cov.shape[1] != t_len:
            raise DataError(
                f"covariates must have shape ({n}, {t_len}, p), got {cov.shape}"
            )
        if cov.size and not np.all(np.isfinite(cov)):
            raise DataError("covariates must be finite")

        pop = np.asarray(self.population)
        if pop.shape != (n,):
            raise DataError(f"population must have shape ({n},), got {pop.shape}")
        pop = pop.astype(np.int64)
        if np.any(pop <= 0):
            raise DataError("population must be positive")

        names = tuple(str(x) for x in self.covariate_names)
        if len(names) != cov.shape[2]:
            raise DataError(
                f"{len(names)} covariate names for {cov.shape[2]} covariate columns"
            )
        regions = tuple(self.regions)
        if len(regions) != n:
            raise DataError(f"{len(regions)} region entries for {n} case rows")
        for k, reg in enumerate(regions):
            if reg.index != k:
                raise DataError("region indices must be dense 0..N-1 in order")
        codes = [r.code for r in regions]
        if len(set(codes)) != len(codes):
            raise DataError("region codes must be unique")

        object.__setattr__(self, "cases", _freeze(cases))
        object.__setattr__(self, "covariates", _freeze(cov))
        object.__setattr__(self, "population", _freeze(pop))
        object.__setattr__(self, "covariate_names", names)
        object.__setattr__(self, "regions", regions)

    @property
    def n_regions(self) -> int:
        return self.cases.shape[0]

    @property
    def n_days(self) -> int:
        return self.cases.shape[1]

    @property
    def n_covariates(self) -> int:
        return self.covariates.shape[2]

    def head_days(self, t_len: int) -> "RegionPanel":
        """The first t_len days as a new panel."""
        if not 1 <= t_len <= self.n_days:
            raise DataError(f"cannot slice {t_len} days from a {self.n_days}-day panel")
        return RegionPanel(
            cases=self.cases[:, :t_len],
            covariates=self.covariates[:, :t_len, :],
            population=self.population,
            covariate_names=self.covariate_names,
            regions=self.regions,
        )

    def with_covariates(self, covariates: np.ndarray, names) -> "RegionPanel":
        return RegionPanel(
            cases=self.cases,
            covariates=covariates,
            population=self.population,
            covariate_names=tuple(names),
            regions=self.regions,
        )


@dataclass(frozen=True)
class MobilityTensor:
    """Raw trip counts: od[t, i, j] trips from region i to region j on day t+1,
    within[i, t, z] trips inside region i on day t+1 for category z."""

    od: np.ndarray
    within: np.ndarray
    within_labels: tuple[str, ...] = ()

    def __post_init__(self):
        od = np.asarray(self.od, dtype=np.float64)
        if od.ndim != 3 or od.shape[1] != od.shape[2]:
            raise DataError(f"od must have shape (T, N, N), got {od.shape}")
        if od.size and (not np.all(np.isfinite(od)) or np.any(od < 0.0)):
            raise DataError("od trips must be finite and non-negative")
        within = np.asarray(self.within, dtype=np.float64)
        if within.ndim != 3:
            raise DataError(f"within must be 3-d (region, day, category), got {within.shape}")
        if within.shape[0] != od.shape[1] or within.shape[1] != od.shape[0]:
            raise DataError(
                f"within shape {within.shape} inconsistent with od shape {od.shape}"
            )
        if within.size and (not np.all(np.isfinite(within)) or np.any(within < 0.0)):
            raise DataError("within trips must be finite and non-negative")
        labels = tuple(str(x) for x in self.within_labels)
        if labels and len(labels) != within.shape[2]:
            raise DataError(
                f"{len(labels)} within labels for {within.shape[2]} categories"
            )
        object.__setattr__(self, "od", _freeze(od))
        object.__setattr__(self, "within", _freeze(within))
        object.__setattr__(self, "within_labels", labels)

    @property
    def n_days(self) -> int:
        return self.od.shape[0]

    @property
    def n_regions(self) -> int:
        return self.od.shape[1]

    def head_days(self, t_len: int) -> "MobilityTensor":
        if not 1 <= t_len <= self.n_days:
            raise DataError(f"cannot slice {t_len} days from {self.n_days} mobility days")
        return MobilityTensor(
            od=self.od[:t_len],
            within=self.within[:, :t_len, :],
            within_labels=self.within_labels,
        )
