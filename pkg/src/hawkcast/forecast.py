"""Probabilistic multi-day forecasts by autoregressive rollout.

Each replicate extends the observed panel day by day: intensities come from
the fitted model and the replicate's own sampled history, new counts are
Poisson draws, and sampled counts immediately feed both later self-excitation
and the between-region travel correction.

Every (replicate, region, day) cell draws from its own Philox stream derived
from the master seed, so results do not depend on evaluation order and a
longer horizon reproduces a shorter one day for day.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DataError, ParameterError
from .estimate import FittedModel
from .mark import response_matrix
from .process import compute_correction, day_intensity, imported_pressure
from .types import MobilityTensor, RegionPanel

_FORECAST_KEY = 0x9E3779B97F4A7C15
_SIM_KEY = 0xC2B2AE3D27D4EB4F

HOLD_LAST = "hold-last"
PROVIDED = "provided"


@dataclass(frozen=True)
class ForecastConfig:
    """Rollout settings. covariate_policy picks where future covariates and
    origin-destination trips come from: hold-last repeats the last observed
    day, provided takes the arrays given here."""

    horizon: int
    replicates: int = 10
    seed: int = 0
    covariate_policy: str = HOLD_LAST
    future_covariates: np.ndarray | None = None
    future_od: np.ndarray | None = None
    rate_cap: float = 1e12

    def __post_init__(self):
        if self.horizon < 1:
            raise ParameterError(f"horizon must be at least 1, got {self.horizon}")
        if self.replicates < 1:
            raise ParameterError(f"replicates must be at least 1, got {self.replicates}")
        if self.covariate_policy not in (HOLD_LAST, PROVIDED):
            raise ParameterError(
                f"covariate_policy must be {HOLD_LAST!r} or {PROVIDED!r}, "
                f"got {self.covariate_policy!r}"
            )
        if not (math.isfinite(self.rate_cap) and self.rate_cap > 0.0):
            raise ParameterError(f"rate_cap must be positive, got {self.rate_cap}")


@dataclass(frozen=True)
class ForecastResult:
    """draws[k, i, d] is replicate k's count for region i, d+1 days ahead;
    point is the across-replicate mean."""

    draws: np.ndarray
    point: np.ndarray
    horizon: int
    replicates: int
    seed: int


def stream_rng(seed: int, stream_key: int, a: int, b: int, c: int) -> np.random.Generator:
    """A Philox generator on its own counter block for one (a, b, c) cell."""
    bit = np.random.Philox(key=[seed & 0xFFFFFFFFFFFFFFFF, stream_key], counter=[0, c, b, a])
    return np.random.Generator(bit)


def poisson_sample(rate: float, rng: np.random.Generator) -> int:
    """One Poisson draw. Sequential-search inversion below rate 30, Hormann's
    transformed rejection (PTRS) above; both consume only uniforms."""
    if not math.isfinite(rate) or rate < 0.0:
        raise ParameterError(f"Poisson rate must be finite and non-negative, got {rate}")
    if rate == 0.0:
        return 0
    if rate < 30.0:
        p = math.exp(-rate)
        total = p
        k = 0
        u = rng.random()
        while u > total:
            k += 1
            p *= rate / k
            total += p
            if k > 10_000_000:  # not reachable for rate < 30
                raise ParameterError("Poisson inversion failed to terminate")
        return k
    b = 0.931 + 2.53 * math.sqrt(rate)
    a = -0.059 + 0.02483 * b
    inv_alpha = 1.1239 + 1.1328 / (b - 3.4)
    v_r = 0.9277 - 3.6224 / (b - 2.0)
    log_rate = math.log(rate)
    while True:
        u = rng.random() - 0.5
        v = rng.random()
        us = 0.5 - abs(u)
        k = math.floor((2.0 * a / us + b) * u + rate + 0.43)
        if us >= 0.07 and v <= v_r:
            return int(k)
        if k < 0 or (us < 0.013 and v > us):
            continue
        if math.log(v * inv_alpha / (a / (us * us) + b)) <= k * log_rate - rate - math.lgamma(k + 1.0):
            return int(k)


def _future_inputs(panel: RegionPanel, mobility: MobilityTensor, config: ForecastConfig):
    n, t_len, p = panel.covariates.shape
    horizon = config.horizon
    if config.covariate_policy == HOLD_LAST:
        cov = np.repeat(panel.covariates[:, t_len - 1 : t_len, :], horizon, axis=1)
        od = np.repeat(mobility.od[t_len - 1 : t_len], horizon, axis=0)
        return cov, od
    cov = config.future_covariates
    od = config.future_od
    if cov is None or od is None:
        raise ParameterError("provided covariate policy needs future_covariates and future_od")
    cov = np.asarray(cov, dtype=np.float64)
    od = np.asarray(od, dtype=np.float64)
    if cov.shape != (n, horizon, p):
        raise DataError(f"future covariates must have shape ({n}, {horizon}, {p}), got {cov.shape}")
    if od.shape != (horizon, n, n):
        raise DataError(f"future od must have shape ({horizon}, {n}, {n}), got {od.shape}")
    if not np.all(np.isfinite(cov)):
        raise DataError("future covariates must be finite")
    if not np.all(np.isfinite(od)) or np.any(od < 0.0):
        raise DataError("future od trips must be finite and non-negative")
    return cov, od


def forecast(
    model: FittedModel,
    panel: RegionPanel,
    mobility: MobilityTensor,
    config: ForecastConfig,
    pinned_cases: np.ndarray | None = None,
) -> ForecastResult:
    """Simulate config.replicates futures of length config.horizon.

    pinned_cases, when given, is an (N, horizon) array whose non-NaN cells are
    treated as observed instead of sampled; region cross-validation pins every
    region except the held-out one.
    """
    n, t_len = panel.cases.shape
    horizon = config.horizon
    future_cov, future_od = _future_inputs(panel, mobility, config)
    future_marks = response_matrix(model.mark, future_cov)

    if pinned_cases is not None:
        pinned_cases = np.asarray(pinned_cases, dtype=np.float64)
        if pinned_cases.shape != (n, horizon):
            raise ParameterError(
                f"pinned_cases must have shape ({n}, {horizon}), got {pinned_cases.shape}"
            )
        if np.any(pinned_cases[~np.isnan(pinned_cases)] < 0.0):
            raise ParameterError("pinned cases must be non-negative")
        pin_mask = ~np.isnan(pinned_cases)
    else:
        pin_mask = np.zeros((n, horizon), dtype=bool)
        pinned_cases = np.zeros((n, horizon))

    correction = compute_correction(panel, mobility)
    hist_base = np.concatenate(
        [panel.cases.astype(np.float64) + model.alpha * correction.n_hat, np.zeros((n, horizon))],
        axis=1,
    )
    cases_obs = panel.cases.astype(np.float64)
    probs = model.kernel.probs
    draws = np.zeros((config.replicates, n, horizon), dtype=np.int64)

    for k in range(config.replicates):
        hist = hist_base.copy()
        cases_ext = np.concatenate([cases_obs, np.zeros((n, horizon))], axis=1)
        for d in range(horizon):
            t_abs = t_len + d
            lam = day_intensity(hist, t_abs, probs, future_marks[:, d], model.background)
            np.clip(lam, 0.0, config.rate_cap, out=lam)
            day = np.empty(n)
            for i in range(n):
                if pin_mask[i, d]:
                    day[i] = pinned_cases[i, d]
                else:
                    rng = stream_rng(config.seed, _FORECAST_KEY, k, i, d)
                    day[i] = poisson_sample(float(lam[i]), rng)
            cases_ext[:, t_abs] = day
            pressure = imported_pressure(future_od[d], day, panel.population)
            hist[:, t_abs] = day + model.alpha * pressure
        draws[k] = np.rint(cases_ext[:, t_len:]).astype(np.int64)

    point = draws.mean(axis=0)
    return ForecastResult(
        draws=draws,
        point=point,
        horizon=horizon,
        replicates=config.replicates,
        seed=config.seed,
    )
