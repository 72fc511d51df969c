"""Marked self-exciting intensity over a multi-region daily panel.

The conditional intensity of region i at day t is

    lambda_i(t) = background + R(x_it) * sum_{t_j < t} (y_i(t_j) + alpha * nhat_i(t_j)) * phi(t - t_j)

where nhat_i(t) converts same-day inbound travel from currently infectious
regions into locally-expected seed cases. background is zero for the full
model; a positive constant restores the classic immigrant term for the
no-correction variant and the naive baseline.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _core
from .errors import DataError, ParameterError
from .kernel import Kernel
from .mark import MarkModel, response_matrix
from .types import MobilityTensor, RegionPanel


@dataclass(frozen=True)
class IntensityParams:
    """Everything the intensity needs besides the panel itself."""

    alpha: float
    kernel: Kernel
    mark: MarkModel
    background: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.alpha) and self.alpha >= 0.0):
            raise ParameterError(f"alpha must be non-negative and finite, got {self.alpha}")
        if not (math.isfinite(self.background) and self.background >= 0.0):
            raise ParameterError(
                f"background must be non-negative and finite, got {self.background}"
            )


@dataclass(frozen=True)
class CorrectionSeries:
    """Between-region travel correction nhat, one value per region-day."""

    n_hat: np.ndarray

    def __post_init__(self):
        n_hat = np.ascontiguousarray(np.asarray(self.n_hat, dtype=np.float64))
        if n_hat.ndim != 2:
            raise ParameterError(f"n_hat must be 2-d (region, day), got {n_hat.shape}")
        if n_hat.size and (not np.all(np.isfinite(n_hat)) or np.any(n_hat < 0.0)):
            raise ParameterError("n_hat must be finite and non-negative")
        n_hat.setflags(write=False)
        object.__setattr__(self, "n_hat", n_hat)


def imported_pressure(od_day: np.ndarray, cases_day: np.ndarray, population: np.ndarray) -> np.ndarray:
    """One day of travel correction: sum over origins of trips * prevalence.

    nhat_j = sum_{i != j} od_day[i, j] * cases_day[i] / population[i]; the
    diagonal (within-region trips in the OD table) is ignored.
    """
    rates = cases_day / population
    off_diag = od_day * rates[:, None]
    return off_diag.sum(axis=0) - np.diag(od_day) * rates


def compute_correction(panel: RegionPanel, mobility: MobilityTensor) -> CorrectionSeries:
    """Travel correction for every region-day of the panel."""
    if mobility.n_regions != panel.n_regions:
        raise DataError(
            f"mobility covers {mobility.n_regions} regions, panel has {panel.n_regions}"
        )
    if mobility.n_days != panel.n_days:
        raise DataError(
            f"mobility covers {mobility.n_days} days, panel has {panel.n_days}"
        )
    rates = panel.cases / panel.population[:, None]
    n_hat = np.einsum("tij,it->jt", mobility.od, rates)
    n_hat -= np.einsum("tii,it->it", mobility.od, rates)
    return CorrectionSeries(n_hat=n_hat)


def _history(panel: RegionPanel, correction: CorrectionSeries | None, alpha: float) -> np.ndarray:
    cases = panel.cases.astype(np.float64)
    if alpha == 0.0 or correction is None:
        if alpha != 0.0:
            raise ParameterError("alpha > 0 requires a correction series")
        return cases
    if correction.n_hat.shape != cases.shape:
        raise ParameterError(
            f"correction shape {correction.n_hat.shape} does not match panel {cases.shape}"
        )
    return cases + alpha * correction.n_hat


def day_intensity(
    history: np.ndarray,
    t_index: int,
    probs: np.ndarray,
    marks: np.ndarray,
    background: float = 0.0,
) -> np.ndarray:
    """Intensity of all regions at 0-based day t_index given history[:, :t_index].

    This is the single code path behind the scalar intensity, the simulator
    and the forecast rollout.
    """
    lmax = min(probs.shape[0], t_index)
    if lmax <= 0:
        base = np.zeros(history.shape[0])
    else:
        window = history[:, t_index - lmax : t_index]
        base = window @ probs[:lmax][::-1]
    return background + base * marks


def intensity(
    params: IntensityParams,
    panel: RegionPanel,
    correction: CorrectionSeries | None,
    i: int,
    t: int,
) -> float:
    """Scalar intensity for region index i at 1-based day t."""
    if not 0 <= i < panel.n_regions:
        raise ParameterError(f"region index {i} out of range 0..{panel.n_regions - 1}")
    if not 1 <= t <= panel.n_days:
        raise ParameterError(f"day {t} out of range 1..{panel.n_days}")
    hist = _history(panel, correction, params.alpha)
    mark_t = response_matrix(params.mark, panel.covariates[i : i + 1, t - 1 : t, :])[0, 0]
    lam = day_intensity(hist[i : i + 1], t - 1, params.kernel.probs, np.array([mark_t]), params.background)
    return float(lam[0])


def intensity_matrix(
    params: IntensityParams,
    panel: RegionPanel,
    correction: CorrectionSeries | None,
    marks: np.ndarray | None = None,
) -> np.ndarray:
    """Intensities for every region-day at once. marks overrides the mark model
    with a precomputed (N, T) matrix of R values (the EM inner loop does this)."""
    hist = _history(panel, correction, params.alpha)
    if marks is None:
        marks = response_matrix(params.mark, panel.covariates)
    base = _core.convolve_history(hist, params.kernel.probs)
    return params.background + base * marks
