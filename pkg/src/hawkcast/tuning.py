"""Leave-one-region-out cross-validation and the (alpha, xi) grid search."""

from __future__ import annotations

import math

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .errors import EstimationError, ParameterError
from .estimate import EMConfig, fit_em
from .forecast import PROVIDED, ForecastConfig, forecast
from .kernel import Kernel
from .metrics import ScoreRecord, score
from .types import MobilityTensor, RegionPanel

DEFAULT_ALPHA_GRID = tuple(np.arange(0.0, 3.0 + 1e-9, 0.25))
DEFAULT_XI_GRID = tuple(float(x) for x in range(0, 21, 2))


@dataclass(frozen=True)
class TuneResult:
    """Grid of (alpha, xi, cv_rmse) triples and the winning cell."""

    grid: tuple[tuple[float, float, float], ...]
    best_alpha: float
    best_xi: float
    best_rmse: float


def _normalize_horizons(horizon) -> tuple[int, ...]:
    if isinstance(horizon, (int, np.integer)):
        horizons = (int(horizon),)
    else:
        horizons = tuple(int(h) for h in horizon)
    if not horizons or any(h < 1 for h in horizons):
        raise ParameterError(f"horizons must be positive, got {horizons}")
    return tuple(sorted(set(horizons)))


def loro_cv(
    panel: RegionPanel,
    mobility: MobilityTensor,
    kernel: Kernel,
    alpha: float,
    xi: float,
    horizon,
    replicates: int = 10,
    seed: int = 0,
    em: EMConfig | None = None,
) -> list[ScoreRecord]:
    """Hold out each region in turn, fit on the rest, forecast it, score it.

    The mark is fit with the held-out region's rows excluded from the
    regression; that region's observed cases still drive the travel
    correction, and during the forecast window every other region is pinned
    to its observed counts since those are inputs rather than targets. The
    forecast origin is day T - max(horizon); each requested horizon scores
    the first that many days after it.
    """
    horizons = _normalize_horizons(horizon)
    delta = max(horizons)
    t_len = panel.n_days
    if t_len - delta < 2:
        raise ParameterError(
            f"panel has {t_len} days, too short for a {delta}-day holdout"
        )
    base_em = em if em is not None else EMConfig()
    config = replace(base_em, alpha=alpha, xi=xi)

    t_train = t_len - delta
    train_panel = panel.head_days(t_train)
    train_mob = mobility.head_days(t_train)
    future_cov = panel.covariates[:, t_train:, :]
    future_od = mobility.od[t_train:]
    actual = panel.cases[:, t_train:].astype(np.float64)

    records = []
    for i in range(panel.n_regions):
        model = fit_em(train_panel, train_mob, kernel, config, exclude_regions=(i,))
        pinned = actual.copy()
        pinned[i, :] = np.nan
        fc = ForecastConfig(
            horizon=delta,
            replicates=replicates,
            seed=seed,
            covariate_policy=PROVIDED,
            future_covariates=future_cov,
            future_od=future_od,
        )
        result = forecast(model, train_panel, train_mob, fc, pinned_cases=pinned)
        code = panel.regions[i].code
        for h in horizons:
            rmse, mae = score(actual[i, :h], result.point[i, :h])
            records.append(ScoreRecord(region=code, horizon=h, rmse=rmse, mae=mae))
    return records


def _tune_cell(args):
    panel, mobility, kernel, alpha, xi, horizon, replicates, seed, em = args
    try:
        records = loro_cv(
            panel, mobility, kernel, alpha, xi, horizon,
            replicates=replicates, seed=seed, em=em,
        )
    except EstimationError:
        # A cell whose fit diverges scores unusable instead of killing the
        # whole search; inf never wins min() while any cell succeeds.
        return alpha, xi, math.inf
    return alpha, xi, float(np.mean([r.rmse for r in records]))


def tune(
    panel: RegionPanel,
    mobility: MobilityTensor,
    kernel: Kernel,
    alpha_grid=DEFAULT_ALPHA_GRID,
    xi_grid=DEFAULT_XI_GRID,
    horizon=14,
    replicates: int = 10,
    seed: int = 0,
    em: EMConfig | None = None,
    jobs: int = 1,
) -> TuneResult:
    """Grid-search (alpha, xi) by cross-validated macro-RMSE.

    Ties go to the smaller alpha, then the smaller xi. jobs > 1 evaluates
    grid cells in worker processes; results are aggregated in grid order, so
    the outcome does not depend on scheduling.
    """
    alphas = sorted(set(float(a) for a in alpha_grid))
    xis = sorted(set(float(x) for x in xi_grid))
    if not alphas or not xis:
        raise ParameterError("alpha and xi grids must be non-empty")
    if any(a < 0 for a in alphas) or any(x < 0 for x in xis):
        raise ParameterError("grid values must be non-negative")
    cells = [(a, x) for a in alphas for x in xis]
    tasks = [
        (panel, mobility, kernel, a, x, horizon, replicates, seed, em) for a, x in cells
    ]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_tune_cell, tasks))
    else:
        results = [_tune_cell(t) for t in tasks]

    grid = tuple(results)
    best = min(grid, key=lambda row: (row[2], row[0], row[1]))
    if not math.isfinite(best[2]):
        raise EstimationError("every grid cell diverged; widen the grid or "
                              "allow a background rate")
    return TuneResult(grid=grid, best_alpha=best[0], best_xi=best[1], best_rmse=best[2])
