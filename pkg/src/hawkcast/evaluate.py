"""Reference baseline and variant-fitting helpers.

The naive baseline keeps the same self-exciting machinery but swaps the
travel correction for a constant immigrant rate, drops the l1 penalty and
marks cases with demographics plus within-region mobility only. The constant
rate is profiled: the EM fit is repeated over a small grid and the value with
the best in-sample Poisson likelihood of the observed counts wins.
"""

from __future__ import annotations

import math
from dataclasses import replace

import numpy as np

from . import _core
from .errors import ConfigurationError, EstimationError, ParameterError
from .estimate import EMConfig, FittedModel, fit_em
from .kernel import Kernel
from .mark import response_matrix
from .types import MobilityTensor, RegionPanel


def _case_loglik(panel: RegionPanel, model: FittedModel, floor: float = 1e-12) -> float:
    """Poisson log-likelihood of the observed counts under the fitted intensity,
    up to the y! term, which is constant across models on the same panel."""
    marks = response_matrix(model.mark, panel.covariates)
    cases = panel.cases.astype(np.float64)
    base = _core.convolve_history(cases, model.kernel.probs)
    lam = base * marks + model.background
    return float((cases * np.log(np.maximum(lam, floor)) - lam).sum())


def background_grid(panel: RegionPanel, n_points: int = 7) -> tuple[float, ...]:
    """Default immigrant-rate candidates, scaled to the panel's mean daily count."""
    scale = float(panel.cases.mean())
    if scale <= 0.0:
        scale = 1.0
    fractions = (0.0, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0)[:max(n_points, 2)]
    return tuple(f * scale for f in fractions)


def fit_background_profile(
    panel: RegionPanel,
    kernel: Kernel,
    em: EMConfig,
    grid=None,
) -> FittedModel:
    """Fit once per candidate background rate, keep the likeliest model.

    The alpha path is disabled (these variants have no travel correction);
    candidate order breaks likelihood ties toward the smaller rate.
    """
    if em.alpha != 0.0:
        raise ParameterError("background profiling replaces the travel correction; alpha must be 0")
    candidates = background_grid(panel) if grid is None else tuple(float(g) for g in grid)
    if not candidates:
        raise ParameterError("background grid must be non-empty")
    if any(not (math.isfinite(g) and g >= 0.0) for g in candidates):
        raise ParameterError("background candidates must be non-negative and finite")
    best = None
    best_ll = -math.inf
    failed = []
    last_error = None
    for bg in sorted(set(candidates)):
        try:
            model = fit_em(panel, None, kernel, replace(em, background=bg))
        except EstimationError as exc:
            # A candidate whose fit diverges (a background large enough to
            # absorb the data can do that) is disqualified, not fatal.
            failed.append(bg)
            last_error = exc
            continue
        ll = _case_loglik(panel, model)
        if ll > best_ll:
            best, best_ll = model, ll
    if best is None:
        raise EstimationError(
            f"no background candidate produced a usable fit: {last_error}"
        )
    diagnostics = dict(best.diagnostics)
    diagnostics["background_loglik"] = best_ll
    if failed:
        diagnostics["background_failed"] = tuple(failed)
    return replace(best, diagnostics=diagnostics)


def build_naive_covariates(
    panel: RegionPanel,
    demographics: np.ndarray,
    demographic_names,
    within_prefix: str = "within_",
) -> RegionPanel:
    """The baseline's covariate view: demographics broadcast over days plus the
    panel's within-region mobility columns."""
    demo = np.asarray(demographics, dtype=np.float64)
    if demo.ndim != 2 or demo.shape[0] != panel.n_regions:
        raise ConfigurationError(
            f"demographics must be (N, k) with N={panel.n_regions}, got {demo.shape}"
        )
    names = tuple(str(x) for x in demographic_names)
    if demo.shape[1] == 0 or len(names) != demo.shape[1]:
        raise ConfigurationError("the baseline needs at least one named demographic column")
    within_idx = [
        j for j, name in enumerate(panel.covariate_names) if name.startswith(within_prefix)
    ]
    cols = [panel.covariates[:, :, j] for j in within_idx]
    cols.extend(np.repeat(demo[:, k : k + 1], panel.n_days, axis=1) for k in range(demo.shape[1]))
    covariates = np.stack(cols, axis=2)
    new_names = tuple(panel.covariate_names[j] for j in within_idx) + names
    return panel.with_covariates(covariates, new_names)


def naive_hawkes_baseline(
    panel: RegionPanel,
    kernel: Kernel,
    demographics: np.ndarray,
    demographic_names,
    em: EMConfig | None = None,
    grid=None,
) -> tuple[FittedModel, RegionPanel]:
    """Fit the naive variant; returns the model and the covariate view it saw."""
    base = em if em is not None else EMConfig()
    config = replace(base, alpha=0.0, xi=0.0)
    naive_panel = build_naive_covariates(panel, demographics, demographic_names)
    model = fit_background_profile(naive_panel, kernel, config, grid=grid)
    return model, naive_panel
