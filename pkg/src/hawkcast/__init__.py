"""Multi-region epidemic forecasting with a mobility-marked Hawkes model.

The intensity of new cases in a region is a weighted sum over recent cases,
where between-region travel adds imported pressure and a log-linear mark
driven by mobility, weather and demographic covariates scales the expected
offspring count. Fitting alternates case attribution with a lasso-penalized
Poisson regression; forecasts are sampled day by day from the fitted
intensity.
"""

from .errors import (
    ConfigurationError,
    DataError,
    EstimationError,
    HawkcastError,
    InsufficientDataError,
    NumericError,
    ParameterError,
    ScenarioError,
)
from .estimate import EMConfig, FittedModel, e_step, fit_em
from .evaluate import (
    build_naive_covariates,
    fit_background_profile,
    naive_hawkes_baseline,
)
from .forecast import (
    HOLD_LAST,
    PROVIDED,
    ForecastConfig,
    ForecastResult,
    forecast,
    poisson_sample,
    stream_rng,
)
from .kernel import Kernel, discretize_gamma, gamma_cdf
from .mark import (
    MarkFitProblem,
    MarkModel,
    fit_poisson_lasso,
    predict_R,
    response_matrix,
    standardize,
)
from .metrics import ScoreRecord, ScoreReport, score, summarize, wilcoxon_signed_rank
from .process import (
    CorrectionSeries,
    IntensityParams,
    compute_correction,
    imported_pressure,
    intensity,
    intensity_matrix,
)
from .simulate import (
    CovariateSpec,
    ODSpec,
    ScenarioSpec,
    build_design,
    default_scenario,
    reseeded,
    scenario_from_dict,
    simulate_panel,
    synthetic_demographics,
    true_marks,
)
from .tuning import TuneResult, loro_cv, tune
from .types import MobilityTensor, Region, RegionPanel

__version__ = "0.1.0"

__all__ = [
    "ConfigurationError",
    "CorrectionSeries",
    "CovariateSpec",
    "DataError",
    "EMConfig",
    "EstimationError",
    "FittedModel",
    "ForecastConfig",
    "ForecastResult",
    "HOLD_LAST",
    "HawkcastError",
    "InsufficientDataError",
    "IntensityParams",
    "Kernel",
    "MarkFitProblem",
    "MarkModel",
    "MobilityTensor",
    "NumericError",
    "ODSpec",
    "PROVIDED",
    "ParameterError",
    "Region",
    "RegionPanel",
    "ScenarioError",
    "ScenarioSpec",
    "ScoreRecord",
    "ScoreReport",
    "TuneResult",
    "build_design",
    "build_naive_covariates",
    "compute_correction",
    "default_scenario",
    "discretize_gamma",
    "e_step",
    "fit_background_profile",
    "fit_em",
    "fit_poisson_lasso",
    "forecast",
    "gamma_cdf",
    "imported_pressure",
    "intensity",
    "intensity_matrix",
    "loro_cv",
    "naive_hawkes_baseline",
    "poisson_sample",
    "predict_R",
    "reseeded",
    "response_matrix",
    "scenario_from_dict",
    "score",
    "simulate_panel",
    "standardize",
    "stream_rng",
    "summarize",
    "synthetic_demographics",
    "true_marks",
    "tune",
    "wilcoxon_signed_rank",
]
