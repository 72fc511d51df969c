"""Generative scenarios: simulate panels from known parameters.

A scenario fixes the true mark coefficients, the travel coupling alpha, the
lag kernel and deterministic covariate / origin-destination processes; the
only randomness is the day-by-day Poisson draws. Covariate shapes depend on
covariate_seed alone, so re-simulating with a different rng_seed keeps the
design fixed while redrawing the epidemic, which is what parameter-recovery
experiments need.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ParameterError, ScenarioError
from .forecast import _SIM_KEY, poisson_sample, stream_rng
from .kernel import discretize_gamma
from .process import day_intensity, imported_pressure
from .types import MobilityTensor, Region, RegionPanel

WITHIN_MOBILITY = "within_mobility"
WEATHER = "weather"
PLAIN = "plain"


@dataclass(frozen=True)
class CovariateSpec:
    """One deterministic covariate path.

    step: levels[k] holds from breaks[k-1] (1-based day) to the next break.
    sinusoid: mean + amplitude * sin(2 pi (t - 1) / period + phase).
    region_jitter draws one fixed offset per region from covariate_seed; for
    within-mobility ratios it scales the departure from 1 so a level of 1.0
    stays exactly 1.0 in every region, otherwise it shifts the value.
    """

    name: str
    kind: str
    role: str = PLAIN
    mode: str = ""
    purpose: str = ""
    breaks: tuple[int, ...] = ()
    levels: tuple[float, ...] = (1.0,)
    mean: float = 0.0
    amplitude: float = 0.0
    period: float = 60.0
    phase: float = 0.0
    region_jitter: float = 0.0

    def __post_init__(self):
        if self.kind not in ("step", "sinusoid"):
            raise ParameterError(f"unknown covariate kind {self.kind!r}")
        if self.role not in (WITHIN_MOBILITY, WEATHER, PLAIN):
            raise ParameterError(f"unknown covariate role {self.role!r}")
        if self.kind == "step":
            if len(self.levels) != len(self.breaks) + 1:
                raise ParameterError(
                    f"step covariate {self.name!r} needs len(levels) == len(breaks) + 1"
                )
            if any(b < 2 for b in self.breaks) or list(self.breaks) != sorted(set(self.breaks)):
                raise ParameterError(f"breaks must be increasing days >= 2 in {self.name!r}")
        if self.kind == "sinusoid" and self.period <= 0.0:
            raise ParameterError(f"sinusoid covariate {self.name!r} needs a positive period")


@dataclass(frozen=True)
class ODSpec:
    """Origin-destination trips: a base matrix times a step multiplier.

    gravity mode builds base[i, j] = scale * pop_i * pop_j / total_pop with a
    zero diagonal; matrix mode takes the base matrix as given.
    """

    mode: str = "gravity"
    scale: float = 0.0
    matrix: tuple = ()
    breaks: tuple[int, ...] = ()
    multipliers: tuple[float, ...] = (1.0,)

    def __post_init__(self):
        if self.mode not in ("gravity", "matrix"):
            raise ParameterError(f"unknown od mode {self.mode!r}")
        if len(self.multipliers) != len(self.breaks) + 1:
            raise ParameterError("od needs len(multipliers) == len(breaks) + 1")
        if self.mode == "gravity" and self.scale < 0.0:
            raise ParameterError("gravity od scale must be non-negative")


@dataclass(frozen=True)
class ScenarioSpec:
    n_regions: int
    n_days: int
    populations: tuple[int, ...]
    beta0: float
    theta: tuple[float, ...]
    alpha: float
    kernel_shape: float = 5.807
    kernel_scale: float = 1.055
    kernel_lags: int = 30
    covariates: tuple[CovariateSpec, ...] = ()
    od: ODSpec = field(default_factory=ODSpec)
    seed_cases: tuple[tuple[int, int, int], ...] = ()
    rng_seed: int = 0
    covariate_seed: int = 20210301
    max_intensity: float = 1e6
    region_codes: tuple[str, ...] = ()

    def __post_init__(self):
        if self.n_regions < 1 or self.n_days < 2:
            raise ParameterError("scenario needs at least 1 region and 2 days")
        if len(self.populations) != self.n_regions:
            raise ParameterError(
                f"{len(self.populations)} populations for {self.n_regions} regions"
            )
        if any(q <= 0 for q in self.populations):
            raise ParameterError("populations must be positive")
        if len(self.theta) != len(self.covariates):
            raise ParameterError(
                f"{len(self.theta)} theta entries for {len(self.covariates)} covariates"
            )
        if not (math.isfinite(self.alpha) and self.alpha >= 0.0):
            raise ParameterError(f"alpha must be non-negative, got {self.alpha}")
        if self.max_intensity <= 0.0:
            raise ParameterError("max_intensity must be positive")
        codes = self.region_codes or tuple(f"R{i:02d}" for i in range(self.n_regions))
        if len(codes) != self.n_regions or len(set(codes)) != self.n_regions:
            raise ParameterError("region_codes must be unique, one per region")
        object.__setattr__(self, "region_codes", tuple(codes))
        for region, day, count in self.seed_cases:
            if not 0 <= region < self.n_regions:
                raise ParameterError(f"seed region {region} out of range")
            if not 1 <= day <= self.n_days:
                raise ParameterError(f"seed day {day} out of range 1..{self.n_days}")
            if count < 0:
                raise ParameterError("seed counts must be non-negative")


def _step_path(breaks, levels, t_len: int) -> np.ndarray:
    out = np.empty(t_len)
    bounds = list(breaks) + [t_len + 1]
    start = 1
    for level, end in zip(levels, bounds):
        out[start - 1 : end - 1] = level
        start = end
    return out


def _covariate_matrix(spec: ScenarioSpec, cov: CovariateSpec, jitter: np.ndarray) -> np.ndarray:
    t = np.arange(1, spec.n_days + 1, dtype=np.float64)
    if cov.kind == "step":
        path = _step_path(cov.breaks, cov.levels, spec.n_days)
    else:
        path = cov.mean + cov.amplitude * np.sin(2.0 * math.pi * (t - 1.0) / cov.period + cov.phase)
    if cov.role == WITHIN_MOBILITY:
        return 1.0 + (path[None, :] - 1.0) * (1.0 + jitter[:, None])
    return path[None, :] + jitter[:, None]


def build_design(spec: ScenarioSpec) -> np.ndarray:
    """The deterministic (N, T, p) covariate tensor for a scenario."""
    rng = stream_rng(spec.covariate_seed, _SIM_KEY, 1, 0, 0)
    cols = []
    for cov in spec.covariates:
        jitter = rng.uniform(-cov.region_jitter, cov.region_jitter, size=spec.n_regions)
        cols.append(_covariate_matrix(spec, cov, jitter))
    if not cols:
        return np.zeros((spec.n_regions, spec.n_days, 0))
    return np.stack(cols, axis=2)


def _od_tensor(spec: ScenarioSpec) -> np.ndarray:
    n, t_len = spec.n_regions, spec.n_days
    pop = np.asarray(spec.populations, dtype=np.float64)
    if spec.od.mode == "gravity":
        base = spec.od.scale * np.outer(pop, pop) / pop.sum()
        np.fill_diagonal(base, 0.0)
    else:
        base = np.asarray(spec.od.matrix, dtype=np.float64)
        if base.shape != (n, n):
            raise ParameterError(f"od matrix must be ({n}, {n}), got {base.shape}")
        if np.any(base < 0.0):
            raise ParameterError("od matrix must be non-negative")
    mult = _step_path(spec.od.breaks, spec.od.multipliers, t_len)
    return base[None, :, :] * mult[:, None, None]


def _within_trips(spec: ScenarioSpec, design: np.ndarray) -> tuple[np.ndarray, tuple[str, ...]]:
    idx = [j for j, cov in enumerate(spec.covariates) if cov.role == WITHIN_MOBILITY]
    labels = tuple(f"{spec.covariates[j].mode}:{spec.covariates[j].purpose}" for j in idx)
    base = np.array(
        [[1000.0 * (1 + i) * (1 + z) for z in range(len(idx))] for i in range(spec.n_regions)]
    )
    trips = np.empty((spec.n_regions, spec.n_days, len(idx)))
    for z, j in enumerate(idx):
        trips[:, :, z] = design[:, :, j] * base[:, z : z + 1]
    return trips, labels


def true_marks(spec: ScenarioSpec, design: np.ndarray) -> np.ndarray:
    """R(x) on the raw covariate scale, as an (N, T) matrix."""
    theta = np.asarray(spec.theta, dtype=np.float64)
    eta = spec.beta0 + design @ theta
    return np.exp(np.minimum(eta, 250.0))


def simulate_panel(spec: ScenarioSpec) -> tuple[RegionPanel, MobilityTensor, dict]:
    """Draw one panel from the scenario. Returns (panel, mobility, truth)."""
    n, t_len = spec.n_regions, spec.n_days
    kernel = discretize_gamma(spec.kernel_shape, spec.kernel_scale, spec.kernel_lags)
    design = build_design(spec)
    marks = true_marks(spec, design)
    od = _od_tensor(spec)
    pop = np.asarray(spec.populations, dtype=np.float64)

    seeds = np.zeros((n, t_len), dtype=np.int64)
    for region, day, count in spec.seed_cases:
        seeds[region, day - 1] += count

    cases = np.zeros((n, t_len), dtype=np.int64)
    hist = np.zeros((n, t_len))
    for t in range(t_len):
        lam = day_intensity(hist, t, kernel.probs, marks[:, t])
        if np.any(lam > spec.max_intensity):
            worst = int(np.argmax(lam))
            raise ScenarioError(
                f"intensity {lam[worst]:.3g} in region {worst} on day {t + 1} exceeds "
                f"the cap {spec.max_intensity:.3g}; the scenario is explosive"
            )
        for i in range(n):
            rng = stream_rng(spec.rng_seed, _SIM_KEY, 0, i, t)
            cases[i, t] = seeds[i, t] + poisson_sample(float(lam[i]), rng)
        if t + 1 < t_len:
            pressure = imported_pressure(od[t], cases[:, t].astype(np.float64), pop)
            hist[:, t] = cases[:, t] + spec.alpha * pressure

    within, labels = _within_trips(spec, design)
    weather_roles = [cov for cov in spec.covariates if cov.role == WEATHER]
    if len(weather_roles) > 1:
        raise ParameterError("at most one covariate may take the weather role")

    panel = RegionPanel(
        cases=cases,
        covariates=design,
        population=np.asarray(spec.populations, dtype=np.int64),
        covariate_names=tuple(cov.name for cov in spec.covariates),
        regions=tuple(Region(i, code) for i, code in enumerate(spec.region_codes)),
    )
    mobility = MobilityTensor(od=od, within=within, within_labels=labels)
    truth = {
        "beta0": spec.beta0,
        "theta": list(spec.theta),
        "alpha": spec.alpha,
        "kernel": {
            "shape": spec.kernel_shape,
            "scale": spec.kernel_scale,
            "lags": spec.kernel_lags,
        },
        "covariate_names": [cov.name for cov in spec.covariates],
        "region_codes": list(spec.region_codes),
        "rng_seed": spec.rng_seed,
        "total_cases": int(cases.sum()),
        "R": marks.tolist(),
    }
    return panel, mobility, truth


def reseeded(spec: ScenarioSpec, rng_seed: int) -> ScenarioSpec:
    """Same scenario, new epidemic randomness."""
    return replace(spec, rng_seed=rng_seed)


def synthetic_demographics(spec: ScenarioSpec) -> np.ndarray:
    """Deterministic per-region (population, density, city_pct) columns so a
    simulated panel can be written in the bundle format and used with
    demographic covariates. Values vary across regions but carry no signal."""
    n = spec.n_regions
    pop = np.asarray(spec.populations, dtype=np.float64)
    area = np.array([30.0 + 15.0 * ((7 * i) % 11) for i in range(n)])
    city = np.array([15.0 + 6.0 * ((5 * i) % 11) for i in range(n)])
    return np.column_stack([pop, pop / area, city])


def default_scenario(rng_seed: int = 0) -> ScenarioSpec:
    """A 26-region desk scenario: two mobility ratios and one weather series,
    a mobility drop after day 30 and mild seasonal forcing."""
    n = 26
    populations = tuple(40_000 + 7_000 * (i % 9) for i in range(n))
    covariates = (
        CovariateSpec(
            name="within_road_commuter",
            kind="step",
            role=WITHIN_MOBILITY,
            mode="road",
            purpose="commuter",
            breaks=(31,),
            levels=(1.0, 0.75),
            region_jitter=0.25,
        ),
        CovariateSpec(
            name="within_rail_leisure",
            kind="step",
            role=WITHIN_MOBILITY,
            mode="rail",
            purpose="leisure",
            breaks=(31, 61),
            levels=(1.0, 0.65, 0.85),
            region_jitter=0.35,
        ),
        CovariateSpec(
            name="tmax_c",
            kind="sinusoid",
            role=WEATHER,
            mean=9.0,
            amplitude=6.0,
            period=120.0,
            phase=-0.4,
            region_jitter=2.5,
        ),
    )
    return ScenarioSpec(
        n_regions=n,
        n_days=90,
        populations=populations,
        beta0=-1.4,
        theta=(1.3, 0.55, -0.015),
        alpha=0.6,
        covariates=covariates,
        od=ODSpec(mode="gravity", scale=0.004, breaks=(31,), multipliers=(1.0, 0.5)),
        seed_cases=tuple((i, 1, 4) for i in range(n)),
        rng_seed=rng_seed,
    )


def scenario_from_dict(doc: dict) -> ScenarioSpec:
    """Build a spec from parsed JSON; unknown keys are rejected."""
    doc = dict(doc)
    cov_docs = doc.pop("covariates", [])
    od_doc = doc.pop("od", {})
    known = {
        "n_regions", "n_days", "populations", "beta0", "theta", "alpha",
        "kernel_shape", "kernel_scale", "kernel_lags", "seed_cases",
        "rng_seed", "covariate_seed", "max_intensity", "region_codes",
    }
    unknown = set(doc) - known
    if unknown:
        raise ParameterError(f"unknown scenario keys: {sorted(unknown)}")
    n = int(doc["n_regions"])
    pops = doc.get("populations", 50_000)
    if isinstance(pops, (int, float)):
        pops = [int(pops)] * n
    covs = []
    for c in cov_docs:
        c = dict(c)
        for key in ("breaks", "levels"):
            if key in c:
                c[key] = tuple(c[key])
        covs.append(CovariateSpec(**c))
    if od_doc:
        od_doc = dict(od_doc)
        if "matrix" in od_doc:
            od_doc["matrix"] = tuple(tuple(row) for row in od_doc["matrix"])
        for key in ("breaks", "multipliers"):
            if key in od_doc:
                od_doc[key] = tuple(od_doc[key])
        od = ODSpec(**od_doc)
    else:
        od = ODSpec()
    return ScenarioSpec(
        n_regions=n,
        n_days=int(doc["n_days"]),
        populations=tuple(int(q) for q in pops),
        beta0=float(doc["beta0"]),
        theta=tuple(float(v) for v in doc.get("theta", [])),
        alpha=float(doc.get("alpha", 0.0)),
        kernel_shape=float(doc.get("kernel_shape", 5.807)),
        kernel_scale=float(doc.get("kernel_scale", 1.055)),
        kernel_lags=int(doc.get("kernel_lags", 30)),
        covariates=tuple(covs),
        od=od,
        seed_cases=tuple((int(r), int(d), int(c)) for r, d, c in doc.get("seed_cases", [])),
        rng_seed=int(doc.get("rng_seed", 0)),
        covariate_seed=int(doc.get("covariate_seed", 20210301)),
        max_intensity=float(doc.get("max_intensity", 1e6)),
        region_codes=tuple(doc.get("region_codes", ())),
    )
