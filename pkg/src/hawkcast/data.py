"""CSV ingestion, covariate construction and serialization.

File schemas (headers are exact, dates are ISO-8601):

    cases.csv            date,region,new_cases
    regions.csv          region,name,population,density,city_pct
    mobility_within.csv  date,region,mode,purpose,trips
    mobility_od.csv      date,origin,destination,trips
    weather.csv          date,region,tmax_c

The case file defines the study period. Mobility files may additionally cover
a reference window before the first case; trip covariates are ratios against
the per-region mean over that window, so 1.0 means no change. Weather gaps of
up to two days are filled by linear interpolation.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from datetime import date, timedelta
from pathlib import Path

import numpy as np

from .errors import DataError, ParameterError
from .estimate import FittedModel
from .forecast import ForecastResult
from .kernel import Kernel
from .mark import MarkModel
from .metrics import ScoreReport
from .tuning import TuneResult
from .types import MobilityTensor, Region, RegionPanel

CASES_HEADER = ("date", "region", "new_cases")
REGIONS_HEADER = ("region", "name", "population", "density", "city_pct")
WITHIN_HEADER = ("date", "region", "mode", "purpose", "trips")
OD_HEADER = ("date", "origin", "destination", "trips")
WEATHER_HEADER = ("date", "region", "tmax_c")

DEMOGRAPHIC_NAMES = ("population", "density", "city_pct")

MODEL_SCHEMA = "hawkcast-model/1"


def fmt(x) -> str:
    """Full-precision text for a float (shortest round-trip repr)."""
    return repr(float(x))


@dataclass(frozen=True)
class BundlePaths:
    cases: Path
    regions: Path
    mobility_within: Path
    mobility_od: Path
    weather: Path

    @classmethod
    def in_dir(cls, directory) -> "BundlePaths":
        d = Path(directory)
        return cls(
            cases=d / "cases.csv",
            regions=d / "regions.csv",
            mobility_within=d / "mobility_within.csv",
            mobility_od=d / "mobility_od.csv",
            weather=d / "weather.csv",
        )


@dataclass(frozen=True)
class BundleOptions:
    """What goes into the mark covariates and where the baseline window sits."""

    include_weather: bool = True
    between_covariates: bool = False
    demographics_in_mark: bool = False
    aggregate_within: bool = False
    reference_start: date | None = None
    reference_end: date | None = None
    reference_days: int = 14

    def __post_init__(self):
        if (self.reference_start is None) != (self.reference_end is None):
            raise ParameterError("reference_start and reference_end go together")
        if self.reference_start is not None and self.reference_end < self.reference_start:
            raise ParameterError("reference window must not end before it starts")
        if self.reference_days < 1:
            raise ParameterError("reference_days must be at least 1")


@dataclass(frozen=True)
class DatasetBundle:
    panel: RegionPanel
    mobility: MobilityTensor
    date_origin: date
    reference_window: tuple[date, date]
    demographics: np.ndarray
    demographic_names: tuple[str, ...]
    options: BundleOptions = field(default_factory=BundleOptions)

    def day_date(self, t: int) -> date:
        """Calendar date of 1-based day t."""
        return self.date_origin + timedelta(days=t - 1)


def _read_rows(path, header) -> list[tuple[int, dict]]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: file not found")
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            head = next(reader)
        except StopIteration:
            raise DataError(f"{path}:1: empty file, expected header {','.join(header)}")
        if tuple(h.strip() for h in head) != header:
            raise DataError(
                f"{path}:1: header must be {','.join(header)}, got {','.join(head)}"
            )
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != len(header):
                raise DataError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            rows.append((lineno, dict(zip(header, row))))
    return rows


def _parse_date(text, path, lineno) -> date:
    try:
        return date.fromisoformat(text.strip())
    except ValueError:
        raise DataError(f"{path}:{lineno}: invalid ISO date {text!r}")


def _parse_count(text, path, lineno, column) -> int:
    try:
        value = int(text.strip())
    except ValueError:
        raise DataError(f"{path}:{lineno}: {column} must be an integer, got {text!r}")
    if value < 0:
        raise DataError(f"{path}:{lineno}: {column} must be non-negative, got {value}")
    return value


def _parse_float(text, path, lineno, column, minimum=None) -> float:
    try:
        value = float(text.strip())
    except ValueError:
        raise DataError(f"{path}:{lineno}: {column} must be a number, got {text!r}")
    if not math.isfinite(value):
        raise DataError(f"{path}:{lineno}: {column} must be finite, got {text!r}")
    if minimum is not None and value < minimum:
        raise DataError(f"{path}:{lineno}: {column} must be >= {minimum}, got {value}")
    return value


def _load_regions(path):
    rows = _read_rows(path, REGIONS_HEADER)
    if not rows:
        raise DataError(f"{path}: no regions defined")
    codes, names, demo = [], [], []
    seen = set()
    for lineno, row in rows:
        code = row["region"].strip()
        if not code:
            raise DataError(f"{path}:{lineno}: empty region code")
        if code in seen:
            raise DataError(f"{path}:{lineno}: duplicate region code {code!r}")
        seen.add(code)
        codes.append(code)
        names.append(row["name"].strip())
        population = _parse_count(row["population"], path, lineno, "population")
        if population == 0:
            raise DataError(f"{path}:{lineno}: population must be positive")
        demo.append(
            (
                float(population),
                _parse_float(row["density"], path, lineno, "density", minimum=0.0),
                _parse_float(row["city_pct"], path, lineno, "city_pct", minimum=0.0),
            )
        )
    return codes, names, np.array(demo, dtype=np.float64)


def _load_cases(path, code_index):
    rows = _read_rows(path, CASES_HEADER)
    if not rows:
        raise DataError(f"{path}: no case rows")
    cells = {}
    for lineno, row in rows:
        day = _parse_date(row["date"], path, lineno)
        code = row["region"].strip()
        if code not in code_index:
            raise DataError(f"{path}:{lineno}: unknown region {code!r}")
        key = (code, day)
        if key in cells:
            raise DataError(f"{path}:{lineno}: duplicate cell for {code} on {day}")
        cells[key] = _parse_count(row["new_cases"], path, lineno, "new_cases")
    dates = sorted({d for _, d in cells})
    origin, last = dates[0], dates[-1]
    t_len = (last - origin).days + 1
    if t_len != len(dates):
        expected = {origin + timedelta(days=k) for k in range(t_len)}
        gap = sorted(expected - set(dates))[0]
        raise DataError(f"{path}: missing date {gap}; case dates must be contiguous")
    cases = np.zeros((len(code_index), t_len), dtype=np.int64)
    for code, idx in code_index.items():
        for k in range(t_len):
            day = origin + timedelta(days=k)
            if (code, day) not in cells:
                raise DataError(f"{path}: missing cell for region {code} on {day}")
            cases[idx, k] = cells[(code, day)]
    return cases, origin, t_len


def _resolve_reference_window(options, origin, t_len, within_dates):
    if options.reference_start is not None:
        return options.reference_start, options.reference_end
    days = options.reference_days
    pre_start = origin - timedelta(days=days)
    pre = [pre_start + timedelta(days=k) for k in range(days)]
    if all(d in within_dates for d in pre):
        return pre[0], pre[-1]
    end = origin + timedelta(days=min(days, t_len) - 1)
    return origin, end


def _window_dates(window):
    start, end = window
    return [start + timedelta(days=k) for k in range((end - start).days + 1)]


def _load_within(path, code_index, origin, t_len, window):
    rows = _read_rows(path, WITHIN_HEADER)
    if not rows:
        raise DataError(f"{path}: no mobility rows")
    cells = {}
    categories = set()
    dates_seen = set()
    for lineno, row in rows:
        day = _parse_date(row["date"], path, lineno)
        code = row["region"].strip()
        if code not in code_index:
            raise DataError(f"{path}:{lineno}: unknown region {code!r}")
        mode = row["mode"].strip()
        purpose = row["purpose"].strip()
        if not mode or not purpose:
            raise DataError(f"{path}:{lineno}: empty mode or purpose")
        key = (code, day, mode, purpose)
        if key in cells:
            raise DataError(
                f"{path}:{lineno}: duplicate row for {code}/{mode}/{purpose} on {day}"
            )
        cells[key] = _parse_float(row["trips"], path, lineno, "trips", minimum=0.0)
        categories.add((mode, purpose))
        dates_seen.add(day)
    categories = sorted(categories)
    needed = set(_window_dates(window)) | {origin + timedelta(days=k) for k in range(t_len)}
    for day in sorted(needed):
        for code in code_index:
            for mode, purpose in categories:
                if (code, day, mode, purpose) not in cells:
                    raise DataError(
                        f"{path}: missing trips for region {code}, {mode}/{purpose} on {day}"
                    )
    n = len(code_index)
    z = len(categories)
    within = np.zeros((n, t_len, z), dtype=np.float64)
    baseline_days = _window_dates(window)
    baseline = np.zeros((n, z), dtype=np.float64)
    for ci, (mode, purpose) in enumerate(categories):
        for code, idx in code_index.items():
            for k in range(t_len):
                within[idx, k, ci] = cells[(code, origin + timedelta(days=k), mode, purpose)]
            baseline[idx, ci] = float(
                np.mean([cells[(code, d, mode, purpose)] for d in baseline_days])
            )
    labels = tuple(f"{mode}:{purpose}" for mode, purpose in categories)
    return within, baseline, labels


def _load_od(path, code_index, origin, t_len, window, need_reference):
    rows = _read_rows(path, OD_HEADER)
    if not rows:
        raise DataError(f"{path}: no od rows")
    n = len(code_index)
    od = np.zeros((t_len, n, n), dtype=np.float64)
    ref_days = _window_dates(window)
    ref_index = {d: k for k, d in enumerate(ref_days)}
    ref_incoming = np.zeros((len(ref_days), n), dtype=np.float64)
    seen_pairs = set()
    study_days_seen = set()
    ref_days_seen = set()
    for lineno, row in rows:
        day = _parse_date(row["date"], path, lineno)
        o_code = row["origin"].strip()
        d_code = row["destination"].strip()
        for code in (o_code, d_code):
            if code not in code_index:
                raise DataError(f"{path}:{lineno}: unknown region {code!r}")
        key = (day, o_code, d_code)
        if key in seen_pairs:
            raise DataError(f"{path}:{lineno}: duplicate od row {o_code}->{d_code} on {day}")
        seen_pairs.add(key)
        trips = _parse_float(row["trips"], path, lineno, "trips", minimum=0.0)
        k = (day - origin).days
        if 0 <= k < t_len:
            study_days_seen.add(day)
            if o_code != d_code:
                od[k, code_index[o_code], code_index[d_code]] = trips
        if day in ref_index:
            ref_days_seen.add(day)
            if o_code != d_code:
                ref_incoming[ref_index[day], code_index[d_code]] += trips
    for k in range(t_len):
        day = origin + timedelta(days=k)
        if day not in study_days_seen:
            raise DataError(f"{path}: no od rows for {day}; every study day needs trips")
    if need_reference:
        for day in ref_days:
            if day not in ref_days_seen:
                raise DataError(f"{path}: no od rows for reference day {day}")
    return od, ref_incoming.mean(axis=0)


def _load_weather(path, code_index, origin, t_len, max_gap: int = 2):
    rows = _read_rows(path, WEATHER_HEADER)
    if not rows:
        raise DataError(f"{path}: no weather rows")
    values = {}
    for lineno, row in rows:
        day = _parse_date(row["date"], path, lineno)
        code = row["region"].strip()
        if code not in code_index:
            raise DataError(f"{path}:{lineno}: unknown region {code!r}")
        key = (code, day)
        if key in values:
            raise DataError(f"{path}:{lineno}: duplicate weather row for {code} on {day}")
        values[key] = _parse_float(row["tmax_c"], path, lineno, "tmax_c")
    weather = np.full((len(code_index), t_len), np.nan)
    for code, idx in code_index.items():
        for k in range(t_len):
            v = values.get((code, origin + timedelta(days=k)))
            if v is not None:
                weather[idx, k] = v
    for code, idx in code_index.items():
        series = weather[idx]
        missing = np.isnan(series)
        if not missing.any():
            continue
        k = 0
        while k < t_len:
            if not missing[k]:
                k += 1
                continue
            run_start = k
            while k < t_len and missing[k]:
                k += 1
            run_end = k  # exclusive
            run_len = run_end - run_start
            day0 = origin + timedelta(days=run_start)
            if run_start == 0 or run_end == t_len:
                raise DataError(
                    f"{path}: weather for region {code} has no value to interpolate "
                    f"from around {day0}"
                )
            if run_len > max_gap:
                raise DataError(
                    f"{path}: weather gap of {run_len} days for region {code} starting "
                    f"{day0} exceeds the {max_gap}-day interpolation limit"
                )
            left = series[run_start - 1]
            right = series[run_end]
            for j in range(run_len):
                frac = (j + 1) / (run_len + 1)
                series[run_start + j] = left + (right - left) * frac
    return weather


def build_within_mobility_covariates(within, baseline, labels, aggregate=False):
    """Trip ratios against the reference baseline, one column per category or a
    single column for the summed categories."""
    within = np.asarray(within, dtype=np.float64)
    baseline = np.asarray(baseline, dtype=np.float64)
    if aggregate:
        total = within.sum(axis=2)
        total_base = baseline.sum(axis=1)
        if np.any(total_base <= 0.0):
            bad = int(np.nonzero(total_base <= 0.0)[0][0])
            raise DataError(f"zero baseline trips for region index {bad}; cannot form ratios")
        return total[:, :, None] / total_base[:, None, None], ("within_total",)
    if np.any(baseline <= 0.0):
        i, z = map(int, np.argwhere(baseline <= 0.0)[0])
        raise DataError(
            f"zero baseline trips for region index {i}, category {labels[z]}; cannot form ratios"
        )
    names = tuple("within_" + label.replace(":", "_") for label in labels)
    return within / baseline[:, None, :], names


def build_between_covariates(od, incoming_baseline):
    """Total inbound trips per region-day relative to the reference baseline."""
    od = np.asarray(od, dtype=np.float64)
    t_len, n, _ = od.shape
    incoming = od.sum(axis=1) - np.einsum("tii->ti", od)  # (T, N), drop diagonal
    baseline = np.asarray(incoming_baseline, dtype=np.float64)
    if np.any(baseline <= 0.0):
        bad = int(np.nonzero(baseline <= 0.0)[0][0])
        raise DataError(
            f"zero baseline inbound trips for region index {bad}; cannot form ratios"
        )
    return (incoming.T / baseline[:, None])[:, :, None], ("incoming_change",)


def load_bundle(paths: BundlePaths, options: BundleOptions = BundleOptions()) -> DatasetBundle:
    """Read and validate a bundle, building the mark covariates per options."""
    codes, _names, demographics = _load_regions(paths.regions)
    code_index = {code: i for i, code in enumerate(codes)}
    cases, origin, t_len = _load_cases(paths.cases, code_index)

    within_rows = _read_rows(paths.mobility_within, WITHIN_HEADER)
    within_dates = set()
    for lineno, row in within_rows:
        within_dates.add(_parse_date(row["date"], paths.mobility_within, lineno))
    window = _resolve_reference_window(options, origin, t_len, within_dates)
    if window[1] >= origin + timedelta(days=t_len):
        raise DataError("reference window extends past the study period")

    within, baseline, labels = _load_within(
        paths.mobility_within, code_index, origin, t_len, window
    )
    od, incoming_baseline = _load_od(
        paths.mobility_od, code_index, origin, t_len, window,
        need_reference=options.between_covariates,
    )

    columns = []
    names: list[str] = []
    ratio_cols, ratio_names = build_within_mobility_covariates(
        within, baseline, labels, aggregate=options.aggregate_within
    )
    columns.append(ratio_cols)
    names.extend(ratio_names)
    if options.between_covariates:
        between_cols, between_names = build_between_covariates(od, incoming_baseline)
        columns.append(between_cols)
        names.extend(between_names)
    if options.include_weather:
        weather = _load_weather(paths.weather, code_index, origin, t_len)
        columns.append(weather[:, :, None])
        names.append("tmax_c")
    if options.demographics_in_mark:
        demo_cols = np.repeat(demographics[:, None, :], t_len, axis=1)
        columns.append(demo_cols)
        names.extend(DEMOGRAPHIC_NAMES)

    covariates = np.concatenate(columns, axis=2) if columns else np.zeros((len(codes), t_len, 0))
    panel = RegionPanel(
        cases=cases,
        covariates=covariates,
        population=demographics[:, 0].astype(np.int64),
        covariate_names=tuple(names),
        regions=tuple(Region(i, code) for i, code in enumerate(codes)),
    )
    mobility = MobilityTensor(od=od, within=within, within_labels=labels)
    return DatasetBundle(
        panel=panel,
        mobility=mobility,
        date_origin=origin,
        reference_window=window,
        demographics=demographics,
        demographic_names=DEMOGRAPHIC_NAMES,
        options=options,
    )


def save_bundle(bundle: DatasetBundle, directory) -> BundlePaths:
    """Write a bundle back to the five CSV files.

    Only study-period days are stored in a bundle, so a round trip preserves
    the data exactly when the reference window lies inside the study period.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = BundlePaths.in_dir(directory)
    panel = bundle.panel
    codes = [r.code for r in panel.regions]
    t_len = panel.n_days

    with open(paths.regions, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(REGIONS_HEADER)
        for i, code in enumerate(codes):
            w.writerow(
                [
                    code,
                    code,
                    int(bundle.demographics[i, 0]),
                    fmt(bundle.demographics[i, 1]),
                    fmt(bundle.demographics[i, 2]),
                ]
            )

    with open(paths.cases, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(CASES_HEADER)
        for k in range(t_len):
            day = bundle.day_date(k + 1).isoformat()
            for i, code in enumerate(codes):
                w.writerow([day, code, int(panel.cases[i, k])])

    with open(paths.mobility_within, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(WITHIN_HEADER)
        for k in range(t_len):
            day = bundle.day_date(k + 1).isoformat()
            for i, code in enumerate(codes):
                for z, label in enumerate(bundle.mobility.within_labels):
                    mode, purpose = label.split(":", 1)
                    w.writerow([day, code, mode, purpose, fmt(bundle.mobility.within[i, k, z])])

    with open(paths.mobility_od, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(OD_HEADER)
        for k in range(t_len):
            day = bundle.day_date(k + 1).isoformat()
            for i, o_code in enumerate(codes):
                for j, d_code in enumerate(codes):
                    if i != j:
                        w.writerow([day, o_code, d_code, fmt(bundle.mobility.od[k, i, j])])

    with open(paths.weather, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(WEATHER_HEADER)
        if "tmax_c" in panel.covariate_names:
            col = panel.covariate_names.index("tmax_c")
            for k in range(t_len):
                day = bundle.day_date(k + 1).isoformat()
                for i, code in enumerate(codes):
                    w.writerow([day, code, fmt(panel.covariates[i, k, col])])
    return paths


def save_model(model: FittedModel, path, metadata: dict | None = None) -> None:
    doc = {
        "schema": MODEL_SCHEMA,
        "alpha": model.alpha,
        "xi": model.xi,
        "background": model.background,
        "mark": {
            "beta0": model.mark.beta0,
            "theta": list(model.mark.theta),
            "means": list(model.mark.means),
            "sds": list(model.mark.sds),
            "covariate_names": list(model.mark.covariate_names),
        },
        "kernel": {
            "shape": model.kernel.shape,
            "scale": model.kernel.scale,
            "lags": model.kernel.lags,
            "renormalized": model.kernel.renormalized,
            "probs": list(model.kernel.probs),
        },
        "iterations": model.iterations,
        "converged": model.converged,
        "diagnostics": model.diagnostics,
        "r_hat": [list(row) for row in model.r_hat],
        "metadata": metadata or {},
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1)
        fh.write("\n")


def load_model(path) -> tuple[FittedModel, dict]:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("schema") != MODEL_SCHEMA:
        raise DataError(
            f"{path}: unsupported model schema {doc.get('schema')!r}, expected {MODEL_SCHEMA}"
        )
    mark_doc = doc["mark"]
    mark = MarkModel(
        beta0=float(mark_doc["beta0"]),
        theta=np.asarray(mark_doc["theta"], dtype=np.float64),
        means=np.asarray(mark_doc["means"], dtype=np.float64),
        sds=np.asarray(mark_doc["sds"], dtype=np.float64),
        covariate_names=tuple(mark_doc["covariate_names"]),
    )
    kernel_doc = doc["kernel"]
    kernel = Kernel(
        probs=np.asarray(kernel_doc["probs"], dtype=np.float64),
        shape=float(kernel_doc["shape"]),
        scale=float(kernel_doc["scale"]),
        renormalized=bool(kernel_doc["renormalized"]),
    )
    model = FittedModel(
        mark=mark,
        kernel=kernel,
        alpha=float(doc["alpha"]),
        xi=float(doc["xi"]),
        background=float(doc.get("background", 0.0)),
        r_hat=np.asarray(doc["r_hat"], dtype=np.float64),
        iterations=int(doc["iterations"]),
        converged=bool(doc["converged"]),
        diagnostics=dict(doc.get("diagnostics", {})),
    )
    return model, dict(doc.get("metadata", {}))


def write_forecast_csv(result: ForecastResult, codes, origin: date, t_len: int, path) -> None:
    """Long-format draws: replicate,region_code,date,predicted_cases."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("replicate", "region_code", "date", "predicted_cases"))
        for k in range(result.replicates):
            for i, code in enumerate(codes):
                for d in range(result.horizon):
                    day = origin + timedelta(days=t_len + d)
                    w.writerow([k, code, day.isoformat(), int(result.draws[k, i, d])])


def write_band_csv(result: ForecastResult, codes, origin: date, t_len: int, path) -> None:
    """Point forecast with the empirical 10-90 percent replicate band."""
    q10 = np.quantile(result.draws, 0.1, axis=0)
    q90 = np.quantile(result.draws, 0.9, axis=0)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("region_code", "date", "point", "q10", "q90"))
        for i, code in enumerate(codes):
            for d in range(result.horizon):
                day = origin + timedelta(days=t_len + d)
                w.writerow(
                    [code, day.isoformat(), fmt(result.point[i, d]), fmt(q10[i, d]), fmt(q90[i, d])]
                )


def write_tune_csv(result: TuneResult, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("alpha", "xi", "cv_rmse"))
        for alpha, xi, rmse in result.grid:
            w.writerow([fmt(alpha), fmt(xi), fmt(rmse)])


def write_scores_csv(report: ScoreReport, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("region", "horizon", "rmse", "mae"))
        for rec in report.records:
            w.writerow([rec.region, rec.horizon, fmt(rec.rmse), fmt(rec.mae)])
        w.writerow(["__macro__", 0, fmt(report.macro_rmse), fmt(report.macro_mae)])


def read_forecast_csv(path):
    """Inverse of write_forecast_csv: dict mapping (region, date) to the list of
    replicate draws, in replicate order."""
    rows = _read_rows(path, ("replicate", "region_code", "date", "predicted_cases"))
    out: dict[tuple[str, date], list[int]] = {}
    for lineno, row in rows:
        day = _parse_date(row["date"], path, lineno)
        rep = _parse_count(row["replicate"], path, lineno, "replicate")
        value = _parse_count(row["predicted_cases"], path, lineno, "predicted_cases")
        out.setdefault((row["region_code"].strip(), day), []).append((rep, value))
    return {
        key: [v for _, v in sorted(vals)] for key, vals in out.items()
    }
