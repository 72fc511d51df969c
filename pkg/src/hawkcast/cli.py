"""Command-line front end.

Subcommands: fit, tune, cv, forecast, simulate, evaluate. Each is a thin
shell over the library; outputs are byte-reproducible given the same inputs
and seeds. Exit codes: 0 success, 64 usage, 1 data error, 2 estimation
error, 3 internal error.
"""

from __future__ import annotations

import argparse
import json
import sys
from datetime import date, timedelta
from pathlib import Path

from .data import (
    BundleOptions,
    BundlePaths,
    DatasetBundle,
    fmt,
    load_bundle,
    load_model,
    save_bundle,
    save_model,
    write_band_csv,
    write_forecast_csv,
    write_scores_csv,
    write_tune_csv,
)
from .errors import (
    DataError,
    EstimationError,
    HawkcastError,
    InsufficientDataError,
    NumericError,
)
from .estimate import EMConfig, fit_em
from .evaluate import fit_background_profile
from .forecast import PROVIDED, ForecastConfig, forecast
from .kernel import discretize_gamma
from .metrics import ScoreRecord, score, summarize
from .simulate import (
    default_scenario,
    reseeded,
    scenario_from_dict,
    simulate_panel,
    synthetic_demographics,
)
from .tuning import DEFAULT_ALPHA_GRID, DEFAULT_XI_GRID, loro_cv, tune

EX_OK = 0
EX_USAGE = 64
EX_DATA = 1
EX_ESTIMATION = 2
EX_INTERNAL = 3


class _Parser(argparse.ArgumentParser):
    """argparse with the usage exit code this tool documents."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EX_USAGE)


def _add_common(cmd):
    cmd.add_argument("--out", default=".", help="output directory (created if missing)")
    cmd.add_argument("--config", default=None, help="key=value file overlaying flag defaults")


def _add_bundle_flags(cmd):
    cmd.add_argument("--data", required=True, help="directory holding the five bundle CSVs")
    cmd.add_argument("--no-weather", action="store_true", default=None,
                     help="drop the weather covariate")
    cmd.add_argument("--with-between-covariates", action="store_true", default=None,
                     help="add inbound-trip change covariates")
    cmd.add_argument("--with-demographics", action="store_true", default=None,
                     help="add region demographics as covariates")
    cmd.add_argument("--aggregate-within", action="store_true", default=None,
                     help="sum trip categories into one within-mobility covariate")
    cmd.add_argument("--reference-days", type=int, default=None,
                     help="length of the mobility baseline window")


def _add_kernel_flags(cmd):
    cmd.add_argument("--kernel-shape", type=float, default=None)
    cmd.add_argument("--kernel-scale", type=float, default=None)
    cmd.add_argument("--trunc", type=int, default=None, help="kernel truncation lag L")


def build_parser() -> _Parser:
    parser = _Parser(prog="hawkcast", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.required = True

    fit = sub.add_parser("fit", help="fit the model and write model.json", add_help=True)
    _add_bundle_flags(fit)
    _add_kernel_flags(fit)
    fit.add_argument("--alpha", type=float, default=None, help="travel correction weight")
    fit.add_argument("--xi", type=float, default=None, help="lasso penalty")
    fit.add_argument("--no-regularization", action="store_true", default=None,
                     help="force the lasso penalty to zero")
    fit.add_argument("--no-correction", action="store_true", default=None,
                     help="disable the travel correction; profile a constant background rate")
    _add_common(fit)

    tu = sub.add_parser("tune", help="grid-search alpha and xi by cross-validation")
    _add_bundle_flags(tu)
    _add_kernel_flags(tu)
    tu.add_argument("--alpha-grid", default=None, help="comma-separated alpha values")
    tu.add_argument("--xi-grid", default=None, help="comma-separated xi values")
    tu.add_argument("--horizon", type=int, default=None)
    tu.add_argument("--replicates", type=int, default=None)
    tu.add_argument("--seed", type=int, default=None)
    tu.add_argument("--jobs", type=int, default=None, help="worker processes for grid cells")
    _add_common(tu)

    cv = sub.add_parser("cv", help="leave-one-region-out scores at fixed alpha, xi")
    _add_bundle_flags(cv)
    _add_kernel_flags(cv)
    cv.add_argument("--alpha", type=float, default=None)
    cv.add_argument("--xi", type=float, default=None)
    cv.add_argument("--horizons", default=None, help="comma-separated forecast horizons")
    cv.add_argument("--replicates", type=int, default=None)
    cv.add_argument("--seed", type=int, default=None)
    _add_common(cv)

    fc = sub.add_parser("forecast", help="roll a fitted model forward")
    fc.add_argument("--model", required=True, help="model.json from fit")
    fc.add_argument("--data", required=True)
    fc.add_argument("--horizon", type=int, default=None)
    fc.add_argument("--replicates", type=int, default=None)
    fc.add_argument("--seed", type=int, default=None)
    fc.add_argument("--no-weather", action="store_true", default=None)
    fc.add_argument("--with-between-covariates", action="store_true", default=None)
    fc.add_argument("--with-demographics", action="store_true", default=None)
    fc.add_argument("--aggregate-within", action="store_true", default=None)
    fc.add_argument("--reference-days", type=int, default=None)
    _add_common(fc)

    sim = sub.add_parser("simulate", help="write a synthetic bundle and its truth")
    sim.add_argument("--scenario", default=None, help="scenario JSON (default: built-in)")
    sim.add_argument("--seed", type=int, default=None, help="override the scenario rng_seed")
    sim.add_argument("--start-date", default=None, help="calendar date of day 1 (ISO)")
    _add_common(sim)

    ev = sub.add_parser("evaluate", help="score a model on the last days of a bundle")
    ev.add_argument("--model", required=True)
    _add_bundle_flags(ev)
    ev.add_argument("--horizons", default=None)
    ev.add_argument("--replicates", type=int, default=None)
    ev.add_argument("--seed", type=int, default=None)
    _add_common(ev)

    return parser


_DEFAULTS = {
    "alpha": 0.0,
    "xi": 0.0,
    "kernel_shape": 5.807,
    "kernel_scale": 1.055,
    "trunc": 30,
    "horizon": 14,
    "horizons": "7,14",
    "replicates": 10,
    "seed": 0,
    "jobs": 1,
    "reference_days": 14,
    "alpha_grid": None,
    "xi_grid": None,
    "no_regularization": False,
    "no_correction": False,
    "no_weather": False,
    "with_between_covariates": False,
    "with_demographics": False,
    "aggregate_within": False,
    "scenario": None,
    "start_date": "2020-03-01",
}


def _read_config(path, parser):
    doc = {}
    try:
        text = Path(path).read_text()
    except OSError as exc:
        parser.error(f"cannot read config file {path}: {exc.strerror}")
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            parser.error(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, _, value = line.partition("=")
        key = key.strip().replace("-", "_")
        value = value.strip()
        try:
            doc[key] = json.loads(value)
        except json.JSONDecodeError:
            doc[key] = value
    return doc


def _resolve(ns, parser):
    """Fold the config-file overlay under explicit flags, above defaults."""
    merged = dict(vars(ns))
    overlay = _read_config(ns.config, parser) if ns.config else {}
    for key, value in overlay.items():
        if key not in merged or key in ("config", "out", "data", "model", "command"):
            parser.error(f"unknown config key {key!r}")
        if merged[key] is None:
            merged[key] = value
    for key, value in merged.items():
        if value is None and key in _DEFAULTS:
            merged[key] = _DEFAULTS[key]
    return argparse.Namespace(**merged)


def _check_positive(parser, ns, names, minimum, strict=False):
    for name in names:
        value = getattr(ns, name, None)
        if value is None:
            continue
        bad = value <= minimum if strict else value < minimum
        if bad:
            parser.error(f"--{name.replace('_', '-')} must be "
                         f"{'>' if strict else '>='} {minimum}, got {value}")


def _validate(ns, parser):
    _check_positive(parser, ns, ("alpha", "xi"), 0.0)
    _check_positive(parser, ns, ("kernel_shape", "kernel_scale"), 0.0, strict=True)
    _check_positive(parser, ns, ("horizon", "replicates", "jobs", "reference_days"), 1)
    _check_positive(parser, ns, ("trunc",), 2)
    if getattr(ns, "horizons", None):
        try:
            horizons = _parse_int_list(ns.horizons)
        except ValueError:
            parser.error(f"--horizons must be comma-separated integers, got {ns.horizons!r}")
        if any(h < 1 for h in horizons):
            parser.error("--horizons entries must be at least 1")
    for grid_flag in ("alpha_grid", "xi_grid"):
        text = getattr(ns, grid_flag, None)
        if text:
            try:
                values = _parse_float_list(text)
            except ValueError:
                parser.error(f"--{grid_flag.replace('_', '-')} must be comma-separated "
                             f"numbers, got {text!r}")
            if any(v < 0 for v in values):
                parser.error(f"--{grid_flag.replace('_', '-')} entries must be non-negative")


def _parse_int_list(text):
    return tuple(int(part.strip()) for part in str(text).split(",") if part.strip())


def _parse_float_list(text):
    return tuple(float(part.strip()) for part in str(text).split(",") if part.strip())


def _bundle_options(ns) -> BundleOptions:
    return BundleOptions(
        include_weather=not ns.no_weather,
        between_covariates=ns.with_between_covariates,
        demographics_in_mark=ns.with_demographics,
        aggregate_within=ns.aggregate_within,
        reference_days=ns.reference_days,
    )


def _kernel(ns):
    return discretize_gamma(ns.kernel_shape, ns.kernel_scale, lags=ns.trunc)


def _outdir(ns) -> Path:
    out = Path(ns.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _print_scores(report):
    print(f"{'region':<10}{'horizon':>8}{'rmse':>14}{'mae':>14}")
    for rec in report.records:
        print(f"{rec.region:<10}{rec.horizon:>8}{rec.rmse:>14.4f}{rec.mae:>14.4f}")
    print(f"{'macro':<10}{'':>8}{report.macro_rmse:>14.4f}{report.macro_mae:>14.4f}")


def cmd_fit(ns, parser) -> int:
    out = _outdir(ns)
    bundle = load_bundle(BundlePaths.in_dir(ns.data), _bundle_options(ns))
    kernel = _kernel(ns)
    xi = 0.0 if ns.no_regularization else ns.xi
    if ns.no_correction:
        model = fit_background_profile(bundle.panel, kernel, EMConfig(alpha=0.0, xi=xi))
    else:
        model = fit_em(bundle.panel, bundle.mobility, kernel, EMConfig(alpha=ns.alpha, xi=xi))
    metadata = {
        "command": "fit",
        "variant": {
            "no_regularization": bool(ns.no_regularization),
            "no_correction": bool(ns.no_correction),
            "no_weather": bool(ns.no_weather),
            "with_between_covariates": bool(ns.with_between_covariates),
            "with_demographics": bool(ns.with_demographics),
            "aggregate_within": bool(ns.aggregate_within),
        },
        "n_regions": bundle.panel.n_regions,
        "n_days": bundle.panel.n_days,
        "date_origin": bundle.date_origin.isoformat(),
    }
    save_model(model, out / "model.json", metadata)

    lines = [
        f"converged: {model.converged}",
        f"iterations: {model.iterations}",
        f"alpha: {fmt(model.alpha)}",
        f"xi: {fmt(model.xi)}",
        f"background: {fmt(model.background)}",
        f"beta0: {fmt(model.mark.beta0)}",
    ]
    for name, value in zip(model.mark.covariate_names, model.mark.theta):
        lines.append(f"theta[{name}]: {fmt(value)}")
    for key in sorted(model.diagnostics):
        lines.append(f"{key}: {model.diagnostics[key]}")
    (out / "fit_report.txt").write_text("\n".join(lines) + "\n")
    print(f"wrote {out / 'model.json'} (converged={model.converged}, "
          f"iterations={model.iterations})")
    return EX_OK


def cmd_tune(ns, parser) -> int:
    out = _outdir(ns)
    bundle = load_bundle(BundlePaths.in_dir(ns.data), _bundle_options(ns))
    alpha_grid = _parse_float_list(ns.alpha_grid) if ns.alpha_grid else DEFAULT_ALPHA_GRID
    xi_grid = _parse_float_list(ns.xi_grid) if ns.xi_grid else DEFAULT_XI_GRID
    result = tune(
        bundle.panel, bundle.mobility, _kernel(ns),
        alpha_grid=alpha_grid, xi_grid=xi_grid,
        horizon=ns.horizon, replicates=ns.replicates, seed=ns.seed, jobs=ns.jobs,
    )
    write_tune_csv(result, out / "tune.csv")
    print(f"best alpha={fmt(result.best_alpha)} xi={fmt(result.best_xi)} "
          f"cv_rmse={fmt(result.best_rmse)}")
    return EX_OK


def cmd_cv(ns, parser) -> int:
    out = _outdir(ns)
    bundle = load_bundle(BundlePaths.in_dir(ns.data), _bundle_options(ns))
    horizons = _parse_int_list(ns.horizons)
    records = loro_cv(
        bundle.panel, bundle.mobility, _kernel(ns), ns.alpha, ns.xi,
        horizons, replicates=ns.replicates, seed=ns.seed,
    )
    report = summarize(records)
    write_scores_csv(report, out / "scores.csv")
    _print_scores(report)
    return EX_OK


def cmd_forecast(ns, parser) -> int:
    out = _outdir(ns)
    model, _meta = load_model(ns.model)
    bundle = load_bundle(BundlePaths.in_dir(ns.data), _bundle_options(ns))
    config = ForecastConfig(horizon=ns.horizon, replicates=ns.replicates, seed=ns.seed)
    result = forecast(model, bundle.panel, bundle.mobility, config)
    codes = [r.code for r in bundle.panel.regions]
    t_len = bundle.panel.n_days
    write_forecast_csv(result, codes, bundle.date_origin, t_len, out / "forecast.csv")
    write_band_csv(result, codes, bundle.date_origin, t_len, out / "band.csv")
    print(f"wrote {out / 'forecast.csv'} ({result.replicates} replicates, "
          f"{result.horizon}-day horizon)")
    return EX_OK


def cmd_simulate(ns, parser) -> int:
    out = _outdir(ns)
    if ns.scenario:
        try:
            doc = json.loads(Path(ns.scenario).read_text())
        except OSError as exc:
            raise DataError(f"cannot read scenario {ns.scenario}: {exc.strerror}")
        except json.JSONDecodeError as exc:
            raise DataError(f"{ns.scenario}: invalid JSON: {exc}")
        spec = scenario_from_dict(doc)
        if ns.seed is not None:
            spec = reseeded(spec, ns.seed)
    else:
        spec = default_scenario(rng_seed=ns.seed if ns.seed is not None else 0)
    try:
        origin = date.fromisoformat(ns.start_date)
    except ValueError:
        parser.error(f"--start-date must be an ISO date, got {ns.start_date!r}")
    panel, mobility, truth = simulate_panel(spec)
    window_days = min(14, panel.n_days)
    bundle = DatasetBundle(
        panel=panel,
        mobility=mobility,
        date_origin=origin,
        reference_window=(origin, origin + timedelta(days=window_days - 1)),
        demographics=synthetic_demographics(spec),
        demographic_names=("population", "density", "city_pct"),
    )
    save_bundle(bundle, out)
    truth = {key: value for key, value in truth.items() if key != "R"}
    with open(out / "truth.json", "w") as fh:
        json.dump(truth, fh, indent=1)
        fh.write("\n")
    print(f"wrote bundle to {out} ({panel.n_regions} regions, {panel.n_days} days, "
          f"{truth['total_cases']} cases)")
    return EX_OK


def cmd_evaluate(ns, parser) -> int:
    out = _outdir(ns)
    model, _meta = load_model(ns.model)
    bundle = load_bundle(BundlePaths.in_dir(ns.data), _bundle_options(ns))
    horizons = _parse_int_list(ns.horizons)
    delta = max(horizons)
    t_len = bundle.panel.n_days
    if t_len - delta < 1:
        parser.error(f"--horizons needs {delta} held-out days but the bundle has {t_len}")
    train_panel = bundle.panel.head_days(t_len - delta)
    train_mobility = bundle.mobility.head_days(t_len - delta)
    config = ForecastConfig(
        horizon=delta, replicates=ns.replicates, seed=ns.seed,
        covariate_policy=PROVIDED,
        future_covariates=bundle.panel.covariates[:, t_len - delta:, :],
        future_od=bundle.mobility.od[t_len - delta:],
    )
    result = forecast(model, train_panel, train_mobility, config)
    actual = bundle.panel.cases[:, t_len - delta:]
    records = []
    for region in bundle.panel.regions:
        for h in horizons:
            rmse, mae = score(actual[region.index, :h], result.point[region.index, :h])
            records.append(ScoreRecord(region=region.code, horizon=h, rmse=rmse, mae=mae))
    report = summarize(records)
    write_scores_csv(report, out / "scores.csv")
    _print_scores(report)
    return EX_OK


_COMMANDS = {
    "fit": cmd_fit,
    "tune": cmd_tune,
    "cv": cmd_cv,
    "forecast": cmd_forecast,
    "simulate": cmd_simulate,
    "evaluate": cmd_evaluate,
}


def main(argv=None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    ns = _resolve(ns, parser)
    _validate(ns, parser)
    try:
        return _COMMANDS[ns.command](ns, parser)
    except DataError as exc:
        print(f"hawkcast: data error: {exc}", file=sys.stderr)
        return EX_DATA
    except (EstimationError, NumericError, InsufficientDataError) as exc:
        print(f"hawkcast: estimation error: {exc}", file=sys.stderr)
        return EX_ESTIMATION
    except HawkcastError as exc:
        print(f"hawkcast: error: {exc}", file=sys.stderr)
        return EX_INTERNAL


if __name__ == "__main__":
    raise SystemExit(main())
