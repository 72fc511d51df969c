"""CSV pipeline tests: loading, validation, covariate building, writers."""

import csv
import json
from datetime import date, timedelta

import numpy as np
import pytest

from hawkcast import EMConfig, ParameterError, discretize_gamma, fit_em
from hawkcast.data import (
    BundleOptions,
    BundlePaths,
    CASES_HEADER,
    OD_HEADER,
    REGIONS_HEADER,
    WEATHER_HEADER,
    WITHIN_HEADER,
    build_between_covariates,
    build_within_mobility_covariates,
    fmt,
    load_bundle,
    load_model,
    read_forecast_csv,
    save_bundle,
    save_model,
    write_band_csv,
    write_forecast_csv,
    write_scores_csv,
    write_tune_csv,
)
from hawkcast.errors import DataError

ORIGIN = date(2020, 3, 1)


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _study_days(n=10):
    return [ORIGIN + timedelta(days=k) for k in range(n)]


def _pre_days(n=14):
    return [ORIGIN - timedelta(days=n - k) for k in range(n)]


def write_fixture(directory, *, pre_window=True, drop_case=None,
                  skip_case_date=None, weather_gaps=(), od_missing_day=None,
                  two_categories=False, od_step=False):
    """A 2-region, 10-day bundle written from explicit dictionaries."""
    paths = BundlePaths.in_dir(directory)
    _write_csv(paths.regions, REGIONS_HEADER, [
        ("BE", "Bern", 100000, "250.5", "43.0"),
        ("ZH", "Zurich", 200000, "800.0", "60.0"),
    ])

    case_rows = []
    for k, day in enumerate(_study_days()):
        if skip_case_date is not None and day == skip_case_date:
            continue
        for code, count in (("BE", k + 1), ("ZH", 2 * k + 1)):
            if drop_case == (code, day):
                continue
            case_rows.append((day.isoformat(), code, count))
    _write_csv(paths.cases, CASES_HEADER, case_rows)

    within_rows = []
    categories = [("road", "commuter", {"BE": (200.0, 100.0), "ZH": (400.0, 400.0)})]
    if two_categories:
        categories.append(("rail", "leisure", {"BE": (50.0, 25.0), "ZH": (80.0, 120.0)}))
    days = (_pre_days() if pre_window else []) + _study_days()
    for day in days:
        in_study = day >= ORIGIN
        for mode, purpose, levels in categories:
            for code, (ref_level, study_level) in levels.items():
                trips = study_level if in_study else ref_level
                within_rows.append((day.isoformat(), code, mode, purpose, fmt(trips)))
    _write_csv(paths.mobility_within, WITHIN_HEADER, within_rows)

    od_rows = []
    for k, day in enumerate(_study_days()):
        if od_missing_day is not None and day == od_missing_day:
            continue
        be_zh = 30.0
        zh_be = 60.0 if (not od_step or k < 5) else 30.0
        od_rows.append((day.isoformat(), "BE", "ZH", fmt(be_zh)))
        od_rows.append((day.isoformat(), "ZH", "BE", fmt(zh_be)))
        od_rows.append((day.isoformat(), "BE", "BE", fmt(999.0)))  # ignored
    _write_csv(paths.mobility_od, OD_HEADER, od_rows)

    weather_rows = []
    for k, day in enumerate(_study_days()):
        for code, value in (("BE", 5.0 + 0.5 * k), ("ZH", 8.0 - 0.25 * k)):
            if (code, day) in weather_gaps:
                continue
            weather_rows.append((day.isoformat(), code, fmt(value)))
    _write_csv(paths.weather, WEATHER_HEADER, weather_rows)
    return paths


def test_load_bundle_with_pre_study_reference(tmp_path):
    paths = write_fixture(tmp_path)
    bundle = load_bundle(paths)
    panel = bundle.panel
    assert panel.cases.shape == (2, 10)
    assert [r.code for r in panel.regions] == ["BE", "ZH"]
    np.testing.assert_array_equal(panel.cases[0], np.arange(1, 11))
    assert bundle.date_origin == ORIGIN
    assert bundle.reference_window == (ORIGIN - timedelta(days=14),
                                       ORIGIN - timedelta(days=1))
    assert panel.covariate_names == ("within_road_commuter", "tmax_c")
    # BE dropped from 200 reference trips to 100; ZH held at 400.
    np.testing.assert_array_equal(panel.covariates[0, :, 0], 0.5)
    np.testing.assert_array_equal(panel.covariates[1, :, 0], 1.0)
    np.testing.assert_allclose(panel.covariates[0, :, 1],
                               5.0 + 0.5 * np.arange(10), atol=1e-12)
    assert bundle.mobility.od[3, 0, 1] == 30.0
    assert bundle.mobility.od[3, 1, 0] == 60.0
    assert bundle.mobility.od[3, 0, 0] == 0.0  # diagonal rows are ignored
    np.testing.assert_array_equal(panel.population, [100000, 200000])
    assert bundle.day_date(1) == ORIGIN
    assert bundle.day_date(10) == ORIGIN + timedelta(days=9)


def test_load_bundle_falls_back_to_in_study_window(tmp_path):
    paths = write_fixture(tmp_path, pre_window=False)
    bundle = load_bundle(paths)
    # Without full pre-study coverage the window is the first study days.
    assert bundle.reference_window == (ORIGIN, ORIGIN + timedelta(days=9))
    # Baselines now average the in-study trips, which are constant.
    np.testing.assert_array_equal(bundle.panel.covariates[0, :, 0], 1.0)


def test_multiple_categories_ratio_spreadsheet(tmp_path):
    paths = write_fixture(tmp_path, two_categories=True)
    bundle = load_bundle(paths)
    names = bundle.panel.covariate_names
    assert names == ("within_rail_leisure", "within_road_commuter", "tmax_c")
    assert bundle.mobility.within_labels == ("rail:leisure", "road:commuter")
    rail = names.index("within_rail_leisure")
    np.testing.assert_array_equal(bundle.panel.covariates[0, :, rail], 25.0 / 50.0)
    np.testing.assert_array_equal(bundle.panel.covariates[1, :, rail], 120.0 / 80.0)


def test_between_covariates_from_od(tmp_path):
    paths = write_fixture(tmp_path, pre_window=False, od_step=True)
    options = BundleOptions(between_covariates=True, include_weather=False)
    bundle = load_bundle(paths, options)
    names = bundle.panel.covariate_names
    assert names == ("within_road_commuter", "incoming_change")
    col = names.index("incoming_change")
    # BE's inbound trips: 60 for five days then 30, so the in-study baseline
    # is 45 and the ratios step from 4/3 to 2/3. ZH holds at 30/30.
    np.testing.assert_allclose(bundle.panel.covariates[0, :5, col], 60.0 / 45.0,
                               atol=1e-12)
    np.testing.assert_allclose(bundle.panel.covariates[0, 5:, col], 30.0 / 45.0,
                               atol=1e-12)
    np.testing.assert_allclose(bundle.panel.covariates[1, :, col], 1.0, atol=1e-12)


def test_between_covariates_brute_force(rng):
    t_len, n = 6, 4
    od = rng.uniform(0.0, 50.0, size=(t_len, n, n))
    baseline = rng.uniform(10.0, 60.0, size=n)
    cols, names = build_between_covariates(od, baseline)
    assert names == ("incoming_change",)
    for t in range(t_len):
        for j in range(n):
            inbound = sum(od[t, i, j] for i in range(n) if i != j)
            assert cols[j, t, 0] == pytest.approx(inbound / baseline[j], rel=1e-12)


def test_symmetric_od_gives_equal_between_columns():
    od = np.full((4, 2, 2), 25.0)
    cols, _ = build_between_covariates(od, np.array([25.0, 25.0]))
    np.testing.assert_array_equal(cols[0], cols[1])


def test_within_ratio_rescaling_invariance(rng):
    within = rng.uniform(50.0, 500.0, size=(3, 8, 2))
    baseline = rng.uniform(100.0, 300.0, size=(3, 2))
    ratios, _ = build_within_mobility_covariates(within, baseline,
                                                 ("a:b", "c:d"))
    scale = np.array([2.0, 0.5, 10.0])
    scaled, _ = build_within_mobility_covariates(
        within * scale[:, None, None], baseline * scale[:, None],
        ("a:b", "c:d"))
    np.testing.assert_allclose(scaled, ratios, rtol=1e-12)


def test_aggregate_within_sums_categories(rng):
    within = rng.uniform(50.0, 500.0, size=(2, 6, 3))
    baseline = rng.uniform(100.0, 300.0, size=(2, 3))
    cols, names = build_within_mobility_covariates(within, baseline,
                                                   ("a:b", "c:d", "e:f"),
                                                   aggregate=True)
    assert names == ("within_total",)
    want = within.sum(axis=2) / baseline.sum(axis=1)[:, None]
    np.testing.assert_allclose(cols[:, :, 0], want, rtol=1e-12)


def test_zero_baseline_rejected():
    with pytest.raises(DataError, match="zero baseline"):
        build_within_mobility_covariates(np.ones((1, 3, 1)), np.zeros((1, 1)),
                                         ("a:b",))
    with pytest.raises(DataError, match="zero baseline"):
        build_between_covariates(np.ones((3, 2, 2)), np.array([1.0, 0.0]))


def test_missing_case_cell_is_named(tmp_path):
    paths = write_fixture(tmp_path, drop_case=("ZH", ORIGIN + timedelta(days=4)))
    with pytest.raises(DataError, match="missing cell for region ZH on 2020-03-05"):
        load_bundle(paths)


def test_non_contiguous_dates_name_the_gap(tmp_path):
    paths = write_fixture(tmp_path, skip_case_date=ORIGIN + timedelta(days=6))
    with pytest.raises(DataError, match="missing date 2020-03-07"):
        load_bundle(paths)


def test_unknown_region_points_at_line(tmp_path):
    paths = write_fixture(tmp_path)
    with open(paths.cases, "a", newline="") as fh:
        csv.writer(fh).writerow(["2020-03-01", "GR", 5])
    with pytest.raises(DataError, match=r"cases\.csv:22: unknown region 'GR'"):
        load_bundle(paths)


def test_duplicate_case_row_rejected(tmp_path):
    paths = write_fixture(tmp_path)
    with open(paths.cases, "a", newline="") as fh:
        csv.writer(fh).writerow(["2020-03-01", "BE", 1])
    with pytest.raises(DataError, match="duplicate cell"):
        load_bundle(paths)


def test_header_and_missing_file_errors(tmp_path):
    paths = write_fixture(tmp_path)
    with open(paths.regions, "w") as fh:
        fh.write("region,population\nBE,1000\n")
    with pytest.raises(DataError, match="header must be"):
        load_bundle(paths)
    paths.regions.unlink()
    with pytest.raises(DataError, match="file not found"):
        load_bundle(paths)


def test_bad_counts_and_dates_are_located(tmp_path):
    paths = write_fixture(tmp_path)
    with open(paths.cases, "a", newline="") as fh:
        csv.writer(fh).writerow(["2020-03-99", "BE", 1])
    with pytest.raises(DataError, match=r"cases\.csv:22: invalid ISO date"):
        load_bundle(paths)
    paths = write_fixture(tmp_path)
    with open(paths.cases, "r+") as fh:
        text = fh.read().replace("2020-03-02,BE,2", "2020-03-02,BE,2.5")
        fh.seek(0)
        fh.write(text)
        fh.truncate()
    with pytest.raises(DataError, match="must be an integer"):
        load_bundle(paths)
    paths = write_fixture(tmp_path)
    with open(paths.cases, "r+") as fh:
        text = fh.read().replace("2020-03-02,BE,2", "2020-03-02,BE,-2")
        fh.seek(0)
        fh.write(text)
        fh.truncate()
    with pytest.raises(DataError, match="must be non-negative"):
        load_bundle(paths)


def test_duplicate_region_code(tmp_path):
    paths = write_fixture(tmp_path)
    with open(paths.regions, "a", newline="") as fh:
        csv.writer(fh).writerow(["BE", "Again", 5000, "1.0", "2.0"])
    with pytest.raises(DataError, match="duplicate region code"):
        load_bundle(paths)


def test_missing_od_day(tmp_path):
    paths = write_fixture(tmp_path, od_missing_day=ORIGIN + timedelta(days=2))
    with pytest.raises(DataError, match="no od rows for 2020-03-03"):
        load_bundle(paths)


def test_missing_within_grid_cell(tmp_path):
    paths = write_fixture(tmp_path)
    lines = paths.mobility_within.read_text().splitlines()
    target = f"{ORIGIN.isoformat()},BE,road,commuter"
    kept = [ln for ln in lines if not ln.startswith(target)]
    paths.mobility_within.write_text("\n".join(kept) + "\n")
    with pytest.raises(DataError, match="missing trips for region BE"):
        load_bundle(paths)


def test_weather_interpolation_fills_short_gaps(tmp_path):
    gaps = {("BE", ORIGIN + timedelta(days=3)), ("BE", ORIGIN + timedelta(days=4))}
    paths = write_fixture(tmp_path, weather_gaps=gaps)
    bundle = load_bundle(paths)
    col = bundle.panel.covariate_names.index("tmax_c")
    series = bundle.panel.covariates[0, :, col]
    left, right = 5.0 + 0.5 * 2, 5.0 + 0.5 * 5
    assert series[3] == pytest.approx(left + (right - left) / 3, abs=1e-12)
    assert series[4] == pytest.approx(left + 2 * (right - left) / 3, abs=1e-12)


def test_weather_gap_too_long_or_at_edge(tmp_path):
    gaps = {("BE", ORIGIN + timedelta(days=d)) for d in (3, 4, 5)}
    paths = write_fixture(tmp_path, weather_gaps=gaps)
    with pytest.raises(DataError, match="exceeds the 2-day interpolation limit"):
        load_bundle(paths)
    paths = write_fixture(tmp_path, weather_gaps={("ZH", ORIGIN)})
    with pytest.raises(DataError, match="no value to interpolate"):
        load_bundle(paths)


def test_bundle_options_validation():
    with pytest.raises(ParameterError, match="go together"):
        BundleOptions(reference_start=ORIGIN)
    with pytest.raises(ParameterError, match="end before"):
        BundleOptions(reference_start=ORIGIN, reference_end=ORIGIN - timedelta(days=1))
    with pytest.raises(ParameterError, match="at least 1"):
        BundleOptions(reference_days=0)


def test_reference_window_outside_study_rejected(tmp_path):
    paths = write_fixture(tmp_path)
    options = BundleOptions(reference_start=ORIGIN,
                            reference_end=ORIGIN + timedelta(days=30))
    with pytest.raises(DataError, match="extends past the study period"):
        load_bundle(paths, options)


def test_bundle_round_trip_exact(tmp_path):
    (tmp_path / "first").mkdir()
    paths = write_fixture(tmp_path / "first", pre_window=False)
    bundle = load_bundle(paths)
    out = save_bundle(bundle, tmp_path / "second")
    again = load_bundle(out)
    np.testing.assert_array_equal(again.panel.cases, bundle.panel.cases)
    np.testing.assert_array_equal(again.panel.covariates, bundle.panel.covariates)
    np.testing.assert_array_equal(again.mobility.od, bundle.mobility.od)
    np.testing.assert_array_equal(again.mobility.within, bundle.mobility.within)
    np.testing.assert_array_equal(again.demographics, bundle.demographics)
    assert again.panel.covariate_names == bundle.panel.covariate_names
    assert again.date_origin == bundle.date_origin
    assert again.reference_window == bundle.reference_window


def test_model_json_round_trip(tmp_path, rng):
    from conftest import random_panel
    panel = random_panel(rng, 2, 40, 1)
    kernel = discretize_gamma(5.807, 1.055)
    model = fit_em(panel, None, kernel, EMConfig(xi=0.5))
    path = tmp_path / "model.json"
    save_model(model, path, metadata={"command": "fit", "n_regions": 2})
    loaded, meta = load_model(path)
    assert loaded.mark.beta0 == model.mark.beta0
    np.testing.assert_array_equal(loaded.mark.theta, model.mark.theta)
    np.testing.assert_array_equal(loaded.mark.means, model.mark.means)
    np.testing.assert_array_equal(loaded.mark.sds, model.mark.sds)
    np.testing.assert_array_equal(loaded.kernel.probs, model.kernel.probs)
    np.testing.assert_array_equal(loaded.r_hat, model.r_hat)
    assert loaded.alpha == model.alpha
    assert loaded.xi == model.xi
    assert loaded.background == model.background
    assert loaded.iterations == model.iterations
    assert loaded.converged == model.converged
    assert meta == {"command": "fit", "n_regions": 2}


def test_model_schema_checked(tmp_path):
    path = tmp_path / "model.json"
    path.write_text(json.dumps({"schema": "other/9"}))
    with pytest.raises(DataError, match="unsupported model schema"):
        load_model(path)


def test_forecast_csv_round_trip(tmp_path, rng):
    from hawkcast import ForecastResult
    draws = rng.integers(0, 40, size=(3, 2, 4))
    result = ForecastResult(draws=draws, point=draws.mean(axis=0),
                            horizon=4, replicates=3, seed=0)
    path = tmp_path / "forecast.csv"
    write_forecast_csv(result, ["BE", "ZH"], ORIGIN, 10, path)
    table = read_forecast_csv(path)
    first_day = ORIGIN + timedelta(days=10)
    assert table[("BE", first_day)] == list(draws[:, 0, 0])
    assert table[("ZH", first_day + timedelta(days=3))] == list(draws[:, 1, 3])
    assert len(table) == 2 * 4


def test_band_csv_quantiles(tmp_path, rng):
    from hawkcast import ForecastResult
    draws = rng.integers(0, 100, size=(20, 1, 3))
    result = ForecastResult(draws=draws, point=draws.mean(axis=0),
                            horizon=3, replicates=20, seed=0)
    path = tmp_path / "band.csv"
    write_band_csv(result, ["BE"], ORIGIN, 10, path)
    with open(path) as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 3
    for d, row in enumerate(rows):
        assert float(row["point"]) == result.point[0, d]
        assert float(row["q10"]) == np.quantile(draws[:, 0, d], 0.1)
        assert float(row["q90"]) == np.quantile(draws[:, 0, d], 0.9)


def test_tune_and_scores_csv(tmp_path):
    from hawkcast import ScoreRecord, TuneResult, summarize
    tune_result = TuneResult(grid=((0.0, 0.0, 3.5), (0.5, 2.0, 2.25)),
                             best_alpha=0.5, best_xi=2.0, best_rmse=2.25)
    tune_path = tmp_path / "tune.csv"
    write_tune_csv(tune_result, tune_path)
    with open(tune_path) as fh:
        rows = list(csv.DictReader(fh))
    assert [float(r["cv_rmse"]) for r in rows] == [3.5, 2.25]

    report = summarize([ScoreRecord("BE", 7, 2.0, 1.0),
                        ScoreRecord("ZH", 7, 4.0, 3.0)])
    scores_path = tmp_path / "scores.csv"
    write_scores_csv(report, scores_path)
    with open(scores_path) as fh:
        rows = list(csv.DictReader(fh))
    assert rows[-1]["region"] == "__macro__"
    assert float(rows[-1]["rmse"]) == 3.0
    assert float(rows[-1]["mae"]) == 2.0


def test_fmt_round_trips_floats():
    for x in (0.1, 1.0 / 3.0, 2.0 ** -40, 12345.678901234567):
        assert float(fmt(x)) == x
