"""Scoring and signed-rank test against hand arithmetic and enumeration."""

import itertools
import math

import numpy as np
import pytest
from scipy import stats

from hawkcast import (
    InsufficientDataError,
    ParameterError,
    ScoreRecord,
    score,
    summarize,
    wilcoxon_signed_rank,
)


def enumeration_pvalue(a, b):
    """Exact two-sided signed-rank p-value by listing all sign assignments."""
    diff = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    diff = diff[diff != 0.0]
    n = diff.size
    ranks = stats.rankdata(np.abs(diff))
    w_obs = min(ranks[diff > 0].sum(), ranks[diff < 0].sum())
    hits = 0
    for signs in itertools.product((0, 1), repeat=n):
        s = sum(r for r, flag in zip(ranks, signs) if flag)
        if s <= w_obs + 1e-12:
            hits += 1
    return min(1.0, 2.0 * hits / 2.0 ** n)


def test_score_identical_series():
    assert score([1, 2, 3], [1, 2, 3]) == (0.0, 0.0)


def test_score_hand_arithmetic():
    rmse, mae = score([0, 0], [3, 4])
    assert rmse == pytest.approx(math.sqrt(12.5), abs=1e-12)
    assert mae == pytest.approx(3.5, abs=1e-12)


def test_score_matches_plain_recomputation(rng):
    a = rng.normal(size=37)
    p = rng.normal(size=37)
    rmse, mae = score(a, p)
    sq = sum((x - y) ** 2 for x, y in zip(a, p)) / 37
    ab = sum(abs(x - y) for x, y in zip(a, p)) / 37
    assert rmse == pytest.approx(math.sqrt(sq), abs=1e-12)
    assert mae == pytest.approx(ab, abs=1e-12)


def test_rmse_dominates_mae(rng):
    for _ in range(20):
        a = rng.normal(size=15)
        p = rng.normal(size=15)
        rmse, mae = score(a, p)
        assert rmse >= mae - 1e-15


def test_score_scale_equivariance(rng):
    a = rng.normal(size=12)
    p = rng.normal(size=12)
    rmse, mae = score(a, p)
    rmse_c, mae_c = score(7.5 * a, 7.5 * p)
    assert rmse_c == pytest.approx(7.5 * rmse, rel=1e-12)
    assert mae_c == pytest.approx(7.5 * mae, rel=1e-12)


def test_score_validation():
    with pytest.raises(ParameterError):
        score([], [])
    with pytest.raises(ParameterError):
        score([1, 2], [1])
    with pytest.raises(ParameterError):
        score([1, float("nan")], [0, 0])


def test_summarize_macro_means():
    records = [
        ScoreRecord(region="A", horizon=7, rmse=2.0, mae=1.0),
        ScoreRecord(region="A", horizon=14, rmse=4.0, mae=3.0),
        ScoreRecord(region="B", horizon=7, rmse=6.0, mae=5.0),
    ]
    report = summarize(records)
    assert report.macro_rmse == pytest.approx(4.0, abs=1e-15)
    assert report.macro_mae == pytest.approx(3.0, abs=1e-15)
    assert report.records == tuple(records)
    with pytest.raises(ParameterError):
        summarize([])


def test_wilcoxon_identical_vectors_rejected():
    with pytest.raises(InsufficientDataError):
        wilcoxon_signed_rank([1.0] * 10, [1.0] * 10)


def test_wilcoxon_too_few_nonzero_pairs():
    a = [1.0, 2.0, 3.0, 4.0, 5.0, 7.0, 7.0, 7.0]
    b = [0.9, 1.9, 2.9, 3.9, 4.9, 7.0, 7.0, 7.0]
    with pytest.raises(InsufficientDataError, match="at least 6"):
        wilcoxon_signed_rank(a, b)


def test_wilcoxon_all_positive_extreme():
    a = np.arange(1.0, 11.0)
    b = np.zeros(10)
    w, p = wilcoxon_signed_rank(a, b)
    assert w == 0.0
    assert p == pytest.approx(2.0 / 1024.0, abs=1e-15)


def test_wilcoxon_matches_enumeration_oracle(rng):
    for n, round_to in ((8, None), (10, 1), (12, None), (12, 1)):
        d = rng.normal(size=n)
        if round_to is not None:
            d = np.round(d, round_to)  # manufactures tied magnitudes
            d[d == 0.0] = 0.3
        a = d + 0.0
        b = np.zeros(n)
        w, p = wilcoxon_signed_rank(a, b)
        assert p == pytest.approx(enumeration_pvalue(a, b), abs=1e-10)


def test_wilcoxon_drops_zero_differences(rng):
    d = rng.normal(size=9)
    a = np.concatenate([d, [5.0, 6.0]])
    b = np.concatenate([np.zeros(9), [5.0, 6.0]])
    w_full, p_full = wilcoxon_signed_rank(a, b)
    w_drop, p_drop = wilcoxon_signed_rank(d, np.zeros(9))
    assert w_full == w_drop
    assert p_full == p_drop


def test_wilcoxon_exact_matches_scipy_without_ties(rng):
    d = rng.normal(size=14)
    w, p = wilcoxon_signed_rank(d, np.zeros(14))
    ref = stats.wilcoxon(d, np.zeros(14), alternative="two-sided", method="exact")
    assert w == pytest.approx(float(ref.statistic), abs=1e-12)
    assert p == pytest.approx(float(ref.pvalue), abs=1e-10)


def test_wilcoxon_normal_approximation_large_n(rng):
    for _ in range(3):
        d = np.round(rng.normal(size=40), 1)
        d[d == 0.0] = 0.05
        w, p = wilcoxon_signed_rank(d, np.zeros(40))
        ref = stats.wilcoxon(d, np.zeros(40), alternative="two-sided",
                             method="approx", correction=True)
        assert w == pytest.approx(float(ref.statistic), abs=1e-12)
        assert p == pytest.approx(float(ref.pvalue), rel=1e-10)


def test_wilcoxon_rank_invariance(rng):
    d = rng.normal(size=11)
    a, b = d, np.zeros(11)
    transformed = np.sign(d) * np.abs(d) ** 1.7
    w1, p1 = wilcoxon_signed_rank(a, b)
    w2, p2 = wilcoxon_signed_rank(transformed, np.zeros(11))
    assert w1 == w2
    assert p1 == p2


def test_wilcoxon_validation():
    with pytest.raises(ParameterError, match="shape"):
        wilcoxon_signed_rank([1.0, 2.0], [1.0])
    with pytest.raises(ParameterError, match="finite"):
        wilcoxon_signed_rank([1.0, float("inf")] + [2.0] * 6, [0.0] * 8)
