"""Forecast scoring and the paired signed-rank test."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InsufficientDataError, ParameterError


def score(actual, predicted) -> tuple[float, float]:
    """(RMSE, MAE) of a point forecast against observed counts."""
    a = np.asarray(actual, dtype=np.float64).ravel()
    p = np.asarray(predicted, dtype=np.float64).ravel()
    if a.shape != p.shape:
        raise ParameterError(f"actual has shape {a.shape}, predicted {p.shape}")
    if a.size == 0:
        raise ParameterError("cannot score empty series")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(p))):
        raise ParameterError("scores need finite inputs")
    err = a - p
    return float(np.sqrt(np.mean(err * err))), float(np.mean(np.abs(err)))


@dataclass(frozen=True)
class ScoreRecord:
    region: str
    horizon: int
    rmse: float
    mae: float


@dataclass(frozen=True)
class ScoreReport:
    """Per-(region, horizon) cells plus their unweighted macro averages."""

    records: tuple[ScoreRecord, ...]
    macro_rmse: float
    macro_mae: float


def summarize(records) -> ScoreReport:
    records = tuple(records)
    if not records:
        raise ParameterError("cannot summarize an empty score list")
    return ScoreReport(
        records=records,
        macro_rmse=float(np.mean([r.rmse for r in records])),
        macro_mae=float(np.mean([r.mae for r in records])),
    )


def wilcoxon_signed_rank(a, b) -> tuple[float, float]:
    """Two-sided paired signed-rank test of a against b.

    Zero differences are dropped, ties get mid-ranks. The statistic is the
    smaller signed-rank sum. With 25 or fewer nonzero pairs the p-value comes
    from the exact permutation distribution (dynamic program over doubled
    ranks, which are integers even with ties); beyond that a normal
    approximation with continuity and tie corrections is used. Fewer than 6
    nonzero pairs cannot reach conventional significance and raise.
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ParameterError(f"paired samples differ in shape: {a.shape} vs {b.shape}")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
        raise ParameterError("signed-rank test needs finite inputs")
    diff = a - b
    diff = diff[diff != 0.0]
    n = diff.size
    if n < 6:
        raise InsufficientDataError(
            f"signed-rank test needs at least 6 nonzero differences, got {n}"
        )
    mag = np.abs(diff)
    order = np.argsort(mag, kind="stable")
    sorted_mag = mag[order]
    ranks = np.empty(n)
    i = 0
    while i < n:
        j = i
        while j + 1 < n and sorted_mag[j + 1] == sorted_mag[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1

    w_pos = float(ranks[diff > 0.0].sum())
    w_neg = float(ranks[diff < 0.0].sum())
    w = min(w_pos, w_neg)

    if n <= 25:
        ranks2 = np.rint(2.0 * ranks).astype(np.int64)
        total = int(ranks2.sum())
        counts = np.zeros(total + 1, dtype=np.float64)
        counts[0] = 1.0
        for r2 in ranks2:
            # right side copies first, so each rank is used at most once
            counts[r2:] = counts[r2:] + counts[: total + 1 - r2]
        w2 = int(round(2.0 * w))
        p = 2.0 * counts[: w2 + 1].sum() / (2.0 ** n)
        return w, min(p, 1.0)

    mean = n * (n + 1) / 4.0
    var = n * (n + 1) * (2 * n + 1) / 24.0
    _, tie_counts = np.unique(ranks, return_counts=True)
    var -= float(((tie_counts ** 3 - tie_counts) / 48.0).sum())
    if var <= 0.0:
        raise InsufficientDataError("all differences are tied; the test is degenerate")
    z = (w - mean + 0.5) / math.sqrt(var)
    p = math.erfc(-z / math.sqrt(2.0))  # = 2 * Phi(z), lower tail doubled
    return w, min(p, 1.0)
