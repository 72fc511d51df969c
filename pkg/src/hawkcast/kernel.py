"""Discretized Gamma lag kernel and the incomplete-gamma machinery behind it.

The transmission-delay distribution is a Gamma law binned to whole days: the
weight of lag l is the CDF mass of the interval (l - 0.5, l + 0.5], with the
first bin absorbing everything below 1.5 days. Weights are truncated at a
maximum lag and, by default, renormalized to sum to one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NumericError, ParameterError

_REL_TOL = 1e-12
_MAX_TERMS = 500


def _lower_series(a: float, y: float) -> float:
    """P(a, y) by the ascending series; reliable for y < a + 1."""
    term = 1.0 / a
    total = term
    denom = a
    for _ in range(_MAX_TERMS):
        denom += 1.0
        term *= y / denom
        total += term
        if abs(term) < abs(total) * _REL_TOL:
            return total * math.exp(-y + a * math.log(y) - math.lgamma(a))
    raise NumericError(f"incomplete gamma series failed to converge (a={a}, y={y})")


def _upper_cf(a: float, y: float) -> float:
    """Q(a, y) by the modified Lentz continued fraction; reliable for y >= a + 1."""
    tiny = 1e-300
    b = y + 1.0 - a
    c = 1.0 / tiny
    d = 1.0 / b if b != 0.0 else 1.0 / tiny
    h = d
    for i in range(1, _MAX_TERMS + 1):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < tiny:
            d = tiny
        c = b + an / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _REL_TOL:
            return h * math.exp(-y + a * math.log(y) - math.lgamma(a))
    raise NumericError(f"incomplete gamma continued fraction failed to converge (a={a}, y={y})")


def gamma_cdf(x: float, shape: float, scale: float = 1.0) -> float:
    """Regularized lower incomplete gamma, i.e. the Gamma(shape, scale) CDF at x.

    Uses the ascending series below the y = shape + 1 crossover and the Lentz
    continued fraction above it, both iterated to 1e-12 relative tolerance.
    """
    if not (math.isfinite(shape) and shape > 0.0):
        raise ParameterError(f"shape must be positive and finite, got {shape}")
    if not (math.isfinite(scale) and scale > 0.0):
        raise ParameterError(f"scale must be positive and finite, got {scale}")
    if math.isnan(x):
        raise ParameterError("x must not be NaN")
    if x < 0.0:
        raise ParameterError(f"gamma CDF is undefined for x < 0, got {x}")
    if x == 0.0:
        return 0.0
    if math.isinf(x):
        return 1.0
    y = x / scale
    if y < shape + 1.0:
        return min(_lower_series(shape, y), 1.0)
    return max(1.0 - _upper_cf(shape, y), 0.0)


@dataclass(frozen=True)
class Kernel:
    """Truncated daily lag distribution. probs[l - 1] is the weight of lag l."""

    probs: np.ndarray
    shape: float
    scale: float
    renormalized: bool

    def __post_init__(self):
        probs = np.asarray(self.probs, dtype=np.float64)
        if probs.ndim != 1 or probs.shape[0] < 2:
            raise ParameterError("kernel needs at least two lag weights")
        if not np.all(np.isfinite(probs)) or np.any(probs < 0.0):
            raise ParameterError("kernel weights must be finite and non-negative")
        probs.setflags(write=False)
        object.__setattr__(self, "probs", probs)

    @property
    def lags(self) -> int:
        return int(self.probs.shape[0])

    def phi(self, lag: int) -> float:
        """Weight of an integer lag; zero outside 1..lags."""
        if lag < 1 or lag > self.lags:
            return 0.0
        return float(self.probs[lag - 1])

    def mass(self) -> float:
        return float(self.probs.sum())


def discretize_gamma(shape: float, scale: float, lags: int = 30, renormalize: bool = True) -> Kernel:
    """Bin a Gamma(shape, scale) density to integer lags 1..lags.

    The first bin takes F(1.5), each later lag l takes F(l + 0.5) - F(l - 0.5),
    so the truncated weights sum to F(lags + 0.5) exactly. With renormalize the
    weights are rescaled to a proper distribution; without it the truncation
    must already cover all but 1e-6 of the mass, otherwise downstream intensity
    sums would be silently biased and a ParameterError is raised instead.
    """
    if not isinstance(lags, (int, np.integer)) or isinstance(lags, bool):
        raise ParameterError(f"lags must be an integer, got {lags!r}")
    if lags < 2:
        raise ParameterError(f"lags must be at least 2, got {lags}")
    cdf = np.array([gamma_cdf(l + 0.5, shape, scale) for l in range(1, lags + 1)])
    probs = np.empty(lags, dtype=np.float64)
    probs[0] = cdf[0]
    probs[1:] = np.diff(cdf)
    np.clip(probs, 0.0, None, out=probs)
    if renormalize:
        total = probs.sum()
        if total <= 0.0:
            raise ParameterError("kernel truncation captured no probability mass")
        probs = probs / total
    elif probs.sum() < 1.0 - 1e-6:
        raise ParameterError(
            "truncated kernel keeps less than 1 - 1e-6 of the mass; "
            "increase lags or enable renormalization"
        )
    return Kernel(probs=probs, shape=float(shape), scale=float(scale), renormalized=bool(renormalize))
