"""Log-linear mark regression with an l1-penalized Poisson fit.

The mark R(x) = exp(beta0 + theta . x_std) scales the self-exciting intensity
by covariates observed at the receiving day. Responses are real-valued
inferred reproduction rates, so the fit maximizes a Poisson quasi-likelihood;
the objective is the negative mean log-likelihood plus xi * l1(theta), with
the intercept left unpenalized.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import _core
from .errors import EstimationError, ParameterError

# Linear predictors are clipped here before exponentiation. Far outside any
# sane reproduction rate; keeps degenerate EM inputs finite instead of
# overflowing to inf.
_ETA_MAX = 250.0


@dataclass(frozen=True)
class MarkModel:
    """Fitted mark regression on standardized covariates."""

    beta0: float
    theta: np.ndarray
    means: np.ndarray
    sds: np.ndarray
    covariate_names: tuple[str, ...] = ()

    def __post_init__(self):
        theta = np.ascontiguousarray(np.asarray(self.theta, dtype=np.float64))
        means = np.ascontiguousarray(np.asarray(self.means, dtype=np.float64))
        sds = np.ascontiguousarray(np.asarray(self.sds, dtype=np.float64))
        if theta.ndim != 1 or means.shape != theta.shape or sds.shape != theta.shape:
            raise ParameterError("theta, means and sds must be vectors of equal length")
        if theta.size and not (
            np.all(np.isfinite(theta)) and np.all(np.isfinite(means)) and np.all(np.isfinite(sds))
        ):
            raise ParameterError("mark parameters must be finite")
        if np.any(sds <= 0.0):
            raise ParameterError("standardization sds must be positive")
        if not math.isfinite(self.beta0):
            raise ParameterError("beta0 must be finite")
        for arr in (theta, means, sds):
            arr.setflags(write=False)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "sds", sds)
        object.__setattr__(self, "covariate_names", tuple(self.covariate_names))

    @property
    def n_covariates(self) -> int:
        return self.theta.shape[0]


@dataclass(frozen=True)
class MarkFitProblem:
    """Design matrix of standardized covariates, responses and the l1 weight."""

    X: np.ndarray
    r: np.ndarray
    xi: float
    means: np.ndarray | None = None
    sds: np.ndarray | None = None
    covariate_names: tuple[str, ...] = ()


def standardize(covariates: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Flatten an (N, T, p) covariate tensor to (N*T, p) columns with mean 0, sd 1.

    Rows are region-major: row i*T + t holds region i, day t+1. Sample sds use
    the n-1 denominator. A constant column cannot be standardized and raises.
    """
    cov = np.asarray(covariates, dtype=np.float64)
    if cov.ndim != 3:
        raise ParameterError(f"covariates must be 3-d (region, day, covariate), got {cov.shape}")
    n, t_len, p = cov.shape
    flat = cov.reshape(n * t_len, p)
    if p == 0:
        return flat.copy(), np.zeros(0), np.ones(0)
    if not np.all(np.isfinite(flat)):
        raise ParameterError("covariates must be finite")
    if flat.shape[0] < 2:
        raise ParameterError("standardization needs at least two region-days")
    means = flat.mean(axis=0)
    sds = flat.std(axis=0, ddof=1)
    bad = np.nonzero(sds <= 0.0)[0]
    if bad.size:
        raise EstimationError(f"covariate column {int(bad[0])} has zero variance")
    return (flat - means) / sds, means, sds


def _objective(eta: np.ndarray, r: np.ndarray, theta: np.ndarray, xi: float) -> float:
    mu = np.exp(np.minimum(eta, _ETA_MAX))
    return float(-(r @ eta - mu.sum()) / r.shape[0] + xi * np.abs(theta).sum())


def fit_poisson_lasso(problem: MarkFitProblem, tol: float = 1e-8, max_iter: int = 10000) -> MarkModel:
    """Minimize -(1/M) sum_m [r_m eta_m - exp(eta_m)] + xi * l1(theta).

    Coordinate descent on the usual quadratic (IRLS) approximation with
    soft-thresholding, plus a halving safeguard that keeps the exact penalized
    objective monotone. Converges when an outer step moves the parameter
    vector (intercept included) by less than tol in l1 norm.
    """
    X = np.ascontiguousarray(np.asarray(problem.X, dtype=np.float64))
    r = np.asarray(problem.r, dtype=np.float64)
    xi = float(problem.xi)
    if X.ndim != 2:
        raise ParameterError(f"X must be 2-d, got shape {X.shape}")
    if r.ndim != 1 or r.shape[0] != X.shape[0]:
        raise ParameterError(f"r has shape {r.shape}, X has {X.shape[0]} rows")
    if X.shape[0] == 0:
        raise ParameterError("cannot fit on an empty problem")
    if not np.all(np.isfinite(X)):
        raise ParameterError("X must be finite")
    if not np.all(np.isfinite(r)) or np.any(r < 0.0):
        raise ParameterError("responses must be finite and non-negative")
    if not math.isfinite(xi) or xi < 0.0:
        raise ParameterError(f"xi must be non-negative and finite, got {xi}")
    if tol <= 0.0 or max_iter < 1:
        raise ParameterError("tol must be positive and max_iter at least 1")

    m, p = X.shape
    mean_r = float(r.mean())
    if mean_r <= 0.0:
        raise EstimationError("all responses are zero; the Poisson mean has no finite optimum")

    beta0 = math.log(mean_r)
    theta = np.zeros(p)
    eta = np.full(m, beta0)
    obj = _objective(eta, r, theta, xi)

    for _ in range(max_iter):
        mu = np.exp(np.minimum(eta, _ETA_MAX))
        w = mu
        resid = (r - mu) / mu
        denom = (w @ (X * X)) / m if p else np.zeros(0)

        beta0_q = beta0
        theta_q = theta.copy()
        for _sweep in range(1000):
            beta0_q, step = _core.cd_sweep(X, w, resid, theta_q, xi, denom, beta0_q)
            if step < max(0.1 * tol, 1e-14):
                break

        d_beta0 = beta0_q - beta0
        d_theta = theta_q - theta
        scale = 1.0
        for _halving in range(60):
            cand_beta0 = beta0 + scale * d_beta0
            cand_theta = theta + scale * d_theta
            cand_eta = cand_beta0 + (X @ cand_theta if p else np.zeros(m))
            cand_obj = _objective(cand_eta, r, cand_theta, xi)
            if cand_obj <= obj:
                break
            scale *= 0.5
        else:
            break  # no descent direction left at float precision

        change = abs(scale * d_beta0) + float(np.abs(scale * d_theta).sum())
        beta0 = cand_beta0
        theta = cand_theta
        eta = cand_eta
        obj = cand_obj
        if change < tol:
            return _finish(problem, beta0, theta)
    else:
        raise EstimationError(
            f"mark fit did not converge in {max_iter} iterations "
            f"(last objective {obj:.6g}, last step {change:.3g})"
        )
    return _finish(problem, beta0, theta)


def _finish(problem: MarkFitProblem, beta0: float, theta: np.ndarray) -> MarkModel:
    p = theta.shape[0]
    means = problem.means if problem.means is not None else np.zeros(p)
    sds = problem.sds if problem.sds is not None else np.ones(p)
    return MarkModel(
        beta0=beta0,
        theta=theta,
        means=means,
        sds=sds,
        covariate_names=tuple(problem.covariate_names),
    )


def predict_R(model: MarkModel, x: np.ndarray) -> float:
    """Mark value for one raw covariate vector; strictly positive."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (model.n_covariates,):
        raise ParameterError(
            f"expected covariate vector of length {model.n_covariates}, got shape {x.shape}"
        )
    z = (x - model.means) / model.sds
    return float(np.exp(min(model.beta0 + z @ model.theta, _ETA_MAX)))


def response_matrix(model: MarkModel, covariates: np.ndarray) -> np.ndarray:
    """Mark values for a whole (N, T, p) covariate tensor, as an (N, T) matrix."""
    cov = np.asarray(covariates, dtype=np.float64)
    if cov.ndim != 3 or cov.shape[2] != model.n_covariates:
        raise ParameterError(
            f"covariates must be (N, T, {model.n_covariates}), got {cov.shape}"
        )
    z = (cov - model.means) / model.sds
    eta = model.beta0 + z @ model.theta
    return np.exp(np.minimum(eta, _ETA_MAX))
