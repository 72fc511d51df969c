"""Pure numpy reference implementations of the hot numerical kernels."""

from __future__ import annotations

import numpy as np


def convolve_history(history: np.ndarray, phi: np.ndarray) -> np.ndarray:
    """out[i, t] = sum over l of phi[l - 1] * history[i, t - l], lags 1..len(phi)."""
    n, t_len = history.shape
    lags = phi.shape[0]
    out = np.zeros((n, t_len), dtype=np.float64)
    for l in range(1, min(lags, t_len - 1) + 1):
        out[:, l:] += phi[l - 1] * history[:, :-l]
    return out


def correlate_future(values: np.ndarray, phi: np.ndarray) -> np.ndarray:
    """out[i, t] = sum over l of phi[l - 1] * values[i, t + l], lags 1..len(phi)."""
    n, t_len = values.shape
    lags = phi.shape[0]
    out = np.zeros((n, t_len), dtype=np.float64)
    for l in range(1, min(lags, t_len - 1) + 1):
        out[:, :-l] += phi[l - 1] * values[:, l:]
    return out


def cd_sweep(X, weights, resid, theta, xi, denom, beta0):
    """One coordinate-descent sweep over the penalized weighted least squares.

    Minimizes (1/(2M)) sum_m w_m (resid_m)^2 + xi * l1(theta) in each coordinate,
    where resid tracks z - beta0 - X theta, then refits the unpenalized
    intercept. theta and resid are updated in place. Returns (beta0, max step).
    """
    m = X.shape[0]
    p = X.shape[1]
    max_step = 0.0
    wr = None
    for j in range(p):
        xj = X[:, j]
        if denom[j] <= 0.0:
            continue
        rho = (weights * xj) @ resid / m + denom[j] * theta[j]
        if rho > xi:
            new = (rho - xi) / denom[j]
        elif rho < -xi:
            new = (rho + xi) / denom[j]
        else:
            new = 0.0
        step = new - theta[j]
        if step != 0.0:
            resid -= step * xj
            theta[j] = new
            max_step = max(max_step, abs(step))
    w_sum = weights.sum()
    if w_sum > 0.0:
        shift = (weights @ resid) / w_sum
        if shift != 0.0:
            resid -= shift
            beta0 += shift
            max_step = max(max_step, abs(shift))
    return beta0, max_step
