"""Pure NumPy implementation of the hot loops.

Mirrors ``_ckernels.pyx`` function for function; used when the compiled
extension is unavailable or ``SEQALLOC_BACKEND=python`` is set.
"""

import math

import numpy as np
from scipy.special import ndtri

NAME = "python"


def n_iterations(max_price, eps):
    return max(1, math.ceil(math.log2(max_price / eps)))


def alloc_from_dual(prices, log_mean, log_std, nu):
    """Quantile allocation at dual value ``nu``; ``nu == 0`` yields ``inf``."""
    prices = np.asarray(prices, dtype=float)
    out = np.zeros(prices.shape[0])
    active = nu < prices
    if np.any(active):
        level = 1.0 - nu / prices[active]
        out[active] = np.exp(log_mean[active] + log_std[active] * ndtri(level))
    return out


def bisect(prices, log_mean, log_std, limit, n_iter):
    """Bisection on the budget dual; returns ``(alloc, dual)``.

    The final allocation interpolates between the bracket endpoints so that
    it sums to ``limit`` exactly.
    """
    lo = 0.0
    hi = float(np.max(prices))
    for _ in range(n_iter):
        mid = 0.5 * (lo + hi)
        if alloc_from_dual(prices, log_mean, log_std, mid).sum() >= limit:
            lo = mid
        else:
            hi = mid
    return _terminal(prices, log_mean, log_std, limit, lo, hi), 0.5 * (lo + hi)


def _terminal(prices, log_mean, log_std, limit, lo, hi):
    a_hi = alloc_from_dual(prices, log_mean, log_std, hi)
    s_hi = a_hi.sum()
    if lo > 0.0:
        a_lo = alloc_from_dual(prices, log_mean, log_std, lo)
        s_lo = a_lo.sum()
        if np.isfinite(s_lo) and s_lo > s_hi:
            theta = (limit - s_hi) / (s_lo - s_hi)
            return a_hi + theta * (a_lo - a_hi)
        if np.isfinite(s_lo) and s_hi == 0.0:
            return a_lo * (limit / s_lo)
    if s_hi > 0.0:
        # budget exceeds every finite quantile sum in the bracket
        return a_hi * (limit / s_hi)
    return np.full(prices.shape[0], limit / prices.shape[0])


def sequential_episode(prices, mu, chol, limit, log_path, eps):
    """Shrinking-horizon allocations along one realized log-demand path.

    The prefix-conditional of ``N(mu, chol @ chol.T)`` is tracked through
    the Cholesky factor: observing period ``j`` fixes the innovation
    ``z_j = (y_j - m_j) / chol[j, j]``, which shifts every later conditional
    mean by ``chol[t, j] * z_j`` and removes ``chol[t, j]**2`` from its
    variance.
    """
    prices = np.asarray(prices, dtype=float)
    T = prices.shape[0]
    m = np.array(mu, dtype=float)
    var = np.einsum("ij,ij->i", chol, chol)
    alloc = np.zeros(T)
    remaining = float(limit)
    for tau in range(T):
        if tau > 0:
            j = tau - 1
            pivot = chol[j, j]
            z = (log_path[j] - m[j]) / pivot if pivot > 0.0 else 0.0
            col = chol[tau:, j]
            m[tau:] += col * z
            var[tau:] -= col * col
        if remaining <= 0.0:
            continue
        if tau == T - 1:
            a = remaining
        else:
            p = prices[tau:]
            std = np.sqrt(np.maximum(var[tau:], 0.0))
            plan, _ = bisect(p, m[tau:], std, remaining, n_iterations(p.max(), eps))
            a = min(plan[0], remaining)
        alloc[tau] = a
        remaining -= a
    return alloc
