"""Probability machinery for jointly log-normal demand.

Demands are modelled as ``d = exp(y)`` with ``y ~ N(mu, sigma)``. Period
indices are zero-based throughout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
import scipy.linalg
from scipy.special import ndtr, ndtri

from seqalloc.errors import DomainError, FactorizationError, ValidationError

SYMMETRY_ATOL = 1e-10
PSD_ATOL = 1e-8
# relative to the mean diagonal of the matrix being factorized
JITTER_LADDER = (0.0, 1e-12, 1e-11, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6)


def std_normal_cdf(x):
    """Standard normal CDF. Accepts scalars or arrays."""
    out = ndtr(np.asarray(x, dtype=float))
    return float(out) if np.ndim(out) == 0 else out


def std_normal_quantile(p):
    """Inverse of :func:`std_normal_cdf` on the open interval (0, 1)."""
    arr = np.asarray(p, dtype=float)
    if np.any(~(arr > 0.0) | ~(arr < 1.0)):
        raise DomainError(f"normal quantile needs 0 < p < 1, got {p!r}")
    out = ndtri(arr)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class MarginalLogNormal:
    """One-dimensional log-normal: ``log d ~ N(log_mean, log_std**2)``."""

    log_mean: float
    log_std: float

    def __post_init__(self):
        if not (math.isfinite(self.log_mean) and math.isfinite(self.log_std)):
            raise DomainError("log-normal parameters must be finite")
        if not self.log_std > 0:
            raise DomainError(f"log_std must be positive, got {self.log_std}")

    @property
    def mean(self) -> float:
        return math.exp(self.log_mean + 0.5 * self.log_std**2)

    @property
    def std(self) -> float:
        s2 = self.log_std**2
        return self.mean * math.sqrt(math.expm1(s2))

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            z = (np.log(x) - self.log_mean) / self.log_std
        return np.where(x > 0, ndtr(z), 0.0)

    def survival(self, x):
        """P(d > x)."""
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            z = (np.log(x) - self.log_mean) / self.log_std
        return np.where(x > 0, ndtr(-z), 1.0)


def lognormal_quantile(m: MarginalLogNormal, y: float) -> float:
    """Quantile of ``m`` at level ``y``; level 0 maps to 0, the support infimum."""
    if not 0.0 <= y < 1.0:
        raise DomainError(f"log-normal quantile needs 0 <= y < 1, got {y!r}")
    if y == 0.0:
        return 0.0
    return math.exp(m.log_mean + m.log_std * float(ndtri(y)))


def moment_match(mean: float, std: float) -> MarginalLogNormal:
    """Log-normal whose mean and standard deviation equal ``mean`` and ``std``."""
    if not (mean > 0 and std > 0):
        raise DomainError(f"moment matching needs mean > 0 and std > 0, got {mean}, {std}")
    var_log = math.log1p((std / mean) ** 2)
    return MarginalLogNormal(math.log(mean) - 0.5 * var_log, math.sqrt(var_log))


def expected_min_arrays(log_mean, log_std, a):
    """Vectorized ``E[min(d, a)]`` for log-normal ``d``.

    Uses the partial-expectation closed form
    ``E[d; d <= a] + a * P(d > a)``. Entries with ``a == 0`` give 0 and
    ``a == inf`` gives the log-normal mean.
    """
    log_mean, log_std, a = np.broadcast_arrays(
        np.asarray(log_mean, float), np.asarray(log_std, float), np.asarray(a, float)
    )
    out = np.zeros(a.shape)
    pos = a > 0
    if not np.any(pos):
        return out
    mu, s, av = log_mean[pos], log_std[pos], a[pos]
    mean = np.exp(mu + 0.5 * s * s)
    finite = np.isfinite(av)
    a_fin = np.where(finite, av, 1.0)
    z = np.where(finite, (np.log(a_fin) - mu) / s, np.inf)
    tail = np.where(finite, a_fin * ndtr(-z), 0.0)
    out[pos] = mean * ndtr(z - s) + tail
    return out


def expected_min(m: MarginalLogNormal, a: float) -> float:
    """``E[min(d, a)]`` for ``d ~ m``; nondecreasing and concave in ``a``."""
    if a < 0:
        raise DomainError(f"allocation must be nonnegative, got {a}")
    return float(expected_min_arrays(m.log_mean, m.log_std, a))


def jittered_cholesky(a: np.ndarray) -> tuple[np.ndarray, float]:
    """Lower Cholesky factor of ``a + jitter * I``.

    The jitter walks ``JITTER_LADDER`` scaled by the mean diagonal until the
    factorization succeeds. Returns ``(factor, jitter)``.
    """
    a = np.asarray(a, dtype=float)
    a = 0.5 * (a + a.T)
    n = a.shape[0]
    if n == 0:
        return np.zeros((0, 0)), 0.0
    scale = float(np.mean(np.diag(a)))
    if scale <= 0.0 and not np.any(a):
        return np.zeros_like(a), 0.0
    scale = scale if scale > 0 else 1.0
    eye = np.eye(n)
    for rel in JITTER_LADDER:
        jitter = rel * scale
        try:
            return np.linalg.cholesky(a + jitter * eye), jitter
        except np.linalg.LinAlgError:
            continue
    min_eig = float(np.linalg.eigvalsh(a)[0])
    raise FactorizationError(
        f"covariance of size {n} is not positive semi-definite enough to factorize "
        f"(smallest eigenvalue {min_eig:.3e}, max jitter {JITTER_LADDER[-1] * scale:.3e})"
    )


@dataclass(frozen=True, eq=False)
class DemandModel:
    """Joint log-normal demand: ``log d ~ N(mu, sigma)``."""

    mu: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        mu = np.array(self.mu, dtype=float).reshape(-1)
        sigma = np.array(self.sigma, dtype=float)
        if mu.size < 1:
            raise ValidationError("need at least one period", "mu")
        if sigma.shape != (mu.size, mu.size):
            raise ValidationError(
                f"expected shape {(mu.size, mu.size)}, got {sigma.shape}", "sigma"
            )
        if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(sigma))):
            raise ValidationError("entries must be finite", "sigma")
        if not np.allclose(sigma, sigma.T, rtol=0.0, atol=SYMMETRY_ATOL):
            raise ValidationError("matrix is not symmetric", "sigma")
        if mu.size > 0:
            min_eig = float(np.linalg.eigvalsh(0.5 * (sigma + sigma.T))[0])
            if min_eig < -PSD_ATOL:
                raise ValidationError(
                    f"matrix is not positive semi-definite (min eigenvalue {min_eig:.3e})",
                    "sigma",
                )
        mu.setflags(write=False)
        sigma.setflags(write=False)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)

    @property
    def horizon(self) -> int:
        return self.mu.size

    @property
    def log_means(self) -> np.ndarray:
        return self.mu

    @cached_property
    def log_stds(self) -> np.ndarray:
        out = np.sqrt(np.clip(np.diag(self.sigma), 0.0, None))
        out.setflags(write=False)
        return out

    def marginal(self, t: int) -> MarginalLogNormal:
        return MarginalLogNormal(float(self.mu[t]), float(self.log_stds[t]))

    @cached_property
    def _factor(self) -> tuple[np.ndarray, float]:
        chol, jitter = jittered_cholesky(self.sigma)
        chol.setflags(write=False)
        return chol, jitter

    @property
    def cholesky(self) -> np.ndarray:
        """Lower factor of ``sigma + jitter * I`` shared by sampling and conditioning."""
        return self._factor[0]

    @property
    def jitter(self) -> float:
        return self._factor[1]

    def is_independent(self) -> bool:
        return not np.any(self.sigma - np.diag(np.diag(self.sigma)))


@dataclass(frozen=True, eq=False)
class ConditionalModel(DemandModel):
    """Distribution of the unobserved periods given observed ones.

    ``remaining`` lists the original period indices, in order, that the
    rows of ``mu``/``sigma`` refer to.
    """

    remaining: tuple[int, ...] = field(default=())

    @property
    def cond_mu(self) -> np.ndarray:
        return self.mu

    @property
    def cond_sigma(self) -> np.ndarray:
        return self.sigma


def condition(model: DemandModel, observed: Iterable[tuple[int, float]]) -> ConditionalModel:
    """Condition ``model`` on observed demands.

    Args:
        model: joint demand model over ``T`` periods.
        observed: ``(period, demand)`` pairs with distinct zero-based periods
            and positive demand values.

    Returns:
        The Gaussian conditional of the remaining log demands, i.e.
        ``mu_R + S_RO S_OO^-1 (log x_O - mu_O)`` and
        ``S_RR - S_RO S_OO^-1 S_OR``. ``S_OO`` is factorized with the jitter
        ladder, so near-singular histories never abort.
    """
    pairs = list(observed)
    T = model.horizon
    idx = [int(i) for i, _ in pairs]
    vals = np.array([float(v) for _, v in pairs], dtype=float)
    if len(set(idx)) != len(idx):
        raise DomainError("observed periods must be distinct")
    if any(i < 0 or i >= T for i in idx):
        raise DomainError(f"observed period out of range 0..{T - 1}")
    if np.any(~(vals > 0)):
        raise DomainError("observed demands must be positive")
    obs = np.array(sorted(idx), dtype=int)
    order = np.argsort(idx, kind="stable")
    log_x = np.log(vals[order]) if len(idx) else np.zeros(0)
    rem = np.array([t for t in range(T) if t not in set(idx)], dtype=int)
    if rem.size == 0:
        raise DomainError("at least one period must remain unobserved")

    mu, sigma = model.mu, model.sigma
    if obs.size == 0:
        return ConditionalModel(mu.copy(), sigma.copy(), remaining=tuple(rem.tolist()))
    s_oo = sigma[np.ix_(obs, obs)]
    s_ro = sigma[np.ix_(rem, obs)]
    chol, _ = jittered_cholesky(s_oo)
    if not np.any(chol):
        # degenerate observed block: observations carry no information
        gain_resid = np.zeros(rem.size)
        shrink = np.zeros((rem.size, rem.size))
    else:
        factor = (chol, True)
        gain_resid = s_ro @ scipy.linalg.cho_solve(factor, log_x - mu[obs])
        shrink = s_ro @ scipy.linalg.cho_solve(factor, s_ro.T)
    cond_mu = mu[rem] + gain_resid
    cond_sigma = sigma[np.ix_(rem, rem)] - shrink
    cond_sigma = 0.5 * (cond_sigma + cond_sigma.T)
    # rounding can push tiny conditional variances below zero
    eig_floor = float(np.linalg.eigvalsh(cond_sigma)[0]) if rem.size else 0.0
    if eig_floor < 0:
        cond_sigma = cond_sigma + (-eig_floor) * np.eye(rem.size)
    return ConditionalModel(cond_mu, cond_sigma, remaining=tuple(rem.tolist()))


def project_to_correlation(raw: np.ndarray) -> np.ndarray:
    """Project a unit-diagonal symmetric matrix onto correlation matrices.

    Negative eigenvalues are clipped to zero and the diagonal is restored to
    one by ``D^-1/2 A D^-1/2``. PSD input is returned unchanged.
    """
    raw = np.asarray(raw, dtype=float)
    if raw.ndim != 2 or raw.shape[0] != raw.shape[1]:
        raise ValidationError("expected a square matrix", "correlation")
    sym = 0.5 * (raw + raw.T)
    vals, vecs = np.linalg.eigh(sym)
    if vals[0] >= 0.0:
        return sym
    clipped = (vecs * np.clip(vals, 0.0, None)) @ vecs.T
    d = np.sqrt(np.diag(clipped))
    out = clipped / np.outer(d, d)
    out = 0.5 * (out + out.T)
    np.fill_diagonal(out, 1.0)
    return out


def covariance_from_correlation(corr: np.ndarray, stds: Sequence[float]) -> np.ndarray:
    s = np.asarray(stds, dtype=float)
    cov = corr * np.outer(s, s)
    return 0.5 * (cov + cov.T)


def sample_paths(model: DemandModel, n: int, seed) -> np.ndarray:
    """Draw ``n`` demand paths; returns an ``(n, T)`` array of positive values.

    ``seed`` is anything :func:`numpy.random.default_rng` accepts.
    """
    if n < 1:
        raise DomainError(f"need n >= 1 paths, got {n}")
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((n, model.horizon))
    return np.exp(model.mu + z @ model.cholesky.T)
