import numpy as np
import pytest

from seqalloc import kernels
from seqalloc.prob import DemandModel, moment_match, project_to_correlation
from seqalloc.solver import Instance


@pytest.fixture(params=kernels.available())
def backend(request):
    return kernels.get(request.param)


def random_psd(rng, n, scale=1.0):
    a = rng.standard_normal((n, n))
    return scale * (a @ a.T) / n + 1e-3 * np.eye(n)


def random_instance(rng, T, correlated=True, budget_fraction=None):
    """Instance drawn from the default synthetic ranges; correlated ones use +/-0.7 signs."""
    means = rng.uniform(20, 100, T)
    stds = rng.uniform(10, 30, T)
    marg = [moment_match(m, s) for m, s in zip(means, stds)]
    mu = np.array([m.log_mean for m in marg])
    ls = np.array([m.log_std for m in marg])
    if correlated and T > 1:
        raw = np.where(rng.random((T, T)) < 0.5, -0.7, 0.7)
        raw = np.triu(raw, 1)
        raw = raw + raw.T + np.eye(T)
        corr = project_to_correlation(raw)
    else:
        corr = np.eye(T)
    sigma = corr * np.outer(ls, ls)
    frac = rng.uniform(0.3, 0.6) if budget_fraction is None else budget_fraction
    return Instance(rng.uniform(10, 100, T), frac * means.sum(), DemandModel(mu, sigma))
