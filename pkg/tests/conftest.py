import numpy as np
import pytest

from lassodebug.core import CleanPool, ContaminatedPool, DebugProblem


def random_problem(rng, n, p, m=0, eta=1.0, sigma=0.1, n_bugs=None, bug_scale=(1.0, 3.0)):
    """Gaussian two-pool problem with a few large label bugs."""
    X = rng.standard_normal((n, p))
    beta = rng.uniform(-1, 1, p)
    gamma = np.zeros(n)
    t = max(1, n // 10) if n_bugs is None else n_bugs
    T = rng.choice(n, size=t, replace=False)
    gamma[T] = rng.choice([-1.0, 1.0], t) * rng.uniform(*bug_scale, t)
    y = X @ beta + gamma + sigma * rng.standard_normal(n)
    if m:
        Xc = rng.standard_normal((m, p))
        clean = CleanPool(Xc, Xc @ beta + sigma * rng.standard_normal(m), eta)
    else:
        clean = None
    return DebugProblem(ContaminatedPool(X, y), clean), beta, gamma


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
