"""Synthetic instance generators.

Random streams are counter-based (Philox) and keyed by ``(seed, purpose)`` so
that, e.g., the design matrix of a trial does not change when the bug law
does.
"""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field

import numpy as np

from .conditions import OrthogonalDesign
from .core import CleanPool, ContaminatedPool, GroundTruth


def stream(seed: int, purpose: str) -> np.random.Generator:
    key = zlib.crc32(purpose.encode("utf-8"))
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(key,))
    return np.random.Generator(np.random.Philox(ss))


def bug_floor(n: int, sigma_star: float) -> float:
    """Smallest bug magnitude under the floor_uniform law: 20 sqrt(log 2n) sigma*."""
    return 20.0 * np.sqrt(np.log(2 * n)) * sigma_star


@dataclass(frozen=True)
class SynthSpec:
    n: int
    p: int
    t: int | None = None
    c_t: float | None = None
    sigma_star: float = 0.1
    design: str = "gaussian"  # gaussian | orthogonal | from_matrix
    bug_law: str = "floor_uniform"  # floor_uniform | constant
    bug_constant: float = 1.0
    beta_law: str = "uniform"  # uniform on [-1, 1] | normal
    seed: int = 0
    covariance: np.ndarray | None = field(default=None, compare=False)
    matrix: np.ndarray | None = field(default=None, compare=False)
    orthogonal: object | None = field(default=None, compare=False)  # OrthogonalDesign

    def __post_init__(self):
        if (self.t is None) == (self.c_t is None):
            raise ValueError("give exactly one of t and c_t")
        if self.n < 1 or self.p < 1:
            raise ValueError("n and p must be positive")
        if self.sigma_star < 0:
            raise ValueError("sigma_star must be nonnegative")
        if not 0 <= self.n_bugs <= self.n:
            raise ValueError(f"t = {self.n_bugs} outside [0, n]")
        if self.design not in ("gaussian", "orthogonal", "from_matrix"):
            raise ValueError(f"unknown design {self.design!r}")
        if self.bug_law not in ("floor_uniform", "constant"):
            raise ValueError(f"unknown bug law {self.bug_law!r}")
        if self.beta_law not in ("uniform", "normal"):
            raise ValueError(f"unknown beta law {self.beta_law!r}")
        if self.design == "from_matrix":
            if self.matrix is None or np.shape(self.matrix) != (self.n, self.p):
                raise ValueError("from_matrix design needs an n x p matrix")
        if self.design == "orthogonal":
            d = self.orthogonal
            if d is None or (d.n, d.p, d.t) != (self.n, self.p, self.n_bugs):
                raise ValueError("orthogonal design must match (n, p, t) = (t + p, p, len(r))")

    @property
    def n_bugs(self) -> int:
        if self.t is not None:
            return int(self.t)
        return int(round(self.c_t * self.n))


def sample_design(spec: SynthSpec) -> np.ndarray:
    if spec.design == "from_matrix":
        return np.array(spec.matrix, dtype=float)
    if spec.design == "orthogonal":
        return spec.orthogonal.design()
    rng = stream(spec.seed, "design")
    X = rng.standard_normal((spec.n, spec.p))
    if spec.covariance is not None:
        X = X @ np.linalg.cholesky(np.asarray(spec.covariance, dtype=float)).T
    return X


def sample_bugs(spec: SynthSpec) -> np.ndarray:
    n, t = spec.n, spec.n_bugs
    gamma = np.zeros(n)
    if t == 0:
        return gamma
    rng = stream(spec.seed, "bugs")
    if spec.design == "orthogonal":
        T = np.arange(t)  # bug rows are the r_i q_i rows
    else:
        T = np.sort(rng.choice(n, size=t, replace=False))
    if spec.bug_law == "constant":
        gamma[T] = spec.bug_constant
    else:
        u = rng.choice([-1.0, 1.0], size=t)
        v = bug_floor(n, spec.sigma_star) + rng.uniform(0.0, 10.0 * spec.sigma_star, size=t)
        gamma[T] = u * v
    return gamma


def generate(spec: SynthSpec) -> tuple[ContaminatedPool, GroundTruth]:
    """Draw ``y = X beta* + eps + gamma*`` according to ``spec``."""
    X = sample_design(spec)
    rng = stream(spec.seed, "beta")
    if spec.beta_law == "uniform":
        beta = rng.uniform(-1.0, 1.0, size=spec.p)
    else:
        beta = rng.standard_normal(spec.p)
    gamma = sample_bugs(spec)
    eps = spec.sigma_star * stream(spec.seed, "noise").standard_normal(spec.n)
    y = X @ beta + eps + gamma
    return ContaminatedPool(X, y), GroundTruth(beta, gamma, spec.sigma_star, eps=eps)


def generate_clean_pool(pool: ContaminatedPool, truth: GroundTruth, D, eta: float = 1.0,
                        noise_sigma: float = 0.0, L: float = 1.0, seed: int = 0) -> CleanPool:
    """Re-query rows D of the contaminated pool with trusted labels.

    Labels are ``X_D beta*`` plus optional N(0, noise_sigma^2 / L) noise.
    """
    D = np.asarray(list(D), dtype=int)
    if D.size == 0:
        return CleanPool.empty(pool.p)
    if np.any(D < 0) or np.any(D >= pool.n):
        raise ValueError("query indices out of range")
    Xc = pool.X[D]
    yc = Xc @ truth.beta_star
    if noise_sigma > 0:
        yc = yc + noise_sigma / np.sqrt(L) * stream(seed, "clean-noise").standard_normal(D.size)
    return CleanPool(Xc, yc, eta)


def random_orthogonal(p: int, rng: np.random.Generator) -> np.ndarray:
    A = rng.standard_normal((p, p))
    Q, R = np.linalg.qr(A)
    return Q * np.sign(np.diag(R))


def orthogonal_clean_pool(d, truth: GroundTruth, noise_sigma: float = 0.0, L: float = 1.0,
                          seed: int = 0) -> tuple[CleanPool, np.ndarray]:
    """Clean rows w_j q_j of an orthogonal design with labels x^T beta* + N(0, sigma^2 / L).

    Returns the pool and its noise vector.
    """
    Xc = d.clean_design()
    eps = np.zeros(Xc.shape[0])
    if noise_sigma > 0 and Xc.shape[0]:
        eps = noise_sigma / np.sqrt(L) * stream(seed, "clean-noise").standard_normal(Xc.shape[0])
    return CleanPool(Xc, Xc @ truth.beta_star + eps, d.eta if Xc.shape[0] else 0.0), eps


def random_orthogonal_design(p: int, t: int, seed: int, eta: float = 1.0, query_prob: float = 0.5,
                             w_B: float = 1.0):
    """Orthogonal design with random Q, r ~ U[-2, 2], f ~ U[0.5, 2] (random sign), w ~ U[0.5, 3]."""
    rng = stream(seed, "orthogonal")
    Q = random_orthogonal(p, rng)
    r = rng.uniform(-2.0, 2.0, t)
    f = rng.uniform(0.5, 2.0, p) * rng.choice([-1.0, 1.0], p)
    w = rng.uniform(0.5, 3.0, p) * (rng.random(p) < query_prob)
    return OrthogonalDesign(Q, r, f, w, eta, w_B)


def orthogonal_leaning_design(n: int, p: int, seed: int, noise: float = 0.1) -> np.ndarray:
    """Rows close to scaled coordinate axes, each axis used about n / p times.

    A stand-in for small real datasets whose rows nearly share directions.
    """
    rng = stream(seed, "orthogonal-leaning")
    dirs = rng.permutation(np.arange(n) % p)
    X = np.zeros((n, p))
    X[np.arange(n), dirs] = rng.uniform(0.5, 2.0, n)
    return X + noise * rng.standard_normal((n, p))
