"""Data model for contaminated linear regression with an optional clean pool.

The contaminated pool follows ``y = X beta + gamma + eps`` where ``gamma`` is
sparse (the bugs).  An optional clean pool ``(X_clean, y_clean)`` is trusted and
enters the objective with weight ``eta``.  Everything downstream works on the
stacked system

    X' = [X; sqrt(eta n / m) X_clean],   y' = [y; sqrt(eta n / m) y_clean]

and the residual projector ``P_perp = I - X'(X'^T X')^{-1} X'^T``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import SingularDesign

COND_MAX = 1e12
TOL_PROJ = 1e-8


def _frozen(a, ndim):
    arr = np.array(a, dtype=float, copy=True)
    if arr.ndim != ndim:
        if ndim == 2 and arr.ndim == 1 and arr.size == 0:
            arr = arr.reshape(0, 0)
        else:
            raise ValueError(f"expected a {ndim}-d array, got shape {arr.shape}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ContaminatedPool:
    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = _frozen(self.X, 2)
        y = _frozen(self.y, 1)
        if X.shape[0] < 1 or X.shape[1] < 1:
            raise ValueError("contaminated pool needs n >= 1 and p >= 1")
        if y.shape[0] != X.shape[0]:
            raise ValueError(f"X has {X.shape[0]} rows but y has {y.shape[0]} entries")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise ValueError("contaminated pool contains non-finite values")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True)
class CleanPool:
    X: np.ndarray
    y: np.ndarray
    eta: float = 1.0

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.size == 0:
            p = X.shape[1] if X.ndim == 2 else 0
            X = np.zeros((0, p))
        X = _frozen(X, 2)
        y = _frozen(np.asarray(self.y, dtype=float).reshape(-1), 1)
        if y.shape[0] != X.shape[0]:
            raise ValueError(f"clean X has {X.shape[0]} rows but y has {y.shape[0]} entries")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise ValueError("clean pool contains non-finite values")
        if not np.isfinite(self.eta) or self.eta < 0:
            raise ValueError(f"eta must be a finite nonnegative number, got {self.eta}")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "eta", float(self.eta))

    @property
    def m(self) -> int:
        return self.X.shape[0]

    @classmethod
    def empty(cls, p: int) -> "CleanPool":
        return cls(np.zeros((0, p)), np.zeros(0), 0.0)


@dataclass(frozen=True)
class GroundTruth:
    """Generator-side truth.  Estimators never look at this."""

    beta_star: np.ndarray
    gamma_star: np.ndarray
    noise_sigma: float = 0.0
    eps: np.ndarray | None = None
    eps_clean: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "beta_star", _frozen(self.beta_star, 1))
        object.__setattr__(self, "gamma_star", _frozen(self.gamma_star, 1))
        if self.eps is not None:
            object.__setattr__(self, "eps", _frozen(self.eps, 1))
        if self.eps_clean is not None:
            object.__setattr__(self, "eps_clean", _frozen(self.eps_clean, 1))
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be nonnegative")

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.gamma_star)

    @property
    def t(self) -> int:
        return int(np.count_nonzero(self.gamma_star))


@dataclass(frozen=True)
class DebugProblem:
    contaminated: ContaminatedPool
    clean: CleanPool | None = None

    def __post_init__(self):
        if self.clean is None:
            object.__setattr__(self, "clean", CleanPool.empty(self.contaminated.p))
        elif self.clean.m and self.clean.X.shape[1] != self.contaminated.p:
            raise ValueError("clean and contaminated pools disagree on the number of features")

    @property
    def n(self) -> int:
        return self.contaminated.n

    @property
    def p(self) -> int:
        return self.contaminated.p

    @property
    def m(self) -> int:
        return self.clean.m

    @property
    def eta(self) -> float:
        return self.clean.eta

    @property
    def two_pool(self) -> bool:
        return self.clean.m > 0 and self.clean.eta > 0

    @property
    def weight(self) -> float:
        """The row scaling factor eta * n / m (0 on the one-pool path)."""
        return self.eta * self.n / self.m if self.two_pool else 0.0

    def stacked(self) -> "StackedSystem":
        return build_stacked(self.contaminated, self.clean)


@dataclass(frozen=True, eq=False)
class StackedSystem:
    """Stacked design plus an orthonormal basis of its column space.

    ``basis`` is an (n+m) x p matrix with orthonormal columns spanning
    col(X').  The dense projectors ``P_perp`` and ``P_bar`` are derived from it
    on first access; solvers only ever touch ``basis`` so that n in the tens
    of thousands stays cheap.
    """

    X_prime: np.ndarray
    y_prime: np.ndarray
    n: int
    m: int
    eta: float
    basis: np.ndarray
    singular_values: np.ndarray
    right_vectors: np.ndarray = field(repr=False)

    @property
    def p(self) -> int:
        return self.X_prime.shape[1]

    @property
    def weight(self) -> float:
        return self.eta * self.n / self.m if self.m else 0.0

    @cached_property
    def P_perp(self) -> np.ndarray:
        Q = self.basis
        P = np.eye(Q.shape[0]) - Q @ Q.T
        P = 0.5 * (P + P.T)
        P.setflags(write=False)
        return P

    @property
    def P_bar(self) -> np.ndarray:
        return self.P_perp[:, : self.n]

    @cached_property
    def basis_top(self) -> np.ndarray:
        """First n rows of the basis: P_bar^T P_bar = I - basis_top basis_top^T."""
        return np.ascontiguousarray(self.basis[: self.n])

    def project_out(self, v: np.ndarray) -> np.ndarray:
        """P_perp @ v without forming P_perp."""
        Q = self.basis
        return v - Q @ (Q.T @ v)

    @cached_property
    def residual(self) -> np.ndarray:
        """P_perp y'."""
        r = self.project_out(self.y_prime)
        r.setflags(write=False)
        return r

    @cached_property
    def lasso_rhs(self) -> np.ndarray:
        """P_bar^T P_perp y' (= first n entries of P_perp y')."""
        b = np.array(self.residual[: self.n])
        b.setflags(write=False)
        return b

    def gram_apply(self, gamma: np.ndarray) -> np.ndarray:
        """P_bar^T P_bar @ gamma."""
        Qn = self.basis_top
        return gamma - Qn @ (Qn.T @ gamma)

    def leverage(self) -> np.ndarray:
        """Diagonal of the hat matrix restricted to the first n rows."""
        return np.einsum("ij,ij->i", self.basis_top, self.basis_top)

    def solve_beta(self, gamma: np.ndarray) -> np.ndarray:
        """(X'^T X')^{-1} X'^T (y' - [gamma; 0])."""
        v = np.array(self.y_prime, copy=True)
        v[: self.n] -= gamma
        coef = (self.basis.T @ v) / self.singular_values
        return self.right_vectors.T @ coef


def _orthonormal_basis(A: np.ndarray):
    if A.shape[0] < A.shape[1]:
        raise SingularDesign(f"design has {A.shape[0]} rows < {A.shape[1]} columns")
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    if s.size == 0 or s[-1] <= 0 or (s[0] / s[-1]) ** 2 > COND_MAX:
        cond = np.inf if s.size == 0 or s[-1] <= 0 else (s[0] / s[-1]) ** 2
        raise SingularDesign(f"gram matrix condition number {cond:.3g} exceeds {COND_MAX:.0e}")
    return U, s, Vt


def build_stacked(contaminated: ContaminatedPool, clean: CleanPool | None = None) -> StackedSystem:
    """Stack both pools and compute the column-space basis of X'.

    With ``clean`` empty or ``clean.eta == 0`` this is the one-pool system over
    X alone (m = 0).
    """
    X, y = contaminated.X, contaminated.y
    n = X.shape[0]
    if clean is None or clean.m == 0 or clean.eta == 0:
        X_prime, y_prime, m, eta = np.array(X), np.array(y), 0, 0.0
    else:
        m, eta = clean.m, clean.eta
        scale = np.sqrt(eta * n / m)
        X_prime = np.vstack([X, scale * clean.X])
        y_prime = np.concatenate([y, scale * clean.y])
    U, s, Vt = _orthonormal_basis(X_prime)
    for a in (X_prime, y_prime, U, s, Vt):
        a.setflags(write=False)
    return StackedSystem(X_prime, y_prime, n, m, eta, U, s, Vt)


def residual_projection(pool: ContaminatedPool) -> np.ndarray:
    """One-pool residual projector ``I - X (X^T X)^{-1} X^T`` (n x n)."""
    return np.array(build_stacked(pool).P_perp)
