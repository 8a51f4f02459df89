"""Recovery conditions for the Lasso over gamma.

For a candidate bug set T this evaluates the minimum eigenvalue of the
restricted projector block, the mutual incoherence between T^c and T, the
gamma-min bound G' and the lambda lower bound lambda*.  Orthogonal designs have
closed forms which double as an independent check of the generic route.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import COND_MAX, TOL_PROJ, CleanPool, ContaminatedPool, DebugProblem, GroundTruth, StackedSystem
from .errors import DegenerateDirection, SingularSubmatrix

EIG_TOL = 1e-12


def inf_norm(A: np.ndarray) -> float:
    """Infinity operator norm: the largest row l1 norm."""
    A = np.atleast_2d(A)
    if A.size == 0:
        return 0.0
    return float(np.max(np.sum(np.abs(A), axis=1)))


@dataclass(frozen=True)
class ConditionReport:
    b_min: float
    alpha: float | None
    G: float | None
    lambda_star: float | None
    lam: float
    verdict_eigen: bool
    verdict_incoherence: bool
    verdict_gamma: bool | None  # None without ground truth
    noise_free: bool = True  # lambda_star / G computed with eps' = 0

    @property
    def certified(self) -> bool:
        return bool(self.verdict_eigen and self.verdict_incoherence and self.verdict_gamma
                    and self.lambda_star is not None and self.lam >= self.lambda_star)

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["certified"] = self.certified
        return d


def _index_set(T, n: int) -> np.ndarray:
    T = np.unique(np.asarray(list(T), dtype=int))
    if T.size == 0:
        raise ValueError("T must be nonempty")
    if T[0] < 0 or T[-1] >= n:
        raise ValueError(f"T must be a subset of [0, {n})")
    return T


def noise_vector(sys: StackedSystem, truth: GroundTruth) -> np.ndarray:
    """eps' = y' - X' beta* - [gamma*; 0], recovered from the stacked system."""
    e = sys.y_prime - sys.X_prime @ truth.beta_star
    e[: sys.n] -= truth.gamma_star
    return e


def _simplified_incoherence(sys: StackedSystem, T, Tc) -> float | None:
    """||X_Tc (X'^T X' - X_T^T X_T)^{-1} X_T^T||_inf, or None if ill-conditioned.

    X'^T X' - X_T^T X_T is X_Tc^T X_Tc plus the weighted clean gram.
    """
    XT = sys.X_prime[T]
    G = sys.right_vectors.T @ np.diag(sys.singular_values ** 2) @ sys.right_vectors - XT.T @ XT
    s = np.linalg.svd(G, compute_uv=False)
    if s[-1] <= 0 or s[0] / s[-1] > COND_MAX:
        return None
    M = sys.X_prime[Tc] @ np.linalg.solve(G, XT.T)
    return inf_norm(M)


def check_conditions(sys: StackedSystem, T, lam: float, truth: GroundTruth | None = None,
                     simplified: bool = True) -> ConditionReport:
    """Evaluate the three recovery conditions and lambda* for bug set T.

    Without ground truth eps' is taken as zero: lambda* = 0 and G' reduces to
    its lambda term, and verdict_gamma is None.
    """
    n = sys.n
    T = _index_set(T, n)
    Tc = np.setdiff1d(np.arange(n), T)
    Q = sys.basis
    QT = Q[T]
    P_TT = np.eye(T.size) - QT @ QT.T
    P_TT = 0.5 * (P_TT + P_TT.T)
    b_min = float(np.linalg.eigvalsh(P_TT)[0])
    if b_min <= EIG_TOL:
        rep = ConditionReport(b_min, None, None, None, float(lam), False, False, None)
        raise SingularSubmatrix(f"P_perp[T, T] is singular (lambda_min = {b_min:.3g})", report=rep)
    P_inv = np.linalg.inv(P_TT)

    alpha = None
    if simplified:
        alpha = _simplified_incoherence(sys, T, Tc)
    if alpha is None:
        alpha = inf_norm(-(Q[Tc] @ QT.T) @ P_inv)

    if truth is not None:
        eps = noise_vector(sys, truth)
        Pe = sys.project_out(eps)
        u = P_inv @ Pe[T]
        # P_perp (I - P_bar_T P_TT^{-1} P_bar_T^T) eps' restricted to T^c
        Pbar_T_u = -Q @ (QT.T @ u)
        Pbar_T_u[T] += u
        inner = (Pe - Pbar_T_u)[Tc]
        if alpha < 1:
            lambda_star = 2.0 / (1.0 - alpha) * float(np.max(np.abs(inner), initial=0.0)) / n
        else:
            lambda_star = math.inf
        G = float(np.max(np.abs(u))) + n * lam * inf_norm(P_inv)
        verdict_gamma = bool(np.min(np.abs(truth.gamma_star[T])) > G)
        noise_free = False
    else:
        lambda_star = 0.0
        G = n * lam * inf_norm(P_inv)
        verdict_gamma = None
        noise_free = True
    return ConditionReport(b_min, float(alpha), G, lambda_star, float(lam), b_min > 0,
                           bool(alpha < 1), verdict_gamma, noise_free)


@dataclass(frozen=True, eq=False)
class OrthogonalDesign:
    """Contaminated rows along orthonormal directions plus optional clean rows.

    The first pool has n = t + p rows: row i < t is r_i q_i (a bug row) and
    row t + j is f_j q_j.  Each direction j with w_j != 0 contributes one clean
    row w_j q_j.
    """

    Q: np.ndarray
    r: np.ndarray
    f: np.ndarray
    w: np.ndarray = field(default=None)
    eta: float = 1.0
    w_B: float = 1.0

    def __post_init__(self):
        Q = np.array(self.Q, dtype=float)
        p = Q.shape[0]
        if Q.shape != (p, p) or np.max(np.abs(Q.T @ Q - np.eye(p))) > TOL_PROJ:
            raise ValueError("Q must be an orthogonal matrix")
        r = np.array(self.r, dtype=float).reshape(-1)
        f = np.array(self.f, dtype=float).reshape(-1)
        w = np.zeros(p) if self.w is None else np.array(self.w, dtype=float).reshape(-1)
        if r.size > p or f.size != p or w.size != p:
            raise ValueError("need len(r) <= p and len(f) = len(w) = p")
        if self.eta < 0 or not self.w_B > 0:
            raise ValueError("need eta >= 0 and w_B > 0")
        for name, v in (("Q", Q), ("r", r), ("f", f), ("w", w)):
            v.setflags(write=False)
            object.__setattr__(self, name, v)

    @property
    def p(self) -> int:
        return self.Q.shape[0]

    @property
    def t(self) -> int:
        return self.r.size

    @property
    def n(self) -> int:
        return self.t + self.p

    @property
    def queried(self) -> np.ndarray:
        return np.flatnonzero(self.w)

    @property
    def m(self) -> int:
        return self.queried.size

    @property
    def T(self) -> np.ndarray:
        return np.arange(self.t)

    def design(self) -> np.ndarray:
        R = np.zeros((self.t, self.p))
        R[np.arange(self.t), np.arange(self.t)] = self.r
        return np.vstack([R @ self.Q.T, np.diag(self.f) @ self.Q.T])

    def clean_design(self) -> np.ndarray:
        k = self.queried
        return self.w[k, None] * self.Q[:, k].T

    def problem(self, y=None, y_clean=None) -> DebugProblem:
        X, Xc = self.design(), self.clean_design()
        y = np.zeros(self.n) if y is None else y
        y_clean = np.zeros(self.m) if y_clean is None else y_clean
        return DebugProblem(ContaminatedPool(X, y), CleanPool(Xc, y_clean, self.eta if self.m else 0.0))

    def weight(self, n: int | None = None, m: int | None = None) -> float:
        n = self.n if n is None else n
        m = self.m if m is None else m
        return self.eta * n / m if m > 0 else 0.0


@dataclass(frozen=True)
class OrthogonalReport:
    b_min: float
    alpha: float
    G: float | None
    gamma_prefactor: np.ndarray  # r_i^2 / (f_i^2 + c w_i^2)
    noise_coef: np.ndarray  # per bug direction: weights on (eps_i, eps_{i+t}, sqrt(c) eps_clean_i)


def orthogonal_conditions(d: OrthogonalDesign, n: int | None = None, m: int | None = None,
                          lam: float = 0.0, eps=None, eps_clean=None,
                          weight: float | None = None) -> OrthogonalReport:
    """Closed-form conditions for an orthogonal design.

    ``weight`` overrides the clean-row factor eta n / m.  ``eps`` (length n)
    and ``eps_clean`` (one entry per queried direction, in direction order)
    enable G'; otherwise G is None.
    """
    c = d.weight(n, m) if weight is None else float(weight)
    t = d.t
    r, f, w = d.r, d.f[:t], d.w[:t]
    den = f ** 2 + c * w ** 2
    if np.any(den == 0):
        i = int(np.flatnonzero(den == 0)[0])
        raise DegenerateDirection(f"direction {i} has f = w = 0")
    ratio = r ** 2 / den
    b_min = 1.0 / (float(np.max(ratio, initial=0.0)) + 1.0)
    alpha = float(np.max(np.abs(r * f / den), initial=0.0))
    coef = np.column_stack([np.ones(t), -r * f / den, -np.sqrt(c) * r * w / den])
    G = None
    if eps is not None:
        eps = np.asarray(eps, dtype=float)
        nn = d.n if n is None else n
        e_clean = np.zeros(t)
        if eps_clean is not None:
            full = np.zeros(d.p)
            full[d.queried] = np.asarray(eps_clean, dtype=float)
            e_clean = full[:t]
        # the clean row enters eps' scaled by sqrt(c), like the clean design
        terms = coef[:, 0] * eps[:t] + coef[:, 1] * eps[t:2 * t] + coef[:, 2] * np.sqrt(c) * e_clean
        G = float(np.max(np.abs(terms), initial=0.0)) + nn * lam * (float(np.max(ratio, initial=0.0)) + 1.0)
    return OrthogonalReport(b_min, alpha, G, ratio, coef)


def repetition_budget(d: OrthogonalDesign, target_w) -> np.ndarray:
    """Copies l_i = ceil((|target_w_i| / w_B)^2) of a scale-w_B point per direction."""
    target_w = np.asarray(target_w, dtype=float)
    ratio = (np.abs(target_w) / d.w_B) ** 2
    # guard against 9.000000001 rounding up to 10
    return np.ceil(ratio - 1e-12 * np.maximum(ratio, 1.0)).astype(int)


def repeated_design(d: OrthogonalDesign, counts) -> tuple[np.ndarray, np.ndarray]:
    """Clean rows with counts[i] copies of w_B q_i; returns (X_clean, direction index)."""
    counts = np.asarray(counts, dtype=int)
    dirs = np.repeat(np.arange(d.p), counts)
    return d.w_B * d.Q[:, dirs].T, dirs


def eigenvalue_sweep(problem: DebugProblem, T, etas) -> list[tuple[float, float]]:
    """b_min = lambda_min(P_perp[T, T]) recomputed at each eta."""
    etas = [float(e) for e in etas]
    if any(e < 0 for e in etas):
        raise ValueError("etas must be nonnegative")
    if any(b < a for a, b in zip(etas, etas[1:])):
        raise ValueError("etas must be sorted")
    T = _index_set(T, problem.n)
    out = []
    for eta in etas:
        clean = CleanPool(problem.clean.X, problem.clean.y, eta)
        sys = DebugProblem(problem.contaminated, clean).stacked()
        QT = sys.basis[T]
        b = float(np.linalg.eigvalsh(np.eye(T.size) - QT @ QT.T)[0])
        out.append((eta, b))
    return out
