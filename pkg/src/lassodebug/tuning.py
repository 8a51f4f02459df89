"""Data-driven choice of the regularisation parameter.

Start from a lambda large enough that gamma_hat = 0, then halve until the rows
not flagged as bugs look like pure noise: their least-squares residuals must
all fall below a multiple of a robust (median-based) noise estimate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import erfinv

from .core import StackedSystem
from .errors import ContaminationTooHigh, InsufficientRows, MaxRoundsExceeded, NonPositiveLambdaU
from .lasso import DEFAULT_OPTIONS, LassoSolution, SolverOptions, solve_gamma

DEFAULT_C_BAR = float(erfinv(1.0 / 6.0))


@dataclass(frozen=True)
class TuningConfig:
    lambda_u: float | None = None  # None: use default_lambda_u
    c_bar: float = DEFAULT_C_BAR
    halving_factor: float = 2.0
    max_rounds: int = 60

    def __post_init__(self):
        if not self.c_bar > 0:
            raise ValueError("c_bar must be positive")
        if not self.halving_factor > 1:
            raise ValueError("halving_factor must exceed 1")
        if self.max_rounds < 1:
            raise ValueError("max_rounds must be at least 1")


@dataclass(frozen=True)
class TuningRound:
    lam: float
    support_size: int
    sigma_hat: float
    stop_stat: float  # max |P_perp y| over retained rows
    threshold: float
    stopped: bool


@dataclass
class TuningTrace:
    rounds: list[TuningRound] = field(default_factory=list)

    @property
    def lambdas(self) -> list[float]:
        return [r.lam for r in self.rounds]

    def to_dict(self) -> dict:
        return {"rounds": [r.__dict__.copy() for r in self.rounds]}


@dataclass(frozen=True)
class TuningResult:
    lambda_hat: float
    solution: LassoSolution
    trace: TuningTrace


def default_lambda_u(sys: StackedSystem) -> float:
    """2 ||P_bar^T P_perp y'||_inf / n, the smallest lambda with gamma_hat = 0."""
    return 2.0 * float(np.max(np.abs(sys.lasso_rhs))) / sys.n


def _lower_median(a: np.ndarray) -> float:
    s = np.sort(a)
    return float(s[(s.size - 1) // 2])


def projected_residual(X: np.ndarray, y: np.ndarray) -> np.ndarray:
    Q, _ = np.linalg.qr(X)
    return y - Q @ (Q.T @ y)


def sigma_hat(X_k: np.ndarray, y_k: np.ndarray) -> float:
    """l/(l-p) * median(|P_perp y|) over the retained rows.

    The median of an even-length sample is the lower middle order statistic.
    """
    l, p = X_k.shape
    if l <= p:
        raise InsufficientRows(f"{l} retained rows for {p} features")
    r = projected_residual(X_k, y_k)
    return l / (l - p) * _lower_median(np.abs(r))


def stop_threshold(n: int, c_bar: float, sig: float) -> float:
    return 2.5 / c_bar * math.sqrt(math.log(2 * n)) * sig


def select_lambda(sys: StackedSystem, cfg: TuningConfig | None = None,
                  opts: SolverOptions = DEFAULT_OPTIONS) -> TuningResult:
    """Halve lambda until the unflagged rows pass the noise-only test.

    Returns the lambda of the stopping round together with its Lasso fit.
    Only first-pool rows are pruned; the clean pool never is.
    """
    cfg = cfg or TuningConfig()
    n, p = sys.n, sys.p
    if n <= p:
        raise InsufficientRows(f"need n > p, got n={n}, p={p}")
    lam = default_lambda_u(sys) if cfg.lambda_u is None else float(cfg.lambda_u)
    if not lam > 0:
        raise NonPositiveLambdaU(f"initial lambda must be positive, got {lam}")
    X, y = sys.X_prime[:n], sys.y_prime[:n]
    trace = TuningTrace()
    for _ in range(cfg.max_rounds):
        sol = solve_gamma(sys, lam, opts)
        keep = np.ones(n, dtype=bool)
        keep[sol.support] = False
        if keep.sum() <= p:
            raise ContaminationTooHigh(
                f"{sol.support.size} of {n} rows flagged at lambda={lam:.3g}; "
                f"fewer than p+1 rows left")
        Xk, yk = X[keep], y[keep]
        sig = sigma_hat(Xk, yk)
        stat = float(np.max(np.abs(projected_residual(Xk, yk))))
        thr = stop_threshold(n, cfg.c_bar, sig)
        stopped = stat <= thr
        trace.rounds.append(TuningRound(lam, int(sol.support.size), sig, stat, thr, stopped))
        if stopped:
            return TuningResult(lam, sol, trace)
        lam /= cfg.halving_factor
    raise MaxRoundsExceeded(f"no stop after {cfg.max_rounds} rounds", trace=trace)
