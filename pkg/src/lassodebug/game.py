"""Bug generator versus debugger.

The generator contaminates t labels of a noiseless pool; the debugger may
re-query m rows with trusted labels before running the two-pool Lasso.  This
module decides foolability through the nullspace/cone condition, runs the
generator's exhaustive search, and implements the debugger's query strategies.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .core import TOL_PROJ, CleanPool, ContaminatedPool, DebugProblem, build_stacked
from .errors import BudgetExceeded, SingularDesign
from .lasso import SolverOptions, solve_gamma
from .synth import stream

ENUM_CAP = 2_000_000
STRATEGIES = ("onepool", "random", "gamma", "gamma_adapt", "leverage", "influence")
# relative lambda grid (multiples of lambda_u) used when the caller gives none
DEFAULT_RHO_GRID = tuple(2.0 ** -k for k in range(2, 15))
DEFAULT_STRATEGY_RHO = 2.0 ** -4
# near-collinear rows are what the game is about; coordinate descent needs
# far more sweeps there than the library default
GAME_OPTIONS = SolverOptions(max_iter=100_000)


def _check_budget(n: int, k: int, what: str):
    count = math.comb(n, k)
    if count > ENUM_CAP:
        raise BudgetExceeded(f"C({n},{k}) = {count} {what} exceeds the cap of {ENUM_CAP}")
    return count


@dataclass(frozen=True, eq=False)
class GameInstance:
    pool: ContaminatedPool  # y = X beta* (noiseless, before contamination)
    beta_star: np.ndarray
    t: int
    m: int
    eta: float = 1.0
    c: float | None = None  # bug magnitude; None -> 10 (max|y| + 1)

    def __post_init__(self):
        beta = np.array(self.beta_star, dtype=float)
        beta.setflags(write=False)
        object.__setattr__(self, "beta_star", beta)
        if beta.shape != (self.pool.p,):
            raise ValueError("beta_star must have length p")
        if self.t < 0 or self.m < 0 or self.t > self.pool.n or self.m > self.pool.n:
            raise ValueError("need 0 <= t, m <= n")
        if self.eta < 0:
            raise ValueError("eta must be nonnegative")

    @classmethod
    def from_design(cls, X, beta_star, t, m, eta=1.0, c=None) -> "GameInstance":
        X = np.asarray(X, dtype=float)
        return cls(ContaminatedPool(X, X @ np.asarray(beta_star, dtype=float)), beta_star, t, m, eta, c)

    @property
    def n(self) -> int:
        return self.pool.n

    @property
    def p(self) -> int:
        return self.pool.p

    @property
    def out_of_regime(self) -> bool:
        """m >= p lets the clean pool alone pin down beta."""
        return self.m >= self.p

    @property
    def bug_magnitude(self) -> float:
        if self.c is not None:
            return float(self.c)
        return 10.0 * (float(np.max(np.abs(self.pool.y))) + 1.0)

    def contaminate(self, scheme) -> tuple[np.ndarray, np.ndarray]:
        gamma = np.zeros(self.n)
        gamma[list(scheme)] = self.bug_magnitude
        return self.pool.y + gamma, gamma

    def clean_pool(self, D) -> CleanPool:
        D = np.asarray(list(D), dtype=int)
        if D.size == 0:
            return CleanPool.empty(self.p)
        Xc = self.pool.X[D]
        return CleanPool(Xc, Xc @ self.beta_star, self.eta)


@dataclass
class GameOutcome:
    scheme: tuple | None  # generator's bug set (None: nothing tried)
    D: tuple
    recovered: bool  # some lambda on the grid gives supp(gamma_hat) = scheme
    fooled: bool  # generator found a scheme defeating every lambda
    certificate: np.ndarray | None = None
    schemes_tried: int = 0

    def to_dict(self) -> dict:
        return {
            "scheme": None if self.scheme is None else [int(i) for i in self.scheme],
            "D": [int(i) for i in self.D],
            "recovered": bool(self.recovered),
            "fooled": bool(self.fooled),
            "certificate": None if self.certificate is None else self.certificate.tolist(),
            "schemes_tried": int(self.schemes_tried),
        }


def game_operator(pool: ContaminatedPool, D, eta: float = 1.0) -> np.ndarray:
    """[I; 0] - [X; sqrt(c) X_D] (X^T X + c X_D^T X_D)^{-1} X^T, c = eta n / |D|.

    With D empty (or eta = 0) this is the one-pool residual projector.
    """
    X = np.asarray(pool.X)
    n, p = X.shape
    D = np.asarray(list(D), dtype=int)
    if D.size == 0 or eta == 0:
        Xs, top = X, np.eye(n)
    else:
        c = eta * n / D.size
        Xs = np.vstack([X, np.sqrt(c) * X[D]])
        top = np.vstack([np.eye(n), np.zeros((D.size, n))])
    G = Xs.T @ Xs
    s = np.linalg.svd(G, compute_uv=False)
    if s[-1] <= 0 or s[0] / s[-1] > 1e12:
        raise SingularDesign("gram matrix of the stacked design is singular")
    return top - Xs @ np.linalg.solve(G, X.T)


def nullspace_matrix(pool: ContaminatedPool, D, eta: float = 1.0, tol: float = TOL_PROJ) -> np.ndarray:
    """Orthonormal basis (columns) of the nullspace of ``game_operator``."""
    A = game_operator(pool, D, eta)
    _, s, Vt = np.linalg.svd(A, full_matrices=True)
    scale = max(1.0, s[0] if s.size else 1.0)
    rank = int(np.sum(s > tol * scale))
    return Vt[rank:].T.copy()


def in_cone(delta: np.ndarray, t: int, tol: float = 1e-9) -> bool:
    """Some |K| = t has ||delta_K||_1 >= ||delta_Kc||_1 (checked on the top-t entries)."""
    a = np.sort(np.abs(delta))[::-1]
    if t <= 0 or a[0] <= 0:
        return False
    return bool(a[:t].sum() >= a[t:].sum() - tol * a.sum())


def _cone_lp(B: np.ndarray, K: np.ndarray, signs: np.ndarray):
    """Feasibility of Delta = B a with s_k Delta_k >= 0, sum s_k Delta_k = 1, ||Delta_Kc||_1 <= 1."""
    n, d = B.shape
    Kc = np.setdiff1d(np.arange(n), K)
    nc = Kc.size
    # variables: a (d, free), u (nc, >= 0)
    BK, BKc = B[K], B[Kc]
    A_ub = [np.hstack([-(signs[:, None] * BK), np.zeros((K.size, nc))])]
    b_ub = [np.zeros(K.size)]
    if nc:
        A_ub += [np.hstack([BKc, -np.eye(nc)]), np.hstack([-BKc, -np.eye(nc)]),
                 np.hstack([np.zeros((1, d)), np.ones((1, nc))])]
        b_ub += [np.zeros(nc), np.zeros(nc), np.ones(1)]
    A_eq = np.hstack([(signs @ BK)[None, :], np.zeros((1, nc))])
    res = linprog(np.zeros(d + nc), A_ub=np.vstack(A_ub), b_ub=np.concatenate(b_ub),
                  A_eq=A_eq, b_eq=np.ones(1),
                  bounds=[(None, None)] * d + [(0, None)] * nc, method="highs")
    if res.status != 0:
        return None
    return B @ res.x[:d]


def cone_intersects(nullspace_basis: np.ndarray, t: int) -> np.ndarray | None:
    """A nonzero witness in span(basis) lying in some cone C(K), |K| = t, or None.

    Each K and sign pattern on K (first sign fixed by symmetry) is one LP.
    """
    B = np.asarray(nullspace_basis, dtype=float)
    if B.ndim != 2 or B.shape[1] == 0 or t <= 0:
        return None
    n = B.shape[0]
    if t >= n:
        return B[:, 0].copy()
    _check_budget(n, t, "cone index sets")
    for K in itertools.combinations(range(n), t):
        K = np.array(K)
        if np.max(np.abs(B[K])) <= TOL_PROJ:
            continue
        for tail in itertools.product((1.0, -1.0), repeat=t - 1):
            delta = _cone_lp(B, K, np.array((1.0,) + tail))
            if delta is not None and np.max(np.abs(delta)) > TOL_PROJ:
                return delta
    return None


@dataclass
class Certification:
    foolable: bool
    witnesses: dict = field(default_factory=dict)  # D -> witness or None


def certify_foolable(pool: ContaminatedPool, t: int, m: int, eta: float = 1.0) -> Certification:
    """Whether every query set D of size m leaves a cone witness in the nullspace."""
    if t <= 0:
        return Certification(False, {})
    _check_budget(pool.n, m, "query sets")
    out = Certification(True, {})
    for D in itertools.combinations(range(pool.n), m):
        w = cone_intersects(nullspace_matrix(pool, D, eta), t)
        out.witnesses[D] = w
        if w is None:
            out.foolable = False
    return out


def gamma_objective(operator: np.ndarray, gamma_star, gamma, lam: float) -> float:
    """(1/2n) ||A (gamma* - gamma)||^2 + lam ||gamma||_1 for the game operator A."""
    n = operator.shape[1]
    r = operator @ (np.asarray(gamma_star) - np.asarray(gamma))
    return 0.5 / n * float(r @ r) + lam * float(np.sum(np.abs(gamma)))


def witness_comparison(operator: np.ndarray, delta: np.ndarray, t: int, lam: float) -> tuple[float, float]:
    """Objective of the decoy -delta_Kc against the planted delta_K.

    K holds the top-t |delta| entries.  Returns (decoy, planted); a valid
    witness always gives decoy <= planted.
    """
    K = np.argsort(-np.abs(delta), kind="stable")[:t]
    planted = np.zeros_like(delta)
    planted[K] = delta[K]
    decoy = planted - delta
    return gamma_objective(operator, planted, decoy, lam), gamma_objective(operator, planted, planted, lam)


def _top_m(scores: np.ndarray, m: int, exclude=()) -> list[int]:
    s = np.round(np.asarray(scores, dtype=float), 12)
    s[list(exclude)] = -np.inf
    return [int(i) for i in np.argsort(-s, kind="stable")[:m]]


def _solve_at(problem: DebugProblem, rho: float, opts: SolverOptions):
    sys = problem.stacked()
    lam_u = 2.0 * float(np.max(np.abs(sys.lasso_rhs))) / sys.n
    if lam_u <= 0:
        return np.zeros(sys.n)
    return solve_gamma(sys, rho * lam_u, opts).gamma_hat


def _influence_scores(instance: GameInstance, y: np.ndarray, D: list[int], rho: float,
                      opts: SolverOptions) -> np.ndarray:
    X = instance.pool.X
    n = instance.n
    clean = instance.clean_pool(D)
    base = _solve_at(DebugProblem(ContaminatedPool(X, y), clean), rho, opts)
    scores = np.empty(n)
    keep = np.ones(n, dtype=bool)
    for i in range(n):
        keep[i] = False
        try:
            g = _solve_at(DebugProblem(ContaminatedPool(X[keep], y[keep]), clean), rho, opts)
            scores[i] = np.sum(np.abs(g - base[keep]))
        except SingularDesign:
            # the fit cannot survive without row i
            scores[i] = np.inf
        keep[i] = True
    return scores


def debug_strategy(name: str, instance: GameInstance, m: int | None = None, rng_seed: int = 0,
                   y: np.ndarray | None = None, rho: float = DEFAULT_STRATEGY_RHO,
                   opts: SolverOptions = GAME_OPTIONS) -> tuple:
    """Rows the debugger re-queries, in selection order.

    ``y`` is the (contaminated) label vector the debugger sees; internal Lasso
    fits use lambda = rho * lambda_u.  Ties go to the lowest index.
    """
    if name not in STRATEGIES:
        raise ValueError(f"unknown strategy {name!r}; choose from {STRATEGIES}")
    m = instance.m if m is None else m
    n = instance.n
    if not 0 <= m <= n:
        raise ValueError(f"m = {m} outside [0, n]")
    y = instance.pool.y if y is None else np.asarray(y, dtype=float)
    if name == "onepool" or m == 0:
        return ()
    if name == "random":
        rng = stream(rng_seed, "debug-random")
        return tuple(int(i) for i in rng.choice(n, size=m, replace=False))
    if name == "leverage":
        return tuple(_top_m(build_stacked(instance.pool).leverage(), m))
    one_pool = DebugProblem(ContaminatedPool(instance.pool.X, y))
    if name == "gamma":
        return tuple(_top_m(np.abs(_solve_at(one_pool, rho, opts)), m))
    D: list[int] = []
    for _ in range(m):
        if name == "gamma_adapt":
            g = _solve_at(DebugProblem(one_pool.contaminated, instance.clean_pool(D)), rho, opts)
            scores = np.abs(g)
        else:
            scores = _influence_scores(instance, y, D, rho, opts)
        D += _top_m(scores, 1, exclude=D)
    return tuple(D)


def recovers(instance: GameInstance, y: np.ndarray, scheme, D, rhos=DEFAULT_RHO_GRID,
             opts: SolverOptions = GAME_OPTIONS) -> bool:
    """Exact support recovery at some lambda = rho * lambda_u on the grid."""
    problem = DebugProblem(ContaminatedPool(instance.pool.X, y), instance.clean_pool(D))
    sys = problem.stacked()
    target = np.array(sorted(scheme), dtype=int)
    lam_u = 2.0 * float(np.max(np.abs(sys.lasso_rhs))) / sys.n
    if lam_u <= 0:
        return target.size == 0
    warm = None
    for rho in sorted(rhos, reverse=True):
        sol = solve_gamma(sys, rho * lam_u, opts, warm_start=warm)
        warm = sol.gamma_hat
        if np.array_equal(sol.support, target):
            return True
    return False


def generator_search(instance: GameInstance, strategy: str, lambdas=DEFAULT_RHO_GRID, rng_seed: int = 0,
                     rho: float = DEFAULT_STRATEGY_RHO, opts: SolverOptions = GAME_OPTIONS) -> GameOutcome:
    """Try every size-t scheme with all bugs equal to c; stop at the first that fools.

    ``lambdas`` are multiples of lambda_u of each scheme's data, so the grid
    follows the bug magnitude.  For the random debugger the search targets
    the one-pool pipeline and the chosen scheme is then replayed against a
    random query set.
    """
    n, t = instance.n, instance.t
    _check_budget(n, t, "contamination schemes")
    attack = "onepool" if strategy == "random" else strategy
    found, last_D, tried = None, (), 0
    for scheme in itertools.combinations(range(n), t):
        tried += 1
        y, _ = instance.contaminate(scheme)
        D = debug_strategy(attack, instance, rng_seed=rng_seed, y=y, rho=rho, opts=opts)
        last_D = D
        if not recovers(instance, y, scheme, D, lambdas, opts):
            found = scheme
            break
    if strategy != "random":
        if found is None:
            return GameOutcome(None, last_D, True, False, schemes_tried=tried)
        return GameOutcome(found, last_D, False, True, schemes_tried=tried)
    scheme = found if found is not None else tuple(range(t))
    y, _ = instance.contaminate(scheme)
    D = debug_strategy("random", instance, rng_seed=rng_seed, y=y)
    ok = recovers(instance, y, scheme, D, lambdas, opts)
    return GameOutcome(scheme, D, ok, not ok, schemes_tried=tried)
