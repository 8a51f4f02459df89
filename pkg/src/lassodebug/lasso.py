"""Solvers for the bug vector gamma.

Three routes to the same estimate, used to cross-check one another:

* ``solve_gamma``: cyclic coordinate descent on the reformulated Lasso
  ``(1/2n)||P_perp y' - P_bar g||^2 + lam ||g||_1``.
* ``solve_joint``: alternating minimisation of the joint (beta, gamma)
  objective.
* ``solve_weighted_m``: the equivalent Huber-type M-estimator in beta alone.

``P_bar^T P_bar = I - Q_n Q_n^T`` where ``Q_n`` holds the first n rows of an
orthonormal basis of col(X'), so one coordinate update costs O(p) rather than
O(n).
"""

from __future__ import annotations

import itertools
import warnings
from dataclasses import dataclass

import numba
import numpy as np

from .core import DebugProblem, StackedSystem
from .errors import MaxIterExceeded, SingularSubmatrix


@dataclass(frozen=True)
class SolverOptions:
    tol_kkt: float = 1e-8
    max_iter: int | None = None  # coordinate sweeps; defaults to 50 * n
    joint_max_iter: int = 500_000
    m_max_iter: int = 500
    raise_on_max_iter: bool = False

    @property
    def support_tol(self) -> float:
        return 10.0 * self.tol_kkt


DEFAULT_OPTIONS = SolverOptions()


@dataclass(frozen=True)
class LassoSolution:
    gamma_hat: np.ndarray
    beta_hat: np.ndarray
    support: np.ndarray
    z_hat: np.ndarray
    lam: float
    kkt_residual: float
    objective: float
    converged: bool = True
    iterations: int = 0


def soft_threshold(u, k):
    """Shrink ``u`` towards zero by ``k``; entries with ``|u| <= k`` become 0."""
    if np.any(np.asarray(k) < 0):
        raise ValueError("threshold must be nonnegative")
    u = np.asarray(u, dtype=float)
    out = np.sign(u) * np.maximum(np.abs(u) - k, 0.0)
    return float(out) if out.ndim == 0 else out


def huber_loss(u, k):
    """Huber loss with threshold k: ``u^2/2`` inside, ``k|u| - k^2/2`` outside."""
    if k <= 0:
        raise ValueError("Huber threshold must be positive")
    u = np.asarray(u, dtype=float)
    a = np.abs(u)
    out = np.where(a > k, k * a - 0.5 * k * k, 0.5 * u * u)
    return float(out) if out.ndim == 0 else out


def huber_derivative(u, k):
    return np.clip(np.asarray(u, dtype=float), -k, k)


@numba.njit(cache=True, nogil=True)
def _cd_lowrank(Q, b, lam, nscale, gamma, tol, max_sweeps):
    """Coordinate descent for (1/2N) g^T (I - Q Q^T) g - (1/N) b^T g + lam ||g||_1.

    Updates ``gamma`` in place; returns (sweeps, kkt_residual).
    """
    n, p = Q.shape
    diag = np.empty(n)
    for i in range(n):
        s = 0.0
        for j in range(p):
            s += Q[i, j] * Q[i, j]
        diag[i] = 1.0 - s
    v = np.zeros(p)
    res = np.inf
    for sweep in range(max_sweeps):
        # refresh Q^T gamma to stop rounding drift
        for j in range(p):
            v[j] = 0.0
        for i in range(n):
            gi = gamma[i]
            if gi != 0.0:
                for j in range(p):
                    v[j] += Q[i, j] * gi
        for i in range(n):
            d = diag[i]
            old = gamma[i]
            if d <= 1e-13:
                new = 0.0
            else:
                qv = 0.0
                for j in range(p):
                    qv += Q[i, j] * v[j]
                z = old - (old - qv - b[i]) / d
                thr = nscale * lam / d
                if z > thr:
                    new = z - thr
                elif z < -thr:
                    new = z + thr
                else:
                    new = 0.0
            delta = new - old
            if delta != 0.0:
                gamma[i] = new
                for j in range(p):
                    v[j] += Q[i, j] * delta
        # KKT residual of the full problem
        for j in range(p):
            v[j] = 0.0
        for i in range(n):
            gi = gamma[i]
            if gi != 0.0:
                for j in range(p):
                    v[j] += Q[i, j] * gi
        res = 0.0
        for i in range(n):
            qv = 0.0
            for j in range(p):
                qv += Q[i, j] * v[j]
            g = (gamma[i] - qv - b[i]) / nscale
            if gamma[i] > 0.0:
                r = abs(g + lam)
            elif gamma[i] < 0.0:
                r = abs(g - lam)
            else:
                r = abs(g) - lam
                if r < 0.0:
                    r = 0.0
            if r > res:
                res = r
        if res <= tol:
            return sweep + 1, res
    return max_sweeps, res


POLISH_EVERY = 100


def _lowrank_gradient(Q, b, gamma, nscale):
    return (gamma - Q @ (Q.T @ gamma) - b) / nscale


def _subgradient(grad, gamma, lam, support_tol):
    on = np.abs(gamma) > support_tol
    z = np.clip(-grad / lam, -1.0, 1.0)
    z[on] = np.sign(gamma[on])
    res = float(np.max(np.abs(grad + lam * z), initial=0.0))
    return np.flatnonzero(on), z, res


def lasso_objective(sys: StackedSystem, gamma, lam: float) -> float:
    """(1/2n)||P_perp y' - P_bar gamma||^2 + lam ||gamma||_1."""
    gamma = np.asarray(gamma, dtype=float)
    full = np.zeros(sys.n + sys.m)
    full[: sys.n] = gamma
    r = sys.residual - sys.project_out(full)
    return float(r @ r / (2 * sys.n) + lam * np.abs(gamma).sum())


def kkt_residual(sys: StackedSystem, gamma, lam: float, support_tol: float = 1e-7):
    """Return (support, subgradient, max-norm stationarity violation)."""
    grad = _lowrank_gradient(sys.basis_top, sys.lasso_rhs, np.asarray(gamma, float), sys.n)
    return _subgradient(grad, np.asarray(gamma, float), lam, support_tol)


def _finish(sys, gamma, lam, opts, converged, iters, beta=None):
    support, z, res = kkt_residual(sys, gamma, lam, opts.support_tol)
    if beta is None:
        beta = sys.solve_beta(gamma)
    sol = LassoSolution(
        gamma_hat=gamma,
        beta_hat=beta,
        support=support,
        z_hat=z,
        lam=float(lam),
        kkt_residual=res,
        objective=lasso_objective(sys, gamma, lam),
        converged=converged,
        iterations=iters,
    )
    if not converged:
        msg = f"solver stopped after {iters} iterations with KKT residual {res:.3g}"
        if opts.raise_on_max_iter:
            raise MaxIterExceeded(msg, result=sol)
        warnings.warn(msg, RuntimeWarning, stacklevel=3)
    return sol


def solve_gamma(sys: StackedSystem, lam: float, opts: SolverOptions = DEFAULT_OPTIONS,
                warm_start=None) -> LassoSolution:
    """Solve the reformulated Lasso for gamma by cyclic coordinate descent.

    Convergence is declared on the KKT residual.  beta is recovered in closed
    form from gamma.  Uniqueness of the minimiser is not checked here.
    """
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    n = sys.n
    gamma = np.zeros(n) if warm_start is None else np.array(warm_start, dtype=float)
    max_sweeps = opts.max_iter if opts.max_iter is not None else 50 * n
    Q, b = sys.basis_top, np.ascontiguousarray(sys.lasso_rhs)
    done, res = 0, np.inf
    while done < max_sweeps:
        chunk = min(POLISH_EVERY, max_sweeps - done)
        sweeps, res = _cd_lowrank(Q, b, float(lam), float(n), gamma, opts.tol_kkt, int(chunk))
        done += int(sweeps)
        if res <= opts.tol_kkt:
            break
        polished = _polish(Q, b, gamma, lam, n, opts)
        if polished is not None:
            gamma, res = polished
            break
    return _finish(sys, gamma, lam, opts, res <= opts.tol_kkt, done)


def _polish(Q, b, gamma, lam, n, opts):
    """Feature-sign search started from the CD iterate.

    CD crawls when rows of P_bar are nearly collinear.  Here each step solves
    the stationarity equations on the current active set and signs; if a
    coordinate would cross zero the best point among the crossings is taken
    instead, and once the active set is consistent the worst KKT violator
    joins it.  Returns (gamma, residual) if the result passes the full KKT
    check, else None.
    """
    nf = float(n)

    def obj(g):
        Gg = g - Q @ (Q.T @ g)
        return 0.5 / nf * float(g @ Gg) - float(b @ g) / nf + lam * float(np.sum(np.abs(g)))

    g = np.where(np.abs(gamma) > opts.support_tol, gamma, 0.0)
    theta = np.sign(g)
    for _ in range(10 * n + 10):
        S = np.flatnonzero(theta)
        new = np.zeros_like(g)
        if S.size:
            QS = Q[S]
            G = np.eye(S.size) - QS @ QS.T
            w = np.linalg.eigvalsh(G)
            if w[0] <= 1e-12 * max(1.0, w[-1]):
                return None
            new[S] = np.linalg.solve(G, b[S] - nf * lam * theta[S])
        if np.any(np.sign(new[S]) != theta[S]):
            # candidates: the unconstrained point and every zero crossing on the segment
            cands = [new]
            d = new - g
            for i in S:
                if d[i] != 0.0:
                    tau = -g[i] / d[i]
                    if 0.0 < tau < 1.0:
                        c = g + tau * d
                        c[i] = 0.0
                        cands.append(c)
            vals = []
            for c in cands:
                c = np.where(np.sign(c) == theta, c, 0.0)
                vals.append((obj(c), c))
            g = min(vals, key=lambda v: v[0])[1]
            theta = np.sign(g)
            continue
        g = new
        grad = _lowrank_gradient(Q, b, g, nf)
        viol = np.abs(grad) - lam
        viol[S] = -np.inf
        j = int(np.argmax(viol))
        if viol[j] <= opts.tol_kkt:
            _, _, res = _subgradient(grad, g, lam, 0.0)
            return (g, res) if res <= opts.tol_kkt else None
        theta = np.sign(g)
        theta[j] = -np.sign(grad[j])
    return None


def solve_joint(problem: DebugProblem, lam: float, opts: SolverOptions = DEFAULT_OPTIONS) -> LassoSolution:
    """Minimise the joint (beta, gamma) objective by block alternation.

    beta-step: weighted least squares given gamma.
    gamma-step: soft-threshold the first-pool residual at level n * lam.
    """
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    sys = problem.stacked()
    X, y = problem.contaminated.X, problem.contaminated.y
    k = problem.n * lam
    gamma = np.zeros(problem.n)
    stop = 1e-14 * max(1.0, float(np.max(np.abs(y))))
    converged = False
    it = 0
    for it in range(1, opts.joint_max_iter + 1):
        beta = sys.solve_beta(gamma)
        new = soft_threshold(y - X @ beta, k)
        step = float(np.max(np.abs(new - gamma)))
        gamma = new
        if step <= stop:
            converged = True
            break
    beta = sys.solve_beta(gamma)
    if converged:
        # alternation can stall on a plateau; confirm with the reformulated KKT
        converged = kkt_residual(sys, gamma, lam, opts.support_tol)[2] <= opts.tol_kkt
    return _finish(sys, gamma, lam, opts, converged, it, beta=beta)


def weighted_m_objective(problem: DebugProblem, beta, lam: float) -> float:
    X, y = problem.contaminated.X, problem.contaminated.y
    n = problem.n
    val = huber_loss(y - X @ beta, n * lam).sum() / n
    if problem.two_pool:
        r = problem.clean.y - problem.clean.X @ beta
        val += problem.eta / (2 * problem.m) * (r @ r)
    return float(val)


def _weighted_m_grad(problem, beta, lam):
    X, y = problem.contaminated.X, problem.contaminated.y
    n = problem.n
    r = y - X @ beta
    g = -X.T @ huber_derivative(r, n * lam) / n
    if problem.two_pool:
        Xc = problem.clean.X
        g = g + problem.eta / problem.m * (Xc.T @ (Xc @ beta - problem.clean.y))
    return g, r


def solve_weighted_m(problem: DebugProblem, lam: float, opts: SolverOptions = DEFAULT_OPTIONS) -> np.ndarray:
    """Minimise the weighted Huber M-estimation objective over beta.

    Descent directions come from the gradient preconditioned by the
    generalised Hessian of the active quadratic pieces; step sizes from
    Armijo backtracking.  Stops once the gradient max-norm is below tol_kkt.
    """
    if not lam > 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    X = problem.contaminated.X
    n, p = X.shape
    k = n * lam
    beta = problem.stacked().solve_beta(np.zeros(n))
    f = weighted_m_objective(problem, beta, lam)
    clean_H = np.zeros((p, p))
    if problem.two_pool:
        clean_H = problem.eta / problem.m * problem.clean.X.T @ problem.clean.X
    scale = max(1.0, float(np.trace(X.T @ X)) / n)
    for it in range(opts.m_max_iter):
        g, r = _weighted_m_grad(problem, beta, lam)
        if np.max(np.abs(g)) <= opts.tol_kkt:
            return beta
        inside = np.abs(r) <= k
        H = X[inside].T @ X[inside] / n + clean_H + 1e-12 * scale * np.eye(p)
        try:
            d = -np.linalg.solve(H, g)
        except np.linalg.LinAlgError:
            d = -g
        slope = float(g @ d)
        if slope >= 0:
            d, slope = -g, -float(g @ g)
        step = 1.0
        while True:
            cand = beta + step * d
            fc = weighted_m_objective(problem, cand, lam)
            if fc <= f + 1e-4 * step * slope or step < 1e-20:
                break
            step *= 0.5
        if step < 1e-20:
            # no further decrease available in floating point
            break
        beta, f = cand, fc
    g, _ = _weighted_m_grad(problem, beta, lam)
    if np.max(np.abs(g)) > opts.tol_kkt:
        msg = f"weighted M-estimation gradient {np.max(np.abs(g)):.3g} above tolerance"
        if opts.raise_on_max_iter:
            raise MaxIterExceeded(msg, result=beta)
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
    return beta


@dataclass(frozen=True)
class PDWResult:
    gamma_T: np.ndarray
    z: np.ndarray
    strict_dual_feasible: bool


def pdw_construct(sys: StackedSystem, T, lam: float, opts: SolverOptions = DEFAULT_OPTIONS) -> PDWResult:
    """Primal-dual witness construction on a candidate support T.

    Solves the Lasso restricted to T, then reads the dual vector off the
    zero-subgradient equation.  If ``strict_dual_feasible`` is true then
    ``(gamma_T, 0)`` is the unique solution of the full problem.
    """
    T = np.asarray(sorted(set(int(i) for i in T)), dtype=int)
    n = sys.n
    b = sys.lasso_rhs
    if T.size == 0:
        z = b / (n * lam)
        return PDWResult(np.zeros(0), z, bool(np.max(np.abs(z), initial=0.0) < 1))
    QT = np.ascontiguousarray(sys.basis_top[T])
    gram = np.eye(T.size) - QT @ QT.T
    if np.linalg.eigvalsh(gram)[0] <= 1e-12:
        raise SingularSubmatrix(f"P_perp[T, T] is singular for T = {T.tolist()}")
    gT = np.zeros(T.size)
    sweeps, res = _cd_lowrank(QT, np.ascontiguousarray(b[T]), float(lam), float(n), gT,
                              opts.tol_kkt, 50 * max(n, 100))
    full = np.zeros(n)
    full[T] = gT
    z = (b - sys.gram_apply(full)) / (n * lam)
    on = np.abs(gT) > opts.support_tol
    z[T[on]] = np.sign(gT[on])
    Tc = np.setdiff1d(np.arange(n), T)
    feasible = bool(np.max(np.abs(z[Tc]), initial=0.0) < 1)
    return PDWResult(gT, z, feasible)


def brute_force_lasso(sys: StackedSystem, lam: float, max_n: int = 12):
    """Exact Lasso optimum by enumerating sign patterns.

    For every support S with an invertible Gram block and every sign vector
    s on S, the stationary point ``G_SS^{-1}(b_S - n lam s)`` is kept when its
    signs agree with s.  Returns (objective, gamma).  Independent of the
    coordinate-descent path; meant for n <= 12.
    """
    n = sys.n
    if n > max_n:
        raise ValueError(f"brute force limited to n <= {max_n}")
    G = np.array(sys.P_perp[:n, :n])
    b = np.array(sys.lasso_rhs)
    best_val = lasso_objective(sys, np.zeros(n), lam)
    best = np.zeros(n)
    for size in range(1, n + 1):
        signs = np.array(list(itertools.product((-1.0, 1.0), repeat=size)))
        for S in itertools.combinations(range(n), size):
            S = list(S)
            GS = G[np.ix_(S, S)]
            w = np.linalg.eigvalsh(GS)
            if w[0] <= 1e-10 * max(1.0, w[-1]):
                continue
            rhs = b[S][None, :] - n * lam * signs  # (2^size, size)
            cand = np.linalg.solve(GS, rhs.T).T
            ok = np.all(np.sign(cand) == signs, axis=1)
            if not ok.any():
                continue
            cand = cand[ok]
            # objective on the face: (1/2n) g^T G g - (1/n) b^T g + lam ||g||_1 + const
            quad = np.einsum("ij,jk,ik->i", cand, GS, cand) / (2 * n)
            lin = cand @ b[S] / n
            vals = quad - lin + lam * np.abs(cand).sum(axis=1)
            j = int(np.argmin(vals))
            full = np.zeros(n)
            full[S] = cand[j]
            val = lasso_objective(sys, full, lam)
            if val < best_val:
                best_val, best = val, full
    return best_val, best
