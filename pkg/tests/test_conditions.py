import math

import numpy as np
import pytest

from conftest import random_problem
from lassodebug.conditions import (OrthogonalDesign, check_conditions, eigenvalue_sweep, inf_norm,
                                   noise_vector, orthogonal_conditions, repeated_design, repetition_budget)
from lassodebug.core import CleanPool, ContaminatedPool, GroundTruth, build_stacked
from lassodebug.errors import DegenerateDirection, SingularSubmatrix
from lassodebug.synth import random_orthogonal

# design where adding two clean rows worsens mutual incoherence
X_T = np.array([[-1.8271, -1.6954, -1.1000], [0.3020, -1.4817, -0.2284]])
X_TC = np.array([[-1.7680, -0.0863, 1.6822], [-0.5750, -1.1013, 0.4749], [-0.6693, -0.6413, 0.6126],
                 [-0.3271, 0.3060, -1.0068], [0.6177, 0.3941, -2.6407], [-0.7001, 2.3465, 0.4309]])
X_CLEAN = np.array([[-1.8722, 0.5154, 0.1560], [-0.9036, 0.6064, -0.2540]])


def test_inf_norm():
    assert inf_norm(np.array([[1.0, -2.0], [0.5, 0.5]])) == 3.0
    assert inf_norm(np.zeros((0, 3))) == 0.0


@pytest.mark.parametrize("simplified", [True, False])
def test_incoherence_can_worsen_with_small_clean_pool(simplified):
    pool = ContaminatedPool(np.vstack([X_T, X_TC]), np.zeros(8))
    one = check_conditions(build_stacked(pool), [0, 1], 0.1, simplified=simplified)
    # eta n / m = 3 with n = 8, m = 2
    two = check_conditions(build_stacked(pool, CleanPool(X_CLEAN, np.zeros(2), 0.75)), [0, 1], 0.1,
                           simplified=simplified)
    assert one.alpha == pytest.approx(0.95627, abs=5e-5)
    assert two.alpha == pytest.approx(1.28213, abs=5e-5)
    assert two.b_min >= one.b_min


@pytest.mark.parametrize("seed", range(10))
def test_simplified_and_definitional_incoherence_agree(seed):
    rng = np.random.default_rng(seed)
    prob, _, gamma = random_problem(rng, 25, 3, m=int(rng.integers(0, 5)), eta=1.0)
    sys = prob.stacked()
    T = np.flatnonzero(gamma)
    a = check_conditions(sys, T, 0.1, simplified=True).alpha
    b = check_conditions(sys, T, 0.1, simplified=False).alpha
    assert a == pytest.approx(b, rel=1e-9, abs=1e-12)


def _orthogonal_instance(rng, p=6, t=3, sigma=0.1):
    d = OrthogonalDesign(random_orthogonal(p, rng), rng.normal(size=t), rng.normal(size=p),
                         rng.normal(size=p) * (rng.random(p) < 0.6), eta=rng.uniform(0.1, 3.0))
    beta = rng.normal(size=p)
    gam = np.zeros(d.n)
    gam[:t] = 5.0
    eps = sigma * rng.normal(size=d.n)
    ec = sigma * rng.normal(size=d.m)
    pr = d.problem(d.design() @ beta + gam + eps, d.clean_design() @ beta + ec)
    return d, pr, GroundTruth(beta, gam), eps, ec


@pytest.mark.parametrize("seed", range(15))
def test_orthogonal_closed_forms_match_generic_route(seed):
    rng = np.random.default_rng(100 + seed)
    d, pr, truth, eps, ec = _orthogonal_instance(rng)
    lam = 0.01
    try:
        rep = check_conditions(pr.stacked(), d.T, lam, truth)
    except SingularSubmatrix:
        pytest.skip("f = w = 0 in some bug direction")
    o = orthogonal_conditions(d, lam=lam, eps=eps, eps_clean=ec)
    assert rep.b_min == pytest.approx(o.b_min, abs=1e-10)
    assert rep.alpha == pytest.approx(o.alpha, abs=1e-10)
    assert rep.G == pytest.approx(o.G, abs=1e-9)


def test_degenerate_direction():
    d = OrthogonalDesign(np.eye(3), [1.0], [0.0, 1.0, 1.0], [0.0, 1.0, 0.0])
    with pytest.raises(DegenerateDirection):
        orthogonal_conditions(d)


def test_orthogonal_design_validation():
    with pytest.raises(ValueError):
        OrthogonalDesign(np.ones((2, 2)), [1.0], [1.0, 1.0])
    d = OrthogonalDesign(np.eye(3), [2.0], [1.0, 1.0, 1.0], [0.0, 3.0, 0.0], eta=1.0)
    assert (d.n, d.p, d.t, d.m) == (4, 3, 1, 1)
    assert d.weight() == pytest.approx(4.0)


def test_one_pool_orthogonal_alpha_is_ratio():
    d = OrthogonalDesign(np.eye(3), [0.5, -3.0], [1.0, 2.0, 1.0])
    o = orthogonal_conditions(d)
    assert o.alpha == pytest.approx(1.5)
    assert o.b_min == pytest.approx(1.0 / (9.0 / 4.0 + 1.0))


def test_singular_block_carries_partial_report():
    # row 0 is the only one touching the second feature, so its leverage is one
    X = np.array([[0.0, 1.0], [1.0, 0.0], [2.0, 0.0], [3.0, 0.0]])
    sys = build_stacked(ContaminatedPool(X, np.zeros(4)))
    with pytest.raises(SingularSubmatrix) as ei:
        check_conditions(sys, [0], 0.1)
    assert ei.value.report is not None and ei.value.report.b_min <= 1e-12


def test_invalid_index_set(rng):
    prob, _, _ = random_problem(rng, 10, 2)
    with pytest.raises(ValueError):
        check_conditions(prob.stacked(), [], 0.1)
    with pytest.raises(ValueError):
        check_conditions(prob.stacked(), [10], 0.1)


def test_noise_free_without_truth(rng):
    prob, _, gamma = random_problem(rng, 30, 2)
    rep = check_conditions(prob.stacked(), np.flatnonzero(gamma), 0.2)
    assert rep.noise_free and rep.lambda_star == 0.0 and rep.verdict_gamma is None
    assert not rep.certified


def test_lambda_star_infinite_when_incoherence_fails():
    pool = ContaminatedPool(np.vstack([X_T, X_TC]), np.zeros(8))
    sys = build_stacked(pool, CleanPool(X_CLEAN, np.zeros(2), 0.75))
    truth = GroundTruth(np.zeros(3), np.r_[1.0, 1.0, np.zeros(6)])
    rep = check_conditions(sys, [0, 1], 0.1, truth)
    assert math.isinf(rep.lambda_star) and not rep.certified


def test_noise_vector_recovers_eps(rng):
    prob, beta, gamma = random_problem(rng, 20, 2, m=4, sigma=0.0)
    eps = noise_vector(prob.stacked(), GroundTruth(beta, gamma))
    np.testing.assert_allclose(eps, 0.0, atol=1e-12)


def test_repetition_budget_values():
    d = OrthogonalDesign(np.eye(3), [1.0], [1.0, 1.0, 1.0], w_B=0.5)
    np.testing.assert_array_equal(repetition_budget(d, [1.5, 0.4, 1.0]), [9, 1, 4])
    Xc, dirs = repeated_design(d, [2, 0, 1])
    assert Xc.shape == (3, 3)
    np.testing.assert_array_equal(dirs, [0, 0, 2])
    np.testing.assert_allclose(np.sum(Xc ** 2, axis=1), 0.25)


def test_eigenvalue_sweep_monotone(rng):
    prob, _, gamma = random_problem(rng, 20, 3, m=4)
    out = eigenvalue_sweep(prob, np.flatnonzero(gamma), [0.0, 0.1, 0.5, 1.0, 4.0, 20.0])
    vals = [b for _, b in out]
    assert all(b >= a - 1e-12 for a, b in zip(vals, vals[1:]))
    with pytest.raises(ValueError):
        eigenvalue_sweep(prob, [0], [1.0, 0.5])
    with pytest.raises(ValueError):
        eigenvalue_sweep(prob, [0], [-1.0])
