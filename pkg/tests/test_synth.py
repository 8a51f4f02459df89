import numpy as np
import pytest

from lassodebug.synth import (SynthSpec, bug_floor, generate, generate_clean_pool, orthogonal_clean_pool,
                              orthogonal_leaning_design, random_orthogonal, random_orthogonal_design, stream)


def test_streams_are_deterministic_and_separate():
    a = stream(5, "design").standard_normal(4)
    np.testing.assert_array_equal(a, stream(5, "design").standard_normal(4))
    assert not np.allclose(a, stream(5, "noise").standard_normal(4))
    assert not np.allclose(a, stream(6, "design").standard_normal(4))


def test_bug_law_changes_leave_design_alone():
    a, _ = generate(SynthSpec(n=50, p=3, t=5, seed=1))
    b, _ = generate(SynthSpec(n=50, p=3, t=5, seed=1, bug_law="constant"))
    np.testing.assert_array_equal(a.X, b.X)


def test_generated_bugs_follow_law():
    n, s = 1000, 0.1
    pool, truth = generate(SynthSpec(n=n, p=4, c_t=0.1, sigma_star=s, seed=3))
    assert truth.t == 100
    mags = np.abs(truth.gamma_star[truth.support])
    assert mags.min() >= bug_floor(n, s) and mags.max() <= bug_floor(n, s) + 10 * s
    np.testing.assert_allclose(pool.y, pool.X @ truth.beta_star + truth.eps + truth.gamma_star)
    assert np.std(truth.eps) == pytest.approx(s, rel=0.1)
    assert np.all(np.abs(truth.beta_star) <= 1.0)


def test_constant_bugs():
    _, truth = generate(SynthSpec(n=30, p=2, t=4, bug_law="constant", bug_constant=2.5))
    np.testing.assert_allclose(truth.gamma_star[truth.support], 2.5)


def test_spec_validation():
    for kw in ({"t": 1, "c_t": 0.1}, {}, {"t": 40}, {"t": 1, "design": "weird"},
               {"t": 1, "bug_law": "weird"}, {"t": 1, "design": "from_matrix"}, {"t": 1, "design": "orthogonal"}):
        with pytest.raises(ValueError):
            SynthSpec(n=30, p=2, **kw)


def test_from_matrix_and_covariance():
    M = np.arange(12.0).reshape(6, 2)
    pool, _ = generate(SynthSpec(n=6, p=2, t=1, design="from_matrix", matrix=M))
    np.testing.assert_array_equal(pool.X, M)
    C = np.array([[1.0, 0.8], [0.8, 1.0]])
    pool, _ = generate(SynthSpec(n=5000, p=2, t=0, covariance=C))
    np.testing.assert_allclose(np.cov(pool.X.T), C, atol=0.06)


def test_clean_pool_labels():
    pool, truth = generate(SynthSpec(n=40, p=3, t=4, seed=2))
    clean = generate_clean_pool(pool, truth, [0, 5, 7], eta=2.0)
    np.testing.assert_allclose(clean.y, pool.X[[0, 5, 7]] @ truth.beta_star)
    assert clean.eta == 2.0
    assert generate_clean_pool(pool, truth, []).m == 0
    with pytest.raises(ValueError):
        generate_clean_pool(pool, truth, [40])


def test_orthogonal_generators():
    rng = np.random.default_rng(0)
    Q = random_orthogonal(5, rng)
    np.testing.assert_allclose(Q.T @ Q, np.eye(5), atol=1e-12)
    d = random_orthogonal_design(6, 2, seed=4)
    spec = SynthSpec(n=d.n, p=d.p, t=d.t, design="orthogonal", orthogonal=d, seed=4)
    pool, truth = generate(spec)
    np.testing.assert_array_equal(truth.support, [0, 1])
    clean, eps = orthogonal_clean_pool(d, truth, 0.0)
    np.testing.assert_allclose(clean.y, d.clean_design() @ truth.beta_star)
    assert eps.shape == (d.m,)


def test_orthogonal_leaning_design_rows():
    X = orthogonal_leaning_design(20, 5, seed=1, noise=0.0)
    assert X.shape == (20, 5)
    assert np.all(np.count_nonzero(X, axis=1) == 1)
    np.testing.assert_array_equal(np.bincount(np.argmax(np.abs(X), axis=1), minlength=5), [4] * 5)
