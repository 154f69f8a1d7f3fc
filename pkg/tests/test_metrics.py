import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm, hadamard, null_space

from fastmc import metrics
from fastmc.errors import NotOrthonormal, PreconditionViolated, RankDeficient
from conftest import random_orthonormal


def complement_dist(u, w):
    """``||U_perp^T W||`` with an explicitly built complement."""
    uq, _ = np.linalg.qr(u)
    wq, _ = np.linalg.qr(w)
    perp = null_space(uq.T)
    return np.linalg.norm(perp.T @ wq, 2)


def test_principal_dist_examples(rng):
    e = np.eye(3)
    assert metrics.principal_dist(e[:, :1], e[:, :1]) == 0.0
    assert metrics.principal_dist(e[:, :1], e[:, 1:2]) == pytest.approx(1.0, abs=1e-15)
    a = rng.standard_normal((50, 3))
    b = rng.standard_normal((50, 3))
    d = metrics.principal_dist(a, b)
    assert d == pytest.approx(complement_dist(a, b), abs=1e-10)
    assert d == pytest.approx(metrics.principal_dist(b, a), abs=1e-10)
    g = rng.standard_normal((3, 3))
    assert metrics.principal_dist(a, b @ g) == pytest.approx(d, abs=1e-10)
    with pytest.raises(RankDeficient):
        metrics.principal_dist(np.ones((5, 2)), a[:5])


def test_geometry_examples(rng):
    u = random_orthonormal(rng, 40, 4)
    g = metrics.subspace_geometry(u, u)
    assert g.sin_theta <= 1e-12 and g.cos_theta == pytest.approx(1.0)
    assert g.tan_theta <= 1e-12 and g.dist_c_ub <= 1e-10
    e = np.eye(6)
    g = metrics.subspace_geometry(e[:, :2], e[:, 2:4])
    assert g.sin_theta == 1.0 and g.cos_theta == 0.0 and math.isinf(g.tan_theta)
    with pytest.raises(NotOrthonormal):
        metrics.subspace_geometry(2 * u, u)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([(8, 2), (40, 4), (100, 7)]))
def test_geometry_invariants(seed, shape):
    rng = np.random.default_rng(seed)
    v = random_orthonormal(rng, *shape)
    u = random_orthonormal(rng, *shape)
    g = metrics.subspace_geometry(v, u)
    assert g.sin_theta**2 + g.cos_theta**2 == pytest.approx(1.0, abs=1e-10)
    assert g.tan_theta == pytest.approx(g.sin_theta / g.cos_theta, rel=1e-8)
    assert g.dist == pytest.approx(complement_dist(v, u), abs=1e-10)
    assert g.sin_theta <= g.dist_c_ub + 1e-12
    assert g.dist_c_ub <= 2 * g.tan_theta + 1e-8


def test_incoherence_examples(rng):
    assert metrics.incoherence(np.eye(16)[:, :4]) == pytest.approx(2.0)
    h = hadamard(16)[:, :4] / 4.0
    assert metrics.incoherence(h) == pytest.approx(1.0)
    u = random_orthonormal(rng, 64, 4)
    brute = max(np.sqrt(sum(x * x for x in row)) for row in u) * math.sqrt(64 / 4)
    mu = metrics.incoherence(u)
    assert mu == pytest.approx(brute, rel=1e-12)
    assert 1 - 1e-10 <= mu <= 4 + 1e-10


def test_leverage_scores(rng):
    u = random_orthonormal(rng, 20, 3)
    np.testing.assert_allclose(metrics.leverage_scores(u), (u * u).sum(1), atol=1e-12)
    x = rng.standard_normal((30, 3))
    lev = metrics.leverage_scores(x)
    left = np.linalg.svd(x, full_matrices=False)[0]
    np.testing.assert_allclose(lev, (left * left).sum(1), atol=1e-10)
    assert lev.sum() == pytest.approx(3.0, abs=1e-8)
    assert np.all((lev >= -1e-12) & (lev <= 1 + 1e-12))
    g = rng.standard_normal((3, 3))
    np.testing.assert_allclose(metrics.leverage_scores(x @ g), lev, atol=1e-8)
    with pytest.raises(RankDeficient):
        metrics.leverage_scores(np.ones((4, 2)))


def test_condition_number(rng):
    assert metrics.condition_number(random_orthonormal(rng, 9, 3)) == pytest.approx(1.0)
    assert metrics.condition_number(np.diag([4.0, 1.0])) == pytest.approx(4.0)
    x = rng.standard_normal((12, 4))
    s = np.linalg.svd(x, compute_uv=False)
    assert metrics.condition_number(x) == pytest.approx(s[0] / s[-1], rel=1e-12)
    with pytest.raises(RankDeficient):
        metrics.condition_number(np.ones((3, 2)))


def test_incoherence_perturbation_examples(rng):
    a = rng.standard_normal((30, 3))
    lhs, rhs = metrics.check_incoherence_perturbation(a, a)
    assert np.all(lhs == 0) and rhs == 0
    e = rng.standard_normal(a.shape)
    e /= np.linalg.norm(e, 2)
    lhs, rhs = metrics.check_incoherence_perturbation(a, a + 1e-8 * e)
    assert lhs.max() <= 1e-3 * rhs
    # a small rotation keeps ||A - A Q|| inside the precondition
    q = expm(0.05 * (lambda w: w - w.T)(rng.standard_normal((3, 3))))
    lhs, rhs = metrics.check_incoherence_perturbation(a, a @ q)
    assert lhs.max() <= 1e-12 and rhs > 0
    with pytest.raises(PreconditionViolated):
        metrics.check_incoherence_perturbation(a, a + 1e3 * e)


def test_dist_by_spectral_examples(rng):
    x = rng.standard_normal((25, 3))
    lhs, rhs = metrics.check_dist_by_spectral(x, x)
    assert lhs <= 1e-7 and rhs == 0
    lhs, _ = metrics.check_dist_by_spectral(x, x @ np.diag([1.0, 1.1, 0.9]))
    assert lhs <= 1e-7
    with pytest.raises(PreconditionViolated):
        metrics.check_dist_by_spectral(x, -x)


def test_pinv_perturbation_diagonal():
    a = np.diag([2.0, 1.0])
    b = np.diag([2.0, 0.5])
    lhs, rhs = metrics.check_pinv_perturbation(a, b)
    # pinv difference diag(0, 1), max ||pinv||^2 = 4, ||a - b|| = 0.5
    assert lhs == pytest.approx(1.0) and rhs == pytest.approx(4.0)
    lhs, rhs = metrics.check_pinv_perturbation(a, a)
    assert lhs == 0 and rhs == 0
    with pytest.raises(RankDeficient):
        metrics.check_pinv_perturbation(a, np.diag([1.0, 0.0]))


def test_fourth_moment_examples(rng):
    u = np.eye(8)[:, :2]
    x = np.array([1.0, 0.0])
    # one row carries all the mass: sum <x, u_i>^4 = 1 = mu^2 k / m with mu^2 = 4
    first, second = metrics.fourth_moment_ratios(u, u, x, x, 2.0, 2.0)
    assert first == pytest.approx(1.0) and second == pytest.approx(1.0)
    h = hadamard(16)[:, :3] / 4.0
    r = metrics.check_fourth_moment(h, h, 1.0, 1.0, trials=50)
    assert max(r) <= 1 + 1e-10
    with pytest.raises(PreconditionViolated):
        metrics.check_fourth_moment(u, u, 1.0, 1.0)
