import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fastmc.errors import NonFinite, SingularMatrix
from fastmc.solver import (
    SolverConfig,
    backward_error_bound,
    direct_solve,
    high_precision_reg,
    high_precision_reg_many,
    weighted_reg,
)

SKETCH = SolverConfig(force_sketch=True)


def qr_oracle(a, b):
    q, r = np.linalg.qr(a)
    return np.linalg.solve(r, q.T @ b)


def test_config_validation():
    for bad in (dict(eps1=0.0), dict(eps1=0.2), dict(delta1=0.1), dict(eps_ose=1.0),
                dict(max_iter=0), dict(m_sk=0)):
        with pytest.raises(ValueError):
            SolverConfig(**bad)
    assert SolverConfig(eps1=1e-10, c_iter=1.5).n_updates == math.ceil(1.5 * math.log(1e10))
    assert SolverConfig(eps1=1e-300 * 1e200, max_iter=7).n_updates == 7


@pytest.mark.parametrize("cfg", [SolverConfig(), SKETCH])
def test_identity_system(cfg):
    b = np.array([1.0, 2.0, 3.0, 4.0])
    res = high_precision_reg(np.eye(4), b, cfg)
    np.testing.assert_allclose(res.x, b, atol=1e-12)
    assert res.residual_norm < 1e-12


def test_orthogonal_rhs():
    res = high_precision_reg(np.array([[1.0], [0.0]]), np.array([0.0, 1.0]))
    assert res.x[0] == 0.0 and res.residual_norm == 1.0


def test_random_512x8_accuracy(rng):
    a = rng.standard_normal((512, 8))
    b = rng.standard_normal(512)
    res = high_precision_reg(a, b, SolverConfig(eps1=1e-10))
    x = qr_oracle(a, b)
    assert res.preconditioned
    assert np.linalg.norm(res.x - x) <= 1e-6 * np.linalg.norm(x)
    assert abs(res.residual_norm - np.linalg.norm(a @ res.x - b)) <= 1e-12 * res.residual_norm


def test_direct_path_for_short_systems(rng):
    a = rng.standard_normal((10, 4))
    b = rng.standard_normal(10)
    res = high_precision_reg(a, b)
    assert not res.preconditioned and res.iterations == 0
    np.testing.assert_allclose(res.x, qr_oracle(a, b), rtol=1e-12)


def test_rank_deficient_min_norm(rng):
    a = rng.standard_normal((30, 2))
    a = np.column_stack((a, a[:, 0]))
    b = rng.standard_normal(30)
    for cfg in (SolverConfig(), SKETCH):
        res = high_precision_reg(a, b, cfg)
        np.testing.assert_allclose(res.x, np.linalg.pinv(a) @ b, atol=1e-10)


def test_underdetermined_min_norm(rng):
    a = rng.standard_normal((2, 5))
    b = rng.standard_normal(2)
    res = high_precision_reg(a, b, SKETCH)
    np.testing.assert_allclose(res.x, np.linalg.pinv(a) @ b, atol=1e-12)


def test_nonfinite_input():
    with pytest.raises(NonFinite):
        high_precision_reg(np.array([[1.0], [np.inf]]), np.ones(2))


def test_iterations_capped(rng):
    a = rng.standard_normal((200, 5))
    b = rng.standard_normal(200)
    res = high_precision_reg(a, b, SolverConfig(force_sketch=True, max_iter=3, m_sk=16))
    assert res.iterations <= 3


def test_history_records_iterates(rng):
    a = rng.standard_normal((300, 4))
    b = rng.standard_normal(300)
    res = high_precision_reg(a, b, SolverConfig(m_sk=64, eps1=1e-12), record=True)
    assert len(res.history) == res.iterations + 1
    np.testing.assert_array_equal(res.history[-1], res.x)


def test_determinism(rng):
    a = rng.standard_normal((400, 6))
    b = rng.standard_normal(400)
    r1 = high_precision_reg(a, b, SolverConfig(seed=3, m_sk=64))
    r2 = high_precision_reg(a, b, SolverConfig(seed=3, m_sk=64))
    np.testing.assert_array_equal(r1.x, r2.x)


@settings(max_examples=30, deadline=None)
@given(st.integers(20, 200), st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_cost_guarantee_property(n, d, seed):
    g = np.random.default_rng(seed)
    a = g.standard_normal((n, d))
    b = g.standard_normal(n)
    res = high_precision_reg(a, b, SolverConfig(eps1=1e-8, force_sketch=True, seed=seed))
    opt = np.linalg.norm(a @ qr_oracle(a, b) - b)
    assert res.residual_norm <= (1 + 1e-8) * opt + 1e-13


def test_weighted_ones_bit_identical(rng):
    a = rng.standard_normal((150, 5))
    b = rng.standard_normal(150)
    cfg = SolverConfig(force_sketch=True, seed=8)
    r1 = weighted_reg(a, b, np.ones(150), cfg)
    r2 = high_precision_reg(a, b, cfg)
    np.testing.assert_array_equal(r1.x, r2.x)
    assert r1.iterations == r2.iterations


def test_weighted_single_row():
    a = np.array([[2.0], [1.0], [5.0]])
    b = np.array([3.0, 7.0, -1.0])
    res = weighted_reg(a, b, np.array([1.0, 0.0, 0.0]))
    assert res.x[0] == pytest.approx(1.5, rel=1e-15)


def test_weighted_matches_scaled_oracle(rng):
    a = rng.standard_normal((300, 6))
    b = rng.standard_normal(300)
    w = rng.uniform(0, 2, 300)
    res = weighted_reg(a, b, w, SolverConfig(eps1=1e-10))
    r = np.sqrt(w)
    x = qr_oracle(a * r[:, None], b * r)
    want = np.sqrt(np.sum(w * (a @ x - b) ** 2))
    assert abs(res.residual_norm - want) <= 1e-8 * want


def test_weighted_all_zero_and_rejects_negative(rng):
    a = rng.standard_normal((5, 2))
    res = weighted_reg(a, np.ones(5), np.zeros(5))
    assert res.residual_norm == 0.0 and np.all(res.x == 0)
    with pytest.raises(ValueError):
        weighted_reg(a, np.ones(5), -np.ones(5))


def test_backward_error_bound_examples():
    a = np.diag([2.0, 3.0])
    assert backward_error_bound(a, 0.04, 0.0) == 0.0
    assert backward_error_bound(a, 0.04, 1.0) == pytest.approx(0.2, rel=1e-15)
    assert backward_error_bound(a, 0.16, 1.0) == pytest.approx(2 * backward_error_bound(a, 0.04, 1.0))
    with pytest.raises(SingularMatrix):
        backward_error_bound(np.zeros((3, 2)), 0.01, 1.0)


def test_backward_error_algebra():
    # the proof bounds ||A(x'-x*)||^2 = ((1+e)^2 - 1) OPT^2 <= 4 e OPT^2 for e in (0, 1)
    for e in np.linspace(1e-12, 1, 200):
        assert (1 + e) ** 2 - 1 <= 4 * e


def test_direct_solve_matches_lstsq(rng):
    a = rng.standard_normal((12, 3))
    b = rng.standard_normal(12)
    np.testing.assert_allclose(direct_solve(a, b), np.linalg.lstsq(a, b, rcond=None)[0], rtol=1e-12)


@pytest.mark.parametrize("force", [False, True])
def test_many_matches_single(rng, force):
    systems = [(rng.standard_normal((n, 3)), rng.standard_normal(n)) for n in rng.integers(1, 80, 120)]
    systems.append((np.ones((6, 3)), np.arange(6.0)))  # rank deficient
    seeds = list(range(len(systems)))
    cfg = SolverConfig(eps1=1e-12, force_sketch=force)
    many = high_precision_reg_many(systems, cfg, seeds)
    for (a, b), s, got in zip(systems, seeds, many):
        one = high_precision_reg(a, b, dataclasses.replace(cfg, seed=s))
        scale = max(np.linalg.norm(one.x), 1.0)
        assert np.linalg.norm(got.x - one.x) <= 1e-9 * scale
        assert abs(got.residual_norm - np.linalg.norm(a @ got.x - b)) <= 1e-12 * max(got.residual_norm, 1.0)
