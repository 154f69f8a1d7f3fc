import math
import warnings

import numpy as np
import pytest

from fastmc import completion as mc
from fastmc.errors import InitRankDeficient, InsufficientSamples
from fastmc.metrics import principal_dist
from fastmc.observed import ObservedEntries
from fastmc.synth import gen_incoherent


def full_obs(mat):
    return ObservedEntries.from_dense(mat, np.ones(mat.shape, dtype=bool))


def test_config_validation():
    for bad in (dict(k=0), dict(k=1, eps=0), dict(k=1, delta=1), dict(k=1, p=0),
                dict(k=1, t_rounds=-1), dict(k=1, tau_denominator="x")):
        with pytest.raises(ValueError):
            mc.CompletionConfig(**bad)
    assert mc.CompletionConfig(k=1, eps=1e-6).rounds == math.ceil(math.log(1e6, 4)) + 2
    assert mc.CompletionConfig(k=1, t_rounds=3).rounds == 3


def test_sample_omega_full_and_empty():
    mat = np.arange(12.0).reshape(3, 4)
    obs = mc.sample_omega(3, 4, 1.0, 0, mat)
    assert obs.nnz == 12
    np.testing.assert_array_equal(obs.to_dense(), mat)
    assert mc.sample_omega(3, 4, 1e-12, 0, mat).nnz == 0
    with pytest.raises(ValueError):
        mc.sample_omega(3, 4, 0.0, 0, mat)


def test_sample_omega_mean_band():
    mat = np.zeros((100, 100))
    mean = np.mean([mc.sample_omega(100, 100, 0.3, s, mat).nnz for s in range(100)])
    assert abs(mean - 3000) <= 3 * math.sqrt(3000 * 0.7)


def test_sample_with_replacement_counts():
    obs = mc.sample_omega_with_replacement(4, 5, 100, 3, lambda i, j: i + 10.0 * j)
    assert obs.n_samples == 100 and obs.nnz <= 20
    rows, vals = obs.column(2)
    np.testing.assert_array_equal(vals, rows + 20.0)


def test_partition_small_cases():
    obs = mc.sample_omega(10, 10, 0.5, 1, np.ones((10, 10)))
    parts = mc.partition_omega(obs, 1, 0)
    assert len(parts) == 3
    masks = [p.mask() for p in parts]
    assert not np.any(masks[0] & masks[1]) and not np.any(masks[1] & masks[2])
    np.testing.assert_array_equal(sum(m.astype(int) for m in masks), obs.mask())
    empty = mc.partition_omega(ObservedEntries.empty(3, 3), 2, 0)
    assert len(empty) == 5 and all(p.nnz == 0 for p in empty)


def test_partition_sizes_band():
    flat = np.random.default_rng(0).choice(200 * 200, size=10000, replace=False)
    obs = ObservedEntries.from_triplets(200, 200, flat // 200, flat % 200, np.ones(10000))
    for seed in range(50):
        sizes = [p.nnz for p in mc.partition_omega(obs, 4, seed)]
        assert sum(sizes) == 10000
        assert all(abs(s - 1111) <= 4 * math.sqrt(1111) for s in sizes)


def test_partition_preserves_multiset():
    obs = mc.sample_omega_with_replacement(6, 7, 400, 2, np.ones((6, 7)))
    parts = mc.partition_omega(obs, 3, 5)
    counts = np.zeros((6, 7), dtype=int)
    for p in parts:
        for j in range(7):
            rows = p.row_idx[p.col_ptr[j]:p.col_ptr[j + 1]]
            counts[rows, j] += p.multiplicities()[p.col_ptr[j]:p.col_ptr[j + 1]]
    ref = np.zeros((6, 7), dtype=int)
    for j in range(7):
        rows = obs.row_idx[obs.col_ptr[j]:obs.col_ptr[j + 1]]
        ref[rows, j] = obs.multiplicities()[obs.col_ptr[j]:obs.col_ptr[j + 1]]
    np.testing.assert_array_equal(counts, ref)


def test_tau_threshold():
    assert mc.tau_threshold(3.0, 5, 300) == pytest.approx(2 * 3 * math.sqrt(5) / math.sqrt(300))


def test_init_exact_when_fully_observed():
    gt = gen_incoherent(40, 30, 3, 2.0, 4.0, 2)
    init = mc.init_factor(full_obs(gt.dense()), 1.0, 3, 100.0)
    assert init.clipped_rows == 0
    assert principal_dist(init.u0, gt.u_star) <= 1e-6


def test_init_all_rows_clipped_falls_back():
    gt = gen_incoherent(40, 30, 3, 2.0, 4.0, 2)
    with pytest.warns(InitRankDeficient):
        init = mc.init_factor(full_obs(gt.dense()), 1.0, 3, 1e-6)
    assert init.clipped_rows == 40 and init.completed_columns == 3
    assert np.abs(init.u0.T @ init.u0 - np.eye(3)).max() <= 1e-12


def test_rank_one_toy_exact():
    u = np.linspace(1, 2, 8)
    v = np.linspace(-1, 1, 5) + 0.1
    m = np.outer(u, v)
    fac, rep = mc.complete(full_obs(m), mc.CompletionConfig(k=1, t_rounds=2))
    assert np.linalg.norm(m - fac.product()) <= 1e-8
    assert rep.omega_sizes == [40] * 5


def test_full_rank_interpolation():
    m = np.random.default_rng(3).standard_normal((7, 5))
    fac, _ = mc.complete(full_obs(m), mc.CompletionConfig(k=5, t_rounds=2))
    assert np.linalg.norm(m - fac.product()) <= 1e-8


def test_report_fields_with_ground_truth():
    # every group sees about 10% of the entries; large enough for k=2
    gt = gen_incoherent(300, 200, 2, 1.0, 4.0, 1)
    obs = mc.sample_omega(300, 200, 0.9, 4, gt)
    fac, rep = mc.complete(obs, mc.CompletionConfig(k=2, t_rounds=4, seed=1), ground_truth=gt)
    assert len(rep.per_round) == 5 and rep.per_round[0].dist_v is None
    assert rep.final_rel_frob_error == pytest.approx(
        np.linalg.norm(gt.dense() - fac.product()) / np.linalg.norm(gt.dense()), rel=1e-6, abs=1e-14)
    assert rep.final_rel_frob_error <= 1e-2 * rep.per_round[1].frob_error / gt.frobenius()
    js = rep.to_json()
    assert js["rounds"] == 4 and len(js["per_round"]) == 5
    assert sum(rep.omega_sizes) == obs.nnz


def test_sparse_sampling_warns():
    gt = gen_incoherent(30, 200, 2, 1.0, 10.0, 0)
    obs = mc.sample_omega(30, 200, 0.02, 0, gt)
    with pytest.warns(InsufficientSamples):
        _, rep = mc.complete(obs, mc.CompletionConfig(k=2, t_rounds=1))
    assert rep.warnings


def test_deterministic():
    gt = gen_incoherent(40, 30, 2, 2.0, 4.0, 5)
    obs = mc.sample_omega(40, 30, 0.5, 1, gt)
    cfg = mc.CompletionConfig(k=2, t_rounds=3, seed=9)
    a, _ = mc.complete(obs, cfg)
    b, _ = mc.complete(obs, cfg)
    np.testing.assert_array_equal(a.product(), b.product())


def test_lowrank_frob_diff(rng):
    a1, b1 = rng.standard_normal((9, 2)), rng.standard_normal((7, 2))
    a2, b2 = rng.standard_normal((9, 3)), rng.standard_normal((7, 3))
    want = np.linalg.norm(a1 @ b1.T - a2 @ b2.T)
    assert mc.lowrank_frob_diff(a1, b1, a2, b2) == pytest.approx(want, rel=1e-12)
    assert mc.lowrank_frob_diff(a1, b1, a1, b1) <= 1e-14


def test_sampling_probability():
    assert mc.delta_2k(10, 2.0, 1.0) == pytest.approx(5e-4)
    assert mc.sampling_probability(200, 300, 5, 1.0, 2.0, 1.0, 10.0, 1e-6, 10.0) == 1.0
    small = [mc.sampling_probability(10**9, 300, 1, 1.0, 1.0, 1.0, 1.0, 0.1, c) for c in (1e-3, 1e-2)]
    assert small[0] < small[1] < 1.0
    assert mc.mu2_bound(2.0, 1.0, 4, 3.0) == pytest.approx(480.0)
