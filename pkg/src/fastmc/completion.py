"""Alternating-minimization matrix completion driven by fast regressions.

:func:`complete` splits the observations into ``2T + 1`` independent groups,
initializes the left factor from a clipped top-``k`` SVD of the first group,
then alternates ``T`` times between a ``V``-regression on group ``2t + 1`` and
a ``U``-regression on group ``2t + 2``, orthonormalizing after each solve.
"""

import dataclasses
import math
import time
import warnings
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from . import linalg
from .errors import InitRankDeficient, InsufficientSamples, NonFinite, RankDeficient
from .metrics import principal_dist
from .multireg import fast_mult_reg
from .observed import ObservedEntries
from .prng import derive_seed
from .solver import SolverConfig

# derive_seed keys for the independent random streams of one run
_PARTITION, _INIT, _V_STEP, _U_STEP, _BASIS = range(5)


@dataclass(frozen=True)
class CompletionConfig:
    """Parameters of :func:`complete`.

    ``t_rounds=0`` picks ``ceil(log_4(1/eps)) + 2`` rounds. ``p`` defaults to
    the observed sample fraction. The per-regression accuracy is
    ``eps0 = eps / (n**eps0_power * kappa_hat**2)`` with ``kappa_hat`` read off
    the initial SVD, and the failure budget is ``delta0 = delta / (4 T n)``.
    """

    k: int
    eps: float = 1e-6
    delta: float = 0.01
    p: Optional[float] = None
    t_rounds: int = 0
    mu: float = 3.0
    c_sample: float = 10.0
    solver: SolverConfig = field(default_factory=SolverConfig)
    seed: int = 0
    eps0_power: float = 2.0
    tau_denominator: str = "n"
    init_sweeps: int = 50
    force_sketch: bool = False
    c_pow: float = 1.0
    workers: int = 1

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if not self.eps > 0:
            raise ValueError("eps must be positive")
        if not 0 < self.delta < 1:
            raise ValueError("delta must lie in (0, 1)")
        if self.p is not None and not 0 < self.p <= 1:
            raise ValueError("p must lie in (0, 1]")
        if self.t_rounds < 0:
            raise ValueError("t_rounds must be >= 0")
        if self.tau_denominator not in ("n", "m"):
            raise ValueError("tau_denominator must be 'n' or 'm'")

    @property
    def rounds(self):
        return self.t_rounds or auto_rounds(self.eps)


def auto_rounds(eps):
    return max(1, math.ceil(math.log(1.0 / eps, 4))) + 2 if eps < 1 else 2


@dataclass
class FactorPair:
    u_hat: np.ndarray
    v_hat: np.ndarray
    u_ortho: np.ndarray
    v_ortho: np.ndarray

    def product(self):
        """The completed matrix ``u_hat @ v_ortho.T``.

        ``u_hat`` is the last regression output and was fitted against
        ``v_ortho``, so this is the product the final solve optimized.
        """
        return self.u_hat @ self.v_ortho.T


@dataclass
class RoundRecord:
    round: int
    residual_on_omega: float
    wall_time: float
    dist_u: Optional[float] = None
    dist_v: Optional[float] = None
    frob_error: Optional[float] = None

    def to_json(self):
        return {
            "round": self.round,
            "dist_u": self.dist_u,
            "dist_v": self.dist_v,
            "frob_error": self.frob_error,
            "residual_on_omega": self.residual_on_omega,
            "wall_time_ms": 1e3 * self.wall_time,
        }


@dataclass
class ConvergenceReport:
    per_round: List[RoundRecord]
    omega_sizes: List[int]
    final_frob_error: Optional[float] = None
    final_rel_frob_error: Optional[float] = None
    warnings: List[str] = field(default_factory=list)
    rounds: int = 0
    eps0: float = 0.0
    delta0: float = 0.0
    kappa_hat: float = 1.0
    init_clipped_rows: int = 0
    multireg_wall_time: float = 0.0
    total_wall_time: float = 0.0

    def to_json(self):
        return {
            "per_round": [r.to_json() for r in self.per_round],
            "omega_sizes": list(self.omega_sizes),
            "final_frob_error": self.final_frob_error,
            "final_rel_frob_error": self.final_rel_frob_error,
            "warnings": list(self.warnings),
            "rounds": self.rounds,
            "eps0": self.eps0,
            "delta0": self.delta0,
            "kappa_hat": self.kappa_hat,
            "init_clipped_rows": self.init_clipped_rows,
            "wall_time_ms_multireg": 1e3 * self.multireg_wall_time,
            "wall_time_ms_total": 1e3 * self.total_wall_time,
        }


# ---------------------------------------------------------------- sampling --


def _values_from(m_full, i, j):
    if callable(m_full):
        return np.asarray(m_full(i, j), dtype=np.float64)
    if hasattr(m_full, "u_star"):
        from .synth import entry_oracle

        return entry_oracle(m_full, i, j)
    return np.asarray(m_full, dtype=np.float64)[i, j]


def sample_omega(m, n, p, seed, m_full):
    """Observe every entry independently with probability ``p``.

    ``m_full`` is a dense array, a :class:`~fastmc.synth.GroundTruth`, or a
    callable ``f(i, j)`` accepting index arrays.
    """
    if not 0 < p <= 1:
        raise ValueError("p must lie in (0, 1]")
    rng = np.random.default_rng(seed)
    mask = rng.random((n, m)) < p  # column-major draw order
    j, i = np.nonzero(mask)
    return ObservedEntries.from_triplets(m, n, i, j, _values_from(m_full, i, j))


def sample_omega_with_replacement(m, n, n_samples, seed, m_full):
    """Draw ``n_samples`` entries uniformly *with replacement*.

    Repeated draws of the same entry are stored once with their
    multiplicity, so ``n_samples`` may exceed ``m * n``.
    """
    if n_samples < 0:
        raise ValueError("n_samples must be nonnegative")
    rng = np.random.default_rng(seed)
    flat = rng.integers(0, m * n, size=int(n_samples))
    flat, counts = np.unique(flat, return_counts=True)
    i, j = flat // n, flat % n
    return ObservedEntries.from_triplets(m, n, i, j, _values_from(m_full, i, j),
                                         counts=counts)


def partition_omega(omega, t_rounds, seed):
    """Split the samples into ``2 t_rounds + 1`` groups uniformly at random.

    Each sample (each copy of a repeated entry) joins one group independently
    with equal probability, so the multiset union of the groups is exactly
    ``omega``. Within a group an entry appears once, carrying the number of
    its copies assigned there.
    """
    if t_rounds < 1:
        raise ValueError("t_rounds must be >= 1")
    groups = 2 * t_rounds + 1
    rng = np.random.default_rng(seed)
    if omega.counts is None:
        label = rng.integers(0, groups, size=omega.nnz)
        return [omega.select(label == g) for g in range(groups)]
    owner = np.repeat(np.arange(omega.nnz), omega.counts)
    label = rng.integers(0, groups, size=owner.size)
    per_group = np.zeros((groups, omega.nnz), dtype=np.int64)
    np.add.at(per_group, (label, owner), 1)
    out = []
    for g in range(groups):
        keep = per_group[g] > 0
        out.append(omega.select(keep, counts=per_group[g][keep]))
    return out


# ----------------------------------------------------------- initialization --


def tau_threshold(mu, k, dim):
    """Clipping radius ``2 mu sqrt(k) / sqrt(dim)``."""
    return 2.0 * mu * math.sqrt(k) / math.sqrt(dim)


@dataclass
class InitResult:
    u0: np.ndarray
    u_hat0: np.ndarray
    singular_values: np.ndarray
    tau: float
    clipped_rows: int
    completed_columns: int
    svd_residual: float

    def __iter__(self):
        return iter((self.u0, self.u_hat0))


def _complete_basis(a, k, rng):
    """Orthonormal ``rows x k`` basis containing ``col(a)``.

    When ``a`` has rank ``r < k`` the remaining directions are random.
    Returns the basis and the number of random directions added.
    """
    rows = a.shape[0]
    u, s = linalg.svd_full(a)[:2]
    r = int(np.sum(s > linalg.RANK_TOL * s[0])) if s.size and s[0] > 0 else 0
    base = u[:, :r]
    extra = rng.standard_normal((rows, k - r))
    for _ in range(2):  # twice is enough for orthogonality to working precision
        extra -= base @ (base.T @ extra)
        extra, _ = np.linalg.qr(extra)
    return np.column_stack((base, extra)), k - r


def orthonormal_basis(a, rng):
    """QR basis of ``a``; rank-deficient inputs are padded with random directions."""
    try:
        q, _ = linalg.orthonormalize(a)
        return q, 0
    except RankDeficient:
        return _complete_basis(a, a.shape[1], rng)


def init_factor(omega0, p, k, mu, sweeps=50, seed=0, tau_denominator="n"):
    """Clipped spectral initialization of the left factor.

    Takes the top-``k`` left singular vectors ``U_phi`` of
    ``P_{Omega_0}(M) / p``, zeroes the rows whose norm exceeds ``tau`` (rows
    with norm ``<= tau`` survive) and orthonormalizes the result.
    Unpacks as ``(u0, u_hat0)``.
    """
    m, n = omega0.shape
    if not 1 <= k <= min(m, n):
        raise ValueError(f"k={k} out of range for shape {omega0.shape}")
    if not p > 0:
        raise ValueError("p must be positive")
    rng = np.random.default_rng(derive_seed(seed, _BASIS))
    if omega0.nnz:
        svd = linalg.truncated_svd(omega0.to_csc() / p, k, sweeps=sweeps, seed=seed)
        u_phi, s, resid = svd.u, svd.s, svd.residual
    else:
        u_phi, s, resid = np.zeros((m, k)), np.zeros(k), 0.0
    tau = tau_threshold(mu, k, n if tau_denominator == "n" else m)
    keep = np.linalg.norm(u_phi, axis=1) <= tau
    u_tau = u_phi * keep[:, None]
    u0, added = orthonormal_basis(u_tau, rng)
    if added:
        warnings.warn(f"clipped initial factor has rank {k - added} < {k}",
                      InitRankDeficient, stacklevel=2)
    return InitResult(u0, u_tau, s, tau, int(m - keep.sum()), added, resid)


# -------------------------------------------------------------- diagnostics --


def lowrank_frob_diff(a1, b1, a2, b2):
    """``||a1 b1^T - a2 b2^T||_F`` without forming the ``m x n`` matrices.

    With ``[b1, b2] = Q T`` the difference equals ``[a1, -a2] T^T Q^T`` and
    ``Q`` drops out of the norm; unlike the Gram-matrix expansion this keeps
    full relative accuracy when the two products nearly agree.
    """
    _, t = np.linalg.qr(np.column_stack((b1, b2)))
    return float(np.linalg.norm(np.column_stack((a1, -a2)) @ t.T))


def sampling_probability(m, n, k, mu, sigma1, sigmak, frob_m, eps, c_sample):
    """``min(1, C kappa^2 mu^2 k^2.5 ln n ln(k ||M||_F / eps) / (m delta_2k^2))``."""
    d2k = delta_2k(k, sigma1, sigmak)
    value = (c_sample * (sigma1 / sigmak) ** 2 * mu**2 * k**2.5 * math.log(n)
             * math.log(k * frob_m / eps) / (m * d2k**2))
    return min(1.0, value)


def delta_2k(k, sigma1, sigmak):
    return sigmak / (100.0 * k * sigma1)


def mu2_bound(sigma1, sigmak, k, mu):
    """Incoherence level ``40 kappa sqrt(k) mu`` kept by the iterates."""
    return 40.0 * (sigma1 / sigmak) * math.sqrt(k) * mu


# ------------------------------------------------------------------- driver --


def complete(omega, cfg, ground_truth=None):
    """Run alternating minimization on ``omega``; returns ``(factors, report)``.

    ``ground_truth`` (a :class:`~fastmc.synth.GroundTruth`) only feeds the
    per-round distances and Frobenius errors in the report. A fully
    observed ``omega`` is used whole in every step instead of being split.
    """
    t_start = time.perf_counter()
    m, n = omega.shape
    k = cfg.k
    if not 1 <= k <= min(m, n):
        raise ValueError(f"k={k} out of range for shape {omega.shape}")
    rounds = cfg.rounds
    if omega.nnz == m * n:
        # nothing is random about a fully observed matrix, so splitting it
        # would only throw data away
        parts = [omega] * (2 * rounds + 1)
    else:
        parts = partition_omega(omega, rounds, derive_seed(cfg.seed, _PARTITION))
    p = cfg.p if cfg.p is not None else min(1.0, max(omega.n_samples, 1) / (m * n))
    report = ConvergenceReport(per_round=[], omega_sizes=[g.nnz for g in parts], rounds=rounds)
    rng = np.random.default_rng(derive_seed(cfg.seed, _BASIS))

    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        init = init_factor(parts[0], p, k, cfg.mu, cfg.init_sweeps,
                           derive_seed(cfg.seed, _INIT), cfg.tau_denominator)
    report.warnings += [str(w.message) for w in caught]
    report.init_clipped_rows = init.clipped_rows
    s = init.singular_values
    kappa_hat = float(s[0] / s[-1]) if s.size and s[-1] > 0 else 1.0
    dim = max(m, n)
    eps0 = min(cfg.eps / (dim**cfg.eps0_power * kappa_hat**2), 0.05)
    delta0 = min(cfg.delta / (4 * rounds * dim), 0.05)
    report.kappa_hat, report.eps0, report.delta0 = kappa_hat, eps0, delta0

    if ground_truth is not None:
        gt_left = ground_truth.u_star * ground_truth.sigma_star
        gt_norm = ground_truth.frobenius()

    def record(t, wall, u_hat=None, v_ortho=None, u_ortho=None):
        rec = RoundRecord(round=t, residual_on_omega=0.0, wall_time=wall)
        if u_hat is None:
            rec.residual_on_omega = float(np.linalg.norm(omega.values))
        else:
            rec.residual_on_omega = omega.residual_norm(u_hat, v_ortho)
        if ground_truth is not None:
            rec.dist_u = principal_dist(u_ortho, ground_truth.u_star)
            if v_ortho is not None:
                rec.dist_v = principal_dist(v_ortho, ground_truth.v_star)
                rec.frob_error = lowrank_frob_diff(gt_left, ground_truth.v_star, u_hat, v_ortho)
        report.per_round.append(rec)

    record(0, time.perf_counter() - t_start, u_ortho=init.u0)
    u_ortho = init.u0
    u_hat, v_hat, v_ortho = init.u_hat0, None, None
    solver = dataclasses.replace(cfg.solver, force_sketch=cfg.force_sketch or cfg.solver.force_sketch)
    for t in range(rounds):
        t0 = time.perf_counter()
        v_hat, rep_v = fast_mult_reg(parts[2 * t + 1], u_ortho, eps0, delta0,
                                     seed=derive_seed(cfg.seed, _V_STEP, t), solver=solver,
                                     c_pow=cfg.c_pow, workers=cfg.workers)
        v_ortho, _ = orthonormal_basis(v_hat, rng)
        u_hat, rep_u = fast_mult_reg(parts[2 * t + 2].transpose(), v_ortho, eps0, delta0,
                                     seed=derive_seed(cfg.seed, _U_STEP, t), solver=solver,
                                     c_pow=cfg.c_pow, workers=cfg.workers)
        u_ortho, _ = orthonormal_basis(u_hat, rng)
        report.multireg_wall_time += rep_v.wall_time + rep_u.wall_time
        for rep, side, total in ((rep_v, "columns", n), (rep_u, "rows", m)):
            if 2 * len(rep.skipped_columns) > total:
                msg = (f"round {t + 1}: {len(rep.skipped_columns)} of {total} {side} "
                       "have no observations")
                warnings.warn(msg, InsufficientSamples, stacklevel=2)
                report.warnings.append(msg)
        if not (np.all(np.isfinite(u_hat)) and np.all(np.isfinite(v_hat))):
            raise NonFinite(f"non-finite factor in round {t + 1}")
        record(t + 1, time.perf_counter() - t0, u_hat, v_ortho, u_ortho)

    if ground_truth is not None and rounds:
        report.final_frob_error = report.per_round[-1].frob_error
        report.final_rel_frob_error = report.final_frob_error / gt_norm
    report.total_wall_time = time.perf_counter() - t_start
    return FactorPair(u_hat, v_hat, u_ortho, v_ortho), report
