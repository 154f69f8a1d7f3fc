"""Multiple-response regression restricted to an observed set.

Solving ``min_X ||W o (M - Y X^T)||_F`` for a binary mask ``W`` splits into
one small least-squares problem per column ``j``: only the rows ``K_j`` of
``Y`` where column ``j`` is observed enter it. Gathering those rows costs
``O(|K_j| k)``, so a sweep over all columns touches ``O(||W||_0 k)`` data.
"""

import dataclasses
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import List

import numpy as np

from . import linalg
from .errors import DimensionMismatch
from .prng import derive_seed
from .solver import SolverConfig, high_precision_reg_many, weighted_reg


@dataclass
class MultiRegReport:
    per_column_residuals: np.ndarray
    skipped_columns: List[int]
    total_gathered_rows: int
    wall_time: float
    # rows of Y actually read by the per-column gathers
    touched_row_reads: int = 0
    solver_iterations: int = 0
    sketched_columns: int = 0
    eps1: float = 0.0
    kappa0: float = 1.0
    extra: dict = field(default_factory=dict)


def eps1_for_column(eps0, n, kappa0, c_pow=1.0):
    """Per-column cost accuracy ``eps0**2 * (n * kappa0)**(-2 * c_pow)``.

    Squared because a ``(1 + eps1)`` cost guarantee only controls the
    solution error up to ``sqrt(eps1)``.
    """
    if kappa0 < 1 or n < 1:
        raise ValueError("need kappa0 >= 1 and n >= 1")
    return eps0**2 * (n * kappa0) ** (-2.0 * c_pow)


def gather_column(obs, y, j):
    """Rows of ``y`` on the support of column ``j`` and the observed values."""
    rows, vals = obs.column(j)
    return y[rows], vals


def estimate_kappa0(obs, y):
    """``sigma_max(M) / sigma_min(Y)`` with the unobserved ``sigma_max(M)``
    replaced by the Frobenius norm of the observed values rescaled by
    ``1/sqrt(p_hat)``, ``p_hat = nnz / (m n)``."""
    s = linalg.svd_full(y).s
    if obs.nnz == 0:
        return 1.0
    p_hat = obs.nnz / (obs.rows * obs.cols)
    scale = np.linalg.norm(obs.values) / math.sqrt(p_hat)
    if s.size == 0 or s[-1] <= 0:
        return 1e150
    return max(1.0, float(scale / s[-1]))


def fast_mult_reg(obs, y, eps0, delta0, seed=0, solver=None, kappa0=None,
                  c_pow=1.0, force_sketch=None, workers=1, batched=True):
    """Return ``x`` (``n x k``) whose row ``j`` fits column ``j`` of ``M``.

    Row ``j`` minimizes ``||y[K_j] x_j - M[K_j, j]||_2`` where ``K_j`` is
    the observed support of column ``j``. Every column is solved with
    accuracy
    :func:`eps1_for_column` and failure probability ``delta0 / n``; columns
    with an empty support get a zero row and are reported as skipped.

    Parameters
    ----------
    obs : ObservedEntries
        ``M`` restricted to the observed set, ``m x n``.
    y : ndarray, ``m x k``
        The fixed factor.
    eps0, delta0 : float in (0, 0.1)
        Target accuracy ``||x - x_exact|| <= eps0`` and failure probability.
    seed : int
        Column ``j`` uses the sketch seed ``derive_seed(seed, j)``.
    solver : SolverConfig, optional
        Template for the per-column solver (``eps1``/``delta1``/``seed`` are
        overwritten).
    workers : int
        Thread count for the per-column route; results do not depend on it.
    batched : bool
        Solve the columns together with
        :func:`fastmc.solver.high_precision_reg_many`. With ``False`` each
        column goes through :func:`fastmc.solver.weighted_reg` with unit
        weights. Both run the same algorithm with the same sketches.
    """
    y = linalg.as_dense(y, "y")
    if y.shape[0] != obs.rows:
        raise DimensionMismatch(f"y has {y.shape[0]} rows, mask has {obs.rows}")
    if not 0.0 < eps0 < 0.1 or not 0.0 < delta0 < 0.1:
        raise ValueError("eps0 and delta0 must lie in (0, 0.1)")
    t0 = time.perf_counter()
    n, k = obs.cols, y.shape[1]
    if kappa0 is None:
        kappa0 = estimate_kappa0(obs, y)
    eps1 = max(eps1_for_column(eps0, n, kappa0, c_pow), 1e-300)
    base = solver or SolverConfig()
    overrides = dict(eps1=eps1, delta1=delta0 / n)
    if force_sketch is not None:
        overrides["force_sketch"] = force_sketch
    base = dataclasses.replace(base, **overrides)

    ptr, row_idx, values = obs.col_ptr, obs.row_idx, obs.values
    x = np.zeros((n, k))
    resid = np.zeros(n)

    def solve(j):
        lo, hi = ptr[j], ptr[j + 1]
        if lo == hi:
            return None
        sub_y = y[row_idx[lo:hi]]
        sub_b = values[lo:hi]
        cfg = dataclasses.replace(base, seed=derive_seed(seed, j))
        return weighted_reg(sub_y, sub_b, np.ones(hi - lo), cfg), sub_y.shape[0]

    if batched:
        live = [j for j in range(n) if ptr[j + 1] > ptr[j]]
        systems = [(y[row_idx[ptr[j]:ptr[j + 1]]], values[ptr[j]:ptr[j + 1]]) for j in live]
        solved = high_precision_reg_many(systems, base, [derive_seed(seed, j) for j in live])
        results = [None] * n
        for j, res, (sub_y, _) in zip(live, solved, systems):
            results[j] = (res, sub_y.shape[0])
    elif workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(solve, range(n)))
    else:
        results = [solve(j) for j in range(n)]

    skipped, iters, sketched, touched = [], 0, 0, 0
    for j, out in enumerate(results):
        if out is None:
            skipped.append(j)
            continue
        res, n_rows = out
        touched += n_rows
        x[j] = res.x
        resid[j] = res.residual_norm
        iters += res.iterations
        sketched += res.preconditioned
    report = MultiRegReport(
        per_column_residuals=resid,
        skipped_columns=skipped,
        total_gathered_rows=int(sum(ptr[j + 1] - ptr[j] for j in range(n))),
        wall_time=time.perf_counter() - t0,
        touched_row_reads=touched,
        solver_iterations=iters,
        sketched_columns=sketched,
        eps1=eps1,
        kappa0=kappa0,
    )
    return x, report
