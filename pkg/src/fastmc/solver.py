"""High-accuracy least squares by sketch-and-precondition.

The sketch ``S`` (an SRHT) is applied to ``[A | b]``; the QR factorization
``S A = Q T`` gives the preconditioner ``R = T^{-1}`` under which ``A R`` is
nearly orthonormal. Starting from the sketched solution ``x0 = Q^T S b`` the
iteration ``x <- x + R^T A^T (b - A R x)`` contracts the error in the
``A R``-norm by roughly the embedding distortion per step, and the answer is
``R x``.
"""

import math
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from . import linalg, prng
from .errors import DimensionMismatch, NonFinite, RankDeficient, SingularMatrix
from .sketch import fwht_inplace, next_pow2, sketch_plan, srht_apply, srht_new

_EPS = np.finfo(np.float64).eps
# refinement that ends worse than its start by more than rounding falls back to QR
_FALLBACK_SLACK = 1e-10


@dataclass(frozen=True)
class SolverConfig:
    """Tunables of :func:`high_precision_reg`.

    ``m_sk`` overrides the sketch size computed from ``eps_ose``,
    ``delta1`` and ``c_sk``; ``force_sketch`` disables the direct path taken
    for short systems (``n <= direct_ratio * d``).
    """

    eps1: float = 1e-10
    delta1: float = 0.01
    eps_ose: float = 0.01
    c_sk: float = 0.05
    c_iter: float = 1.5
    max_iter: int = 200
    seed: int = 0
    log_power: float = 2.0
    force_sketch: bool = False
    direct_ratio: int = 4
    m_sk: Optional[int] = None

    def __post_init__(self):
        if not 0.0 < self.eps1 < 0.1:
            raise ValueError(f"eps1 must lie in (0, 0.1), got {self.eps1}")
        if not 0.0 < self.delta1 < 0.1:
            raise ValueError(f"delta1 must lie in (0, 0.1), got {self.delta1}")
        if not 0.0 < self.eps_ose < 1.0:
            raise ValueError(f"eps_ose must lie in (0, 1), got {self.eps_ose}")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if self.m_sk is not None and self.m_sk < 1:
            raise ValueError("m_sk must be >= 1")

    @property
    def n_updates(self):
        """Number of refinement steps, ``ceil(c_iter * ln(1/eps1))`` capped."""
        return max(1, min(self.max_iter, math.ceil(self.c_iter * math.log(1.0 / self.eps1))))


@dataclass
class RegressionResult:
    x: np.ndarray
    residual_norm: float
    iterations: int
    preconditioned: bool
    # iterates R x_t in the original coordinates, t = 0..iterations (record=True only)
    history: Optional[List[np.ndarray]] = field(default=None, repr=False)


def _min_norm_solve(a, b):
    u, s, v, _ = linalg.svd_full(a)
    if s.size == 0 or s[0] == 0.0:
        return np.zeros(a.shape[1])
    keep = s > linalg.RANK_TOL * s[0]
    return v[:, keep] @ ((u[:, keep].T @ b) / s[keep])


def direct_solve(a, b):
    """Dense QR least squares; min-norm pseudoinverse solve if rank deficient."""
    if a.shape[0] >= a.shape[1]:
        try:
            q, r = linalg.qr_householder(a)
            return linalg.solve_upper_triangular(r, q.T @ b)
        except RankDeficient:
            pass
    return _min_norm_solve(a, b)


def _worse(final, start, b):
    return final > (1 + _FALLBACK_SLACK) * start + 8 * _EPS * math.sqrt(b @ b)


def _plan(cfg, d, n):
    if cfg.m_sk is not None:
        return cfg.m_sk, False
    return sketch_plan(d, n, cfg.eps_ose, cfg.delta1, cfg.c_sk, cfg.log_power)


def _check_inputs(a, b):
    a = linalg.as_dense(a, "a")
    b = linalg.as_dense(b, "b", ndim=1)
    n, d = a.shape
    if n < 1 or d < 1:
        raise DimensionMismatch(f"empty system {a.shape}")
    if b.shape[0] != n:
        raise DimensionMismatch(f"a has {n} rows but b has {b.shape[0]}")
    return a, b


def _result(a, b, x, iterations, preconditioned, history=None):
    return RegressionResult(
        x=x,
        residual_norm=float(np.linalg.norm(a @ x - b)),
        iterations=iterations,
        preconditioned=preconditioned,
        history=history,
    )


def high_precision_reg(a, b, cfg=SolverConfig(), record=False):
    """Solve ``min_x ||a x - b||_2`` to relative cost accuracy ``cfg.eps1``.

    With ``record=True`` the result carries every iterate mapped back to the
    original coordinates, which lets callers measure the per-step
    contraction against an exact solution.
    """
    a, b = _check_inputs(a, b)
    n, d = a.shape
    if n < d or (not cfg.force_sketch and n <= cfg.direct_ratio * d):
        x = direct_solve(a, b)
        return _result(a, b, x, 0, False, [x] if record else None)

    m_sk, full = _plan(cfg, d, n)
    sk = srht_new(n, m_sk, cfg.seed, full=full)
    sab = srht_apply(sk, np.column_stack((a, b)))
    try:
        if m_sk < d:
            raise RankDeficient("sketch has fewer rows than columns")
        q, r_tri = linalg.qr_householder(sab[:, :d])
    except RankDeficient:
        x = direct_solve(a, b)
        return _result(a, b, x, 0, False, [x] if record else None)

    # R = r_tri^{-1} is d x d; a dense triangular inverse keeps each step O(nd + d^2)
    precond = linalg.solve_upper_triangular(r_tri, np.eye(d))
    x = q.T @ sab[:, d]
    x0_orig = precond @ x
    history = [x0_orig] if record else None
    stop = max(cfg.eps1, 8 * _EPS)
    first_step = None
    done = 0
    for _ in range(cfg.n_updates):
        resid = b - a @ (precond @ x)
        step = precond.T @ (a.T @ resid)
        x = x + step
        done += 1
        step_norm = math.sqrt(step @ step)
        if not math.isfinite(step_norm):
            raise NonFinite("preconditioned iteration produced NaN/Inf")
        if record:
            history.append(precond @ x)
        if first_step is None:
            first_step = step_norm
        elif step_norm > 1e3 * first_step + 1e-300:
            # the sketch failed to embed col(A): the iteration is diverging
            xd = direct_solve(a, b)
            return _result(a, b, xd, done, False, history + [xd] if record else None)
        if step_norm <= stop * math.sqrt(x @ x) + 1e-300:
            break
    out = _result(a, b, precond @ x, done, True, history)
    if _worse(out.residual_norm, np.linalg.norm(a @ x0_orig - b), b):
        xd = direct_solve(a, b)
        return _result(a, b, xd, done, False, history + [xd] if record else None)
    return out


def weighted_reg(a, b, w, cfg=SolverConfig(), record=False):
    """Solve ``min_x sum_i w_i (a_i x - b_i)^2`` for ``w >= 0``.

    Rows are rescaled by ``sqrt(w_i)``; rows with zero weight are removed
    first. ``residual_norm`` is the weighted residual ``||a x - b||_w``.
    """
    a, b = _check_inputs(a, b)
    w = np.asarray(w, dtype=np.float64)
    if w.shape != b.shape:
        raise DimensionMismatch(f"w has shape {w.shape}, expected {b.shape}")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite and nonnegative")
    keep = w > 0
    if not keep.any():
        return RegressionResult(np.zeros(a.shape[1]), 0.0, 0, False)
    if not keep.all():
        a, b, w = a[keep], b[keep], w[keep]
    root = np.sqrt(w)
    return high_precision_reg(a * root[:, None], b * root, cfg, record=record)


def backward_error_bound(a, eps1, opt_residual):
    """Solution-space error implied by a ``(1 + eps1)``-approximate residual.

    Returns ``2 sqrt(eps1) * opt_residual / sigma_min(a)``.
    """
    s = linalg.svd_full(a).s
    sigma_min = s[-1] if a.shape[0] >= a.shape[1] else 0.0
    if sigma_min < 1e-300:
        raise SingularMatrix("a is not of full column rank")
    return 2.0 * math.sqrt(eps1) * opt_residual / sigma_min


# ------------------------------------------------------------ batched path --


def _backsub(t, c):
    """Solve ``t @ x = c`` for a stack of upper-triangular ``t`` (B, d, d);
    ``c`` is (B, d) or (B, d, r)."""
    d = t.shape[-1]
    x = np.array(c, dtype=np.float64, copy=True)
    vec = x.ndim == 2
    if vec:
        x = x[..., None]
    for i in range(d - 1, -1, -1):
        if i < d - 1:
            x[:, i] -= np.einsum("bj,bjr->br", t[:, i, i + 1:], x[:, i + 1:])
        x[:, i] /= t[:, i, i][:, None]
    return x[..., 0] if vec else x


def _rank_ok(r):
    diag = np.abs(np.diagonal(r, axis1=1, axis2=2))
    top = diag.max(axis=1)
    return (top > 0) & np.all(diag >= linalg.RANK_TOL * top[:, None], axis=1)


def _stack(systems, idx, rows, d):
    a = np.zeros((len(idx), rows, d))
    b = np.zeros((len(idx), rows))
    for pos, i in enumerate(idx):
        ai, bi = systems[i]
        a[pos, : ai.shape[0]] = ai
        b[pos, : bi.shape[0]] = bi
    return a, b


def _direct_group(systems, idx, d, out):
    rows = max(max(systems[i][0].shape[0] for i in idx), d)
    a, b = _stack(systems, idx, rows, d)
    q, r = np.linalg.qr(a)
    ok = _rank_ok(r)
    if ok.any():
        x = _backsub(r[ok], np.einsum("bnd,bn->bd", q[ok], b[ok]))
        resid = _stacked_residuals(a[ok], b[ok], x)
    loc = np.cumsum(ok) - 1
    for pos, i in enumerate(idx):
        if ok[pos]:
            out[i] = RegressionResult(x[loc[pos]], float(resid[loc[pos]]), 0, False)
        else:
            ai, bi = systems[i]
            out[i] = _result(ai, bi, direct_solve(ai, bi), 0, False)


def _sketch_group(systems, idx, d, n_pad, m_sk, full, cfg, seeds, out):
    a, b = _stack(systems, idx, n_pad, d)
    batch = len(idx)
    # the streams of srht_new(n_i, m_sk, seeds[i], full), generated for the whole group
    signs = prng.top_bit_to_sign(prng.splitmix64_rows([prng.derive_seed(seeds[i], 0) for i in idx], n_pad))
    if full:
        rows = np.broadcast_to(np.arange(n_pad), (batch, n_pad))
    else:
        rows = prng.top_bits_to_index(
            prng.splitmix64_rows([prng.derive_seed(seeds[i], 1) for i in idx], m_sk), n_pad
        )
    work = np.ascontiguousarray(
        (np.concatenate((a, b[..., None]), axis=2) * signs[..., None]).transpose(1, 0, 2)
    )
    fwht_inplace(work)
    sab = work[rows, np.arange(batch)[:, None], :] / math.sqrt(m_sk)  # (B, m_sk, d+1)
    fallback = np.zeros(batch, dtype=bool)
    if m_sk < d:
        fallback[:] = True
    else:
        q, t = np.linalg.qr(sab[:, :, :d])
        fallback |= ~_rank_ok(t)
    live = np.nonzero(~fallback)[0]
    if live.size:
        q, t = q[live], t[live]
        al, bl = a[live], b[live]
        eye = np.broadcast_to(np.eye(d), (live.size, d, d))
        precond = _backsub(t, eye)
        x = np.einsum("bmd,bm->bd", q, sab[live, :, d])
        x0 = np.einsum("bij,bj->bi", precond, x)
        stop = max(cfg.eps1, 8 * _EPS)
        iters = np.zeros(live.size, dtype=np.int64)
        # A R is formed once: O(n d^2), the order of the sketch QR when m_sk ~ n
        ar = al @ precond
        art = ar.transpose(0, 2, 1)
        xs, bs = x[..., None], bl[..., None]
        work = np.arange(live.size)  # columns in the stacked arrays
        open_ = np.ones(live.size, dtype=bool)  # ... that have not stopped yet
        first = None
        for it in range(cfg.n_updates):
            step = art @ (bs - ar @ xs)
            xs += step
            iters[work[open_]] += 1
            step_norm = np.sqrt((step * step).sum(axis=(1, 2)))
            if not np.all(np.isfinite(step_norm[open_])):
                raise NonFinite("preconditioned iteration produced NaN/Inf")
            if first is None:
                first = step_norm
            diverged = open_ & (step_norm > 1e3 * first + 1e-300)
            fallback[live[work[diverged]]] = True
            done = open_ & (diverged | (step_norm <= stop * np.sqrt((xs * xs).sum(axis=(1, 2))) + 1e-300))
            x[work[done]] = xs[done, :, 0]
            open_ &= ~done
            n_open = open_.sum()
            if n_open == 0:
                break
            if 2 * n_open <= work.size:
                # stopped columns would keep costing a matmul row each
                keep = open_
                work, first, open_ = work[keep], first[keep], open_[keep]
                ar, art, xs, bs = ar[keep], art[keep], xs[keep], bs[keep]
        else:
            x[work[open_]] = xs[open_, :, 0]
        x_final = np.einsum("bij,bj->bi", precond, x)
        r_final = _stacked_residuals(al, bl, x_final)
        r_start = _stacked_residuals(al, bl, x0)
        b_norm = np.sqrt((bl * bl).sum(axis=1))
    loc = np.cumsum(~fallback) - 1
    for pos, i in enumerate(idx):
        ai, bi = systems[i]
        if fallback[pos]:
            out[i] = _result(ai, bi, direct_solve(ai, bi), 0, False)
            continue
        j = loc[pos]
        if r_final[j] > (1 + _FALLBACK_SLACK) * r_start[j] + 8 * _EPS * b_norm[j]:
            out[i] = _result(ai, bi, direct_solve(ai, bi), int(iters[j]), False)
        else:
            out[i] = RegressionResult(x_final[j], float(r_final[j]), int(iters[j]), True)


def _stacked_residuals(a, b, x):
    r = b - (a @ x[..., None])[..., 0]
    return np.sqrt((r * r).sum(axis=1))


def high_precision_reg_many(systems, cfg=SolverConfig(), seeds=None):
    """Solve many independent problems ``min ||a_i x - b_i||`` at once.

    Runs the same algorithm as :func:`high_precision_reg` on every system:
    system ``i`` is sketched with the operator :func:`high_precision_reg` would build and
    refined with the same update and stopping rule. Systems sharing the
    padded length, sketch size and width are stacked and advanced together,
    which removes the per-call interpreter overhead for small systems.
    ``cfg.seed`` is ignored when ``seeds`` is given.
    """
    if seeds is None:
        seeds = [cfg.seed] * len(systems)
    systems = [_check_inputs(a, b) for a, b in systems]
    out = [None] * len(systems)
    groups = {}
    for i, (a, _) in enumerate(systems):
        n, d = a.shape
        if n < d or (not cfg.force_sketch and n <= cfg.direct_ratio * d):
            key = ("direct", d)
        else:
            key = ("sketch", d, next_pow2(n)) + _plan(cfg, d, n)
        groups.setdefault(key, []).append(i)
    for key, idx in groups.items():
        if key[0] == "direct":
            _direct_group(systems, idx, key[1], out)
        else:
            _sketch_group(systems, idx, *key[1:], cfg, seeds, out)
    return out
