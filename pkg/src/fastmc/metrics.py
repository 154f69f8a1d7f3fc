"""Subspace geometry, incoherence and leverage scores, plus executable
checks of the perturbation inequalities the convergence analysis rests on.

Every ``check_*`` function returns the two sides ``(lhs, rhs)`` of its
inequality so tests can assert ``lhs <= rhs`` and inspect the margin.
"""

import math
from dataclasses import dataclass

import numpy as np

from . import linalg
from .errors import NotOrthonormal, PreconditionViolated, RankDeficient

ORTHO_TOL = 1e-8


@dataclass(frozen=True)
class SubspaceGeometry:
    sin_theta: float
    cos_theta: float
    tan_theta: float
    dist: float
    dist_c_ub: float


def _spec(a):
    return float(np.linalg.norm(a, 2)) if a.size else 0.0


def require_orthonormal(u, name="u", tol=ORTHO_TOL):
    u = linalg.as_dense(u, name)
    dev = _spec(u.T @ u - np.eye(u.shape[1]))
    if dev > tol:
        raise NotOrthonormal(f"{name} deviates from orthonormal by {dev:.3e}")
    return u


def principal_dist(a, b):
    """``||(I - U U^T) W||`` for orthonormal bases ``U``, ``W`` of the spans.

    Equals the sine of the largest principal angle for equal dimensions.
    """
    u, _ = linalg.orthonormalize(a)
    w, _ = linalg.orthonormalize(b)
    return _spec(w - u @ (u.T @ w))


def subspace_geometry(v, u):
    """Angles between the spans of orthonormal ``v`` and ``u``.

    ``cos = sigma_min(V^T U)``, ``sin = ||(I - V V^T) U||`` and
    ``tan = ||V_perp^T U (V^T U)^{-1}||``; ``dist_c_ub`` is ``||V Q - U||``
    for the Procrustes rotation ``Q = A B^T`` where ``A D B^T`` is the SVD
    of ``V^T U``.
    """
    v = require_orthonormal(v, "v")
    u = require_orthonormal(u, "u")
    vtu = v.T @ u
    a, d, bt = np.linalg.svd(vtu)
    cos = float(min(d.min(), 1.0)) if d.size else 0.0
    perp = u - v @ vtu  # (I - V V^T) U
    sin = min(_spec(perp), 1.0)
    if cos > 1e-15:
        # V_perp^T maps range(I - V V^T) isometrically, so its norm drops out
        tan = _spec(np.linalg.solve(vtu.T, perp.T).T)
    else:
        tan = math.inf
    q = a @ bt
    dist_c = _spec(v @ q - u)
    return SubspaceGeometry(sin, cos, tan, sin, dist_c)


def incoherence(u):
    """Smallest ``mu`` with every row norm ``<= mu * sqrt(k / m)``."""
    u = require_orthonormal(u)
    m, k = u.shape
    return float(np.sqrt((u * u).sum(axis=1)).max() * math.sqrt(m / k))


def leverage_scores(x):
    """``l_i = x_i^T (X^T X)^{-1} x_i``, via ``X = Q T``: ``l_i = ||T^{-T} x_i||^2``."""
    x = linalg.as_dense(x, "x")
    _, r = linalg.qr_householder(x)
    z = linalg.solve_upper_triangular(r, x.T, trans=True)
    return (z * z).sum(axis=0)


def condition_number(x):
    s = linalg.svd_full(x).s
    if x.shape[0] < x.shape[1] or s[-1] <= linalg.RANK_TOL * s[0]:
        raise RankDeficient("condition number of a rank-deficient matrix")
    return float(s[0] / s[-1])


def _sigma_min(x):
    s = linalg.svd_full(x).s
    return float(s[-1]) if x.shape[0] >= x.shape[1] else 0.0


def check_incoherence_perturbation(a, b):
    """Leverage-score stability: ``|sqrt(l_i(A)) - sqrt(l_i(B))|`` against
    ``75 ||A - B|| kappa(A)^4 / sigma_min(A)``.

    Requires ``||A - B|| <= sigma_min(A) / 2``.
    """
    a = linalg.as_dense(a, "a")
    b = linalg.as_dense(b, "b")
    gap = _spec(a - b)
    smin = _sigma_min(a)
    if smin <= 0 or gap > 0.5 * smin:
        raise PreconditionViolated(f"||A-B|| = {gap:.3e} exceeds sigma_min(A)/2 = {smin / 2:.3e}")
    lhs = np.abs(np.sqrt(leverage_scores(a)) - np.sqrt(leverage_scores(b)))
    rhs = 75.0 * gap * condition_number(a) ** 4 / smin
    return lhs, rhs


def check_dist_by_spectral(x, y):
    """``dist(X, Y)`` against ``4 ||X - Y|| / sqrt(sigma_min(X) sigma_min(Y))``,
    valid when ``||X - Y||^2 <= sigma_min(X) sigma_min(Y)``."""
    x = linalg.as_dense(x, "x")
    y = linalg.as_dense(y, "y")
    gap = _spec(x - y)
    sx, sy = _sigma_min(x), _sigma_min(y)
    if sx <= 0 or sy <= 0 or gap * gap > sx * sy:
        raise PreconditionViolated("||X-Y||^2 > sigma_min(X) sigma_min(Y)")
    return principal_dist(x, y), 4.0 * gap / math.sqrt(sx * sy)


def check_pinv_perturbation(a, b):
    """Wedin's bound ``||A^+ - B^+|| <= 2 max(||A^+||^2, ||B^+||^2) ||A - B||``."""
    a = linalg.as_dense(a, "a")
    b = linalg.as_dense(b, "b")
    pinvs = []
    for name, mat in (("a", a), ("b", b)):
        u, s, v, _ = linalg.svd_full(mat)
        if mat.shape[0] < mat.shape[1] or s[-1] <= linalg.RANK_TOL * s[0]:
            raise RankDeficient(f"{name} is not of full column rank")
        pinvs.append(((v / s) @ u.T, 1.0 / s[-1]))
    (pa, na), (pb, nb) = pinvs
    lhs = _spec(pa - pb)
    rhs = 2.0 * max(na, nb) ** 2 * _spec(a - b)
    return lhs, rhs


def check_fourth_moment(u_t, u_star, mu2, mu, trials=100, seed=0):
    """Worst observed ratios of the two row-moment sums to their bounds.

    For random unit ``x, y`` in ``R^k``, returns the maxima of
    ``sum_i <x, u_t[i]>^4 * m / (mu2^2 k)`` and
    ``sum_i <y, u_star[i]>^2 <x, u_t[i]>^2 * m / (mu^2 k)``; both are at most
    one when ``mu2`` and ``mu`` bound the incoherence of the inputs.
    """
    u_t = require_orthonormal(u_t, "u_t")
    u_star = require_orthonormal(u_star, "u_star")
    if u_t.shape != u_star.shape:
        raise PreconditionViolated("u_t and u_star must have the same shape")
    if incoherence(u_t) > mu2 * (1 + 1e-12) or incoherence(u_star) > mu * (1 + 1e-12):
        raise PreconditionViolated("mu2 / mu are not incoherence bounds of the inputs")
    m, k = u_t.shape
    rng = np.random.default_rng(seed)
    xs = rng.standard_normal((trials, k))
    xs /= np.linalg.norm(xs, axis=1, keepdims=True)
    ys = rng.standard_normal((trials, k))
    ys /= np.linalg.norm(ys, axis=1, keepdims=True)
    px = u_t @ xs.T  # m x trials
    py = u_star @ ys.T
    first = (px**4).sum(axis=0) * m / (mu2 * mu2 * k)
    second = (py**2 * px**2).sum(axis=0) * m / (mu * mu * k)
    return float(first.max()), float(second.max())


def fourth_moment_ratios(u_t, u_star, x, y, mu2, mu):
    """The two ratios of :func:`check_fourth_moment` for given unit ``x, y``."""
    m, k = u_t.shape
    px = u_t @ x
    py = u_star @ y
    return (float((px**4).sum() * m / (mu2 * mu2 * k)),
            float((py**2 * px**2).sum() * m / (mu * mu * k)))
