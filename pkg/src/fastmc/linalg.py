"""Dense linear-algebra kernels used throughout the package.

Matrices are plain float64 ``numpy.ndarray`` objects. The factorizations are
thin wrappers over LAPACK (Householder QR, divide-and-conquer SVD) that add
the rank checks and error types the rest of the package relies on; the
truncated SVD and the spectral-norm estimate are block/ordinary power
iterations that only need matrix-vector products, so they work unchanged on
``scipy.sparse`` operands.
"""

import io
import os
from typing import NamedTuple, Optional

import numpy as np
import scipy.linalg
from scipy import sparse

from .errors import (
    DimensionMismatch,
    FormatError,
    NoConvergence,
    NonFinite,
    RankDeficient,
    SingularTriangular,
)

RANK_TOL = 1e-12


class QrFactors(NamedTuple):
    q: np.ndarray
    r_tri: np.ndarray


class SvdFactors(NamedTuple):
    u: np.ndarray
    s: np.ndarray
    v: np.ndarray
    # subspace residual ||A^T U - V S||_F / ||S||_F; only set by truncated_svd
    residual: Optional[float] = None


def as_dense(a, name="a", ndim=2):
    """Convert to a C-contiguous float64 array, rejecting NaN/Inf."""
    arr = np.ascontiguousarray(a, dtype=np.float64)
    if arr.ndim != ndim:
        raise DimensionMismatch(f"{name} must be {ndim}-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NonFinite(f"{name} contains NaN or Inf")
    return arr


def qr_householder(a):
    """Thin Householder QR ``a = q @ r_tri`` with a nonnegative diagonal.

    Raises
    ------
    RankDeficient
        If some ``|r_tri[i, i]| < 1e-12 * max_j |r_tri[j, j]|``. The
        exception's ``index`` is the first such ``i``.
    """
    a = as_dense(a)
    rows, cols = a.shape
    if rows < cols:
        raise DimensionMismatch(f"qr needs rows >= cols, got {a.shape}")
    q, r = np.linalg.qr(a, mode="reduced")
    signs = np.where(np.diag(r) < 0, -1.0, 1.0)
    q *= signs
    r *= signs[:, None]
    r = np.triu(r)
    diag = np.abs(np.diag(r))
    top = diag.max() if cols else 0.0
    bad = np.nonzero(diag < RANK_TOL * top)[0] if top > 0 else np.arange(cols)
    if bad.size:
        raise RankDeficient(
            f"numerical rank < {cols} (diagonal {bad[0]} vanishes)", index=int(bad[0])
        )
    return QrFactors(q, r)


def orthonormalize(a):
    """Orthonormal basis of ``col(a)`` plus the triangular factor.

    Same contract as :func:`qr_householder`; zero columns raise
    :class:`RankDeficient`.
    """
    q, r = qr_householder(a)
    return q, r


def solve_upper_triangular(r_tri, y, trans=False):
    """Solve ``r_tri @ x = y`` (or ``r_tri.T @ x = y`` when ``trans``).

    ``y`` may be a vector or a matrix of right-hand sides.
    """
    diag = np.abs(np.diag(r_tri))
    if diag.size and diag.min() < 1e-300:
        raise SingularTriangular(f"zero diagonal at {int(np.argmin(diag))}")
    return scipy.linalg.solve_triangular(
        r_tri, y, lower=False, trans=1 if trans else 0, check_finite=False
    )


def svd_full(a):
    """Thin SVD with nonincreasing singular values."""
    a = as_dense(a)
    try:
        u, s, vt = np.linalg.svd(a, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NoConvergence(str(exc)) from exc
    return SvdFactors(u, s, vt.T)


def _as_operator(a):
    if hasattr(a, "to_csc"):
        return a.to_csc()
    if sparse.issparse(a):
        return a.tocsc()
    return as_dense(a)


def truncated_svd(a, k, sweeps=50, seed=0, oversample=5):
    """Top-``k`` singular triplets by block power (subspace) iteration.

    ``a`` may be a dense array, a scipy sparse matrix, or an
    :class:`~fastmc.observed.ObservedEntries` (viewed as the matrix that is
    zero off the observed set). The block carries ``oversample`` extra
    columns to speed up convergence of the ``k``-th vector and is
    re-orthonormalized after every multiplication. Non-convergence is not an
    error: the relative subspace residual is returned in ``residual``.
    """
    op = _as_operator(a)
    m, n = op.shape
    if not 1 <= k <= min(m, n):
        raise DimensionMismatch(f"k={k} out of range for shape {op.shape}")
    if sweeps < 1:
        raise ValueError("sweeps must be >= 1")
    b = min(k + oversample, min(m, n))
    rng = np.random.default_rng(seed)
    q, _ = np.linalg.qr(np.asarray(op @ rng.standard_normal((n, b))))
    for _ in range(sweeps):
        z, _ = np.linalg.qr(np.asarray(op.T @ q))
        q, _ = np.linalg.qr(np.asarray(op @ z))
    small = np.asarray(op.T @ q).T  # q^T a, b x n
    ub, s, vt = np.linalg.svd(small, full_matrices=False)
    u = q @ ub[:, :k]
    s = s[:k]
    v = vt[:k].T
    scale = np.linalg.norm(s)
    resid = np.asarray(op.T @ u) - v * s
    residual = float(np.linalg.norm(resid) / scale) if scale > 0 else 0.0
    return SvdFactors(u, s, v, residual)


def spectral_norm(a, tol=1e-10, seed=0, max_iter=20000):
    """Power-iteration estimate of the largest singular value."""
    op = _as_operator(a)
    n = op.shape[1]
    if min(op.shape) == 0:
        return 0.0
    x = np.random.default_rng(seed).standard_normal(n)
    x /= np.linalg.norm(x)
    est = 0.0
    for _ in range(max_iter):
        y = np.asarray(op.T @ np.asarray(op @ x))
        norm_y = np.linalg.norm(y)
        if norm_y == 0.0:
            return 0.0
        new = np.sqrt(norm_y)
        x = y / norm_y
        # the change shrinks geometrically; a stricter stop keeps the error below tol
        if abs(new - est) <= 1e-3 * tol * new:
            return float(new)
        est = new
    return float(est)


def frobenius(a):
    return float(np.linalg.norm(a))


# ---------------------------------------------------------------- dmat v1 --


def format_dmat(a):
    a = as_dense(a)
    out = io.StringIO()
    out.write(f"dmat {a.shape[0]} {a.shape[1]}\n")
    for row in a:
        out.write(" ".join(repr(float(x)) for x in row))
        out.write("\n")
    return out.getvalue()


def parse_dmat(text):
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise FormatError("empty dmat document")
    head = lines[0].split()
    if len(head) != 3 or head[0] != "dmat":
        raise FormatError(f"bad dmat header: {lines[0]!r}")
    try:
        rows, cols = int(head[1]), int(head[2])
    except ValueError as exc:
        raise FormatError(f"bad dmat header: {lines[0]!r}") from exc
    if len(lines) - 1 != rows:
        raise FormatError(f"expected {rows} rows, found {len(lines) - 1}")
    data = np.empty((rows, cols))
    for i, line in enumerate(lines[1:]):
        parts = line.split()
        if len(parts) != cols:
            raise FormatError(f"row {i} has {len(parts)} entries, expected {cols}")
        try:
            data[i] = [float(p) for p in parts]
        except ValueError as exc:
            raise FormatError(f"row {i}: {exc}") from exc
    return as_dense(data)


def write_dmat(path, a):
    with open(os.fspath(path), "w") as fh:
        fh.write(format_dmat(a))


def read_dmat(path):
    with open(os.fspath(path)) as fh:
        return parse_dmat(fh.read())
