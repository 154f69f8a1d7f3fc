"""Observed entries of a partially known matrix, stored column-compressed.

An :class:`ObservedEntries` is the pair (Omega, P_Omega(M)): for every column
``j`` the observed row indices ``row_idx[col_ptr[j]:col_ptr[j+1]]`` (strictly
increasing) and the matching values. When the observations come from
sampling *with replacement* an entry may have been drawn several times;
``counts`` then records the multiplicity of every stored entry.
"""

import os
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import sparse

from .errors import DimensionMismatch, FormatError, NonFinite


@dataclass(frozen=True, eq=False)
class ObservedEntries:
    rows: int
    cols: int
    col_ptr: np.ndarray
    row_idx: np.ndarray
    values: np.ndarray
    counts: Optional[np.ndarray] = None

    def __post_init__(self):
        ptr, idx, val = self.col_ptr, self.row_idx, self.values
        if ptr.shape != (self.cols + 1,) or ptr[0] != 0 or ptr[-1] != idx.size:
            raise DimensionMismatch("col_ptr must have length cols+1 and span row_idx")
        if np.any(np.diff(ptr) < 0):
            raise DimensionMismatch("col_ptr must be nondecreasing")
        if val.shape != idx.shape:
            raise DimensionMismatch("values and row_idx differ in length")
        if idx.size:
            if idx.min() < 0 or idx.max() >= self.rows:
                raise DimensionMismatch("row index out of range")
            # strictly increasing inside each column: a drop is only allowed at a column start
            drops = np.nonzero(np.diff(idx) <= 0)[0] + 1
            if drops.size and not np.isin(drops, ptr).all():
                raise DimensionMismatch("row indices must increase strictly within a column")
        if not np.all(np.isfinite(val)):
            raise NonFinite("observed values contain NaN or Inf")
        if self.counts is not None:
            if self.counts.shape != idx.shape or (self.counts.size and self.counts.min() < 1):
                raise DimensionMismatch("counts must be positive, one per entry")
        for arr in (ptr, idx, val, self.counts):
            if arr is not None:
                arr.setflags(write=False)

    # -- construction -------------------------------------------------------

    @classmethod
    def from_triplets(cls, rows, cols, i, j, values, counts=None, duplicates="error"):
        """Build from coordinate lists in any order.

        ``duplicates="error"`` rejects repeated ``(i, j)``; ``"merge"`` keeps
        one copy and adds up the multiplicities (values must agree).
        """
        i = np.asarray(i, dtype=np.int64).ravel()
        j = np.asarray(j, dtype=np.int64).ravel()
        v = np.asarray(values, dtype=np.float64).ravel()
        if not (i.size == j.size == v.size):
            raise DimensionMismatch("i, j, values must have equal length")
        if i.size and (i.min() < 0 or i.max() >= rows or j.min() < 0 or j.max() >= cols):
            raise DimensionMismatch("index out of range")
        c = None if counts is None else np.asarray(counts, dtype=np.int64).ravel()
        order = np.lexsort((i, j))
        i, j, v = i[order], j[order], v[order]
        if c is not None:
            c = c[order]
        dup = np.zeros(i.size, dtype=bool)
        if i.size > 1:
            dup[1:] = (i[1:] == i[:-1]) & (j[1:] == j[:-1])
        if dup.any():
            if duplicates != "merge":
                k = int(np.argmax(dup))
                raise ValueError(f"duplicate entry ({i[k]}, {j[k]})")
            first = ~dup
            groups = np.cumsum(first) - 1
            if not np.allclose(v, v[first][groups]):
                raise ValueError("inconsistent values for a repeated entry")
            weight = np.ones(i.size, dtype=np.int64) if c is None else c
            c = np.bincount(groups, weights=weight).astype(np.int64)
            i, j, v = i[first], j[first], v[first]
        ptr = np.zeros(cols + 1, dtype=np.int64)
        np.cumsum(np.bincount(j, minlength=cols), out=ptr[1:])
        if c is not None and np.all(c == 1):
            c = None
        return cls(int(rows), int(cols), ptr, i, v, c)

    @classmethod
    def from_dense(cls, m_full, mask):
        mask = np.asarray(mask, dtype=bool)
        i, j = np.nonzero(mask)
        return cls.from_triplets(mask.shape[0], mask.shape[1], i, j, np.asarray(m_full)[i, j])

    @classmethod
    def empty(cls, rows, cols):
        return cls(rows, cols, np.zeros(cols + 1, dtype=np.int64),
                   np.zeros(0, dtype=np.int64), np.zeros(0))

    # -- views --------------------------------------------------------------

    @property
    def shape(self):
        return (self.rows, self.cols)

    @property
    def nnz(self):
        return int(self.row_idx.size)

    @property
    def n_samples(self):
        """Number of samples, counting repeated draws."""
        return self.nnz if self.counts is None else int(self.counts.sum())

    def multiplicities(self):
        if self.counts is None:
            return np.ones(self.nnz, dtype=np.int64)
        return np.asarray(self.counts)

    def col_idx(self):
        return np.repeat(np.arange(self.cols, dtype=np.int64), np.diff(self.col_ptr))

    def support_sizes(self):
        return np.diff(self.col_ptr)

    def column(self, j):
        lo, hi = self.col_ptr[j], self.col_ptr[j + 1]
        return self.row_idx[lo:hi], self.values[lo:hi]

    def to_csc(self):
        return sparse.csc_matrix(
            (self.values, self.row_idx, self.col_ptr), shape=(self.rows, self.cols)
        )

    def to_dense(self):
        out = np.zeros((self.rows, self.cols))
        out[self.row_idx, self.col_idx()] = self.values
        return out

    def mask(self):
        out = np.zeros((self.rows, self.cols), dtype=bool)
        out[self.row_idx, self.col_idx()] = True
        return out

    def select(self, keep, counts=None):
        """Entries where ``keep`` is true, in the same column-sorted order."""
        keep = np.asarray(keep, dtype=bool)
        cols = self.col_idx()[keep]
        ptr = np.zeros(self.cols + 1, dtype=np.int64)
        np.cumsum(np.bincount(cols, minlength=self.cols), out=ptr[1:])
        if counts is None and self.counts is not None:
            counts = self.counts[keep]
        elif counts is not None:
            counts = np.asarray(counts, dtype=np.int64)
            if np.all(counts == 1):
                counts = None
        return ObservedEntries(self.rows, self.cols, ptr, self.row_idx[keep].copy(),
                               self.values[keep].copy(), counts)

    def transpose(self):
        """The observed entries of ``M^T``, column-compressed (i.e. by rows of M)."""
        cols = self.col_idx()
        order = np.lexsort((cols, self.row_idx))
        ptr = np.zeros(self.rows + 1, dtype=np.int64)
        np.cumsum(np.bincount(self.row_idx, minlength=self.rows), out=ptr[1:])
        counts = None if self.counts is None else self.counts[order]
        return ObservedEntries(self.cols, self.rows, ptr, cols[order],
                               self.values[order], counts)

    def residual_norm(self, u, v):
        """``||P_Omega(M - u v^T)||_F`` in O(nnz k)."""
        pred = np.einsum("ij,ij->i", u[self.row_idx], v[self.col_idx()])
        return float(np.linalg.norm(self.values - pred))

    def __eq__(self, other):
        if not isinstance(other, ObservedEntries):
            return NotImplemented
        return (
            self.shape == other.shape
            and np.array_equal(self.col_ptr, other.col_ptr)
            and np.array_equal(self.row_idx, other.row_idx)
            and np.array_equal(self.values, other.values)
            and np.array_equal(self.multiplicities(), other.multiplicities())
        )

    __hash__ = None


# --------------------------------------------------------------- omega v1 --


def format_omega(obs):
    """Serialize as ``omega v1``: header, then ``i j value [count]`` lines."""
    lines = [f"omega {obs.rows} {obs.cols} {obs.nnz}"]
    cols = obs.col_idx()
    mult = obs.counts
    for k in range(obs.nnz):
        line = f"{obs.row_idx[k]} {cols[k]} {float(obs.values[k])!r}"
        if mult is not None:
            line += f" {mult[k]}"
        lines.append(line)
    return "\n".join(lines) + "\n"


def parse_omega(text):
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise FormatError("empty omega document")
    head = lines[0].split()
    if len(head) != 4 or head[0] != "omega":
        raise FormatError(f"bad omega header: {lines[0]!r}")
    try:
        m, n, nnz = (int(x) for x in head[1:])
    except ValueError as exc:
        raise FormatError(f"bad omega header: {lines[0]!r}") from exc
    if len(lines) - 1 != nnz:
        raise FormatError(f"header announces {nnz} entries, found {len(lines) - 1}")
    i = np.empty(nnz, dtype=np.int64)
    j = np.empty(nnz, dtype=np.int64)
    v = np.empty(nnz)
    c = np.ones(nnz, dtype=np.int64)
    for k, line in enumerate(lines[1:]):
        parts = line.split()
        if len(parts) not in (3, 4):
            raise FormatError(f"line {k + 2}: expected 'i j value [count]'")
        try:
            i[k], j[k], v[k] = int(parts[0]), int(parts[1]), float(parts[2])
            if len(parts) == 4:
                c[k] = int(parts[3])
        except ValueError as exc:
            raise FormatError(f"line {k + 2}: {exc}") from exc
    if nnz and (i.min() < 0 or i.max() >= m or j.min() < 0 or j.max() >= n):
        raise FormatError("index out of range")
    if c.size and c.min() < 1:
        raise FormatError("counts must be positive")
    try:
        return ObservedEntries.from_triplets(m, n, i, j, v, counts=c)
    except ValueError as exc:
        raise FormatError(str(exc)) from exc


def write_omega(path, obs):
    with open(os.fspath(path), "w") as fh:
        fh.write(format_omega(obs))


def read_omega(path):
    with open(os.fspath(path)) as fh:
        return parse_omega(fh.read())
