"""Subsampled randomized Hadamard transform ``S = P H D / sqrt(m)``.

``D`` flips signs, ``H`` is the (unnormalized) Walsh-Hadamard matrix applied
with the O(n log n) butterfly, and ``P`` keeps ``m`` rows drawn uniformly
with replacement. Inputs whose row count is not a power of two are
zero-padded, which leaves ``||S (A x - b)||`` consistent with the unpadded
problem because the padded rows are identically zero.
"""

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, LengthNotPowerOfTwo
from .prng import derive_seed, sign_bits, uniform_indices


def next_pow2(n):
    return 1 if n <= 1 else 1 << (int(n) - 1).bit_length()


def sketch_dim_raw(d, n, eps_ose, delta_ose, c_sk, log_power=2):
    """Unclamped sketch size ``c_sk * d * log(n / delta)**log_power / eps**2``."""
    return c_sk * d * math.log(n / delta_ose) ** log_power / eps_ose**2


def sketch_dim(d, n, eps_ose, delta_ose, c_sk=0.05, log_power=2):
    """Number of sketch rows, clamped to ``[1, next_pow2(n)]``."""
    if d > n:
        raise DimensionMismatch(f"sketch_dim needs d <= n, got d={d}, n={n}")
    raw = sketch_dim_raw(d, n, eps_ose, delta_ose, c_sk, log_power)
    return int(max(1, min(next_pow2(n), math.ceil(raw))))


@dataclass(frozen=True, eq=False)
class SrhtOperator:
    n_input: int
    n_pad: int
    m_sk: int
    signs: np.ndarray
    sampled_rows: np.ndarray
    scale: float
    seed: int

    @property
    def shape(self):
        return (self.m_sk, self.n_input)

    def __matmul__(self, a):
        return srht_apply(self, a)

    def __eq__(self, other):
        if not isinstance(other, SrhtOperator):
            return NotImplemented
        return (
            (self.n_input, self.n_pad, self.m_sk, self.seed)
            == (other.n_input, other.n_pad, other.m_sk, other.seed)
            and np.array_equal(self.signs, other.signs)
            and np.array_equal(self.sampled_rows, other.sampled_rows)
        )

    __hash__ = None


def sketch_plan(d, n, eps_ose, delta_ose, c_sk=0.05, log_power=2):
    """``(m_sk, full)``: the sketch size and whether the clamp was hit.

    When the requested size reaches the padded length, sampling rows can only
    lose information, so the whole transform ``H D / sqrt(n_pad)`` is kept
    (``full``), which is an exact isometry.
    """
    m_sk = sketch_dim(d, n, eps_ose, delta_ose, c_sk, log_power)
    full = sketch_dim_raw(d, n, eps_ose, delta_ose, c_sk, log_power) >= next_pow2(n)
    return m_sk, full


def srht_new(n_input, m_sk, seed, full=False):
    """SRHT for ``n_input`` rows with ``m_sk`` rows sampled with replacement.

    With ``full=True`` no rows are sampled: ``m_sk`` must equal ``n_pad`` and
    ``sampled_rows`` is ``0 .. n_pad - 1``.
    """
    if m_sk < 1:
        raise ValueError("m_sk must be >= 1")
    if n_input < 1:
        raise ValueError("n_input must be >= 1")
    n_pad = next_pow2(n_input)
    signs = sign_bits(derive_seed(seed, 0), n_pad)
    if full:
        if m_sk != n_pad:
            raise ValueError(f"a full transform has m_sk = n_pad = {n_pad}, got {m_sk}")
        rows = np.arange(n_pad, dtype=np.int64)
    else:
        rows = uniform_indices(derive_seed(seed, 1), m_sk, n_pad)
    signs.setflags(write=False)
    rows.setflags(write=False)
    return SrhtOperator(
        n_input=int(n_input),
        n_pad=n_pad,
        m_sk=int(m_sk),
        signs=signs,
        sampled_rows=rows,
        scale=1.0 / math.sqrt(m_sk),
        seed=int(seed),
    )


def fwht_inplace(v):
    """Overwrite ``v`` with ``H @ v`` along axis 0.

    ``v`` must be a writable C-contiguous float array whose first dimension
    is a power of two; extra dimensions are transformed independently.
    """
    n = v.shape[0]
    if n < 1 or n & (n - 1):
        raise LengthNotPowerOfTwo(f"length {n} is not a power of two")
    if not v.flags.c_contiguous:
        raise ValueError("fwht_inplace needs a C-contiguous array")
    rest = v.shape[1:]
    h = 1
    while h < n:
        blocks = v.reshape((n // (2 * h), 2, h) + rest)
        top = blocks[:, 0].copy()
        blocks[:, 0] += blocks[:, 1]
        np.subtract(top, blocks[:, 1], out=blocks[:, 1])
        h *= 2


def srht_apply(s, a):
    """Return ``S @ a`` for a vector or an ``n_input x cols`` matrix."""
    a = np.asarray(a, dtype=np.float64)
    if a.shape[0] != s.n_input:
        raise DimensionMismatch(
            f"operator expects {s.n_input} rows, got {a.shape[0]}"
        )
    work = np.zeros((s.n_pad,) + a.shape[1:])
    work[: s.n_input] = a
    if a.ndim == 1:
        work *= s.signs
    else:
        work *= s.signs.reshape((-1,) + (1,) * (a.ndim - 1))
    fwht_inplace(work)
    return s.scale * work[s.sampled_rows]
