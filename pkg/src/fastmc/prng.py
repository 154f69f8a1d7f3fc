"""SplitMix64: the portable, seedable generator behind every random operator.

The ``k``-th output of a stream seeded with ``s`` is ``mix(s + k * GOLDEN)``
for ``k = 1, 2, ...`` (all arithmetic mod 2**64), so any block of outputs can
be produced with one vectorized call and streams never depend on call order.
"""

import numpy as np

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK = (1 << 64) - 1


def _mix(z):
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def splitmix64(seed, count, offset=0):
    """Return outputs ``offset+1 .. offset+count`` of the stream as uint64."""
    k = np.arange(offset + 1, offset + count + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return _mix(np.uint64(seed & _MASK) + k * GOLDEN)


def splitmix64_rows(seeds, count):
    """Outputs ``1 .. count`` of several streams at once, one row per seed."""
    seeds = np.array([int(s) & _MASK for s in seeds], dtype=np.uint64)
    k = np.arange(1, count + 1, dtype=np.uint64)
    with np.errstate(over="ignore"):
        return _mix(seeds[:, None] + k[None, :] * GOLDEN)


def _mix_int(z):
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return z ^ (z >> 31)


def derive_seed(seed, *keys):
    """Deterministically derive a child seed from ``seed`` and integer keys.

    Used for per-column and per-component streams, so that parallel and
    serial evaluation see the same randomness. Equal to the first output of
    the stream seeded with ``seed ^ key``, applied once per key.
    """
    s = int(seed) & _MASK
    for key in keys:
        s = _mix_int((s ^ (int(key) & _MASK)) + 0x9E3779B97F4A7C15 & _MASK)
    return s


def uniform_indices(seed, count, size_pow2, offset=0):
    """``count`` uniform draws from ``range(size_pow2)`` (a power of two).

    Takes the top bits of each output, which are the best-mixed ones.
    """
    return top_bits_to_index(splitmix64(seed, count, offset), size_pow2)


def top_bits_to_index(z, size_pow2):
    bits = int(size_pow2).bit_length() - 1
    if bits == 0:
        return np.zeros(z.shape, dtype=np.int64)
    return (z >> np.uint64(64 - bits)).astype(np.int64)


def top_bit_to_sign(z):
    return np.where((z >> np.uint64(63)) == 1, -1.0, 1.0)


def sign_bits(seed, count, offset=0):
    """``count`` values in {-1.0, +1.0}; the top output bit set means -1."""
    return top_bit_to_sign(splitmix64(seed, count, offset))
