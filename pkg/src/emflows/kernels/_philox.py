"""Pure-NumPy counter-based RNG and particle update kernels.

The generator is Philox4x32-10 (Salmon et al.'s Random123 family).  Each
32-bit lane is addressed by an absolute counter, so any draw can be
recomputed independently of every other draw: the noise consumed by
particle ``i`` at step ``k`` depends only on ``(seed, stream, i)``.  That
makes serial, chunked and parallel execution produce identical bits.

Counter layout for one 128-bit block::

    c0 = coordinate block within the particle (two normals per block)
    c1 = particle index, low 32 bits
    c2 = particle index, high 32 bits
    c3 = stream index (0 = initial sampling, k + 1 = Langevin step k)

Key = the 64-bit seed split into two 32-bit words.

Normal variates use the inverse-CDF method: a 53-bit uniform
``u = ((word64 >> 11) + 0.5) * 2**-53`` in (0, 1) mapped through Cephes
``ndtri`` (the same C routine the compiled kernel calls), so both
backends are bit-identical.
"""

from __future__ import annotations

import numpy as np
from scipy.special import ndtri

PHILOX_M0 = np.uint64(0xD2511F53)
PHILOX_M1 = np.uint64(0xCD9E8D57)
PHILOX_W0 = np.uint64(0x9E3779B9)
PHILOX_W1 = np.uint64(0xBB67AE85)
_MASK32 = np.uint64(0xFFFFFFFF)
_INV_2_53 = float(2.0 ** -53)

BACKEND = "numpy"


def philox4x32(c0, c1, c2, c3, k0, k1):
    """One Philox4x32-10 block per element of the (broadcast) counter arrays.

    All inputs are uint64 arrays holding 32-bit values.  Returns the four
    32-bit output words as uint64 arrays.
    """
    c0 = np.asarray(c0, dtype=np.uint64)
    c1 = np.asarray(c1, dtype=np.uint64)
    c2 = np.asarray(c2, dtype=np.uint64)
    c3 = np.asarray(c3, dtype=np.uint64)
    c0, c1, c2, c3 = np.broadcast_arrays(c0, c1, c2, c3)
    k0 = np.uint64(k0)
    k1 = np.uint64(k1)
    for rnd in range(10):
        p0 = PHILOX_M0 * c0
        p1 = PHILOX_M1 * c2
        hi0 = p0 >> np.uint64(32)
        lo0 = p0 & _MASK32
        hi1 = p1 >> np.uint64(32)
        lo1 = p1 & _MASK32
        c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
        if rnd < 9:
            k0 = (k0 + PHILOX_W0) & _MASK32
            k1 = (k1 + PHILOX_W1) & _MASK32
    return c0, c1, c2, c3


def _split_seed(seed: int):
    s = np.uint64(seed & 0xFFFFFFFFFFFFFFFF)
    return s & _MASK32, s >> np.uint64(32)


def _uniform53(hi, lo):
    """Map two 32-bit words to one double uniform in the open interval (0,1)."""
    word = (hi << np.uint64(32)) | lo
    return ((word >> np.uint64(11)).astype(np.float64) + 0.5) * _INV_2_53


def standard_normals(seed: int, stream: int, n: int, d: int) -> np.ndarray:
    """(n, d) standard normals for stream ``stream`` of generator ``seed``.

    Row i is the noise owned by particle i; entries are reproducible
    independently of n (prefixes of a longer array match exactly).
    """
    if n < 0 or d < 1:
        raise ValueError("need n >= 0 and d >= 1")
    k0, k1 = _split_seed(seed)
    idx = np.arange(n, dtype=np.uint64)
    i_lo = idx & _MASK32
    i_hi = idx >> np.uint64(32)
    s = np.uint64(stream & 0xFFFFFFFF)
    out = np.empty((n, d), dtype=np.float64)
    for blk in range((d + 1) // 2):
        o0, o1, o2, o3 = philox4x32(np.uint64(blk), i_lo, i_hi, s, k0, k1)
        out[:, 2 * blk] = ndtri(_uniform53(o0, o1))
        if 2 * blk + 1 < d:
            out[:, 2 * blk + 1] = ndtri(_uniform53(o2, o3))
    return out


def langevin_affine_update(
    x: np.ndarray,
    drift_mat: np.ndarray,
    drift_vec: np.ndarray,
    h: float,
    seed: int,
    stream: int,
) -> np.ndarray:
    """One unadjusted Langevin step for every particle of an affine-drift model.

    x_i <- x_i + h * (drift_mat @ x_i + drift_vec) + sqrt(2h) * z_i

    with z_i the particle-owned standard normal of ``(seed, stream, i)``.
    The per-coordinate accumulation order is fixed (c = 0..d-1) so the
    compiled kernel reproduces these bits exactly.
    """
    x = np.asarray(x, dtype=np.float64)
    n, d = x.shape
    drift_mat = np.asarray(drift_mat, dtype=np.float64)
    drift_vec = np.asarray(drift_vec, dtype=np.float64)
    z = standard_normals(seed, stream, n, d)
    g = np.empty_like(x)
    for r in range(d):
        acc = np.full(n, drift_vec[r])
        for c in range(d):
            acc += drift_mat[r, c] * x[:, c]
        g[:, r] = acc
    s2h = float(np.sqrt(2.0 * h))
    out = x + h * g
    out += s2h * z
    return out
