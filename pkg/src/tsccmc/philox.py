"""Philox4x32-10 counter-based generator, usable inside numba kernels.

A stream is a 64-bit key; the n-th block of four 32-bit words is a pure
function of (key, counter), so any position of any stream can be produced
independently and a checkpoint only needs the counters.
"""

import numpy as np
from numba import njit

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = np.uint64(0x9E3779B9)
_W1 = np.uint64(0xBB67AE85)
_MASK = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)


@njit(cache=True, inline="always")
def philox4x32(c0, c1, c2, c3, k0, k1):
    """Ten rounds of Philox4x32 on uint64 carriers holding 32-bit values."""
    for rnd in range(10):
        if rnd > 0:
            k0 = (k0 + _W0) & _MASK
            k1 = (k1 + _W1) & _MASK
        p0 = _M0 * c0
        p1 = _M1 * c2
        hi0 = p0 >> _S32
        lo0 = p0 & _MASK
        hi1 = p1 >> _S32
        lo1 = p1 & _MASK
        c0 = hi1 ^ c1 ^ k0
        c1 = lo1
        c2 = hi0 ^ c3 ^ k1
        c3 = lo0
    return c0, c1, c2, c3


@njit(cache=True, inline="always")
def _to_double(a, b):
    # 53 random bits: top 27 of a, top 26 of b
    return ((a >> np.uint64(5)) * 67108864.0 + (b >> np.uint64(6))) * (1.0 / 9007199254740992.0)


@njit(cache=True)
def fill_uniforms(out, k0, k1, c1, c2):
    """Fill ``out`` with doubles in [0, 1) from blocks (j, c1, c2, 0), j = 0, 1, ..."""
    n = out.shape[0]
    k0 = np.uint64(k0)
    k1 = np.uint64(k1)
    c1 = np.uint64(c1) & _MASK
    c2 = np.uint64(c2) & _MASK
    j = 0
    i = 0
    while i < n:
        x0, x1, x2, x3 = philox4x32(np.uint64(j), c1, c2, np.uint64(0), k0, k1)
        out[i] = _to_double(x0, x1)
        if i + 1 < n:
            out[i + 1] = _to_double(x2, x3)
        i += 2
        j += 1


def stream_keys(seed, n_streams: int) -> np.ndarray:
    """Independent (k0, k1) keys derived from a seed via numpy's SeedSequence."""
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(int(seed))
    return ss.generate_state(2 * n_streams, dtype=np.uint32).reshape(n_streams, 2).astype(np.uint64)


def uniforms(key, counter: int, purpose: int, n: int) -> np.ndarray:
    """``n`` uniforms for stream ``key`` at (counter, purpose)."""
    out = np.empty(n)
    fill_uniforms(out, key[0], key[1], counter & 0xFFFFFFFF, (purpose << 16) | (counter >> 32))
    return out
