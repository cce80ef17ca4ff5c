"""Numba kernels for the bit-encoded Metropolis / parallel-tempering loop.

Spin bits: 0 <-> +1, 1 <-> -1.  Term t contributes -J * (-1)^(tau_t ^ a_t ^ b_t),
so a term is satisfied when that parity is 0.  Flipping one spin of a
satisfied term costs +2J, of an unsatisfied one -2J.  All energies are
integers in units of J.

The hot loop works on per-disorder neighbor tables: for link spin i,
``lo[i, m]`` is the other spin of its m-th term and ``lt[i, m]`` that term's
coupling bit; ``zo``/``zt`` hold the same for the two terms of each zz spin.
"""

import numpy as np
from numba import njit

from .philox import fill_uniforms

PURPOSE_SWEEP = 0
PURPOSE_SWAP = 1
PURPOSE_INIT = 2

ZZ = np.array([[0, 0, 0], [1, 0, 1], [0, 1, 1], [1, 1, 0]], dtype=np.uint8)


@njit(cache=True)
def neighbor_tables(tau, term_a, term_b, n):
    lo = np.full((n, 4), -1, dtype=np.int32)
    lt = np.zeros((n, 4), dtype=np.uint8)
    zo = np.full((n, 2), -1, dtype=np.int32)
    zt = np.zeros((n, 2), dtype=np.uint8)
    lc = np.zeros(n, dtype=np.int64)
    zc = np.zeros(n, dtype=np.int64)
    for t in range(term_a.shape[0]):
        for side in range(2):
            s = term_a[t] if side == 0 else term_b[t]
            o = term_b[t] if side == 0 else term_a[t]
            if s < n:
                lo[s, lc[s]] = o
                lt[s, lc[s]] = tau[t]
                lc[s] += 1
            else:
                q = s - n
                zo[q, zc[q]] = o
                zt[q, zc[q]] = tau[t]
                zc[q] += 1
    return lo, lt, zo, zt


@njit(cache=True, inline="always")
def _link_delta(bits, i, lo, lt):
    b = bits[i]
    cnt = 0
    for m in range(4):
        cnt += lt[i, m] ^ b ^ bits[lo[i, m]]
    return 8 - 4 * cnt


@njit(cache=True, inline="always")
def _zz_delta(bits, q, n, zo, zt):
    b = bits[n + q]
    cnt = (zt[q, 0] ^ b ^ bits[zo[q, 0]]) + (zt[q, 1] ^ b ^ bits[zo[q, 1]])
    return 4 - 4 * cnt


@njit(cache=True)
def link_delta(bits, i, lo, lt):
    return _link_delta(bits, i, lo, lt)


@njit(cache=True)
def tri_delta(bits, t, new, tri, tri_q, zo, zt):
    n = zo.shape[0]
    old = tri[t]
    d = 0
    for c in range(3):
        if ZZ[old, c] != ZZ[new, c]:
            d += _zz_delta(bits, tri_q[t, c], n, zo, zt)
    return d


@njit(cache=True)
def sweep(bits, tri, u, boltz, lo, lt, zo, zt, tri_q):
    """One pass over every link spin, then one proposal per triangle.

    A triangle proposal moves to one of the three other admissible zz
    patterns, chosen uniformly.  Consumes ``n + 2 * n_tri`` uniforms.
    Returns (dE, accepted).
    """
    n = lo.shape[0]
    dE = 0
    acc = 0
    k = 0
    for i in range(n):
        d = _link_delta(bits, i, lo, lt)
        if d <= 0 or u[k] < boltz[d >> 1]:
            bits[i] ^= 1
            dE += d
            acc += 1
        k += 1
    for t in range(tri_q.shape[0]):
        r = 1 + int(u[k] * 3.0)
        if r > 3:
            r = 3
        old = tri[t]
        new = old ^ r
        d = 0
        for c in range(3):
            if ZZ[old, c] != ZZ[new, c]:
                d += _zz_delta(bits, tri_q[t, c], n, zo, zt)
        if d <= 0 or u[k + 1] < boltz[d >> 1]:
            for c in range(3):
                bits[n + tri_q[t, c]] = ZZ[new, c]
            tri[t] = new
            dE += d
            acc += 1
        k += 2
    return dE, acc


@njit(cache=True)
def full_energy(bits, tau, term_a, term_b):
    e = 0
    for t in range(term_a.shape[0]):
        if (tau[t] ^ bits[term_a[t]] ^ bits[term_b[t]]) == 0:
            e -= 1
        else:
            e += 1
    return e


@njit(cache=True)
def measure(bits, color, cosk, sink, M, Fr, Fi):
    for c in range(3):
        M[c] = 0.0
        Fr[c] = 0.0
        Fi[c] = 0.0
    for i in range(bits.shape[0]):
        s = 1.0 - 2.0 * bits[i]
        c = color[i]
        M[c] += s
        Fr[c] += s * cosk[i]
        Fi[c] += s * sink[i]


@njit(cache=True, inline="always")
def _fill(u, keys, r, g, purpose):
    fill_uniforms(u, keys[r, 0], keys[r, 1], g & 0xFFFFFFFF, (purpose << 16) | (g >> 32))


@njit(cache=True)
def pt_block(bits, tri, E, perm, boltz, betas, keys, n_sweeps, sweep0, interval,
             lo, lt, zo, zt, tri_q, color, cosk, sink,
             rec_E, rec_M, rec_Fr, rec_Fi, sweep_acc, swap_acc, swap_try):
    """Advance every rung by ``n_sweeps`` sweeps with swap passes in between.

    ``perm[r]`` is the replica at rung r.  Sweep number g (0-based, global)
    at rung r draws its uniforms from stream ``keys[r]`` at counter g; the
    swap pass after it draws from ``keys[n_rung]``.  After sweep g the pass
    tries pairs (r, r+1) with r = g mod 2, 2 + that, ...  A record is taken
    for every rung whenever the number of completed sweeps is a multiple of
    ``interval``; returns the number of records written.
    """
    n_rung = perm.shape[0]
    n = lo.shape[0]
    u = np.empty(n + 2 * tri_q.shape[0])
    u_swap = np.empty(max(n_rung - 1, 1))
    n_rec = 0
    for s in range(n_sweeps):
        g = sweep0 + s
        for r in range(n_rung):
            rep = perm[r]
            _fill(u, keys, r, g, PURPOSE_SWEEP)
            dE, acc = sweep(bits[rep], tri[rep], u, boltz[r], lo, lt, zo, zt, tri_q)
            E[rep] += dE
            sweep_acc[r] += acc
        if n_rung > 1:
            _fill(u_swap, keys, n_rung, g, PURPOSE_SWAP)
        for r in range(g % 2, n_rung - 1, 2):
            a = perm[r]
            b = perm[r + 1]
            x = (betas[r] - betas[r + 1]) * (E[a] - E[b])
            swap_try[r] += 1
            if x >= 0.0 or u_swap[r] < np.exp(x):
                perm[r] = b
                perm[r + 1] = a
                swap_acc[r] += 1
        if (g + 1) % interval == 0:
            for r in range(n_rung):
                rep = perm[r]
                rec_E[n_rec, r] = E[rep]
                measure(bits[rep], color, cosk, sink, rec_M[n_rec, r], rec_Fr[n_rec, r], rec_Fi[n_rec, r])
            n_rec += 1
    return n_rec


@njit(cache=True)
def state_histogram(bits, tri, key, sweep0, boltz, lo, lt, zo, zt, tri_q, n_sweeps, hist):
    """Single-temperature chain adding the state visited after every sweep to ``hist``.

    State index: link bits first, then two bits per triangle pattern.
    """
    n = lo.shape[0]
    keys = key.reshape(1, 2)
    u = np.empty(n + 2 * tri_q.shape[0])
    for s in range(n_sweeps):
        _fill(u, keys, 0, sweep0 + s, PURPOSE_SWEEP)
        sweep(bits, tri, u, boltz, lo, lt, zo, zt, tri_q)
        idx = 0
        for i in range(n):
            idx |= np.int64(bits[i]) << i
        for t in range(tri.shape[0]):
            idx |= np.int64(tri[t]) << (n + 2 * t)
        hist[idx] += 1
