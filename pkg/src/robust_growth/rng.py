"""Counter-based normal variates for reproducible path simulation.

Philox4x32-10 maps a 128-bit counter and a 64-bit key to 128 random bits,
which become two normals through a ziggurat.
Every normal draw in the simulator is addressed by (seed, path, counter
words), so a path's noise never depends on which worker simulated it or in
what order.
"""

import math

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
    """Ten Philox rounds. All arguments are uint64 holding 32-bit words."""
    for _ in range(10):
        p0 = _M0 * c0
        p1 = _M1 * c2
        n0 = (p1 >> _S32) ^ c1 ^ k0
        n1 = p1 & _MASK
        n2 = (p0 >> _S32) ^ c3 ^ k1
        n3 = p0 & _MASK
        c0, c1, c2, c3 = n0, n1, n2, n3
        k0 = (k0 + _W0) & _MASK
        k1 = (k1 + _W1) & _MASK
    return c0, c1, c2, c3


# 128-layer ziggurat (Doornik's layout, independent index and magnitude bits)
_ZIG_C = 128
_ZIG_R = 3.442619855899
_ZIG_V = 9.91256303526217e-3


def _zig_tables():
    x = np.zeros(_ZIG_C + 1)
    f = math.exp(-0.5 * _ZIG_R * _ZIG_R)
    x[0] = _ZIG_V / f
    x[1] = _ZIG_R
    for i in range(2, _ZIG_C):
        x[i] = math.sqrt(-2.0 * math.log(_ZIG_V / x[i - 1] + f))
        f = math.exp(-0.5 * x[i] * x[i])
    ratio = x[1:] / x[:-1]
    return x, ratio


_ZIG_X, _ZIG_RATIO = _zig_tables()
_INV_2_32 = 1.0 / 4294967296.0
_FALLBACK = np.uint64(0x80000000)


@njit(cache=True, inline="always")
def _unit(w):
    return (np.float64(w) + 0.5) * _INV_2_32


@njit(cache=True)
def _zig_slow(u, i, s, w0, w1, w2, w3, slot):
    """Wedge and tail handling; extra words come from a fallback counter."""
    attempt = 0
    while True:
        if i == 0:
            # tail beyond R, Marsaglia's method
            while True:
                t0, t1, t2, t3 = philox4x32(w0, w1, w2, w3 ^ (_FALLBACK | np.uint64(slot << 24) | np.uint64(attempt)),
                                            s & _MASK, s >> _S32)
                attempt += 1
                xt = math.log(_unit(t0)) / _ZIG_R
                yt = math.log(_unit(t1))
                if -2.0 * yt >= xt * xt:
                    return xt - _ZIG_R if u < 0.0 else _ZIG_R - xt
        x = u * _ZIG_X[i]
        t0, t1, t2, t3 = philox4x32(w0, w1, w2, w3 ^ (_FALLBACK | np.uint64(slot << 24) | np.uint64(attempt)),
                                    s & _MASK, s >> _S32)
        attempt += 1
        f0 = math.exp(-0.5 * (_ZIG_X[i] * _ZIG_X[i] - x * x))
        f1 = math.exp(-0.5 * (_ZIG_X[i + 1] * _ZIG_X[i + 1] - x * x))
        if f1 + _unit(t0) * (f0 - f1) < 1.0:
            return x
        u = 2.0 * _unit(t1) - 1.0
        i = np.int64(t2 & np.uint64(_ZIG_C - 1))
        if abs(u) < _ZIG_RATIO[i]:
            return u * _ZIG_X[i]


@njit(cache=True, inline="always")
def _zig(a, b, s, w0, w1, w2, w3, slot):
    u = 2.0 * _unit(a) - 1.0
    i = np.int64(b & np.uint64(_ZIG_C - 1))
    if abs(u) < _ZIG_RATIO[i]:
        return u * _ZIG_X[i]
    return _zig_slow(u, i, s, w0, w1, w2, w3, slot)


@njit(cache=True, inline="always")
def normal2(seed, w0, w1, w2, w3, out):
    """Fill ``out[:2]`` with standard normals addressed by four counter words."""
    s = np.uint64(seed)
    c0 = np.uint64(w0) & _MASK
    c1 = np.uint64(w1) & _MASK
    c2 = np.uint64(w2) & _MASK
    c3 = np.uint64(w3) & _MASK
    r0, r1, r2, r3 = philox4x32(c0, c1, c2, c3, s & _MASK, s >> _S32)
    out[0] = _zig(r0, r1, s, c0, c1, c2, c3, 0)
    out[1] = _zig(r2, r3, s, c0, c1, c2, c3, 1)


@njit(cache=True)
def _fill_normals(seed, stream, n, out):
    buf = np.empty(2)
    for blk in range((n + 1) // 2):
        normal2(seed, blk, 0, stream, 0, buf)
        for j in range(2):
            k = 2 * blk + j
            if k < n:
                out[k] = buf[j]


def standard_normals(seed: int, n: int, stream: int = 0) -> np.ndarray:
    """Return ``n`` normals from substream ``stream`` of ``seed``."""
    out = np.empty(n)
    _fill_normals(np.uint64(seed), stream, n, out)
    return out


def philox_words(counter, key):
    """Python-facing Philox4x32-10 for known-answer checks."""
    c = [np.uint64(v) for v in counter]
    k = [np.uint64(v) for v in key]
    return tuple(int(v) for v in philox4x32(c[0], c[1], c[2], c[3], k[0], k[1]))
