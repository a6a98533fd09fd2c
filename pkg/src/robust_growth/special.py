"""Scalar special functions usable from numba kernels.

Only what the shipped covariance families need: the exponential integral
E1, the cosine integral Ci, and the two antiderivatives built from them.
"""

import math

import numpy as np
from numba import njit, types

from .sigs import SCALAR_FN, SCALAR_SIG, VEC

EULER_GAMMA = 0.5772156649015329
_EPS = 1e-16
_FPMIN = 1e-300


@njit(SCALAR_SIG, cache=True)
def expint_e1(x):
    """E1(x) = int_x^inf e^{-t}/t dt for x > 0."""
    if x <= 0.0:
        return math.inf
    if x <= 1.0:
        total = -EULER_GAMMA - math.log(x)
        term = 1.0
        for k in range(1, 200):
            term *= -x / k
            d = -term / k
            total += d
            if abs(d) < abs(total) * _EPS:
                break
        return total
    # modified Lentz continued fraction
    b = x + 1.0
    c = 1.0 / _FPMIN
    d = 1.0 / b
    h = d
    for i in range(1, 500):
        a = -float(i * i)
        b += 2.0
        d = 1.0 / (a * d + b)
        c = b + a / c
        delta = c * d
        h *= delta
        if abs(delta - 1.0) < _EPS:
            break
    return h * math.exp(-x)


@njit(SCALAR_SIG, cache=True)
def cosint(x):
    """Ci(x) = gamma + log x + int_0^x (cos t - 1)/t dt for x > 0."""
    if x <= 0.0:
        return -math.inf
    if x <= 2.0:
        total = EULER_GAMMA + math.log(x)
        term = 1.0
        x2 = x * x
        for k in range(1, 100):
            term *= -x2 / ((2 * k - 1) * (2 * k))
            d = term / (2 * k)
            total += d
            if abs(d) < _EPS * max(abs(total), 1e-300):
                break
        return total
    # continued fraction for E1(ix); Ci(x) = -Re E1(ix)
    b = complex(1.0, x)
    c = complex(1.0 / _FPMIN, 0.0)
    d = 1.0 / b
    h = d
    for i in range(1, 1000):
        a = -float(i * i)
        b += 2.0
        d = 1.0 / (a * d + b)
        c = b + a / c
        delta = c * d
        h *= delta
        if abs(delta.real - 1.0) + abs(delta.imag) < _EPS:
            break
    h *= complex(math.cos(x), -math.sin(x))
    return -h.real


@njit(SCALAR_SIG, cache=True)
def int_log_neg_log(x):
    """int_0^x log(-log y) dy for 0 < x < 1."""
    if x <= 0.0:
        return 0.0
    s = -math.log(x)
    return x * math.log(s) + expint_e1(s)


@njit(SCALAR_SIG, cache=True)
def int_cos_rsqrt(x):
    """int_0^x cos(y^{-1/2}) dy for x > 0."""
    if x <= 0.0:
        return 0.0
    u = 1.0 / math.sqrt(x)
    return x * math.cos(u) - math.sqrt(x) * math.sin(u) + cosint(u)


@njit(types.void(SCALAR_FN, VEC, VEC), cache=True)
def _map(fn, xs, out):
    for i in range(xs.size):
        out[i] = fn(xs[i])


def vectorize_scalar(fn):
    """Wrap a jitted scalar function as an array-in, array-out callable."""

    def apply(x):
        arr = np.asarray(x, dtype=float)
        flat = np.ascontiguousarray(arr.ravel())
        out = np.empty_like(flat)
        _map(fn, flat, out)
        return out.reshape(arr.shape) if arr.ndim else float(out[0])

    return apply


@njit(SCALAR_SIG, cache=True)
def int_cos_rsqrt_minus_x(x):
    """``int_cos_rsqrt(x) - x`` without the cancellation at large ``x``."""
    if x <= 0.0:
        return 0.0
    u = 1.0 / math.sqrt(x)
    s = math.sin(0.5 * u)
    return -2.0 * x * s * s - math.sqrt(x) * math.sin(u) + cosint(u)
