"""State spaces, their exhaustions, covariance fields and drift fields.

Domains are encoded as ``(kind, params)`` pairs so the same membership
routines run inside numba kernels and from Python:

* interval ``(alpha, beta)``: ``E_n = (alpha + h_n, beta - h_n)``, ``h_n = (beta - alpha) / 2**(n + 2)``
* orthant ``(0, inf)^d``: ``E_n = {1/n < x_i < n}`` (``E_0`` is empty)
* simplex with ``d`` assets, points in ``R^(d-1)``:
  ``E_n = {x_i > 1/(n+d), sum(x) < 1 - 1/(n+d)}``
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from numba import njit, types

from .errors import DomainError, NotPositiveDefiniteError, PreconditionError, RangeError
from .expr import compile_scalar
from .sigs import VEC, MAT, MAT3, MATRIX_FN, MATRIX_SIG, SCALAR_SIG, VECTOR_FN, VECTOR_SIG

INTERVAL, ORTHANT, SIMPLEX = 0, 1, 2
KIND_NAMES = {INTERVAL: "interval", ORTHANT: "orthant", SIMPLEX: "simplex"}
DEFAULT_OUTER = 1e6


# ---------------------------------------------------------------- numba core

@njit(cache=True, inline="always")
def in_domain(kind, dp, x):
    if kind == INTERVAL:
        return dp[0] < x[0] < dp[1]
    if kind == ORTHANT:
        for i in range(x.size):
            if not x[i] > 0.0:
                return False
        return True
    s = 0.0
    for i in range(x.size):
        if not x[i] > 0.0:
            return False
        s += x[i]
    return s < 1.0


@njit(cache=True, inline="always")
def level_margin(kind, dp, n):
    """Scalar describing ``E_n``: the inset for intervals and simplices, ``n`` for orthants."""
    if kind == INTERVAL:
        return (dp[1] - dp[0]) / 2.0 ** (n + 2)
    if kind == ORTHANT:
        return float(n)
    return 1.0 / (n + dp[0])


@njit(cache=True, inline="always")
def in_margin(kind, dp, m, x):
    """Membership in the level whose ``level_margin`` is ``m``."""
    if kind == INTERVAL:
        return dp[0] + m < x[0] < dp[1] - m
    if kind == ORTHANT:
        if m == 0.0:
            return False
        for i in range(x.size):
            if not (1.0 / m < x[i] < m):
                return False
        return True
    s = 0.0
    for i in range(x.size):
        if not x[i] > m:
            return False
        s += x[i]
    return s < 1.0 - m


@njit(cache=True, inline="always")
def in_level(kind, dp, n, x):
    return in_margin(kind, dp, level_margin(kind, dp, n), x)


@njit(cache=True)
def level_margins(kind, dp, count):
    out = np.empty(count)
    for n in range(count):
        out[n] = level_margin(kind, dp, n)
    return out


@njit(cache=True, inline="always")
def boundary_distance(kind, dp, x):
    """Euclidean distance to the true boundary (synthetic outer walls excluded)."""
    if kind == INTERVAL:
        return min(x[0] - dp[0], dp[1] - x[0])
    best = math.inf
    s = 0.0
    for i in range(x.size):
        best = min(best, x[i])
        s += x[i]
    if kind == SIMPLEX:
        best = min(best, (1.0 - s) / math.sqrt(x.size))
    return best


@njit(cache=True, inline="always")
def beyond_outer(kind, dp, x):
    if kind != ORTHANT:
        return False
    for i in range(x.size):
        if x[i] >= dp[1]:
            return True
    return False


@njit(cache=True)
def _levels_many(kind, dp, n, X, out):
    for k in range(X.shape[0]):
        out[k] = in_level(kind, dp, n, X[k])


@njit(cache=True)
def _domain_many(kind, dp, X, out):
    for k in range(X.shape[0]):
        out[k] = in_domain(kind, dp, X[k])


@njit(cache=True)
def _distance_many(kind, dp, X, out):
    for k in range(X.shape[0]):
        out[k] = boundary_distance(kind, dp, X[k])


def _as_points(x, dim):
    arr = np.asarray(x, dtype=float)
    single = arr.ndim == 0 or (arr.ndim == 1 and dim > 1 and arr.shape[0] == dim) or (arr.ndim == 1 and dim == 1 and arr.size == 1 and np.ndim(x) == 0)
    if arr.ndim == 0:
        pts = arr.reshape(1, 1)
    elif arr.ndim == 1:
        pts = arr.reshape(1, dim) if dim > 1 else arr.reshape(-1, 1)
    else:
        pts = arr
    if pts.shape[1] != dim:
        raise DomainError(f"points have dimension {pts.shape[1]}, domain has {dim}", "model")
    return np.ascontiguousarray(pts), single


# ---------------------------------------------------------------- domains

@dataclass(frozen=True)
class DomainSpec:
    kind: int
    params: tuple
    exhaustion_count: int = 48

    @classmethod
    def interval(cls, alpha, beta, exhaustion_count=48):
        alpha, beta = float(alpha), float(beta)
        if not (math.isfinite(alpha) and math.isfinite(beta) and alpha < beta):
            raise PreconditionError(f"interval needs finite alpha < beta, got ({alpha}, {beta})", "model")
        return cls(INTERVAL, (alpha, beta), exhaustion_count)

    @classmethod
    def orthant(cls, d, outer=DEFAULT_OUTER, exhaustion_count=48):
        if d < 1:
            raise PreconditionError("orthant needs d >= 1", "model")
        return cls(ORTHANT, (float(d), float(outer)), exhaustion_count)

    @classmethod
    def simplex(cls, d, exhaustion_count=48):
        if d < 2:
            raise PreconditionError("simplex needs d >= 2 assets", "model")
        return cls(SIMPLEX, (float(d),), exhaustion_count)

    @property
    def dim(self):
        if self.kind == INTERVAL:
            return 1
        if self.kind == ORTHANT:
            return int(self.params[0])
        return int(self.params[0]) - 1

    @property
    def dp(self):
        return np.array(self.params, dtype=float)

    def describe(self):
        if self.kind == INTERVAL:
            return f"interval({self.params[0]:g}, {self.params[1]:g})"
        if self.kind == ORTHANT:
            return f"orthant({self.dim})"
        return f"simplex({int(self.params[0])})"

    def contains(self, x):
        pts, single = _as_points(x, self.dim)
        out = np.empty(pts.shape[0], dtype=np.bool_)
        _domain_many(self.kind, self.dp, pts, out)
        return bool(out[0]) if single else out

    def member(self, n, x):
        return exhaustion_member(self, n, x)

    def distance(self, x):
        pts, single = _as_points(x, self.dim)
        out = np.empty(pts.shape[0])
        _distance_many(self.kind, self.dp, pts, out)
        return float(out[0]) if single else out

    def sample_interior(self, n, rng):
        """Random points of E; unbounded orthants are sampled log-uniformly in [1e-3, 1e3]."""
        d = self.dim
        if self.kind == INTERVAL:
            a, b = self.params
            return a + (b - a) * rng.uniform(1e-9, 1 - 1e-9, size=(n, 1))
        if self.kind == ORTHANT:
            return 10.0 ** rng.uniform(-3, 3, size=(n, d))
        w = rng.dirichlet(np.ones(d + 1), size=n)
        return w[:, :d]


def exhaustion_member(domain: DomainSpec, n: int, x) -> bool | np.ndarray:
    """True iff ``x`` lies in ``E_n``."""
    if not 0 <= n < domain.exhaustion_count:
        raise RangeError(f"level n={n} outside [0, {domain.exhaustion_count})", "model")
    pts, single = _as_points(x, domain.dim)
    if not np.all(np.isfinite(pts)):
        raise PreconditionError("exhaustion_member needs finite points", "model")
    out = np.empty(pts.shape[0], dtype=np.bool_)
    _levels_many(domain.kind, domain.dp, n, pts, out)
    return bool(out[0]) if single else out


# ---------------------------------------------------------------- linear algebra

def sqrt_spd(c, tol=1e-14):
    """Symmetric positive definite square root of ``c``."""
    c = np.asarray(c, dtype=float)
    if c.ndim != 2 or c.shape[0] != c.shape[1]:
        raise PreconditionError("sqrt_spd needs a square matrix", "model")
    scale = max(1.0, float(np.max(np.abs(c)))) if c.size else 1.0
    if np.max(np.abs(c - c.T), initial=0.0) > 1e-12 * scale:
        raise NotPositiveDefiniteError("matrix is not symmetric", "model")
    w, v = np.linalg.eigh(0.5 * (c + c.T))
    if w[0] <= tol * max(1.0, w[-1]):
        raise NotPositiveDefiniteError(f"smallest eigenvalue {w[0]:.3e} <= tolerance; covariance degenerate here", "model")
    s = (v * np.sqrt(w)) @ v.T
    return 0.5 * (s + s.T)


@njit(cache=True, inline="always")
def cholesky_inplace(c, out):
    """Lower Cholesky factor of a small SPD matrix; returns False if not SPD."""
    d = c.shape[0]
    for i in range(d):
        for j in range(d):
            out[i, j] = 0.0
    for j in range(d):
        s = c[j, j]
        for k in range(j):
            s -= out[j, k] * out[j, k]
        if not s > 0.0:
            return False
        out[j, j] = math.sqrt(s)
        for i in range(j + 1, d):
            s = c[i, j]
            for k in range(j):
                s -= out[i, k] * out[j, k]
            out[i, j] = s / out[j, j]
    return True


# ---------------------------------------------------------------- fields

@njit(types.void(MATRIX_FN, MAT, VEC, MAT3), cache=True)
def _matrix_many(fn, X, p, out):
    for k in range(X.shape[0]):
        fn(X[k], p, out[k])


@njit(types.void(VECTOR_FN, MAT, VEC, MAT), cache=True)
def _vector_many(fn, X, p, out):
    for k in range(X.shape[0]):
        fn(X[k], p, out[k])


_SCALAR_WRAPPERS = {}


def _matrix_from_scalar(fn):
    if fn not in _SCALAR_WRAPPERS:
        @njit(MATRIX_SIG)
        def matrix(x, p, out):
            out[0, 0] = fn(x[0])

        @njit(VECTOR_SIG)
        def vector(x, p, out):
            out[0] = fn(x[0])

        _SCALAR_WRAPPERS[fn] = (matrix, vector)
    return _SCALAR_WRAPPERS[fn]


@dataclass(frozen=True, eq=False)
class CovarianceField:
    """``x -> c(x)``, a symmetric positive definite ``dim x dim`` matrix.

    ``matrix_fn(x, params, out)`` is a numba function filling ``out``.  For
    one-dimensional fields ``scalar_fn(x)`` is also available.
    """

    dim: int
    matrix_fn: Callable
    params: np.ndarray = field(default_factory=lambda: np.zeros(1))
    name: str = "c"
    scalar_fn: Callable | None = None
    endpoint_orders: tuple | None = None

    @classmethod
    def from_scalar(cls, fn, name="c", endpoint_orders=None):
        matrix, _ = _matrix_from_scalar(fn)
        return cls(1, matrix, np.zeros(1), name, fn, endpoint_orders)

    @classmethod
    def from_expression(cls, text, endpoint_orders=None):
        return cls.from_scalar(compile_scalar(text), text, endpoint_orders)

    def with_orders(self, orders):
        return CovarianceField(self.dim, self.matrix_fn, self.params, self.name, self.scalar_fn, tuple(orders))

    def matrices(self, x):
        pts, single = _as_points(x, self.dim)
        out = np.empty((pts.shape[0], self.dim, self.dim))
        _matrix_many(self.matrix_fn, pts, self.params, out)
        return out[0] if single else out

    def __call__(self, x):
        """Scalar values for 1-D fields, matrices otherwise."""
        if self.dim == 1:
            m = self.matrices(np.atleast_1d(np.asarray(x, dtype=float)).reshape(-1, 1))[:, 0, 0]
            return float(m[0]) if np.ndim(x) == 0 else m.reshape(np.shape(x))
        return self.matrices(x)

    def scaled(self, k):
        """The field ``k * c``."""
        k = float(k)
        base = self.matrix_fn

        @njit(MATRIX_SIG)
        def matrix(x, p, out):
            base(x, p, out)
            for i in range(out.shape[0]):
                for j in range(out.shape[1]):
                    out[i, j] *= k

        scalar = None
        if self.scalar_fn is not None:
            sfn = self.scalar_fn

            @njit(SCALAR_SIG)
            def scalar(x):
                return k * sfn(x)

        orders = self.endpoint_orders
        return CovarianceField(self.dim, matrix, self.params, f"{k:g}*({self.name})", scalar, orders)


@dataclass(frozen=True, eq=False)
class DriftField:
    """``x -> b(x)``; ``vector_fn(x, params, out)`` is a numba function."""

    dim: int
    vector_fn: Callable
    params: np.ndarray = field(default_factory=lambda: np.zeros(1))
    name: str = "b"

    @classmethod
    def from_scalar(cls, fn, name="b"):
        _, vector = _matrix_from_scalar(fn)
        return cls(1, vector, np.zeros(1), name)

    @classmethod
    def from_expression(cls, text):
        return cls.from_scalar(compile_scalar(text), text)

    @classmethod
    def zero(cls, dim):
        return cls(dim, _zero_drift, np.zeros(1), "0")

    def __call__(self, x):
        pts, single = _as_points(x, self.dim)
        out = np.empty((pts.shape[0], self.dim))
        _vector_many(self.vector_fn, pts, self.params, out)
        if self.dim == 1 and np.ndim(x) <= 1:
            return float(out[0, 0]) if np.ndim(x) == 0 else out[:, 0]
        return out[0] if single else out


@njit(VECTOR_SIG, cache=True)
def _zero_drift(x, p, out):
    for i in range(out.size):
        out[i] = 0.0


# ---------------------------------------------------------------- endpoint asymptotics

def estimate_endpoint_orders(c: CovarianceField, interval, n_points=32, inner=1e-8, outer=1e-2):
    """Exponents ``p`` with ``c(x) ~ dist(x, endpoint)**p`` near each endpoint.

    Log-log least squares over ``n_points`` geometrically spaced distances in
    ``[inner, outer] * (beta - alpha)``; declared orders on ``c`` take precedence.
    """
    if c.endpoint_orders is not None:
        return tuple(float(v) for v in c.endpoint_orders)
    a, b = map(float, interval)
    d = np.geomspace(inner, outer, n_points) * (b - a)
    orders = []
    for pts in (a + d, b - d):
        vals = np.asarray(c(pts), dtype=float)
        if np.any(~np.isfinite(vals)) or np.any(vals <= 0):
            raise NotPositiveDefiniteError("c is not positive near an endpoint", "model")
        slope = np.polyfit(np.log(d), np.log(vals), 1)[0]
        orders.append(float(slope))
    return tuple(orders)
