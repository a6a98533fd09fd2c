"""Closed-form eigenpairs, finite-difference verification and the example registry.

Families: correlated geometric Brownian motion on the orthant, its
relative-capitalization image on the simplex, and the one-dimensional
examples with explicit eigenfunctions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from numba import njit

from .eigen1d import Eigenpair
from .errors import GeometryError, NotPositiveDefiniteError, PreconditionError, RegistryError
from .model import CovarianceField, DomainSpec
from .sigs import LOG_ETA_SIG, MATRIX_SIG, SCALAR_SIG, VECTOR_SIG
from .special import int_cos_rsqrt_minus_x, int_log_neg_log

MODULE = "closedform"


def _spd(a, what):
    a = np.array(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise PreconditionError(f"{what} must be a square matrix", MODULE)
    if np.max(np.abs(a - a.T)) > 0:
        raise NotPositiveDefiniteError(f"{what} is not symmetric", MODULE)
    if np.linalg.eigvalsh(a).min() <= 0:
        raise NotPositiveDefiniteError(f"{what} is not positive definite", MODULE)
    return a


# ---------------------------------------------------------------- GBM on the orthant

@njit(MATRIX_SIG, cache=True)
def _gbm_cov(x, p, out):
    d = int(p[0])
    for i in range(d):
        for j in range(d):
            out[i, j] = x[i] * x[j] * p[1 + i * d + j]


@njit(LOG_ETA_SIG, cache=True)
def _gbm_log_eta(x, p):
    d = int(p[1])
    s = p[0]
    for i in range(d):
        s += p[2 + i] * math.log(x[i])
    return s


@njit(VECTOR_SIG, cache=True)
def _gbm_grad(x, p, out):
    d = int(p[1])
    for i in range(d):
        out[i] = p[2 + i] / x[i]


@dataclass(frozen=True, eq=False)
class GBMSpec:
    """``c_ij(x) = x_i x_j A_ij`` on ``(0, inf)^d``."""

    A: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "A", _spd(self.A, "A"))

    @property
    def dim(self):
        return self.A.shape[0]

    @property
    def A_hat(self):
        return np.diag(self.A).copy()

    @property
    def B_hat(self):
        return 0.5 * np.linalg.solve(self.A, self.A_hat)

    @property
    def lam(self):
        return float(self.A_hat @ np.linalg.solve(self.A, self.A_hat) / 8.0)

    def covariance(self):
        d = self.dim
        return CovarianceField(d, _gbm_cov, np.concatenate([[d], self.A.ravel()]), "gbm")

    def domain(self, outer=1e6):
        return DomainSpec.orthant(self.dim, outer)


def gbm_eigenpair(spec: GBMSpec, x0=None) -> Eigenpair:
    """``eta(x) = prod x_i**B_i``, ``lam = A_hat' A^{-1} A_hat / 8``."""
    d = spec.dim
    x0 = np.ones(d) if x0 is None else np.asarray(x0, dtype=float)
    if x0.shape != (d,) or np.any(x0 <= 0):
        raise PreconditionError(f"x0 must lie in the open orthant of dimension {d}", MODULE)
    params = np.concatenate([[0.0, d], spec.B_hat])
    return Eigenpair.build(spec.lam, d, _gbm_log_eta, _gbm_grad, params, x0, "gbm",
                           {"covariance": spec.covariance(), "domain": spec.domain()})


# ---------------------------------------------------------------- relative capitalizations on the simplex

@njit(MATRIX_SIG, cache=True)
def _simplex_cov(x, p, out):
    m = int(p[0])
    xax = 0.0
    for i in range(m):
        for j in range(m):
            xax += x[i] * p[1 + i * m + j] * x[j]
    for i in range(m):
        ai = 0.0
        for k in range(m):
            ai += p[1 + i * m + k] * x[k]
        for j in range(i, m):
            aj = 0.0
            for k in range(m):
                aj += p[1 + j * m + k] * x[k]
            v = x[i] * x[j] * (p[1 + i * m + j] - ai - aj + xax)
            out[i, j] = v
            out[j, i] = v


@njit(LOG_ETA_SIG, cache=True)
def _simplex_log_eta(x, p):
    m = int(p[1])
    s = p[0]
    tot = 0.0
    bsum = 0.0
    for i in range(m):
        s += p[2 + i] * math.log(x[i])
        tot += x[i]
        bsum += p[2 + i]
    return s + (1.0 - bsum) * math.log(1.0 - tot)


@njit(VECTOR_SIG, cache=True)
def _simplex_grad(x, p, out):
    m = int(p[1])
    tot = 0.0
    bsum = 0.0
    for i in range(m):
        tot += x[i]
        bsum += p[2 + i]
    for i in range(m):
        out[i] = p[2 + i] / x[i] - (1.0 - bsum) / (1.0 - tot)


@dataclass(frozen=True, eq=False)
class SimplexSpec:
    """Relative capitalizations of a ``d``-asset GBM, coordinates in ``R^(d-1)``."""

    A: np.ndarray

    def __post_init__(self):
        a = _spd(self.A, "A")
        object.__setattr__(self, "A", a)
        if a.shape[0] < 2:
            raise PreconditionError("the simplex family needs d >= 2", MODULE)
        _spd(self.calA, "the reduced matrix")

    @property
    def dim(self):
        return self.A.shape[0] - 1

    @property
    def calA(self):
        a = self.A
        d = a.shape[0] - 1
        m = a[:d, :d] - a[:d, d][:, None] - a[d, :d][None, :] + a[d, d]
        return 0.5 * (m + m.T)

    @property
    def A_hat(self):
        return np.diag(self.calA).copy()

    @property
    def B_hat(self):
        return 0.5 * np.linalg.solve(self.calA, self.A_hat)

    @property
    def lam(self):
        return float(self.A_hat @ np.linalg.solve(self.calA, self.A_hat) / 8.0)

    def covariance(self):
        m = self.dim
        return CovarianceField(m, _simplex_cov, np.concatenate([[m], self.calA.ravel()]), "simplex")

    def domain(self):
        return DomainSpec.simplex(self.A.shape[0])


def simplex_eigenpair(spec: SimplexSpec, x0=None) -> Eigenpair:
    """``eta(x) = prod x_i**B_i * (1 - sum x)**(1 - sum B)``, ``lam = A_hat' calA^{-1} A_hat / 8``."""
    m = spec.dim
    x0 = np.full(m, 1.0 / (m + 1)) if x0 is None else np.asarray(x0, dtype=float)
    if x0.shape != (m,) or np.any(x0 <= 0) or x0.sum() >= 1:
        raise PreconditionError(f"x0 must lie in the open simplex (coordinates in R^{m})", MODULE)
    params = np.concatenate([[0.0, m], spec.B_hat])
    return Eigenpair.build(spec.lam, m, _simplex_log_eta, _simplex_grad, params, x0, "simplex",
                           {"covariance": spec.covariance(), "domain": spec.domain()})


# ---------------------------------------------------------------- one-dimensional closed forms

@njit(LOG_ETA_SIG, cache=True)
def _const_log_eta(x, p):
    return p[0]


@njit(VECTOR_SIG, cache=True)
def _const_grad(x, p, out):
    for i in range(out.size):
        out[i] = 0.0


def constant_pair(dim=1, x0=None, lam=0.0):
    """``eta = 1`` (harmonic for every covariance), ``lam = 0`` by default."""
    x0 = np.full(dim, 0.5) if x0 is None else x0
    return Eigenpair.build(lam, dim, _const_log_eta, _const_grad, [0.0], x0, "1")


@njit(LOG_ETA_SIG, cache=True)
def _wf_log_eta(x, p):
    # p[1] is the exponent: eta = (x(1-x))**p[1]
    return p[0] + p[1] * math.log(x[0] * (1.0 - x[0]))


@njit(VECTOR_SIG, cache=True)
def _wf_grad(x, p, out):
    out[0] = p[1] * (1.0 - 2.0 * x[0]) / (x[0] * (1.0 - x[0]))


@njit(LOG_ETA_SIG, cache=True)
def _loglog_log_eta(x, p):
    return p[0] + math.log(int_log_neg_log(x[0]))


@njit(VECTOR_SIG, cache=True)
def _loglog_grad(x, p, out):
    out[0] = math.log(-math.log(x[0])) / int_log_neg_log(x[0])


@njit(SCALAR_SIG, cache=True)
def _cos_eta(x):
    return int_cos_rsqrt_minus_x(x) + 4.0 * math.sqrt(x)


@njit(LOG_ETA_SIG, cache=True)
def _cos_log_eta(x, p):
    return p[0] + math.log(_cos_eta(x[0]))


@njit(VECTOR_SIG, cache=True)
def _cos_grad(x, p, out):
    y = x[0]
    out[0] = (math.cos(1.0 / math.sqrt(y)) + 2.0 / math.sqrt(y) - 1.0) / _cos_eta(y)


@njit(LOG_ETA_SIG, cache=True)
def _power_log_eta(x, p):
    # eta = x**p[1]
    return p[0] + p[1] * math.log(x[0])


@njit(VECTOR_SIG, cache=True)
def _power_grad(x, p, out):
    out[0] = p[1] / x[0]


def wright_fisher_pair(exponent=1.0, x0=0.5, lam=None):
    """``eta = (x(1-x))**exponent`` on ``(0, 1)``; exponent 1 pairs with ``c = x(1-x)``
    (``lam = 1``), exponent 1/2 with ``c = x**2 (1-x)**2`` (``lam = 1/8``)."""
    if lam is None:
        lam = {1.0: 1.0, 0.5: 0.125}.get(float(exponent))
        if lam is None:
            raise PreconditionError("lam must be given for exponents other than 1 and 1/2", MODULE)
    return Eigenpair.build(lam, 1, _wf_log_eta, _wf_grad, [0.0, float(exponent)], [x0], f"(x(1-x))^{exponent:g}")


def power_pair(exponent=1.0, x0=1.0, lam=0.0):
    """``eta = x**exponent`` on the half-line; exponent 1 with ``c = 1`` is the Bessel-3 transform."""
    return Eigenpair.build(lam, 1, _power_log_eta, _power_grad, [0.0, float(exponent)], [x0], f"x^{exponent:g}")


@lru_cache(maxsize=None)
def x_hat():
    """First positive root of ``int_0^x log(-log y) dy``, by bisection to 1e-12."""
    f = int_log_neg_log
    lo, hi = 0.5, 0.9
    if not (f(lo) > 0 > f(hi)):
        raise PreconditionError("bracket for x_hat does not change sign", MODULE)
    while hi - lo > 1e-12:
        mid = 0.5 * (lo + hi)
        if f(mid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------- verification

def _stencil_points(grid, h):
    n, d = grid.shape
    offsets = [np.zeros(d)]
    for i in range(d):
        e = np.zeros(d)
        e[i] = h
        offsets += [e, -e]
    for i in range(d):
        for j in range(i + 1, d):
            for si in (1, -1):
                for sj in (1, -1):
                    e = np.zeros(d)
                    e[i], e[j] = si * h, sj * h
                    offsets.append(e)
    offsets = np.array(offsets)
    return (grid[:, None, :] + offsets[None, :, :]).reshape(-1, d), len(offsets)


def pde_residual(pair: Eigenpair, c: CovarianceField, grid, h=1e-4, domain: DomainSpec | None = None,
                 per_point=False):
    """Max over ``grid`` of ``|tr(c Hess eta)/2 + lam eta| / eta`` with central differences.

    Mixed partials use the four-point stencil.  When a domain is known (given
    or attached to the pair) every grid point must be farther than ``2h`` from
    its boundary.
    """
    d = pair.dim
    grid = np.asarray(grid, dtype=float).reshape(-1, d)
    domain = domain if domain is not None else pair.info.get("domain")
    if domain is not None:
        dist = domain.distance(grid)
        bad = np.nonzero(np.atleast_1d(dist) <= 2 * h)[0]
        if bad.size:
            raise GeometryError(f"grid point {grid[bad[0]].tolist()} lies within 2h={2 * h:g} of the boundary",
                                MODULE)
    pts, m = _stencil_points(grid, h)
    vals = pair.eta(pts if d > 1 else pts[:, 0]).reshape(grid.shape[0], m)
    cm = c.matrices(grid).reshape(grid.shape[0], d, d)
    f0 = vals[:, 0]
    lap = np.zeros(grid.shape[0])
    for i in range(d):
        hess_ii = (vals[:, 1 + 2 * i] - 2 * f0 + vals[:, 2 + 2 * i]) / h ** 2
        lap += cm[:, i, i] * hess_ii
    k = 1 + 2 * d
    for i in range(d):
        for j in range(i + 1, d):
            pp, pm, mp, mm = vals[:, k], vals[:, k + 1], vals[:, k + 2], vals[:, k + 3]
            k += 4
            hess_ij = (pp - pm - mp + mm) / (4 * h ** 2)
            lap += 2 * cm[:, i, j] * hess_ij
    res = np.abs(0.5 * lap + pair.lam * f0) / f0
    return res if per_point else float(res.max())


def hopf_statistic(pair: Eigenpair, c: CovarianceField, domain: DomainSpec, n: int, sample=100_000, rng=None):
    """``(inf, sup)`` of ``q = grad(l)' c grad(l) / 2`` over ``E \\ E_n``.

    One dimension: a geometric grid toward each boundary piece.  Higher
    dimensions: quasi-random (Halton) points in a bounding box, kept if they
    lie in ``E`` but outside ``E_n``.
    """
    from .model import exhaustion_member

    exhaustion_member(domain, n, domain.sample_interior(1, np.random.default_rng(0))[0])  # range check
    pts = _outside_level(domain, n, sample, rng)
    g = np.atleast_2d(pair.grad_log_eta(pts if domain.dim > 1 else pts[:, 0]).reshape(len(pts), -1))
    cm = c.matrices(pts).reshape(len(pts), domain.dim, domain.dim)
    q = 0.5 * np.einsum("ni,nij,nj->n", g, cm, g)
    q = q[np.isfinite(q)]
    return float(q.min()), float(q.max())


def _outside_level(domain, n, sample, rng):
    from .model import INTERVAL, ORTHANT

    if domain.dim == 1 and domain.kind in (INTERVAL, ORTHANT):
        if domain.kind == INTERVAL:
            a, b = domain.params
            hn = (b - a) / 2 ** (n + 2)
            d = np.geomspace(1e-12 * (b - a), hn, sample // 2)
            pts = np.concatenate([a + d, b - d])
        else:
            outer = domain.params[1]
            lo = np.geomspace(1e-12, 1.0 / n, sample // 2) if n > 0 else np.geomspace(1e-12, 1.0, sample // 2)
            hi = np.geomspace(max(n, 1.0), outer, sample // 2)
            pts = np.concatenate([lo, hi])
        pts = pts[domain.contains(pts[:, None]) & ~domain.member(n, pts[:, None])]
        return pts[:, None]
    from scipy.stats import qmc

    sampler = qmc.Halton(domain.dim, seed=0 if rng is None else rng)
    u = sampler.random(sample)
    if domain.kind == ORTHANT:
        outer = min(domain.params[1], 4.0 * n + 4.0)
        pts = np.exp(np.log(1e-6) + u * (np.log(outer) - np.log(1e-6)))
    else:
        pts = u
    keep = domain.contains(pts) & ~domain.member(n, pts)
    return pts[keep]


# ---------------------------------------------------------------- registry

SEC_621_A = np.array([[5 / 3, 3.0, 0.0], [3.0, 7.0, 0.0], [0.0, 0.0, 1.0]])


@dataclass(frozen=True, eq=False)
class Example:
    name: str
    description: str
    anchor: str
    domain: DomainSpec
    covariance: CovarianceField
    pair: Eigenpair
    verify_box: tuple  # (low corner, high corner) of the verification region
    tolerance: float = 1e-5
    h: float = 1e-4
    extra: dict = field(default_factory=dict)

    def verification_grid(self, n=1000, seed=0):
        rng = np.random.default_rng(seed)
        lo, hi = (np.atleast_1d(np.asarray(v, dtype=float)) for v in self.verify_box)
        pts = lo + (hi - lo) * rng.random((4 * n, lo.size))
        keep = self.domain.contains(pts)
        margin = self.extra.get("margin")
        if margin is not None:
            # keep the implied last coordinate away from zero as well
            keep &= 1.0 - pts.sum(axis=1) >= margin
        return pts[keep][:n]

    def verify(self, n=1000, h=None, seed=0):
        h = self.h if h is None else h
        grid = self.verification_grid(n, seed)
        res = pde_residual(self.pair, self.covariance, grid, h, self.domain)
        return {"name": self.name, "residual": res, "tolerance": self.tolerance, "points": int(len(grid)),
                "h": h, "pass": bool(res < self.tolerance)}


def _ex611():
    return Example("ex-6.1.1", "c = x(1-x) on (0,1): eta* = x(1-x), lambda* = 1", "Example 6.1.1",
                   DomainSpec.interval(0.0, 1.0), CovarianceField.from_expression("x*(1-x)", (1.0, 1.0)),
                   wright_fisher_pair(1.0), ((0.01,), (0.99,)))


def _ex612():
    return Example("ex-6.1.2", "c = x^2(1-x)^2 on (0,1): eta* = sqrt(x(1-x)), lambda* = 1/8", "Example 6.1.2",
                   DomainSpec.interval(0.0, 1.0), CovarianceField.from_expression("x^2*(1-x)^2", (2.0, 2.0)),
                   wright_fisher_pair(0.5), ((0.01,), (0.99,)))


def _ex613():
    return Example("ex-6.1.3", "c = x^3(1-x)^3 on (0,1): lambda* = 0, eta* affine (eta* = 1 here)",
                   "Example 6.1.3", DomainSpec.interval(0.0, 1.0),
                   CovarianceField.from_expression("x^3*(1-x)^3", (3.0, 3.0)), constant_pair(1, [0.5]),
                   ((0.01,), (0.99,)))


def _ex614():
    xh = x_hat()
    cov = CovarianceField.from_expression("-2*x*log(x)*intloglog(x)")
    pair = Eigenpair.build(1.0, 1, _loglog_log_eta, _loglog_grad, [0.0], [xh / 2], "int log(-log y)")
    return Example("ex-6.1.4", f"c = -2x log(x) int_0^x log(-log y)dy on (0, {xh:.6f}): eta* = int_0^x log(-log y)dy, "
                   "lambda* = 1", "Example 6.1.4", DomainSpec.interval(0.0, xh), cov, pair,
                   ((0.02,), (xh - 0.02,)), extra={"x_hat": xh})


def _ex615():
    cov = CovarianceField.from_expression(
        "4*(x^1.5*intcosrsqrt(x) + 4*x^2 - x^2.5)/(2 - sin(x^(-0.5)))")
    pair = Eigenpair.build(1.0, 1, _cos_log_eta, _cos_grad, [0.0], [1.0], "int cos(y^-1/2) + 4 sqrt(x) - x")
    return Example("ex-6.1.5", "oscillating c on (0,inf): eta* = int_0^x cos(y^(-1/2))dy + 4 sqrt(x) - x, "
                   "lambda* = 1", "Example 6.1.5", DomainSpec.orthant(1), cov, pair, ((0.5,), (50.0,)),
                   tolerance=1e-4, h=1e-3)


def _gbm():
    spec = GBMSpec(SEC_621_A)
    pair = gbm_eigenpair(spec)
    return Example("gbm-6.2.1", "correlated GBM on (0,inf)^3 with the numeric A: B = (-7/4, 5/4, 1/2), "
                   "lambda* = 19/12", "Example 6.2.1 (numeric case)", spec.domain(), spec.covariance(), pair,
                   ((0.5,) * 3, (2.0,) * 3), extra={"spec": spec})


def _simplex():
    spec = SimplexSpec(SEC_621_A)
    pair = simplex_eigenpair(spec)
    return Example("simplex-6.2.1", "relative capitalizations of the numeric GBM on the open 2-simplex: "
                   "eta* = y(1-x-y)/x, lambda* = 4/3", "Example 6.2.2 with the numeric A", spec.domain(),
                   spec.covariance(), pair, ((0.1, 0.1), (0.8, 0.8)), extra={"spec": spec, "margin": 0.1})


def _bessel():
    return Example("bessel-4.3", "Brownian motion on (0,inf): eta* = x, lambda* = 0, P* is Bessel-3",
                   "Example 4.3", DomainSpec.orthant(1), CovarianceField.from_expression("1", (0.0, 0.0)),
                   power_pair(1.0), ((0.1,), (10.0,)))


_BUILDERS = {
    "ex-6.1.1": _ex611,
    "ex-6.1.2": _ex612,
    "ex-6.1.3": _ex613,
    "ex-6.1.4": _ex614,
    "ex-6.1.5": _ex615,
    "gbm-6.2.1": _gbm,
    "simplex-6.2.1": _simplex,
    "bessel-4.3": _bessel,
}
EXAMPLE_NAMES = tuple(_BUILDERS)


@lru_cache(maxsize=None)
def get_example(name: str) -> Example:
    if name not in _BUILDERS:
        raise RegistryError(f"unknown example {name!r}; known: {', '.join(EXAMPLE_NAMES)}", MODULE)
    return _BUILDERS[name]()


def list_examples():
    """``[(name, description, anchor)]`` for every registry entry."""
    out = []
    for name in EXAMPLE_NAMES:
        ex = get_example(name)
        out.append((ex.name, ex.description, ex.anchor))
    return out
