"""One-dimensional generalized principal eigenpairs and classification tests.

The eigenvalue problem is ``c(x) eta'' / 2 = -lam eta`` on a bounded
interval.  Regular endpoints are handled directly; singular endpoints (``c``
vanishing there) are truncated at distance ``eps`` and the truncated
Dirichlet eigenvalues are extrapolated to ``eps -> 0``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from numba import njit, types
from scipy import integrate as sp_integrate
from scipy import optimize

from . import _ode
from .errors import (
    BracketError,
    ContradictionError,
    ConvergenceError,
    PreconditionError,
    QuadratureError,
    SingularityError,
)
from .model import CovarianceField
from .sigs import LOG_ETA_FN, LOG_ETA_SIG, MAT, VEC, VECTOR_FN, VECTOR_SIG

MODULE = "eigen1d"

#: exponent slack: an endpoint integrand ``d**k`` counts as integrable iff ``k > -1 + BORDER_TOL``
BORDER_TOL = 0.1
DEFAULT_EPSILONS = (1e-3, 1e-4, 1e-5, 1e-6)
ODE_TOL = 1e-10
CENTRAL_TOL = 1e-4


# ---------------------------------------------------------------- Eigenpair

@njit(types.void(LOG_ETA_FN, MAT, VEC, VEC), cache=True)
def _log_eta_many(fn, X, p, out):
    for k in range(X.shape[0]):
        out[k] = fn(X[k], p)


@njit(types.void(VECTOR_FN, MAT, VEC, MAT), cache=True)
def _grad_many(fn, X, p, out):
    for k in range(X.shape[0]):
        fn(X[k], p, out[k])


@dataclass(frozen=True, eq=False)
class Eigenpair:
    """``(lam, eta, grad log eta)`` with ``eta(x0) = 1``.

    ``log_eta_fn(x, params)`` and ``grad_fn(x, params, out)`` are numba
    functions of a point ``x`` (1-D array).  ``params[0]`` is an additive
    constant in ``log eta`` used for normalization, so the same functions
    serve simulation kernels and Python callers.
    """

    lam: float
    dim: int
    log_eta_fn: Callable
    grad_fn: Callable
    params: np.ndarray
    x0: np.ndarray
    name: str = "eta"
    info: dict = field(default_factory=dict)

    @classmethod
    def build(cls, lam, dim, log_eta_fn, grad_fn, params, x0, name="eta", info=None):
        """Construct and normalize so that ``eta(x0) = 1``."""
        params = np.array(params, dtype=float)
        x0 = np.atleast_1d(np.asarray(x0, dtype=float)).copy()
        params[0] = 0.0
        params[0] = -log_eta_fn(x0, params)
        return cls(float(lam), int(dim), log_eta_fn, grad_fn, params, x0, name, dict(info or {}))

    @property
    def lambda_(self):
        return self.lam

    def _points(self, x):
        arr = np.asarray(x, dtype=float)
        if self.dim == 1:
            return np.ascontiguousarray(arr.reshape(-1, 1)), arr.shape
        pts = np.ascontiguousarray(np.atleast_2d(arr))
        return pts, arr.shape[:-1]

    def log_eta(self, x):
        pts, shape = self._points(x)
        out = np.empty(pts.shape[0])
        _log_eta_many(self.log_eta_fn, pts, self.params, out)
        return float(out[0]) if shape == () else out.reshape(shape)

    def eta(self, x):
        return np.exp(self.log_eta(x))

    def __call__(self, x):
        return self.eta(x)

    def grad_log_eta(self, x):
        pts, shape = self._points(x)
        out = np.empty((pts.shape[0], self.dim))
        _grad_many(self.grad_fn, pts, self.params, out)
        if self.dim == 1:
            return float(out[0, 0]) if shape == () else out[:, 0].reshape(shape)
        return out[0] if shape == () else out.reshape(shape + (self.dim,))

    def renormalized(self, x0):
        """Same pair normalized at a different anchor."""
        return Eigenpair.build(self.lam, self.dim, self.log_eta_fn, self.grad_fn, self.params, x0,
                               self.name, self.info)

    def scaled(self, k):
        """The pair ``(lam, k * eta)``; gradients of ``log eta`` are unchanged."""
        if not k > 0:
            raise PreconditionError(f"scale must be positive, got {k}", MODULE)
        params = self.params.copy()
        params[0] += math.log(k)
        return replace(self, params=params)


# ---------------------------------------------------------------- tabulated log eta (quintic Hermite)

_HDR = 4  # shift, alpha, beta, n


@njit(cache=True)
def _tab_eval(x, p, deriv):
    alpha, beta = p[1], p[2]
    n = int(p[3])
    xs = p[_HDR:_HDR + n]
    ls = p[_HDR + n:_HDR + 2 * n]
    ds = p[_HDR + 2 * n:_HDR + 3 * n]
    dd = p[_HDR + 3 * n:_HDR + 4 * n]
    if x <= xs[0]:
        # local power law eta ~ (x - alpha)**r
        r = ds[0] * (xs[0] - alpha)
        if deriv == 0:
            return ls[0] + r * math.log((x - alpha) / (xs[0] - alpha))
        return r / (x - alpha)
    if x >= xs[n - 1]:
        r = -ds[n - 1] * (beta - xs[n - 1])
        if deriv == 0:
            return ls[n - 1] + r * math.log((beta - x) / (beta - xs[n - 1]))
        return -r / (beta - x)
    i = np.searchsorted(xs, x) - 1
    if i < 0:
        i = 0
    h = xs[i + 1] - xs[i]
    t = (x - xs[i]) / h
    t2 = t * t
    t3 = t2 * t
    t4 = t3 * t
    t5 = t4 * t
    if deriv == 0:
        h0 = 1.0 - 10.0 * t3 + 15.0 * t4 - 6.0 * t5
        h1 = t - 6.0 * t3 + 8.0 * t4 - 3.0 * t5
        h2 = 0.5 * (t2 - 3.0 * t3 + 3.0 * t4 - t5)
        h3 = 0.5 * (t3 - 2.0 * t4 + t5)
        h4 = -4.0 * t3 + 7.0 * t4 - 3.0 * t5
        h5 = 10.0 * t3 - 15.0 * t4 + 6.0 * t5
        return (ls[i] * h0 + h * ds[i] * h1 + h * h * dd[i] * h2
                + h * h * dd[i + 1] * h3 + h * ds[i + 1] * h4 + ls[i + 1] * h5)
    g0 = -30.0 * t2 + 60.0 * t3 - 30.0 * t4
    g1 = 1.0 - 18.0 * t2 + 32.0 * t3 - 15.0 * t4
    g2 = 0.5 * (2.0 * t - 9.0 * t2 + 12.0 * t3 - 5.0 * t4)
    g3 = 0.5 * (3.0 * t2 - 8.0 * t3 + 5.0 * t4)
    g4 = -12.0 * t2 + 28.0 * t3 - 15.0 * t4
    g5 = 30.0 * t2 - 60.0 * t3 + 30.0 * t4
    return ((ls[i] * g0 + ls[i + 1] * g5) / h + ds[i] * g1 + ds[i + 1] * g4
            + h * (dd[i] * g2 + dd[i + 1] * g3))


@njit(LOG_ETA_SIG, cache=True)
def tab_log_eta(x, p):
    return p[0] + _tab_eval(x[0], p, 0)


@njit(VECTOR_SIG, cache=True)
def tab_grad_log_eta(x, p, out):
    out[0] = _tab_eval(x[0], p, 1)


def tabulated_pair(lam, interval, xs, log_eta, dlog_eta, d2log_eta, x0, name="eta", info=None):
    """Eigenpair interpolating ``log eta`` and its first two derivatives at nodes ``xs``."""
    xs = np.asarray(xs, dtype=float)
    n = xs.size
    params = np.concatenate([[0.0, interval[0], interval[1], n], xs, log_eta, dlog_eta, d2log_eta])
    if not np.all(np.isfinite(params)):
        raise ConvergenceError("non-finite values in the eigenfunction tabulation", MODULE)
    return Eigenpair.build(lam, 1, tab_log_eta, tab_grad_log_eta, params, [x0], name, info)


def chebyshev_nodes(a, b, n):
    """First-kind Chebyshev nodes on ``(a, b)``, increasing."""
    k = np.arange(n)
    return 0.5 * (a + b) - 0.5 * (b - a) * np.cos((2 * k + 1) * np.pi / (2 * n))


# ---------------------------------------------------------------- shooting

def _scalar(c: CovarianceField):
    if c.dim != 1 or c.scalar_fn is None:
        raise PreconditionError("a one-dimensional covariance field with a scalar evaluator is required", MODULE)
    return c.scalar_fn


def _interval(interval):
    a, b = (float(v) for v in interval)
    if not (math.isfinite(a) and math.isfinite(b) and a < b):
        raise PreconditionError(f"interval must satisfy -inf < alpha < beta < inf, got ({a}, {b})", MODULE)
    return a, b


def _positive(fn, x):
    try:
        v = fn(x)
    except (ValueError, ZeroDivisionError, ArithmeticError):
        return False
    return math.isfinite(v) and v > 0.0


def _count(fn, lam, a, b, ode_tol):
    y, _, zeros, status = _ode.integrate(fn, lam, a, b, 0.0, 1.0, ode_tol)
    if status != _ode.OK:
        raise SingularityError(
            f"ODE step {'underflow' if status == _ode.UNDERFLOW else 'limit'} on [{a:.3g}, {b:.3g}] at lambda={lam:.6g}; "
            "increase epsilon", MODULE)
    return y, zeros


def _shoot(fn, a, b, tol, lam_max, ode_tol):
    lo = tol
    y_lo, n_lo = _count(fn, lo, a, b, ode_tol)
    if n_lo >= 1:
        raise BracketError(f"eta already changes sign at lambda={lo:g}; no bracket in [tol, lambda_max]", MODULE)
    hi = min(1.0 / (b - a) ** 2, lam_max)
    while True:
        y_hi, n_hi = _count(fn, hi, a, b, ode_tol)
        if n_hi >= 1:
            break
        lo = hi
        if hi >= lam_max:
            raise BracketError(f"no sign change of eta(beta - eps) for lambda in [{tol:g}, {lam_max:g}]", MODULE)
        hi = min(4.0 * hi, lam_max)
    # shrink until exactly one zero: then y(b) changes sign across [lo, hi]
    while n_hi > 1:
        mid = 0.5 * (lo + hi)
        y_mid, n_mid = _count(fn, mid, a, b, ode_tol)
        if n_mid == 0:
            lo = mid
        else:
            hi, n_hi = mid, n_mid
    if hi - lo <= tol:
        return 0.5 * (lo + hi)

    def f(lam):
        return _count(fn, lam, a, b, ode_tol)[0]

    return optimize.brentq(f, lo, hi, xtol=tol, rtol=4 * np.finfo(float).eps)


def shoot_eigenvalue(c: CovarianceField, interval, epsilon=0.0, tol=1e-10, lam_max=None, ode_tol=ODE_TOL):
    """Principal Dirichlet eigenvalue on ``[alpha + epsilon, beta - epsilon]``.

    Zero counting brackets the first eigenvalue; Brent's method refines it to
    ``|dlam| <= tol``.  ``epsilon = 0`` is allowed when ``c`` is regular at both ends.
    """
    fn = _scalar(c)
    alpha, beta = _interval(interval)
    eps = epsilon if np.ndim(epsilon) else (epsilon, epsilon)
    eps_l, eps_r = (float(e) for e in eps)
    if not (0 <= eps_l < (beta - alpha) / 4 and 0 <= eps_r < (beta - alpha) / 4):
        raise PreconditionError(f"epsilon must lie in [0, (beta-alpha)/4), got {epsilon}", MODULE)
    a, b = alpha + eps_l, beta - eps_r
    for end in (a, b):
        if not _positive(fn, end):
            raise PreconditionError(
                f"c is not strictly positive at x={end:.6g}; a positive epsilon is needed at a singular endpoint", MODULE)
    if lam_max is None:
        lam_max = 1e3 / (beta - alpha) ** 2
    return _shoot(fn, a, b, float(tol), float(lam_max), ode_tol)


# ---------------------------------------------------------------- extrapolation in eps

def _basis(model, s, param):
    s = np.asarray(s, dtype=float)
    if model == "power":
        return s ** param
    return 1.0 / (s + param) ** 2


def _fit_parameter(model, s, lams):
    """Exponent (power model) or shift (log model) matching three eigenvalues."""
    d1, d2 = lams[0] - lams[1], lams[1] - lams[2]
    if not (d1 > 0 and d2 > 0):
        return None
    r = d1 / d2

    def g(param):
        u = _basis(model, s, param)
        return (u[0] - u[1]) / (u[1] - u[2]) - r

    if model == "power":
        lo, hi = 0.05, 8.0
    else:
        lo, hi = -float(np.min(s)) + 1e-9, 1e6
    try:
        if np.sign(g(lo)) == np.sign(g(hi)):
            return None
        return optimize.brentq(g, lo, hi, xtol=1e-12)
    except (ValueError, FloatingPointError, ZeroDivisionError):
        return None


def extrapolate_eigenvalue(abscissae, lams, model):
    """Fit ``lam = lam* + A u`` through the last three points.

    Power model: the abscissae are the truncation widths ``eps`` and
    ``u = eps**q``.  Log model: the abscissae are Liouville lengths
    ``T = int dx / sqrt(c)`` of the truncated intervals and ``u = 1/(T + D)**2``.
    Returns ``(lam*, parameter)``; the parameter is ``None`` when the sequence
    is flat or inconsistent with the model, and then the last value is returned.
    """
    s = np.asarray(abscissae, dtype=float)[-3:]
    lam = np.asarray(lams, dtype=float)[-3:]
    param = _fit_parameter(model, s, lam)
    if param is None:
        return float(lam[-1]), None
    u = _basis(model, s, param)
    slope = (lam[1] - lam[2]) / (u[1] - u[2])
    return float(max(lam[2] - slope * u[2], 0.0)), float(param)


def liouville_length(c: CovarianceField, a, b, quad_tol=1e-12):
    """``int_a^b dx / sqrt(c(x))``."""
    fn = _scalar(c) if isinstance(c, CovarianceField) else c
    f = lambda x: 1.0 / math.sqrt(fn(x))  # noqa: E731
    # geometric breakpoints resolve the 1/dist growth near degenerate ends
    mid = 0.5 * (a + b)
    total = 0.0
    for lo, hi, sign in ((a, mid, 1), (mid, b, -1)):
        end = lo if sign > 0 else hi
        width = hi - lo
        cuts = [end + sign * width * 10.0 ** -k for k in range(12, -1, -1) if width * 10.0 ** -k > abs(hi - lo) * 1e-14]
        cuts = sorted(set([lo, hi] + [x for x in cuts if lo <= x <= hi]))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", sp_integrate.IntegrationWarning)
            for x1, x2 in zip(cuts, cuts[1:]):
                total += sp_integrate.quad(f, x1, x2, epsabs=0.0, epsrel=quad_tol, limit=200)[0]
    return total


# ---------------------------------------------------------------- eigenpair solver

def _singular_ends(fn, alpha, beta, orders):
    flags = []
    for end, p in zip((alpha, beta), orders):
        flags.append(not _positive(fn, end) or p > 0.25)
    return tuple(flags)


def _sweep(fn, lam, start, slope0, y0, grid, ode_tol):
    """Integrate from ``start`` through ``grid`` (ordered away from ``start``)."""
    oy, od = np.empty(grid.size), np.empty(grid.size)
    if grid.size:
        st = _ode.integrate(fn, lam, start, grid[-1], y0, slope0, ode_tol, np.ascontiguousarray(grid), oy, od)[3]
        if st != _ode.OK:
            raise SingularityError(f"ODE step underflow while tabulating at lambda={lam:.6g}", MODULE)
    return oy, od


def _two_sided(fn, lam, a, b, x0, pts, ode_tol):
    """Dirichlet solution on ``[a, b]`` at ``lam``, integrated inward from both
    ends and normalized to 1 at ``x0`` on each side.  NaN outside ``(a, b)``."""
    y = np.full(pts.size, np.nan)
    dy = np.full(pts.size, np.nan)
    i0 = int(np.searchsorted(pts, x0))
    li = np.nonzero(pts > a)[0]
    li = li[li <= i0]
    ri = np.nonzero(pts < b)[0]
    ri = ri[ri >= i0][::-1]
    yl, dl = _sweep(fn, lam, a, 1.0, 0.0, pts[li], ode_tol)
    yr, dr = _sweep(fn, lam, b, -1.0, 0.0, pts[ri], ode_tol)
    y[li], dy[li] = yl / yl[-1], dl / yl[-1]
    y[ri], dy[ri] = yr / yr[-1], dr / yr[-1]
    y[i0], dy[i0] = 1.0, 0.5 * (dl[-1] / yl[-1] + dr[-1] / yr[-1])
    return y, dy


def _central(fn, lam, x0, y0, slope, pts, ode_tol):
    """Solution through ``(x0, y0, slope)`` at ``lam``, tabulated on all of ``pts``."""
    y = np.empty(pts.size)
    dy = np.empty(pts.size)
    i0 = int(np.searchsorted(pts, x0))
    left = np.arange(i0 - 1, -1, -1)
    right = np.arange(i0 + 1, pts.size)
    for idx in (left, right):
        y[idx], dy[idx] = _sweep(fn, lam, x0, slope, y0, pts[idx], ode_tol)
    y[i0], dy[i0] = y0, slope
    return y, dy


def _blend(fn, pts, x0, sols, run_eps, absc, lams, lam_hat, model, param, sing, interval, ode_tol):
    """Combine two eigenfunction estimates point by point.

    Near the truncated ends the normalized truncated eigenfunctions are
    extrapolated in ``eps`` with the eigenvalue's basis.  Outward from ``x0``
    the ODE solution at the extrapolated eigenvalue is used for as long as its
    error estimate (sensitivity to the starting slope and to the eigenvalue,
    times their uncertainties) stays below ``CENTRAL_TOL`` or below the
    extrapolation's own error estimate.
    """
    alpha, beta = interval
    u = _basis(model, np.asarray(absc), param)
    dist = np.minimum(np.where(sing[0], pts - alpha, np.inf), np.where(sing[1], beta - pts, np.inf))
    n = pts.size
    y, dy = sols[-1][0].copy(), sols[-1][1].copy()
    err_ext = np.full(n, np.inf)

    def pair_ext(j1, j2, k):
        w = u[j2] / (u[j1] - u[j2])
        ye = sols[j2][0][k] - w * (sols[j1][0][k] - sols[j2][0][k])
        de = sols[j2][1][k] - w * (sols[j1][1][k] - sols[j2][1][k])
        return ye, de

    for k in range(n):
        ok = [j for j, e in enumerate(run_eps) if dist[k] >= 10 * e]
        if len(ok) < 2:
            continue
        ye, de = pair_ext(ok[-2], ok[-1], k)
        if not (ye > 0 and np.isfinite(de)):
            continue
        alt = pair_ext(ok[-3], ok[-2], k)[0] if len(ok) >= 3 else sols[ok[-1]][0][k]
        y[k], dy[k] = ye, de
        err_ext[k] = abs(ye - alt) / ye

    i0 = int(np.searchsorted(pts, x0))
    s_hat = dy[i0]
    s_alt = pair_ext(0, 1, i0)[1]
    sig_s = max(abs(s_hat - s_alt), 1e-12)
    if len(run_eps) >= 4:
        sig_l = abs(extrapolate_eigenvalue(absc[-4:-1], lams[-4:-1], model)[0] - lam_hat)
    else:
        # no independent refit possible; assume three digits gained over the last truncation
        sig_l = 1e-3 * abs(lams[-1] - lam_hat)
    d_lam = 1e-6 * max(lam_hat, 1e-12)
    yc, dc = _central(fn, lam_hat, x0, 1.0, s_hat, pts, ode_tol)
    psi, _ = _central(fn, lam_hat, x0, 0.0, 1.0, pts, ode_tol)
    yl, _ = _central(fn, lam_hat + d_lam, x0, 1.0, s_hat, pts, ode_tol)
    with np.errstate(divide="ignore", invalid="ignore"):
        err_c = np.where(yc > 0, (np.abs(psi) * sig_s + np.abs(yl - yc) / d_lam * sig_l) / yc, np.inf)
    out_y, out_dy = y.copy(), dy.copy()
    for step in (-1, 1):
        k = i0
        while 0 <= k < n and err_c[k] <= max(err_ext[k], CENTRAL_TOL):
            out_y[k], out_dy[k] = yc[k], dc[k]
            k += step
        if 0 <= k < n:
            last = k - step
            scale = yc[last] / y[last] if last != i0 or y[last] > 0 else 1.0
            idx = np.arange(k, n) if step > 0 else np.arange(0, k + 1)
            out_y[idx] = y[idx] * scale
            out_dy[idx] = dy[idx] * scale
    return out_y, out_dy


@dataclass(frozen=True)
class SolveReport:
    lam: float
    epsilons: tuple
    per_epsilon_lambdas: tuple
    model: str
    model_parameter: float | None
    singular: tuple
    endpoint_orders: tuple


def solve_principal_eigenpair(c: CovarianceField, interval, epsilons=None, tol=1e-10, x0=None,
                              grid_size=2048, ode_tol=ODE_TOL) -> Eigenpair:
    """Principal eigenpair with tabulated ``log eta``.

    Endpoints where ``c`` vanishes (or whose estimated order exceeds 1/4) are
    truncated at each ``eps``; the truncated eigenvalues are extrapolated with
    a power law in ``eps`` or, for quadratic degeneracy, with the
    ``1/log(1/eps)**2`` law.  The eigenfunction is the pointwise extrapolation
    of the normalized truncated eigenfunctions near the ends and the solution
    of the ODE at the extrapolated eigenvalue on the central 90%.
    """
    fn = _scalar(c)
    alpha, beta = _interval(interval)
    length = beta - alpha
    eps_list = tuple(float(e) for e in (DEFAULT_EPSILONS if epsilons is None else epsilons))
    if epsilons is not None:
        if len(eps_list) < 3 or any(e2 >= e1 for e1, e2 in zip(eps_list, eps_list[1:])) or eps_list[-1] <= 0:
            raise PreconditionError("epsilons must be >= 3 positive, strictly decreasing values", MODULE)
        if eps_list[0] >= length / 4:
            raise PreconditionError("epsilons must be below (beta - alpha)/4", MODULE)
    if grid_size < 2048:
        raise PreconditionError(f"grid_size must be >= 2048, got {grid_size}", MODULE)
    x0 = 0.5 * (alpha + beta) if x0 is None else float(x0)
    if not alpha < x0 < beta:
        raise PreconditionError(f"x0={x0} is not interior to ({alpha}, {beta})", MODULE)

    from .model import estimate_endpoint_orders

    orders = estimate_endpoint_orders(c, (alpha, beta))
    sing = _singular_ends(fn, alpha, beta, orders)
    lam_max = 1e3 / length ** 2

    def ends(e):
        return alpha + (e if sing[0] else 0.0), beta - (e if sing[1] else 0.0)

    if not any(sing):
        run_eps = (0.0,)
    else:
        run_eps = eps_list
    lams = []
    for e in run_eps:
        a, b = ends(e)
        if not (_positive(fn, a) and _positive(fn, b)):
            raise SingularityError(f"c is not positive at the truncated endpoints for eps={e:g}", MODULE)
        lams.append(_shoot(fn, a, b, tol, lam_max, ode_tol))
    slack = 10 * tol + 1e-9 * max(lams)
    for e1, l1, l2 in zip(run_eps, lams, lams[1:]):
        if l2 > l1 + slack:
            raise ConvergenceError(
                f"truncated eigenvalues increase as eps decreases (eps={e1:g}: {l1:.10g} -> {l2:.10g})", MODULE)

    log_model = any(s and abs(p - 2.0) < 0.25 for s, p in zip(sing, orders))
    model = "none" if len(lams) == 1 else ("log" if log_model else "power")
    if model == "log":
        absc = tuple(liouville_length(fn, *ends(e)) for e in run_eps)
    else:
        absc = run_eps
    if model == "none":
        lam_hat, param = lams[0], None
    else:
        lam_hat, param = extrapolate_eigenvalue(absc, lams, model)

    a_min, b_min = ends(run_eps[-1])
    nodes = chebyshev_nodes(a_min, b_min, grid_size)
    pts = np.unique(np.append(nodes, x0))

    sols = [_two_sided(fn, lam, *ends(e), x0, pts, ode_tol) for e, lam in zip(run_eps, lams)]
    y, dy = sols[-1]
    y, dy = y.copy(), dy.copy()
    if model != "none" and param is not None:
        y, dy = _blend(fn, pts, x0, sols, run_eps, absc, lams, lam_hat, model, param, sing, (alpha, beta), ode_tol)
    ok = np.isfinite(y) & (y > 0) & np.isfinite(dy)
    if not np.all(ok[(pts > alpha + 0.01 * length) & (pts < beta - 0.01 * length)]):
        raise ConvergenceError("tabulated eigenfunction is not positive on the interior", MODULE)
    xs, y, dy = pts[ok], y[ok], dy[ok]
    cvals = np.array([fn(v) for v in xs])
    ld = dy / y
    ldd = -2.0 * lam_hat / cvals - ld ** 2
    report = SolveReport(lam_hat, tuple(run_eps), tuple(lams), model, param, sing, tuple(orders))
    return tabulated_pair(lam_hat, (alpha, beta), xs, np.log(y), ld, ldd, x0, name=f"eta[{c.name}]",
                          info={"report": report, "interval": (alpha, beta)})


# ---------------------------------------------------------------- classification

POSITIVE, ZERO, INCONCLUSIVE = "positive", "zero", "inconclusive"
RECURRENCE_CLASSES = ("transient_to_alpha", "transient_to_beta", "null_recurrent", "positive_recurrent", "unknown")


def _finite_exponent(k):
    """Integrability of ``d**k`` at ``d = 0``, with a slack band around ``-1`` counted as divergent."""
    return k > -1.0 + BORDER_TOL


def _interior_quad(f, lo, hi, quad_tol):
    val, err = sp_integrate.quad(f, lo, hi, epsabs=0.0, epsrel=quad_tol, limit=400)
    if not (math.isfinite(val) and err <= max(1e3 * quad_tol * abs(val), 1e-12)):
        raise QuadratureError(f"interior quadrature on [{lo:.4g}, {hi:.4g}] did not converge (error {err:.2e})",
                              MODULE)
    return val


def pointwise_test(c: CovarianceField, interval, grid_size=512):
    """Sign of ``lam*`` from ``s(x) = (x-alpha)**2 (beta-x)**2 / c(x)``.

    Returns ``(verdict, witness)``; for a positive verdict the witness is the
    lower bound ``(beta-alpha)**2 / (8 sup s)``, otherwise ``None``.
    """
    if grid_size < 256:
        raise PreconditionError(f"grid_size must be >= 256, got {grid_size}", MODULE)
    from .model import estimate_endpoint_orders

    alpha, beta = _interval(interval)
    p_a, p_b = estimate_endpoint_orders(c, (alpha, beta))
    length = beta - alpha
    half = grid_size // 2
    d = np.geomspace(1e-12, 0.5, half) * length
    xs = np.unique(np.concatenate([alpha + d, beta - d]))
    xs = xs[(xs > alpha) & (xs < beta)]
    s = (xs - alpha) ** 2 * (beta - xs) ** 2 / np.asarray(c(xs), dtype=float)
    exps = (2.0 - p_a, 2.0 - p_b)
    if min(exps) < -BORDER_TOL:
        return ZERO, None
    if all(e >= -BORDER_TOL for e in exps) and np.all(np.isfinite(s)):
        return POSITIVE, float(length ** 2 / (8.0 * s.max()))
    return INCONCLUSIVE, None


def _integral_parts(c, interval, quad_tol):
    from .model import estimate_endpoint_orders

    alpha, beta = _interval(interval)
    p_a, p_b = estimate_endpoint_orders(c, (alpha, beta))
    fn = c.scalar_fn
    length = beta - alpha
    lo, hi = alpha + 0.01 * length, beta - 0.01 * length
    interior = _interior_quad(lambda x: (x - alpha) * (beta - x) / fn(x), lo, hi, quad_tol)
    return (p_a, p_b), interior


def integral_test(c: CovarianceField, interval, quad_tol=1e-8):
    """Sign of ``lam*`` from the finiteness of ``int (x-alpha)(beta-x)/c dx``
    and of ``int (x-alpha)**2 / c`` near each endpoint."""
    (p_a, p_b), _ = _integral_parts(_require_scalar(c), interval, quad_tol)
    if _finite_exponent(1.0 - p_a) and _finite_exponent(1.0 - p_b):
        return POSITIVE
    if not _finite_exponent(2.0 - p_a) or not _finite_exponent(2.0 - p_b):
        return ZERO
    return INCONCLUSIVE


def _require_scalar(c):
    _scalar(c)
    return c


def explosion_test(c: CovarianceField, interval, x0=None, quad_tol=1e-8):
    """Whether the driftless diffusion can reach ``alpha`` / ``beta``:
    finiteness of ``int (x-alpha)/c`` near ``alpha`` and ``int (beta-x)/c`` near ``beta``."""
    from .model import estimate_endpoint_orders

    fn = _scalar(c)
    alpha, beta = _interval(interval)
    x0 = 0.5 * (alpha + beta) if x0 is None else float(x0)
    if not alpha < x0 < beta:
        raise PreconditionError(f"x0={x0} is not interior to ({alpha}, {beta})", MODULE)
    p_a, p_b = estimate_endpoint_orders(c, (alpha, beta))
    length = beta - alpha
    _interior_quad(lambda x: (x - alpha) / fn(x), min(alpha + 0.01 * length, x0), x0, quad_tol)
    _interior_quad(lambda x: (beta - x) / fn(x), x0, max(beta - 0.01 * length, x0), quad_tol)
    return _finite_exponent(1.0 - p_a), _finite_exponent(1.0 - p_b)


def eta_endpoint_exponents(pair: Eigenpair, interval, window=(1e-4, 1e-2), n_points=16):
    """Exponents ``r`` with ``eta ~ dist**r`` near each endpoint, by log-log regression."""
    alpha, beta = _interval(interval)
    d = np.geomspace(window[0], window[1], n_points) * (beta - alpha)
    out = []
    for pts in (alpha + d, beta - d):
        ll = pair.log_eta(pts)
        if not np.all(np.isfinite(ll)):
            return None
        out.append(float(np.polyfit(np.log(d), ll, 1)[0]))
    return tuple(out)


@dataclass(frozen=True)
class RecurrenceEvidence:
    eta_exponents: tuple | None
    inv_sq_finite: tuple | None
    density_finite: tuple | None
    interior_inv_sq: float | None
    interior_density: float | None


def _recurrence(pair, c, interval):
    from .model import estimate_endpoint_orders

    alpha, beta = _interval(interval)
    r = eta_endpoint_exponents(pair, (alpha, beta))
    if r is None:
        return "unknown", RecurrenceEvidence(None, None, None, None, None)
    p = estimate_endpoint_orders(c, (alpha, beta))
    inv_sq = tuple(_finite_exponent(-2.0 * ri) for ri in r)
    dens = tuple(_finite_exponent(2.0 * ri - pi) for ri, pi in zip(r, p))
    xs = np.linspace(alpha, beta, 2001)[1:-1]
    xs = xs[(xs > alpha + 0.01 * (beta - alpha)) & (xs < beta - 0.01 * (beta - alpha))]
    eta = pair.eta(xs)
    interior_inv = float(np.trapezoid(eta ** -2, xs))
    interior_den = float(np.trapezoid(eta ** 2 / np.asarray(c(xs)), xs))
    ev = RecurrenceEvidence(r, inv_sq, dens, interior_inv, interior_den)
    if inv_sq[0] and not inv_sq[1]:
        return "transient_to_alpha", ev
    if inv_sq[1] and not inv_sq[0]:
        return "transient_to_beta", ev
    if inv_sq[0] and inv_sq[1]:
        # both ends attracting: X converges to one of them
        return "transient_to_alpha" if r[0] <= r[1] else "transient_to_beta", ev
    if dens[0] and dens[1]:
        return "positive_recurrent", ev
    return "null_recurrent", ev


def recurrence_class(pair: Eigenpair, c: CovarianceField, interval) -> str:
    """Behaviour of the coordinate process under the eigenfunction transform:
    transient toward an endpoint where ``1/eta**2`` is integrable, otherwise
    recurrent, and positive recurrent when ``eta**2/c`` is integrable."""
    return _recurrence(pair, _require_scalar(c), interval)[0]


def invariant_density(pair: Eigenpair, c: CovarianceField, interval, grid=None):
    """Normalized density proportional to ``eta**2 / c`` on a grid.

    Uses the pair's tabulation grid when available.  Returns ``(grid, density)``.
    """
    alpha, beta = _interval(interval)
    cls, ev = _recurrence(pair, _require_scalar(c), (alpha, beta))
    if ev.density_finite is None or not all(ev.density_finite) or cls != "positive_recurrent":
        raise ContradictionError(
            f"eta**2/c is not integrable (class {cls}, endpoint integrability {ev.density_finite})", MODULE)
    if grid is None:
        if pair.log_eta_fn is tab_log_eta:
            n = int(pair.params[3])
            grid = pair.params[_HDR:_HDR + n].copy()
        else:
            grid = chebyshev_nodes(alpha, beta, 2048)
    grid = np.asarray(grid, dtype=float)
    dens = pair.eta(grid) ** 2 / np.asarray(c(grid), dtype=float)
    total = np.trapezoid(dens, grid)
    if not (math.isfinite(total) and total > 0):
        raise ContradictionError("density normalization is not finite", MODULE)
    return grid, dens / total


@dataclass(frozen=True)
class ClassificationReport:
    lambda_sign: str
    evidence: list
    explosion: tuple
    recurrence_class: str
    eigenvalue: float | None = None

    def as_dict(self):
        return {
            "lambda_sign": self.lambda_sign,
            "evidence": [list(e) for e in self.evidence],
            "explosion": list(self.explosion),
            "recurrence_class": self.recurrence_class,
            "eigenvalue": self.eigenvalue,
        }


def classify(c: CovarianceField, interval, x0=None, grid_size=512, quad_tol=1e-8, pair=None, solve=True):
    """Run the pointwise, integral and explosion tests and, when the
    eigenvalue is not zero, classify the recurrence of the transformed process."""
    _require_scalar(c)
    pw, witness = pointwise_test(c, interval, grid_size)
    (p_a, p_b), interior = _integral_parts(c, interval, quad_tol)
    it = integral_test(c, interval, quad_tol)
    evidence = [
        ("pointwise", witness, pw),
        ("integral", interior, it),
        ("endpoint_orders", [p_a, p_b], "estimated" if c.endpoint_orders is None else "declared"),
    ]
    verdicts = {pw, it} - {INCONCLUSIVE}
    if verdicts == {POSITIVE, ZERO}:
        raise ContradictionError(f"pointwise test says {pw} but integral test says {it}", MODULE)
    sign = verdicts.pop() if verdicts else INCONCLUSIVE
    explosion = explosion_test(c, interval, x0, quad_tol)
    rec, lam = "unknown", None
    if sign != ZERO and (pair is not None or solve):
        if pair is None:
            pair = solve_principal_eigenpair(c, interval, x0=x0)
        lam = pair.lam
        rec, ev = _recurrence(pair, c, interval)
        evidence.append(("eta_exponents", list(ev.eta_exponents) if ev.eta_exponents else None, rec))
        if witness is not None and lam < witness - 1e-9:
            raise ContradictionError(f"solved eigenvalue {lam:.6g} is below the pointwise lower bound {witness:.6g}",
                                     MODULE)
    return ClassificationReport(sign, evidence, explosion, rec, lam)
