"""Euler-Maruyama path simulation with boundary refinement and exit bookkeeping.

Three measures are supported: the driftless reference measure ``Q``, the
tilted measure ``Pstar(pair)`` whose drift is ``c grad log eta``, and
``Drift(b)`` for an arbitrary drift field.  Paths run in parallel; every
normal draw is addressed by (seed, path id, step, refinement node), so an
ensemble is bit-identical for any number of worker threads.

Near the boundary a step is re-done as two Brownian-bridge-consistent halves,
recursively up to ``max_depth`` times.  A path whose finest sub-step still
leaves the domain is absorbed at the end of that sub-step.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import os
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field

import numba
import numpy as np
from numba import njit, prange, types

from .eigen1d import Eigenpair
from .errors import HypothesisError, PreconditionError, RangeError
from .model import (
    INTERVAL,
    ORTHANT,
    DomainSpec,
    DriftField,
    beyond_outer,
    cholesky_inplace,
    in_domain,
    in_margin,
    level_margins,
)
from .rng import normal2
from .sigs import MAT, MAT3, MATRIX_FN, SCALAR_FN, VEC, VECTOR_FN

MODULE = "sde"
MODE_Q, MODE_PSTAR, MODE_DRIFT = 0, 1, 2
ALIVE, ABSORBED, OUTER_HIT, SIGMA_FAILURE = 0, 1, 2, 3
STATUS_NAMES = {ALIVE: "alive", ABSORBED: "absorbed", OUTER_HIT: "outer_hit", SIGMA_FAILURE: "sigma_failure"}
GATE = 4.0
DEFAULT_DEPTH = 8
STAR_DEPTH = 12
RECORD_BUDGET = 4_000_000
_MASK32 = 0xFFFFFFFF


# ---------------------------------------------------------------- measures

@dataclass(frozen=True)
class Q:
    """Driftless reference measure."""

    name = "Q"


@dataclass(frozen=True)
class Pstar:
    """Measure tilted by an eigenpair: drift ``c grad log eta``."""

    pair: Eigenpair
    name = "Pstar"


@dataclass(frozen=True)
class Drift:
    """Diffusion with a user-supplied drift field."""

    b: DriftField
    name = "Drift"


# ---------------------------------------------------------------- configuration

@dataclass(frozen=True)
class SimConfig:
    """Simulation settings.

    ``absorb_level=None`` picks the coarsest exhaustion level containing the
    starting point.  ``record_every=None`` stores every step when that fits in
    ``RECORD_BUDGET`` values and thins the stored grid otherwise; ``0`` keeps
    only the initial and terminal states.  ``max_depth=None`` refines
    ``DEFAULT_DEPTH`` times, or ``STAR_DEPTH`` times under the tilted
    measure, whose paths must never be absorbed.
    """

    T: float
    dt: float
    n_paths: int
    seed: int = 0
    absorb_level: int | None = None
    record_every: int | None = None
    max_depth: int | None = None
    path_offset: int = 0

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise PreconditionError(f"dt must be positive, got {self.dt}", MODULE)
        if not self.T >= self.dt:
            raise PreconditionError(f"T must be >= dt, got T={self.T}, dt={self.dt}", MODULE)
        if self.n_paths < 1:
            raise PreconditionError(f"n_paths must be >= 1, got {self.n_paths}", MODULE)
        if not 0 <= int(self.seed) < 2 ** 64:
            raise PreconditionError("seed must fit in 64 unsigned bits", MODULE)
        if self.record_every is not None and self.record_every < 0:
            raise PreconditionError("record_every must be >= 0", MODULE)
        if self.max_depth is not None and not 0 <= self.max_depth <= 30:
            raise PreconditionError("max_depth must lie in [0, 30]", MODULE)
        if self.path_offset < 0:
            raise PreconditionError("path_offset must be >= 0", MODULE)

    @property
    def n_steps(self):
        return max(1, int(math.ceil(self.T / self.dt - 1e-9)))

    @property
    def step(self):
        """Step actually used, ``T / n_steps`` (equal to ``dt`` when it divides ``T``)."""
        return self.T / self.n_steps

    def depth(self, mode):
        if self.max_depth is not None:
            return int(self.max_depth)
        return STAR_DEPTH if mode == MODE_PSTAR else DEFAULT_DEPTH

    def replace(self, **kw):
        d = asdict(self)
        d.update(kw)
        return SimConfig(**d)


@dataclass
class PathEnsemble:
    """Simulated paths.

    ``states[i, j]`` is path ``i`` at ``times[j]``; absorbed paths hold NaN
    from the first recorded time after absorption.  ``exit_time`` is ``inf``
    for paths alive at the horizon, and ``level_exit[i, n]`` is the first exit
    time of ``E_n`` (``inf`` if never left).
    """

    times: np.ndarray
    states: np.ndarray
    terminal: np.ndarray
    exit_time: np.ndarray
    level_exit: np.ndarray
    status: np.ndarray
    substeps: np.ndarray
    config: SimConfig
    measure: str
    domain: DomainSpec
    x0: np.ndarray
    absorb_level: int
    record_steps: np.ndarray = field(repr=False, default=None)

    @property
    def n_paths(self):
        return self.states.shape[0]

    @property
    def dim(self):
        return self.states.shape[2]

    @property
    def horizon(self):
        return float(self.times[-1])

    @property
    def absorbed(self):
        return self.status != ALIVE

    @property
    def boundary_absorbed(self):
        return self.status == ABSORBED

    @property
    def outer_hits(self):
        return self.status == OUTER_HIT

    @property
    def sigma_failures(self):
        return self.status == SIGMA_FAILURE

    def counts(self):
        return {name: int(np.count_nonzero(self.status == code)) for code, name in STATUS_NAMES.items()}

    def digest(self):
        """SHA-256 over every stored array; equal digests mean identical ensembles."""
        h = hashlib.sha256()
        for arr in (self.times, self.states, self.terminal, self.exit_time, self.level_exit,
                    self.status, self.substeps):
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()

    def summary(self):
        return {
            "measure": self.measure,
            "domain": self.domain.describe(),
            "x0": self.x0.tolist(),
            "config": asdict(self.config),
            "step": self.config.step,
            "refine_depth": self.config.depth(MODE_PSTAR if self.measure == "Pstar" else MODE_Q),
            "absorb_level": self.absorb_level,
            "recorded_times": int(self.times.size),
            "status_counts": self.counts(),
            "mean_substeps": float(self.substeps.mean()),
            "digest": self.digest(),
        }

    def write_csv(self, path):
        """Columnar dump: ``path_id, t, x_1..x_d, absorbed``."""
        d = self.dim
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["path_id", "t"] + [f"x_{k + 1}" for k in range(d)] + ["absorbed"])
            for i in range(self.n_paths):
                pid = self.config.path_offset + i
                for j, t in enumerate(self.times):
                    row = self.states[i, j]
                    dead = bool(np.isnan(row[0]))
                    w.writerow([pid, repr(float(t))] + ["" if dead else repr(float(v)) for v in row] + [int(dead)])

    def write_summary(self, path, extra=None):
        data = self.summary()
        if extra:
            data.update(extra)
        with open(path, "w") as fh:
            json.dump(data, fh, indent=2, sort_keys=True)


# ---------------------------------------------------------------- threads

@contextmanager
def worker_threads(n=None):
    """Temporarily run numba parallel regions on ``n`` threads.

    ``None`` keeps the current setting, falling back to ``ROBUST_GROWTH_THREADS``.
    Requests above the numba pool size are capped to the pool size.
    """
    if n is None:
        env = os.environ.get("ROBUST_GROWTH_THREADS")
        n = int(env) if env else None
    if n is None:
        yield numba.get_num_threads()
        return
    if n < 1:
        raise PreconditionError(f"thread count must be >= 1, got {n}", MODULE)
    old = numba.get_num_threads()
    numba.set_num_threads(min(int(n), numba.config.NUMBA_NUM_THREADS))
    try:
        yield numba.get_num_threads()
    finally:
        numba.set_num_threads(old)


# ---------------------------------------------------------------- kernel

@njit(cache=True, inline="always")
def _near_face(kind, dp, x, c, s):
    """True when some face of E is within ``s`` standard deviations of ``x``."""
    if kind == INTERVAL:
        sig = s * math.sqrt(max(c[0, 0], 0.0))
        return x[0] - dp[0] < sig or dp[1] - x[0] < sig
    d = x.size
    tot = 0.0
    for i in range(d):
        if x[i] < s * math.sqrt(max(c[i, i], 0.0)):
            return True
        tot += x[i]
    if kind == ORTHANT:
        return False
    v = 0.0
    for i in range(d):
        for j in range(d):
            v += c[i, j]
    return 1.0 - tot < s * math.sqrt(max(v, 0.0))


@njit(cache=True, inline="always")
def _cov_drift(c, g, b):
    d = g.size
    for i in range(d):
        acc = 0.0
        for k in range(d):
            acc += c[i, k] * g[k]
        b[i] = acc


@njit(cache=True, inline="always")
def _trial(x, b, lo, h, dw, out):
    d = x.size
    for i in range(d):
        acc = x[i] + b[i] * h
        for k in range(i + 1):
            acc += lo[i, k] * dw[k]
        out[i] = acc


_REFINE_SIG = types.Tuple((types.int64, types.float64, types.int64, types.int64))(
    MATRIX_FN, VEC, types.int64, VECTOR_FN, VEC, VECTOR_FN, VEC,
    types.int64, VEC, VEC, types.float64, VEC, types.float64, types.float64, VEC,
    types.uint64, types.int64, types.int64, types.int64, types.float64, VEC, types.int64)


@njit(_REFINE_SIG, cache=True)
def _refine(cov_fn, cov_p, mode, drift_fn, drift_p, grad_fn, grad_p,
            kind, dp, margins, core, x, t, h0, dw0,
            key, step, path_id, max_depth, gate, levels, m):
    """Run one step as a tree of bridge-consistent sub-steps.

    Updates ``x`` and ``levels`` in place and returns ``(status, t, sub-steps, m)``.
    """
    d = x.size
    xt = np.empty(d)
    c = np.empty((d, d))
    lo = np.empty((d, d))
    b = np.zeros(d)
    g = np.empty(d)
    dw1 = np.empty(d)
    zb = np.empty(2)
    cap = max_depth + 2
    st_h = np.empty(cap)
    st_dep = np.empty(cap, dtype=np.int64)
    st_node = np.empty(cap, dtype=np.int64)
    st_dw = np.empty((cap, d))
    n_levels = levels.size
    for k in range(d):
        st_dw[0, k] = dw0[k]
    st_h[0] = h0
    st_dep[0] = 0
    st_node[0] = 1
    sp = 1
    subs = 0
    fresh = False
    while sp > 0:
        sp -= 1
        h = st_h[sp]
        dep = st_dep[sp]
        node = st_node[sp]
        if not fresh:
            # callbacks are called here directly: forwarding them to a helper
            # costs a slow function-pointer round trip on every call
            cov_fn(x, cov_p, c)
            if not cholesky_inplace(c, lo):
                return 3, t, subs, m
            if mode == 1:
                grad_fn(x, grad_p, g)
                _cov_drift(c, g, b)
            elif mode == 2:
                drift_fn(x, drift_p, b)
            fresh = True
        _trial(x, b, lo, h, st_dw[sp], xt)
        inside = in_domain(kind, dp, xt)
        refine = False
        if dep < max_depth:
            if not inside:
                refine = True
            elif not (in_margin(kind, dp, core, x) and in_margin(kind, dp, core, xt)):
                s = gate * math.sqrt(h)
                refine = _near_face(kind, dp, x, c, s) or _near_face(kind, dp, xt, c, s)
        if refine:
            half = 0.5 * math.sqrt(h)
            for comp in range(d):
                if (comp & 1) == 0:
                    normal2(key, step & _MASK32, node, path_id, 1 + comp, zb)
                dw1[comp] = 0.5 * st_dw[sp, comp] + half * zb[comp & 1]
            for comp in range(d):
                st_dw[sp, comp] = st_dw[sp, comp] - dw1[comp]
            st_h[sp] = 0.5 * h
            st_dep[sp] = dep + 1
            st_node[sp] = 2 * node + 1
            sp += 1
            for comp in range(d):
                st_dw[sp, comp] = dw1[comp]
            st_h[sp] = 0.5 * h
            st_dep[sp] = dep + 1
            st_node[sp] = 2 * node
            sp += 1
            continue
        subs += 1
        t += h
        if not inside:
            return 1, t, subs, m
        for i in range(d):
            x[i] = xt[i]
        fresh = False
        if beyond_outer(kind, dp, x):
            return 2, t, subs, m
        while m < n_levels and not in_margin(kind, dp, margins[m], x):
            levels[m] = t
            m += 1
    return 0, t, subs, m


_PATH_SIG = types.Tuple((types.float64, types.int64, types.int64))(
    MATRIX_FN, VEC, types.int64, VECTOR_FN, VEC, VECTOR_FN, VEC,
    types.int64, VEC, VEC, types.float64, VEC, types.float64, types.int64, types.int64[::1],
    types.uint64, types.int64, types.int64, types.float64, MAT, VEC, VEC)


@njit(_PATH_SIG, cache=True)
def _run_path(cov_fn, cov_p, mode, drift_fn, drift_p, grad_fn, grad_p,
              kind, dp, margins, core, x0, dt, n_steps, rec_steps,
              key, path_id, max_depth, gate, rows, x_end, levels):
    d = x0.size
    x = x0.copy()
    xt = np.empty(d)
    dw = np.empty(d)
    c = np.empty((d, d))
    lo = np.empty((d, d))
    b = np.zeros(d)
    g = np.empty(d)
    buf = np.empty(2)
    n_levels = levels.size
    n_rec = rec_steps.size
    for n in range(n_levels):
        levels[n] = math.inf
    m = 0
    while m < n_levels and not in_margin(kind, dp, margins[m], x):
        levels[m] = 0.0
        m += 1
    for k in range(d):
        rows[0, k] = x[k]
    r = 1
    t = 0.0
    sq = math.sqrt(dt)
    blk_cur = -1
    fresh = False
    x_core = in_margin(kind, dp, core, x)
    subs = 0
    status = 0
    for step in range(n_steps):
        for comp in range(d):
            j = step * d + comp
            blk = j >> 1
            if blk != blk_cur:
                normal2(key, blk & _MASK32, blk >> 32, path_id, 0, buf)
                blk_cur = blk
            dw[comp] = sq * buf[j & 1]
        if not fresh:
            cov_fn(x, cov_p, c)
            if not cholesky_inplace(c, lo):
                status = 3
                break
            if mode == 1:
                grad_fn(x, grad_p, g)
                _cov_drift(c, g, b)
            elif mode == 2:
                drift_fn(x, drift_p, b)
            fresh = True
        _trial(x, b, lo, dt, dw, xt)
        inside = in_domain(kind, dp, xt)
        xt_core = inside and in_margin(kind, dp, core, xt)
        need = False
        if max_depth > 0:
            if not inside:
                need = True
            elif not (x_core and xt_core):
                s = gate * sq
                need = _near_face(kind, dp, x, c, s) or _near_face(kind, dp, xt, c, s)
        if need:
            status, t, ns, m = _refine(cov_fn, cov_p, mode, drift_fn, drift_p, grad_fn, grad_p,
                                       kind, dp, margins, core, x, t, dt, dw,
                                       key, step, path_id, max_depth, gate, levels, m)
            subs += ns
            fresh = False
            if status != 0:
                break
            x_core = in_margin(kind, dp, core, x)
        else:
            subs += 1
            if not inside:
                t += dt
                status = 1
                break
            for i in range(d):
                x[i] = xt[i]
            x_core = xt_core
            fresh = False
            if beyond_outer(kind, dp, x):
                t += dt
                status = 2
                break
            while m < n_levels and not in_margin(kind, dp, margins[m], x):
                levels[m] = (step + 1) * dt
                m += 1
        t = (step + 1) * dt
        if r < n_rec and rec_steps[r] == step + 1:
            for k in range(d):
                rows[r, k] = x[k]
            r += 1
    if status == 0:
        for k in range(d):
            x_end[k] = x[k]
        return math.inf, 0, subs
    for n in range(m, n_levels):
        levels[n] = t
    for j in range(r, n_rec):
        for k in range(d):
            rows[j, k] = math.nan
    for k in range(d):
        x_end[k] = math.nan
    return t, status, subs


_KERNEL_SIG = types.void(
    MATRIX_FN, VEC, types.int64, VECTOR_FN, VEC, VECTOR_FN, VEC,
    types.int64, VEC, VEC, types.float64, VEC, types.float64, types.int64, types.int64[::1],
    types.uint64, types.int64, types.int64, types.float64,
    MAT3, MAT, VEC, MAT, types.int8[::1], types.int64[::1])


@njit(_KERNEL_SIG, parallel=True, cache=True)
def _kernel(cov_fn, cov_p, mode, drift_fn, drift_p, grad_fn, grad_p,
            kind, dp, margins, core, x0, dt, n_steps, rec_steps,
            key, path_offset, max_depth, gate,
            states, terminal, exit_time, level_exit, status, substeps):
    for i in prange(states.shape[0]):
        tz, st, ns = _run_path(cov_fn, cov_p, mode, drift_fn, drift_p, grad_fn, grad_p,
                               kind, dp, margins, core, x0, dt, n_steps, rec_steps,
                               key, path_offset + i, max_depth, gate,
                               states[i], terminal[i], level_exit[i])
        exit_time[i] = tz
        status[i] = st
        substeps[i] = ns


# ---------------------------------------------------------------- 1-D kernel
#
# Every one-dimensional domain is an interval (lo, hi), possibly with a
# synthetic wall, and every E_n is an interval (lev_lo[n], lev_hi[n]).
# Scalar state keeps this loop free of array traffic.

_REFINE1_SIG = types.Tuple((types.int64, types.float64, types.float64, types.int64, types.int64))(
    SCALAR_FN, types.int64, VECTOR_FN, VEC, VECTOR_FN, VEC,
    types.float64, types.float64, types.float64, VEC, VEC, types.float64, types.float64,
    types.float64, types.float64, types.float64, types.float64,
    types.uint64, types.int64, types.int64, types.int64, types.float64, VEC, types.int64)


@njit(_REFINE1_SIG, cache=True)
def _refine_1d(cov_fn, mode, drift_fn, drift_p, grad_fn, grad_p,
               lo, hi, wall, lev_lo, lev_hi, core_lo, core_hi,
               x, t, h0, dw0, key, step, path_id, max_depth, gate, levels, m):
    """Scalar counterpart of ``_refine``; returns ``(status, x, t, sub-steps, m)``."""
    cap = max_depth + 2
    st_h = np.empty(cap)
    st_dw = np.empty(cap)
    st_dep = np.empty(cap, dtype=np.int64)
    st_node = np.empty(cap, dtype=np.int64)
    xv = np.empty(1)
    g = np.empty(1)
    zb = np.empty(2)
    n_levels = levels.size
    st_h[0] = h0
    st_dw[0] = dw0
    st_dep[0] = 0
    st_node[0] = 1
    sp = 1
    subs = 0
    fresh = False
    c = 0.0
    sig = 0.0
    b = 0.0
    while sp > 0:
        sp -= 1
        h = st_h[sp]
        dep = st_dep[sp]
        if not fresh:
            c = cov_fn(x)
            if not c > 0.0 or not math.isfinite(c):
                return 3, x, t, subs, m
            sig = math.sqrt(c)
            if mode == 1:
                xv[0] = x
                grad_fn(xv, grad_p, g)
                b = c * g[0]
            elif mode == 2:
                xv[0] = x
                drift_fn(xv, drift_p, g)
                b = g[0]
            fresh = True
        xt = x + b * h + sig * st_dw[sp]
        inside = lo < xt < hi
        refine = False
        if dep < max_depth:
            if not inside:
                refine = True
            elif not (core_lo < x < core_hi and core_lo < xt < core_hi):
                reach = gate * sig * math.sqrt(h)
                refine = min(x - lo, hi - x, xt - lo, hi - xt) < reach
        if refine:
            node = st_node[sp]
            normal2(key, step & _MASK32, node, path_id, 1, zb)
            dw1 = 0.5 * st_dw[sp] + 0.5 * math.sqrt(h) * zb[0]
            st_dw[sp] = st_dw[sp] - dw1
            st_h[sp] = 0.5 * h
            st_dep[sp] = dep + 1
            st_node[sp] = 2 * node + 1
            sp += 1
            st_dw[sp] = dw1
            st_h[sp] = 0.5 * h
            st_dep[sp] = dep + 1
            st_node[sp] = 2 * node
            sp += 1
            continue
        subs += 1
        t += h
        if not inside:
            return 1, x, t, subs, m
        x = xt
        fresh = False
        if x >= wall:
            return 2, x, t, subs, m
        while m < n_levels and not (lev_lo[m] < x < lev_hi[m]):
            levels[m] = t
            m += 1
    return 0, x, t, subs, m


_PATH1_SIG = types.Tuple((types.float64, types.int64, types.int64))(
    SCALAR_FN, types.int64, VECTOR_FN, VEC, VECTOR_FN, VEC,
    types.float64, types.float64, types.float64, VEC, VEC, types.float64, types.float64,
    types.float64, types.float64, types.int64, types.int64[::1],
    types.uint64, types.int64, types.int64, types.float64, MAT, VEC, VEC)


@njit(_PATH1_SIG, cache=True)
def _run_path_1d(cov_fn, mode, drift_fn, drift_p, grad_fn, grad_p,
                 lo, hi, wall, lev_lo, lev_hi, core_lo, core_hi,
                 x0, dt, n_steps, rec_steps, key, path_id, max_depth, gate, rows, x_end, levels):
    xv = np.empty(1)
    g = np.empty(1)
    buf = np.empty(2)
    n_levels = levels.size
    n_rec = rec_steps.size
    x = x0
    for n in range(n_levels):
        levels[n] = math.inf
    m = 0
    while m < n_levels and not (lev_lo[m] < x < lev_hi[m]):
        levels[m] = 0.0
        m += 1
    rows[0, 0] = x
    r = 1
    t = 0.0
    sq = math.sqrt(dt)
    reach = gate * sq
    subs = 0
    status = 0
    fresh = False
    c = 0.0
    sig = 0.0
    b = 0.0
    for step in range(n_steps):
        if (step & 1) == 0:
            normal2(key, (step >> 1) & _MASK32, step >> 33, path_id, 0, buf)
        dw = sq * buf[step & 1]
        if not fresh:
            c = cov_fn(x)
            if not c > 0.0 or not math.isfinite(c):
                status = 3
                break
            sig = math.sqrt(c)
            if mode == 1:
                xv[0] = x
                grad_fn(xv, grad_p, g)
                b = c * g[0]
            elif mode == 2:
                xv[0] = x
                drift_fn(xv, drift_p, g)
                b = g[0]
            fresh = True
        xt = x + b * dt + sig * dw
        inside = lo < xt < hi
        need = False
        if max_depth > 0:
            if not inside:
                need = True
            elif not (core_lo < x < core_hi and core_lo < xt < core_hi):
                need = min(x - lo, hi - x, xt - lo, hi - xt) < reach * sig
        if need:
            status, x, t, ns, m = _refine_1d(cov_fn, mode, drift_fn, drift_p, grad_fn, grad_p,
                                             lo, hi, wall, lev_lo, lev_hi, core_lo, core_hi,
                                             x, t, dt, dw, key, step, path_id, max_depth, gate, levels, m)
            subs += ns
            fresh = False
            if status != 0:
                break
        else:
            subs += 1
            if not inside:
                t += dt
                status = 1
                break
            x = xt
            fresh = False
            if x >= wall:
                t += dt
                status = 2
                break
            while m < n_levels and not (lev_lo[m] < x < lev_hi[m]):
                levels[m] = (step + 1) * dt
                m += 1
        t = (step + 1) * dt
        if r < n_rec and rec_steps[r] == step + 1:
            rows[r, 0] = x
            r += 1
    if status == 0:
        x_end[0] = x
        return math.inf, 0, subs
    for n in range(m, n_levels):
        levels[n] = t
    for j in range(r, n_rec):
        rows[j, 0] = math.nan
    x_end[0] = math.nan
    return t, status, subs


_KERNEL1_SIG = types.void(
    SCALAR_FN, types.int64, VECTOR_FN, VEC, VECTOR_FN, VEC,
    types.float64, types.float64, types.float64, VEC, VEC, types.float64, types.float64,
    types.float64, types.float64, types.int64, types.int64[::1],
    types.uint64, types.int64, types.int64, types.float64,
    MAT3, MAT, VEC, MAT, types.int8[::1], types.int64[::1])


@njit(_KERNEL1_SIG, parallel=True, cache=True)
def _kernel_1d(cov_fn, mode, drift_fn, drift_p, grad_fn, grad_p,
               lo, hi, wall, lev_lo, lev_hi, core_lo, core_hi,
               x0, dt, n_steps, rec_steps, key, path_offset, max_depth, gate,
               states, terminal, exit_time, level_exit, status, substeps):
    for i in prange(states.shape[0]):
        tz, st, ns = _run_path_1d(cov_fn, mode, drift_fn, drift_p, grad_fn, grad_p,
                                  lo, hi, wall, lev_lo, lev_hi, core_lo, core_hi,
                                  x0, dt, n_steps, rec_steps, key, path_offset + i, max_depth, gate,
                                  states[i], terminal[i], level_exit[i])
        exit_time[i] = tz
        status[i] = st
        substeps[i] = ns


def _bounds_1d(domain: DomainSpec):
    """``(lo, hi, wall, lev_lo, lev_hi)`` describing a one-dimensional domain."""
    count = domain.exhaustion_count
    margins = level_margins(domain.kind, domain.dp, count)
    if domain.kind == INTERVAL:
        a, b = domain.params
        return a, b, math.inf, a + margins, b - margins
    if domain.kind == ORTHANT:
        with np.errstate(divide="ignore"):
            lev_lo = np.where(margins > 0, 1.0 / np.where(margins > 0, margins, 1.0), math.inf)
        lev_hi = np.where(margins > 0, margins, -math.inf)
        return 0.0, math.inf, float(domain.params[1]), lev_lo, lev_hi
    return 0.0, 1.0, math.inf, margins.copy(), 1.0 - margins


# ---------------------------------------------------------------- driver

def _measure_args(measure, dim):
    if isinstance(measure, type) and issubclass(measure, Q):
        measure = Q()
    if isinstance(measure, Q):
        return MODE_Q, _zero_vector_fn(), _ZERO_P, _zero_vector_fn(), _ZERO_P, "Q"
    if isinstance(measure, Pstar):
        pair = measure.pair
        if pair.dim != dim:
            raise PreconditionError(f"eigenpair dimension {pair.dim} does not match model dimension {dim}", MODULE)
        return MODE_PSTAR, _zero_vector_fn(), _ZERO_P, pair.grad_fn, np.ascontiguousarray(pair.params, dtype=float), "Pstar"
    if isinstance(measure, Drift):
        b = measure.b
        if b.dim != dim:
            raise PreconditionError(f"drift dimension {b.dim} does not match model dimension {dim}", MODULE)
        return MODE_DRIFT, b.vector_fn, np.ascontiguousarray(b.params, dtype=float), _zero_vector_fn(), _ZERO_P, f"Drift({b.name})"
    raise PreconditionError(f"unknown measure {measure!r}; use Q(), Pstar(pair) or Drift(b)", MODULE)


_ZERO_P = np.zeros(1)


def _zero_vector_fn():
    from .model import _zero_drift
    return _zero_drift


def _point(x0, dim):
    x = np.atleast_1d(np.asarray(x0, dtype=float)).ravel().copy()
    if x.size != dim:
        raise PreconditionError(f"x0 has {x.size} coordinates, model has {dim}", MODULE)
    return x


def resolve_absorb_level(domain: DomainSpec, x0, level=None):
    """Validate ``level`` for ``x0``, or pick the coarsest level containing it."""
    x = _point(x0, domain.dim)
    if not domain.contains(x):
        raise PreconditionError(f"x0={x.tolist()} is outside {domain.describe()}", MODULE)
    if level is None:
        for n in range(domain.exhaustion_count):
            if domain.member(n, x):
                return n
        raise PreconditionError(f"x0={x.tolist()} lies in no exhaustion level of {domain.describe()}", MODULE)
    if not 0 <= level < domain.exhaustion_count or not domain.member(level, x):
        raise PreconditionError(f"x0={x.tolist()} is not in E_{level} of {domain.describe()}", MODULE)
    return int(level)


def record_grid(cfg: SimConfig, dim: int):
    """Step indices at which states are stored."""
    n = cfg.n_steps
    every = cfg.record_every
    if every is None:
        per_path = max(2, RECORD_BUDGET // max(1, cfg.n_paths * dim))
        every = max(1, -(-n // (per_path - 1)))
    if every == 0:
        steps = np.array([0, n], dtype=np.int64)
    else:
        steps = np.arange(0, n + 1, every, dtype=np.int64)
        if steps[-1] != n:
            steps = np.append(steps, n)
    return steps


def simulate(measure, model, x0, cfg: SimConfig, threads=None, _general=False) -> PathEnsemble:
    """Simulate ``cfg.n_paths`` paths from ``x0``.

    ``model`` is a ``(DomainSpec, CovarianceField)`` pair.  Path ids run from
    ``cfg.path_offset``, so an ensemble can be produced in chunks that
    concatenate to the single-run result.
    """
    domain, cov = model
    if cov.dim != domain.dim:
        raise PreconditionError(f"covariance dimension {cov.dim} does not match domain dimension {domain.dim}", MODULE)
    d = domain.dim
    x = _point(x0, d)
    level = resolve_absorb_level(domain, x, cfg.absorb_level)
    mode, drift_fn, drift_p, grad_fn, grad_p, label = _measure_args(measure, d)
    n_paths = cfg.n_paths
    rec = record_grid(cfg, d)
    states = np.empty((n_paths, rec.size, d))
    terminal = np.empty((n_paths, d))
    exit_time = np.empty(n_paths)
    level_exit = np.empty((n_paths, domain.exhaustion_count))
    status = np.empty(n_paths, dtype=np.int8)
    substeps = np.empty(n_paths, dtype=np.int64)
    key = np.uint64(int(cfg.seed))
    # the scalar kernel needs a scalar evaluator of c
    if d == 1 and cov.scalar_fn is not None and not _general:
        lo, hi, wall, lev_lo, lev_hi = _bounds_1d(domain)
        with worker_threads(threads):
            _kernel_1d(cov.scalar_fn, mode, drift_fn, drift_p, grad_fn, grad_p,
                       lo, hi, wall, lev_lo, lev_hi, float(lev_lo[level]), float(lev_hi[level]),
                       float(x[0]), cfg.step, cfg.n_steps, rec, key, cfg.path_offset, cfg.depth(mode), GATE,
                       states, terminal, exit_time, level_exit, status, substeps)
        return PathEnsemble(rec * cfg.step, states, terminal, exit_time, level_exit, status, substeps,
                            cfg, label, domain, x, level, rec)
    margins = level_margins(domain.kind, domain.dp, domain.exhaustion_count)
    with worker_threads(threads):
        _kernel(cov.matrix_fn, np.ascontiguousarray(cov.params, dtype=float), mode,
                drift_fn, drift_p, grad_fn, grad_p,
                domain.kind, domain.dp, margins, margins[level], x, cfg.step, cfg.n_steps, rec,
                key, cfg.path_offset, cfg.depth(mode), GATE,
                states, terminal, exit_time, level_exit, status, substeps)
    return PathEnsemble(rec * cfg.step, states, terminal, exit_time, level_exit, status, substeps,
                        cfg, label, domain, x, level, rec)


def concatenate(parts):
    """Join ensembles simulated as consecutive path chunks."""
    first = parts[0]
    return PathEnsemble(first.times, np.concatenate([p.states for p in parts]),
                        np.concatenate([p.terminal for p in parts]),
                        np.concatenate([p.exit_time for p in parts]),
                        np.concatenate([p.level_exit for p in parts]),
                        np.concatenate([p.status for p in parts]),
                        np.concatenate([p.substeps for p in parts]),
                        first.config.replace(n_paths=sum(p.n_paths for p in parts)),
                        first.measure, first.domain, first.x0, first.absorb_level, first.record_steps)


# ---------------------------------------------------------------- estimators

def derived_seed(seed, stream):
    """Independent 64-bit seed for a secondary ensemble."""
    h = hashlib.sha256(f"{int(seed)}:{stream}".encode()).digest()
    return int.from_bytes(h[:8], "little")


def exit_probability(ens: PathEnsemble, T: float):
    """Fraction of paths with exit time beyond ``T`` and its binomial standard error."""
    if T < 0 or T > ens.horizon * (1 + 1e-12):
        raise RangeError(f"T={T} outside [0, {ens.horizon}]", MODULE)
    p = float(np.mean(ens.exit_time > T))
    return p, math.sqrt(p * (1.0 - p) / ens.n_paths)


@dataclass
class ExitIdentityResult:
    lhs: float
    rhs: float
    combined_se: float
    passed: bool
    lhs_se: float = 0.0
    rhs_se: float = 0.0
    details: dict = field(default_factory=dict)

    def __iter__(self):
        return iter((self.lhs, self.rhs, self.combined_se, self.passed))


def exit_identity_check(model, pair: Eigenpair, x0, T, cfg: SimConfig, threads=None, star_seed=None):
    """Compare the survival probability under Q with its eigenpair representation.

    The right-hand side ``eta(x0) E*[exp(-lam T) / eta(X_T)]`` comes from a
    separately seeded tilted ensemble.  Absorption under the tilted measure
    contradicts the representation's hypothesis and raises ``HypothesisError``.
    """
    domain, _ = model
    x = _point(x0, domain.dim)
    if T < 0:
        raise PreconditionError("T must be >= 0", MODULE)
    if T == 0:
        return ExitIdentityResult(1.0, 1.0, 0.0, True)
    run = cfg.replace(T=float(T), record_every=0)
    q = simulate(Q(), model, x, run, threads)
    lhs, se_l = exit_probability(q, T)
    star = simulate(Pstar(pair), model, x,
                    run.replace(seed=derived_seed(cfg.seed, "pstar") if star_seed is None else star_seed), threads)
    lost = int(np.count_nonzero(star.absorbed))
    if lost:
        raise HypothesisError(f"{lost} of {star.n_paths} tilted paths left the domain; "
                              "the representation needs a non-exploding tilted measure", MODULE)
    w = np.exp(-pair.lam * T - pair.log_eta(star.terminal if domain.dim > 1 else star.terminal[:, 0]))
    w *= float(pair.eta(x if domain.dim > 1 else x[0]))
    rhs = float(w.mean())
    se_r = float(w.std(ddof=1) / math.sqrt(w.size))
    se = math.hypot(se_l, se_r)
    return ExitIdentityResult(lhs, rhs, se, abs(lhs - rhs) <= 3 * se, se_l, se_r,
                              {"q_counts": q.counts(), "q_substeps": float(q.substeps.mean())})


@dataclass
class TailDecayReport:
    rows: list
    flatness: float
    warnings: list

    def __iter__(self):
        return iter(self.rows)


def tail_decay_estimate(model, pair: Eigenpair, x0, T_list, cfg: SimConfig, threads=None):
    """Scaled survival ``exp(lam T) Q[zeta > T]`` along an increasing horizon list.

    Horizons where fewer than about 100 survivors are expected are dropped
    with a warning.  ``flatness`` is max/min of the scaled values over the
    larger half of the retained horizons.
    """
    ts = [float(t) for t in T_list]
    if not ts or any(b <= a for a, b in zip(ts, ts[1:])) or ts[0] <= 0:
        raise PreconditionError("T_list must be positive and strictly increasing", MODULE)
    warnings = []
    keep = [t for t in ts if math.exp(-pair.lam * t) * cfg.n_paths >= 100]
    if len(keep) < len(ts):
        warnings.append(f"dropped horizons {[t for t in ts if t not in keep]}: fewer than 100 expected survivors")
    if not keep:
        return TailDecayReport([], math.nan, warnings)
    ens = simulate(Q(), model, x0, cfg.replace(T=keep[-1], record_every=0), threads)
    rows = []
    for t in keep:
        p, se = exit_probability(ens, t)
        s = math.exp(pair.lam * t)
        rows.append((t, s * p, s * se))
    tail = [v for _, v, _ in rows[len(rows) // 2:]]
    flat = max(tail) / min(tail) if min(tail) > 0 else math.inf
    return TailDecayReport(rows, flat, warnings)
