"""Wealth processes, growth-rate estimates and the optimal-arbitrage diagnostics.

Wealth is handled one ensemble at a time: a ``WealthPath`` holds the values
of every path of an ensemble on its recorded time grid, with one row per
path.  Indexing a ``WealthPath`` returns the single-path view.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import ndtr

from .eigen1d import Eigenpair
from .errors import DomainError, EmptyReportError, PreconditionError, RangeError
from .model import DomainSpec
from .sde import Drift, PathEnsemble, Pstar, Q, SimConfig, derived_seed, simulate

MODULE = "growth"

DEFAULT_GAMMAS = np.round(np.arange(-5.0, 5.0 + 1e-9, 0.005), 6)
THRESHOLD = 0.95


# ---------------------------------------------------------------- wealth paths

@dataclass
class WealthPath:
    """Wealth of each path on a common time grid.

    ``values[i, j]`` is the wealth of path ``i`` at ``times[j]``.  A path
    whose state process was absorbed, or whose wealth reached zero, carries
    its last value forward and has ``frozen[i]`` set; ``frozen_at[i]`` is the
    first grid time at which the value stopped changing (``inf`` otherwise).
    """

    times: np.ndarray
    values: np.ndarray
    frozen: np.ndarray
    frozen_at: np.ndarray
    label: str = "V"

    def __post_init__(self):
        self.values = np.atleast_2d(self.values)
        self.frozen = np.atleast_1d(self.frozen)
        self.frozen_at = np.atleast_1d(self.frozen_at)

    def __len__(self):
        return self.values.shape[0]

    def __getitem__(self, i):
        sl = slice(i, i + 1) if isinstance(i, (int, np.integer)) else i
        return WealthPath(self.times, self.values[sl], self.frozen[sl], self.frozen_at[sl], self.label)

    @property
    def terminal(self):
        return self.values[:, -1]

    @property
    def horizon(self):
        return float(self.times[-1])


def _freeze(values, dead_from, times):
    """Carry each row's last live value forward from column ``dead_from[i]``."""
    n, m = values.shape
    frozen = dead_from < m
    frozen_at = np.full(n, math.inf)
    for i in np.flatnonzero(frozen):
        j = int(dead_from[i])
        values[i, j:] = values[i, j - 1]
        frozen_at[i] = times[j]
    return frozen, frozen_at


def _first_nan(states):
    """Index of the first NaN column per row (``m`` when there is none)."""
    bad = np.isnan(states[:, :, 0])
    m = bad.shape[1]
    return np.where(bad.any(axis=1), bad.argmax(axis=1), m)


def wealth_star(pair: Eigenpair, ens: PathEnsemble) -> WealthPath:
    """``V*_t = exp(lam t) eta(X_t) / eta(x0)`` along every path.

    The ratio makes ``V*_0 = 1`` whatever anchor the pair was normalized at.
    Paths absorbed by the state process keep the value of their last live
    grid point.
    """
    if pair.dim != ens.dim:
        raise PreconditionError(f"pair dimension {pair.dim} does not match ensemble dimension {ens.dim}", MODULE)
    # drop the additive normalization constant so rescaling eta leaves V* bit-identical
    params = pair.params.copy()
    params[0] = 0.0
    pair = replace(pair, params=params)
    n, m, d = ens.states.shape
    dead = _first_nan(ens.states)
    live = ~np.isnan(ens.states[:, :, 0])
    pts = ens.states[live]
    if pts.size and not np.all(ens.domain.contains(pts)):
        raise DomainError(f"ensemble states leave {ens.domain.describe()}; eta is undefined there", MODULE)
    log_eta = np.full((n, m), np.nan)
    if pts.size:
        vals = pair.log_eta(pts[:, 0] if d == 1 else pts)
        if not np.all(np.isfinite(vals)):
            raise DomainError("log eta is not finite at some visited state", MODULE)
        log_eta[live] = vals
    base = float(pair.log_eta(ens.x0[0] if d == 1 else ens.x0))
    values = np.exp(pair.lam * ens.times[None, :] + log_eta - base)
    values[:, 0] = 1.0
    frozen, frozen_at = _freeze(values, dead, ens.times)
    return WealthPath(ens.times.copy(), values, frozen, frozen_at, "V*")


def theta_zero(dim=1):
    """No position: ``V`` stays at 1."""
    def theta(x, v):
        return np.zeros((x.shape[0], dim))
    theta.label = "zero"
    return theta


def theta_constant(k):
    """Hold a fixed number ``k`` of units in each asset."""
    k = np.atleast_1d(np.asarray(k, dtype=float))

    def theta(x, v):
        return np.broadcast_to(k, x.shape).copy()
    theta.label = f"constant{k.tolist()}"
    return theta


def theta_proportion(p):
    """Keep the fraction ``p_i`` of current wealth in asset ``i``: ``theta_i = p_i V / x_i``."""
    p = np.atleast_1d(np.asarray(p, dtype=float))

    def theta(x, v):
        return p[None, :] * v[:, None] / x
    theta.label = f"proportion{p.tolist()}"
    return theta


def theta_star(pair: Eigenpair):
    """``theta = V grad log eta``, the integrand that reproduces ``V*``."""
    def theta(x, v):
        g = pair.grad_log_eta(x[:, 0] if pair.dim == 1 else x)
        return v[:, None] * np.reshape(g, (x.shape[0], pair.dim))
    theta.label = f"star({pair.name})"
    return theta


def wealth_integrate(theta, ens: PathEnsemble) -> WealthPath:
    """Forward Euler sum ``V_{k+1} = V_k + theta(X_k, V_k)' (X_{k+1} - X_k)``.

    The sum runs over the recorded grid, so the ensemble should be recorded
    at every step when accuracy matters.  ``theta(x, v)`` receives the live
    states (rows) and their current wealth and returns one position row per
    state.  Wealth that reaches zero is clipped there and frozen; paths whose
    state was absorbed freeze at their last live value.
    """
    n, m, d = ens.states.shape
    values = np.empty((n, m))
    values[:, 0] = 1.0
    v = np.ones(n)
    active = np.ones(n, dtype=bool)
    frozen_at = np.full(n, math.inf)
    for j in range(m - 1):
        x, x_next = ens.states[:, j], ens.states[:, j + 1]
        lost = active & np.isnan(x_next[:, 0])
        frozen_at[lost] = ens.times[j + 1]
        active &= ~lost
        idx = np.flatnonzero(active)
        if idx.size:
            pos = np.asarray(theta(x[idx], v[idx]), dtype=float).reshape(-1, d)
            new = v[idx] + np.einsum("ij,ij->i", pos, x_next[idx] - x[idx])
            hit = new <= 0.0
            new[hit] = 0.0
            v[idx] = new
            broke = idx[hit]
            frozen_at[broke] = ens.times[j + 1]
            active[broke] = False
        values[:, j + 1] = v
    frozen = np.isfinite(frozen_at)
    return WealthPath(ens.times.copy(), values, frozen, frozen_at, getattr(theta, "label", "theta"))


# ---------------------------------------------------------------- growth rates

@dataclass
class GrowthReport:
    """Finite-horizon growth statistics of ``(1/t) log V_t``.

    ``fractions[k]`` is the share of counted paths with rate at least
    ``gammas[k]``; ``g_hat`` is the largest grid value whose share is at
    least ``threshold`` (NaN when no grid value qualifies) and ``g_quantile``
    the same statistic without the grid.  Paths frozen at a positive value
    (their state was absorbed) are excluded and counted in ``excluded``.
    """

    horizon: float
    gammas: np.ndarray
    fractions: np.ndarray
    g_hat: float
    g_quantile: float
    threshold: float
    quantiles: dict
    counted: int
    excluded: int
    rates: np.ndarray = field(repr=False, default=None)

    def as_dict(self):
        return {"horizon": self.horizon, "g_hat": _num(self.g_hat), "g_quantile": _num(self.g_quantile),
                "threshold": self.threshold, "quantiles": {k: _num(v) for k, v in self.quantiles.items()},
                "counted": self.counted, "excluded": self.excluded}

    def curve_rows(self):
        return [(float(g), float(f)) for g, f in zip(self.gammas, self.fractions)]


def _num(v):
    v = float(v)
    return v if math.isfinite(v) else None


def growth_rate(paths: WealthPath, gamma_grid=None, threshold=THRESHOLD) -> GrowthReport:
    """Share of paths with ``(1/t) log V_t >= gamma`` at the final time, for each gamma."""
    t = paths.horizon
    if not t > 0:
        raise PreconditionError("growth rates need a positive final time", MODULE)
    # paths stopped by absorption of the state are dropped; bankrupt ones count at rate -inf
    keep = ~paths.frozen | (paths.terminal == 0.0)
    if not keep.any():
        raise EmptyReportError("every wealth path was absorbed; no growth rate to report", MODULE)
    with np.errstate(divide="ignore"):
        rates = np.log(paths.terminal[keep]) / t
    gammas = DEFAULT_GAMMAS if gamma_grid is None else np.sort(np.asarray(gamma_grid, dtype=float))
    srt = np.sort(rates)
    # share of rates >= gamma, via the count strictly below gamma
    fractions = 1.0 - np.searchsorted(srt, gammas, side="left") / srt.size
    ok = np.flatnonzero(fractions >= threshold)
    g_hat = float(gammas[ok[-1]]) if ok.size else math.nan
    k = srt.size - int(math.ceil(threshold * srt.size))
    g_q = float(srt[k])
    # order-statistic quantiles: bankrupt paths sit at -inf, which interpolation would turn into NaN
    qs = {f"q{int(round(100 * q)):02d}": float(np.quantile(srt, q, method="inverted_cdf"))
          for q in (0.05, 0.25, 0.5, 0.75, 0.95)}
    return GrowthReport(t, gammas, fractions, g_hat, g_q, threshold, qs, int(srt.size),
                        int(np.count_nonzero(~keep)), rates)


# ---------------------------------------------------------------- robustness

@dataclass
class SweepRow:
    drift: str
    g_hat: float
    g_quantile: float
    tight: bool
    occupancy: float
    absorbed: int
    claim_holds: bool | None

    def as_dict(self):
        return {"drift": self.drift, "g_hat": _num(self.g_hat), "g_quantile": _num(self.g_quantile),
                "tight": self.tight, "occupancy": self.occupancy, "absorbed": self.absorbed,
                "claim_holds": self.claim_holds}


def occupancy(ens: PathEnsemble, level: int, since=0.5):
    """Share of (path, time) samples in ``E_level`` over the final ``1 - since`` of the horizon.

    Absorbed samples count as outside.
    """
    sel = ens.times >= since * ens.horizon
    block = ens.states[:, sel]
    flat = block.reshape(-1, ens.dim)
    live = ~np.isnan(flat[:, 0])
    inside = np.zeros(flat.shape[0], dtype=bool)
    if live.any():
        inside[live] = ens.domain.member(level, flat[live])
    return float(inside.mean())


def robustness_sweep(pair: Eigenpair, model, drifts, cfg: SimConfig, x0=None, compact_level=4,
                     tolerance=0.1, gamma_grid=None, threads=None):
    """Growth of ``V*`` under each drift, with a tightness flag.

    A drift is flagged tight when at least 99% of samples over the second
    half of the horizon lie in ``E_compact_level``.  For tight drifts
    ``claim_holds`` says whether ``g_hat >= lam - tolerance``; for the others
    it is ``None`` since nothing is asserted.
    """
    domain, _ = model
    x0 = pair.x0 if x0 is None else x0
    if not 0 <= compact_level < domain.exhaustion_count:
        raise PreconditionError(f"compact_level must lie in [0, {domain.exhaustion_count})", MODULE)
    run = cfg if cfg.record_every is not None else cfg.replace(record_every=max(1, cfg.n_steps // 200))
    rows = []
    for k, b in enumerate(drifts):
        measure = b if isinstance(b, (Pstar, Q, Drift)) else Drift(b)
        ens = simulate(measure, model, x0, run.replace(seed=derived_seed(cfg.seed, f"sweep:{k}")), threads)
        occ = occupancy(ens, compact_level)
        tight = occ >= 0.99
        name = getattr(getattr(measure, "b", None), "name", None) or ens.measure
        try:
            rep = growth_rate(wealth_star(pair, ens), gamma_grid)
            g, gq = rep.g_hat, rep.g_quantile
        except EmptyReportError:
            g = gq = math.nan
        holds = (bool(g >= pair.lam - tolerance) if math.isfinite(g) else False) if tight else None
        rows.append(SweepRow(name, g, gq, bool(tight), occ, int(np.count_nonzero(ens.absorbed)), holds))
    return rows


# ---------------------------------------------------------------- numeraire

@dataclass
class NumeraireResult:
    times: np.ndarray
    mean_ratio: np.ndarray
    std_error: np.ndarray
    monotone_pass: bool
    worst_excess: float

    def __iter__(self):
        return iter((self.times, self.mean_ratio, self.monotone_pass))

    def as_dict(self):
        return {"times": self.times.tolist(), "mean_ratio": self.mean_ratio.tolist(),
                "std_error": self.std_error.tolist(), "monotone_pass": self.monotone_pass,
                "worst_excess": self.worst_excess}


def numeraire_check(pair: Eigenpair, candidate_theta, cfg: SimConfig, model, x0=None, grid_points=11,
                    slack=3.0, threads=None):
    """Track ``mean(V_t / V*_t)`` under the tilted measure on a coarse grid.

    ``candidate_theta`` is a position function for ``wealth_integrate`` or
    the string ``"star"`` for ``V*`` itself.  Each comparison of consecutive
    grid points passes when the increase of the mean stays below ``slack``
    standard errors of the pathwise increment.  Paths with frozen wealth
    keep their frozen value.
    """
    x0 = pair.x0 if x0 is None else x0
    ens = simulate(Pstar(pair), model, x0, cfg.replace(record_every=1), threads)
    vstar = wealth_star(pair, ens)
    if isinstance(candidate_theta, str):
        if candidate_theta != "star":
            raise PreconditionError(f"unknown candidate {candidate_theta!r}", MODULE)
        v = vstar.values
    else:
        v = wealth_integrate(candidate_theta, ens).values
    cols = np.unique(np.linspace(0, ens.times.size - 1, grid_points).round().astype(int))
    ratio = v[:, cols] / vstar.values[:, cols]
    mean = ratio.mean(axis=0)
    se = ratio.std(axis=0, ddof=1) / math.sqrt(ratio.shape[0])
    inc = np.diff(ratio, axis=1)
    inc_mean = inc.mean(axis=0)
    inc_se = inc.std(axis=0, ddof=1) / math.sqrt(inc.shape[0])
    excess = inc_mean - slack * inc_se
    worst = float(excess.max()) if excess.size else -math.inf
    return NumeraireResult(ens.times[cols], mean, se, bool(np.all(excess <= 1e-12)), worst)


# ---------------------------------------------------------------- optimal arbitrage

def survival_bm(s, x):
    """``U(s, x) = 2 Phi(x / sqrt(s)) - 1``: Brownian survival on the half-line."""
    s = np.asarray(s, dtype=float)
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        u = 2.0 * ndtr(x / np.sqrt(s)) - 1.0
    return np.where(np.isnan(x) | (x <= 0), 0.0, u)


def optimal_arbitrage_closed_form(x_path, T, times, x0=None) -> WealthPath:
    """``V^T_t = U(T - t, X_t) / U(T, x0)`` for Brownian motion on the half-line.

    ``x_path`` holds one path per row on ``times`` (a single 1-D path is
    accepted).  NaN or non-positive states mean the path has left the
    half-line, after which the wealth is zero.
    """
    times = np.asarray(times, dtype=float)
    x = np.atleast_2d(np.asarray(x_path, dtype=float))
    if x.shape[1] != times.size:
        raise PreconditionError("x_path columns must match times", MODULE)
    if times.size and times[-1] >= T:
        raise RangeError(f"horizon T={T} must exceed every requested time (max {times[-1]})", MODULE)
    start = x[:, 0] if x0 is None else np.full(x.shape[0], float(x0))
    base = survival_bm(T, start)
    values = survival_bm(T - times[None, :], x) / base[:, None]
    dead = np.where((np.isnan(x) | (x <= 0)).any(axis=1), np.argmax(np.isnan(x) | (x <= 0), axis=1),
                    times.size)
    frozen = dead < times.size
    frozen_at = np.where(frozen, times[np.minimum(dead, times.size - 1)], math.inf)
    return WealthPath(times.copy(), values, frozen, frozen_at, f"V^{T:g}")


@dataclass
class ArbitrageRow:
    T: float
    median_sup: float
    p95_sup: float
    mean_abs_z: float
    se_abs_z: float

    def as_dict(self):
        return self.__dict__.copy()


@dataclass
class ArbitrageReport:
    """Deviation of ``V^T`` from ``V*`` over ``[0, t]`` for each horizon ``T``."""

    t: float
    measure: str
    n_paths: int
    rows: list

    def as_dict(self):
        return {"t": self.t, "measure": self.measure, "n_paths": self.n_paths,
                "rows": [r.as_dict() for r in self.rows]}

    def decreasing(self, attr):
        vals = [getattr(r, attr) for r in self.rows]
        return all(b < a for a, b in zip(vals, vals[1:]))


def arbitrage_convergence(t, T_list, cfg: SimConfig, measure="pstar", x0=1.0, threads=None) -> ArbitrageReport:
    """Compare ``V^T`` with ``V* = X / x0`` for Brownian motion on the half-line.

    Paths run to time ``t`` under the Bessel-3 tilted measure (``"pstar"``)
    or under Brownian motion itself (``"q"``, paths stop at the boundary).
    For every ``T`` the report gives the median and 95th percentile of
    ``sup_{s <= t} |V^T_s - V*_s|`` and the mean of ``|V^T_t / V*_t - 1|``.
    """
    from .closedform import get_example

    ts = [float(v) for v in T_list]
    if any(T <= t for T in ts):
        raise PreconditionError(f"every horizon must exceed t={t}", MODULE)
    ex = get_example("bessel-4.3")
    model = (DomainSpec.orthant(1, outer=math.inf), ex.covariance)
    pair = ex.pair.renormalized([x0])
    if measure == "pstar":
        m = Pstar(pair)
    elif measure == "q":
        m = Q()
    else:
        raise PreconditionError(f"measure must be 'pstar' or 'q', got {measure!r}", MODULE)
    run = cfg.replace(T=float(t), record_every=1 if cfg.record_every is None else cfg.record_every)
    ens = simulate(m, model, x0, run, threads)
    x = ens.states[:, :, 0]
    vstar = x / x0
    rows = []
    for T in ts:
        vt = optimal_arbitrage_closed_form(x, T, ens.times, x0).values
        with np.errstate(invalid="ignore"):
            dev = np.nanmax(np.abs(vt - np.where(np.isnan(vstar), 0.0, vstar)), axis=1)
            z = vt[:, -1] / vstar[:, -1]
        alive = ~np.isnan(z)
        za = np.abs(z[alive] - 1.0)
        rows.append(ArbitrageRow(T, float(np.median(dev)), float(np.quantile(dev, 0.95)),
                                 float(za.mean()) if za.size else math.nan,
                                 float(za.std(ddof=1) / math.sqrt(za.size)) if za.size > 1 else math.nan))
    return ArbitrageReport(float(t), ens.measure, ens.n_paths, rows)
