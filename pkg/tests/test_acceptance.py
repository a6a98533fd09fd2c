"""Acceptance criteria, one test per criterion.

Every test records a PASS/FAIL line with its measured runtime; the lines are
printed in a block at the end of the pytest run.  Criteria that are known not
to hold are marked ``xfail(strict=True)`` and still print FAIL.  Runtimes are
taken after a small warm-up run so that numba compilation is not counted.
"""

import math
import os
import subprocess
import sys
import time
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest
from scipy import stats

from robust_growth import cli, closedform, eigen1d, growth, sde
from robust_growth.closedform import GBMSpec, SimplexSpec, gbm_eigenpair, pde_residual, simplex_eigenpair
from robust_growth.model import CovarianceField, DomainSpec
from robust_growth.sde import Pstar, Q, SimConfig

TESTS = Path(__file__).parent
LINES = []


@pytest.fixture(scope="module", autouse=True)
def summary(request):
    yield
    tr = request.config.pluginmanager.get_plugin("terminalreporter")
    write = tr.write_line if tr else print
    write("")
    write("acceptance summary")
    for line in LINES:
        write(line)


def record(n, ok, detail, elapsed=None, budget=None):
    """Log one criterion; the runtime budget is part of the verdict."""
    if budget is not None:
        ok = ok and elapsed < budget
    timing = "" if elapsed is None else f" [{elapsed:.2f}s" + ("" if budget is None else f" / {budget:g}s") + "]"
    LINES.append(f"C{n:<3} {'PASS' if ok else 'FAIL'}  {detail}{timing}")
    return ok


class Clock:
    def __enter__(self):
        self.start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.start


def frac_solve(M, v):
    """Gaussian elimination in exact rationals."""
    n = len(v)
    aug = [[Fraction(x) for x in row] + [Fraction(y)] for row, y in zip(M, v)]
    for i in range(n):
        piv = next(r for r in range(i, n) if aug[r][i] != 0)
        aug[i], aug[piv] = aug[piv], aug[i]
        for r in range(n):
            if r != i and aug[r][i] != 0:
                f = aug[r][i] / aug[i][i]
                aug[r] = [a - f * b for a, b in zip(aug[r], aug[i])]
    return [aug[i][n] / aug[i][i] for i in range(n)]


def model_of(ex, outer=None):
    domain = ex.domain
    if outer is not None and domain.kind != 0:
        domain = DomainSpec.orthant(domain.dim, outer=outer)
    return domain, ex.covariance


def warm(measure, model, x0):
    sde.simulate(measure, model, x0, SimConfig(0.01, 1e-3, 4, seed=1))


# ---------------------------------------------------------------- 1-4: deterministic solvers

def test_c1_regular_sturm_liouville():
    c = CovarianceField.from_expression("1", (0.0, 0.0))
    eigen1d.solve_principal_eigenpair(c, (0.0, 0.5))
    with Clock() as clk:
        lam = eigen1d.solve_principal_eigenpair(c, (0.0, 1.0)).lam
    rel = abs(lam - math.pi ** 2 / 2) / (math.pi ** 2 / 2)
    assert record(1, rel <= 1e-6, f"c=1 on (0,1): lambda={lam:.10f}, rel err {rel:.1e}", clk.elapsed, 1.0)


@pytest.mark.parametrize("text,lam_ref,eta_ref", [
    ("x*(1-x)", 1.0, lambda x: x * (1 - x) / 0.25),
    ("x^2*(1-x)^2", 0.125, lambda x: np.sqrt(x * (1 - x)) / 0.5),
], ids=["wright-fisher", "quadratic"])
def test_c2_singular_solver(text, lam_ref, eta_ref):
    c = CovarianceField.from_expression(text)
    with Clock() as clk:
        pair = eigen1d.solve_principal_eigenpair(c, (0.0, 1.0), x0=0.5)
    x = np.linspace(0.1, 0.9, 801)
    err_eta = float(np.max(np.abs(pair.eta(x) - eta_ref(x))))
    err_lam = abs(pair.lam - lam_ref)
    ok = err_lam <= 1e-3 and err_eta <= 1e-3
    assert record(2, ok, f"c={text}: lambda={pair.lam:.6f} (err {err_lam:.1e}), eta err {err_eta:.1e}",
                  clk.elapsed, 10.0)


def test_c3_classification():
    got, want = {}, {}
    for name in ("ex-6.1.1", "ex-6.1.2", "ex-6.1.3"):
        ex = closedform.get_example(name)
        iv = tuple(ex.domain.params)
        got[name, "integral"] = eigen1d.integral_test(ex.covariance, iv)
        got[name, "pointwise"] = eigen1d.pointwise_test(ex.covariance, iv, 512)[0]
        if name != "ex-6.1.3":
            got[name, "recurrence"] = eigen1d.recurrence_class(ex.pair, ex.covariance, iv)
    want = {("ex-6.1.1", "integral"): "positive", ("ex-6.1.3", "integral"): "zero",
            ("ex-6.1.1", "pointwise"): "positive", ("ex-6.1.3", "pointwise"): "zero",
            ("ex-6.1.1", "recurrence"): "positive_recurrent", ("ex-6.1.2", "recurrence"): "null_recurrent"}
    bad = {k: got[k] for k in want if got[k] != want[k]}
    assert record(3, not bad, f"{len(want)} categorical checks" + (f", mismatches {bad}" if bad else ""))


def test_c4_closed_forms():
    a_exact = [[Fraction(5, 3), 3, 0], [3, 7, 0], [0, 0, 1]]
    a_hat = [a_exact[i][i] for i in range(3)]
    sol = frac_solve(a_exact, a_hat)
    b_oracle = [float(v / 2) for v in sol]
    lam_oracle = float(sum(a * v for a, v in zip(a_hat, sol)) / 8)
    cal = [[a_exact[i][j] - a_exact[i][2] - a_exact[j][2] + a_exact[2][2] for j in range(2)] for i in range(2)]
    cal_hat = [cal[0][0], cal[1][1]]
    cal_sol = frac_solve(cal, cal_hat)
    bs_oracle = [float(v / 2) for v in cal_sol]
    lams_oracle = float(sum(a * v for a, v in zip(cal_hat, cal_sol)) / 8)
    rng = np.random.default_rng(0)
    with Clock() as clk:
        g = GBMSpec(closedform.SEC_621_A)
        gp = gbm_eigenpair(g)
        s = SimplexSpec(closedform.SEC_621_A)
        sp = simplex_eigenpair(s)
        pts = 0.5 + 1.5 * rng.random((1000, 3))
        res_g = pde_residual(gp, g.covariance(), pts, h=1e-4)
        bary = rng.dirichlet(np.ones(3), size=4000)[:, :2]
        bary = bary[(bary.min(axis=1) > 0.05) & (1 - bary.sum(axis=1) > 0.05)][:1000]
        res_s = pde_residual(sp, s.covariance(), bary, h=1e-4)
    b_err = float(np.max(np.abs(g.B_hat - b_oracle)))
    lam_err = abs(gp.lam - lam_oracle)
    bs_err = float(np.max(np.abs(s.B_hat - bs_oracle)))
    lams_err = abs(sp.lam - lams_oracle)
    ok = (max(b_err, lam_err, bs_err, lams_err) <= 1e-12 and b_oracle == [-1.75, 1.25, 0.5]
          and bs_oracle == [-1.0, 1.0] and abs(lams_oracle - 4 / 3) < 1e-15 and abs(lam_oracle - 19 / 12) < 1e-15
          and res_g < 1e-5 and res_s < 1e-5)
    assert record(4, ok, f"gbm B/lambda err {b_err:.0e}/{lam_err:.0e}, simplex {bs_err:.0e}/{lams_err:.0e}, "
                         f"residuals {res_g:.1e}/{res_s:.1e}", clk.elapsed, 5.0)


# ---------------------------------------------------------------- 5-6: exit probabilities

@pytest.mark.slow
def test_c5_brownian_exit_probability():
    model = (DomainSpec.interval(0.0, 1e6), CovarianceField.from_expression("1", (0.0, 0.0)))
    warm(Q(), model, 1.0)
    with Clock() as clk:
        ens = sde.simulate(Q(), model, 1.0, SimConfig(1.0, 1e-4, 100_000, seed=0, record_every=0))
        p, se = sde.exit_probability(ens, 1.0)
    ref = 2 * stats.norm.cdf(1.0) - 1
    ok = abs(p - ref) <= 3 * se
    assert record(5, ok, f"survival {p:.5f} vs {ref:.6f}, |z|={abs(p - ref) / se:.2f}", clk.elapsed, 60.0)


@pytest.mark.slow
def test_c6_exit_identity():
    ex = closedform.get_example("ex-6.1.1")
    model = model_of(ex)
    sde.exit_identity_check(model, ex.pair, 0.5, 0.01, SimConfig(0.01, 1e-3, 4))
    with Clock() as clk:
        res = sde.exit_identity_check(model, ex.pair, 0.5, 2.0, SimConfig(2.0, 2e-4, 100_000, seed=0))
    z = abs(res.lhs - res.rhs) / res.combined_se
    assert record(6, res.passed, f"lhs {res.lhs:.5f}, rhs {res.rhs:.5f}, |z|={z:.2f}", clk.elapsed, 120.0)


# ---------------------------------------------------------------- 7-9: growth

def star_growth(ex, model, x0, T=200.0, n=1000):
    warm(Pstar(ex.pair), model, x0)
    with Clock() as clk:
        ens = sde.simulate(Pstar(ex.pair), model, x0, SimConfig(T, 1e-3, n, seed=0, record_every=0))
        rep = growth.growth_rate(growth.wealth_star(ex.pair, ens))
    return rep, clk.elapsed


@pytest.mark.slow
def test_c7a_growth_wright_fisher():
    ex = closedform.get_example("ex-6.1.1")
    rep, elapsed = star_growth(ex, model_of(ex), 0.5)
    share = float(np.mean(rep.rates >= 0.9))
    ok = share >= 0.95 and 0.9 <= rep.g_hat <= 1.1
    assert record(7, ok, f"ex-6.1.1: share >= 0.9 is {share:.3f}, g_hat {rep.g_hat:.3f}", elapsed, 120.0)


@pytest.mark.slow
@pytest.mark.xfail(strict=True, reason="at t=200 (1/t) log eta(X_t) still has spread about 0.13, so the "
                   "0.95-quantile rate sits about 0.2 below lambda*; the band of 0.1 is not met")
def test_c7b_growth_gbm():
    ex = closedform.get_example("gbm-6.2.1")
    rep, elapsed = star_growth(ex, model_of(ex, outer=math.inf), ex.pair.x0)
    lam = ex.pair.lam
    share = float(np.mean(rep.rates >= lam - 0.1))
    ok = share >= 0.95 and abs(rep.g_hat - lam) <= 0.1
    assert record(7, ok, f"gbm-6.2.1: share >= lambda-0.1 is {share:.3f}, g_hat {rep.g_hat:.3f} "
                         f"vs lambda {lam:.4f}", elapsed, 120.0)


def test_c8_numeraire():
    ex = closedform.get_example("ex-6.1.1")
    model = model_of(ex)
    warm(Pstar(ex.pair), model, 0.5)
    details, oks = [], []
    with Clock() as clk:
        for label, theta in (("zero", growth.theta_zero(1)), ("proportion 1/2", growth.theta_proportion([0.5]))):
            res = growth.numeraire_check(ex.pair, theta, SimConfig(1.0, 1e-3, 10_000, seed=0), model)
            oks.append(res.monotone_pass)
            details.append(f"{label}: worst excess {res.worst_excess:.2e}")
    assert record(8, all(oks), "; ".join(details), clk.elapsed, 60.0)


def test_c9_arbitrage_convergence():
    growth.arbitrage_convergence(0.01, [4.0], SimConfig(0.01, 1e-3, 4))
    with Clock() as clk:
        rep = growth.arbitrage_convergence(1.0, [4.0, 16.0, 64.0, 256.0], SimConfig(1.0, 1e-3, 1000, seed=0))
    med = [r.median_sup for r in rep.rows]
    ok = rep.decreasing("median_sup") and rep.decreasing("mean_abs_z")
    assert record(9, ok, "medians " + ", ".join(f"{m:.4f}" for m in med), clk.elapsed, 60.0)


# ---------------------------------------------------------------- 10: Hopf statistic

@pytest.mark.xfail(strict=True, reason="the sampled limsup/liminf of q - lambda* settle near (1, -1/3), "
                   "not the quoted (0, -2/3)")
def test_c10_hopf_statistic():
    ex = closedform.get_example("ex-6.1.5")
    lo, hi = closedform.hopf_statistic(ex.pair, ex.covariance, ex.domain, 30, sample=200_000)
    up, down = hi - ex.pair.lam, lo - ex.pair.lam
    ok = abs(up) <= 1e-2 and abs(down + 2 / 3) <= 1e-2
    assert record(10, ok, f"limsup {up:.4f}, liminf {down:.4f} (target 0, -2/3)")


# ---------------------------------------------------------------- 11: property suites and determinism

def test_c11a_determinism_across_workers(tmp_path):
    texts = []
    for threads in (1, 4, 8):
        cfg = cli.ScenarioConfig(kind="simulate", example="gbm-6.2.1", t=1.0, dt=1e-3, n_paths=256, seed=2024,
                                 threads=threads, record_every=50)
        status, rep = cli.run(cfg)
        rep.pop("wall_clock_s")
        texts.append(cli.dumps(rep))
    ok = len(set(texts)) == 1
    assert record(11, ok, "simulate reports byte-identical across 1, 4, 8 workers")


@pytest.mark.slow
@pytest.mark.xfail(strict=True, reason="the wealth-integration bullet expects an error ratio near 1/2 per "
                   "halving of dt; the forward Ito sum gives about 0.71, so that invariant is a known failure")
def test_c11b_all_invariant_bullets():
    modules = sorted(str(p) for p in TESTS.glob("test_*.py") if p.name != Path(__file__).name)
    env = dict(os.environ)
    proc = subprocess.run([sys.executable, "-m", "pytest", "-m", "invariant", "-q", "-rfEx", "-p", "no:cacheprovider",
                           *modules], capture_output=True, text=True, env=env, cwd=TESTS.parent)
    tail = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else proc.stderr.strip()[-200:]
    ok = proc.returncode == 0 and "xfail" not in tail and "failed" not in tail
    assert record(11, ok, f"invariant suite: {tail}")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", *sys.argv[1:]]))
