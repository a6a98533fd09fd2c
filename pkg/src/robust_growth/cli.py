"""Command-line front end: ``robust-growth <subcommand> [options]``.

Every run prints a JSON report (inputs, version, wall-clock, results) and,
with ``--out DIR``, also writes it to ``DIR/<subcommand>.json`` together with
CSV sidecars.  Exit status: 0 when the run passes its gate (or has none), 2
when a gate fails, 1 on error.

Options may also come from ``--config FILE``, an INI file whose keys mirror
the long option names in snake case; command-line values win.  See the
README for the schema.
"""

from __future__ import annotations

import os

os.environ.setdefault("NUMBA_NUM_THREADS", "8")

import argparse  # noqa: E402
import configparser  # noqa: E402
import csv  # noqa: E402
import json  # noqa: E402
import math  # noqa: E402
import subprocess  # noqa: E402
import sys  # noqa: E402
import time  # noqa: E402
from dataclasses import asdict, dataclass, is_dataclass  # noqa: E402
from pathlib import Path  # noqa: E402

import numpy as np  # noqa: E402

from . import __version__  # noqa: E402
from .errors import PreconditionError, RobustGrowthError  # noqa: E402
from .expr import ExpressionError  # noqa: E402

MODULE = "cli"

COMMANDS = ("eigen", "classify", "simulate", "growth", "numeraire", "arbitrage", "verify-example",
            "robustness-sweep", "list-examples")
EXIT_OK, EXIT_ERROR, EXIT_GATE = 0, 1, 2

# config keys per section, with their types
SCHEMA = {
    "scenario": {"kind": str, "example": str, "c": str, "interval": str, "half_line": bool, "x0": str},
    "sim": {"t": float, "dt": float, "n_paths": int, "seed": int, "absorb_level": int,
            "record_every": int, "max_depth": int, "threads": int, "measure": str, "drift": str},
    "solver": {"tol": float, "epsilons": str, "grid_size": int},
    "growth": {"band": float, "candidate": str, "horizons": str, "arbitrage_t": float, "drifts": str,
               "compact_level": int},
    "output": {"out": str, "paths_csv": bool},
}


@dataclass
class ScenarioConfig:
    """Resolved inputs of one run.  ``seed`` always has a value."""

    kind: str
    example: str | None = None
    c: str | None = None
    interval: tuple | None = None
    half_line: bool = False
    x0: list | None = None
    t: float | None = None
    dt: float | None = None
    n_paths: int | None = None
    seed: int = 0
    absorb_level: int | None = None
    record_every: int | None = None
    max_depth: int | None = None
    threads: int | None = None
    measure: str = "pstar"
    drift: str | None = None
    tol: float = 1e-10
    epsilons: tuple | None = None
    grid_size: int = 512
    band: float | None = None
    candidate: str = "zero"
    horizons: tuple = (4.0, 16.0, 64.0, 256.0)
    arbitrage_t: float = 1.0
    drifts: tuple = ()
    compact_level: int = 4
    out: str | None = None
    paths_csv: bool = False

    def echo(self):
        d = asdict(self)
        d.pop("threads")  # worker count never changes results
        d.pop("out")
        return d


def _floats(text):
    return tuple(float(v) for v in str(text).replace(",", " ").split())


def version_string():
    """``v<version>-g<commit>[-dirty]`` inside a git checkout, ``v<version>`` otherwise."""
    here = Path(__file__).resolve().parent
    try:
        desc = subprocess.run(["git", "describe", "--always", "--dirty", "--abbrev=7"], cwd=here,
                              capture_output=True, text=True, timeout=5)
    except (OSError, subprocess.SubprocessError):
        return f"v{__version__}"
    if desc.returncode != 0 or not desc.stdout.strip():
        return f"v{__version__}"
    return f"v{__version__}-g{desc.stdout.strip()}"


# ---------------------------------------------------------------- parsing

class _Parser(argparse.ArgumentParser):
    """Usage errors exit with the error status 1 (argparse uses 2, our gate-failure status)."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"error: [{MODULE}] {message}\n")


def build_parser():
    common = _Parser(add_help=False)
    common.add_argument("--config", help="INI file with default values")
    common.add_argument("--seed", type=int, help="64-bit seed (default 0)")
    common.add_argument("--threads", type=int, help="worker threads (falls back to ROBUST_GROWTH_THREADS)")
    common.add_argument("--out", help="directory for the JSON report and CSV sidecars")

    model = _Parser(add_help=False)
    model.add_argument("--example", help="registry name, see list-examples")
    model.add_argument("--c", help="one-dimensional covariance expression in x, e.g. 'x*(1-x)'")
    model.add_argument("--interval", nargs=2, type=float, metavar=("ALPHA", "BETA"))
    model.add_argument("--half-line", action="store_true", default=None, help="state space (0, inf) for --c")
    model.add_argument("--x0", help="starting point, comma separated for several coordinates")

    sim = _Parser(add_help=False)
    sim.add_argument("--t", type=float, help="time horizon")
    sim.add_argument("--dt", type=float, help="time step")
    sim.add_argument("--n-paths", type=int)
    sim.add_argument("--absorb-level", type=int)
    sim.add_argument("--record-every", type=int)
    sim.add_argument("--max-depth", type=int)

    parser = _Parser(prog="robust-growth", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="kind", required=True)

    p = sub.add_parser("eigen", parents=[common, model], help="principal eigenpair of a 1-D model")
    p.add_argument("--tol", type=float)
    p.add_argument("--epsilons", help="truncation distances, comma separated")

    p = sub.add_parser("classify", parents=[common, model], help="sign of lambda* and recurrence class")
    p.add_argument("--grid-size", type=int)

    p = sub.add_parser("simulate", parents=[common, model, sim], help="simulate an ensemble")
    p.add_argument("--measure", choices=("q", "pstar", "drift"))
    p.add_argument("--drift", help="drift expression in x for --measure drift")
    p.add_argument("--paths-csv", action="store_true", default=None, help="write every recorded state")

    p = sub.add_parser("growth", parents=[common, model, sim], help="growth rate of V* under a measure")
    p.add_argument("--measure", choices=("q", "pstar", "drift"))
    p.add_argument("--drift")
    p.add_argument("--band", type=float, help="gate: g_hat within lambda* +- band")

    p = sub.add_parser("numeraire", parents=[common, model, sim], help="mean V/V* under the tilted measure")
    p.add_argument("--candidate", help="zero | star | proportion:<p> | constant:<k>")

    p = sub.add_parser("arbitrage", parents=[common, sim], help="V^T against V* for Brownian motion on (0, inf)")
    p.add_argument("--arbitrage-t", type=float, help="time up to which deviations are measured")
    p.add_argument("--horizons", help="comma separated horizons T")
    p.add_argument("--measure", choices=("q", "pstar"))

    p = sub.add_parser("verify-example", parents=[common], help="pde residual of a registry entry")
    p.add_argument("name")

    p = sub.add_parser("robustness-sweep", parents=[common, model, sim], help="growth of V* under several drifts")
    p.add_argument("--drifts", help="semicolon separated drift expressions; 'pstar' for the tilted drift")
    p.add_argument("--compact-level", type=int)

    sub.add_parser("list-examples", parents=[common], help="registry listing")
    return parser


def _read_config(path):
    cp = configparser.ConfigParser()
    if not cp.read(path):
        raise PreconditionError(f"cannot read config file {path}", MODULE)
    values = {}
    for section in cp.sections():
        if section not in SCHEMA:
            raise PreconditionError(f"unknown config section [{section}]; known: {', '.join(SCHEMA)}", MODULE)
        for key, raw in cp.items(section):
            if key not in SCHEMA[section]:
                raise PreconditionError(f"unknown key {key!r} in [{section}]", MODULE)
            typ = SCHEMA[section][key]
            try:
                values[key] = cp.getboolean(section, key) if typ is bool else typ(raw)
            except ValueError as exc:
                raise PreconditionError(f"[{section}] {key}: {exc}", MODULE) from None
    return values


def resolve_config(args) -> ScenarioConfig:
    """Merge config file values with command-line options (the latter win)."""
    values = _read_config(args.config) if getattr(args, "config", None) else {}
    if values.pop("kind", args.kind) != args.kind:
        raise PreconditionError("config kind differs from the subcommand", MODULE)
    for key, v in vars(args).items():
        if key in ("config", "kind", "name") or v is None:
            continue
        values[key] = v
    if getattr(args, "name", None):
        values["example"] = args.name
    if isinstance(values.get("interval"), str):
        values["interval"] = _floats(values["interval"])
    if values.get("interval") is not None:
        values["interval"] = tuple(float(v) for v in values["interval"])
    if values.get("x0") is not None:
        values["x0"] = list(_floats(values["x0"]))
    if isinstance(values.get("epsilons"), str):
        values["epsilons"] = _floats(values["epsilons"])
    if isinstance(values.get("horizons"), str):
        values["horizons"] = _floats(values["horizons"])
    if isinstance(values.get("drifts"), str):
        values["drifts"] = tuple(s.strip() for s in values["drifts"].split(";") if s.strip())
    if values.get("threads") is None and os.environ.get("ROBUST_GROWTH_THREADS"):
        values["threads"] = int(os.environ["ROBUST_GROWTH_THREADS"])
    cfg = ScenarioConfig(kind=args.kind, **values)
    validate(cfg)
    return cfg


def validate(cfg: ScenarioConfig):
    if not 0 <= cfg.seed < 2 ** 64:
        raise PreconditionError("seed must fit in 64 unsigned bits", MODULE)
    if cfg.threads is not None and cfg.threads < 1:
        raise PreconditionError("threads must be >= 1", MODULE)
    if cfg.example and cfg.c:
        raise PreconditionError("give either an example name or --c, not both", MODULE)
    if cfg.c and cfg.interval is None and not cfg.half_line:
        raise PreconditionError("--c needs --interval ALPHA BETA or --half-line", MODULE)
    if cfg.interval is not None and len(cfg.interval) != 2:
        raise PreconditionError("interval needs two numbers", MODULE)
    if cfg.tol <= 0:
        raise PreconditionError("tol must be positive", MODULE)
    if cfg.band is not None and cfg.band <= 0:
        raise PreconditionError("band must be positive", MODULE)


# ---------------------------------------------------------------- models

@dataclass
class Model:
    name: str
    domain: object
    cov: object
    pair: object | None
    x0: list


def resolve_model(cfg: ScenarioConfig, need_pair=False) -> Model:
    from .closedform import get_example
    from .model import CovarianceField, DomainSpec

    if cfg.c:
        cov = CovarianceField.from_expression(cfg.c)
        if cfg.half_line:
            domain = DomainSpec.orthant(1)
            x0 = cfg.x0 or [1.0]
        else:
            domain = DomainSpec.interval(*cfg.interval)
            x0 = cfg.x0 or [0.5 * (cfg.interval[0] + cfg.interval[1])]
        pair = None
        if need_pair:
            if cfg.half_line:
                raise PreconditionError("eigenpairs of inline models need a bounded --interval", MODULE)
            from .eigen1d import solve_principal_eigenpair
            pair = solve_principal_eigenpair(cov, cfg.interval, epsilons=cfg.epsilons, tol=cfg.tol, x0=x0[0])
        return Model(cfg.c, domain, cov, pair, list(x0))
    if not cfg.example:
        raise PreconditionError("no model given: use --example NAME or --c EXPR", MODULE)
    ex = get_example(cfg.example)
    x0 = cfg.x0 or ex.pair.x0.tolist()
    return Model(ex.name, ex.domain, ex.covariance, ex.pair, list(x0))


def _sim_config(cfg: ScenarioConfig, T, dt, n_paths, record_every=None):
    from .sde import SimConfig

    return SimConfig(T=cfg.t if cfg.t is not None else T, dt=cfg.dt if cfg.dt is not None else dt,
                     n_paths=cfg.n_paths if cfg.n_paths is not None else n_paths, seed=cfg.seed,
                     absorb_level=cfg.absorb_level,
                     record_every=cfg.record_every if cfg.record_every is not None else record_every,
                     max_depth=cfg.max_depth)


def _measure(cfg: ScenarioConfig, m: Model):
    from .model import DriftField
    from .sde import Drift, Pstar, Q

    if cfg.measure == "q":
        return Q()
    if cfg.measure == "pstar":
        if m.pair is None:
            raise PreconditionError("the tilted measure needs an eigenpair", MODULE)
        return Pstar(m.pair)
    if not cfg.drift:
        raise PreconditionError("--measure drift needs --drift EXPR", MODULE)
    if m.domain.dim != 1:
        raise PreconditionError("drift expressions are one-dimensional", MODULE)
    return Drift(DriftField.from_expression(cfg.drift))


# ---------------------------------------------------------------- commands

# membership of a drift measure in the robust class cannot be decided numerically
ASSUMED = "assumed-in-Π*"


def _measure_class(cfg: ScenarioConfig):
    return {"q": "Q", "pstar": "P*"}.get(cfg.measure, ASSUMED)


class Outcome:
    def __init__(self, results, passed=None, sidecars=None):
        self.results = results
        self.passed = passed
        self.sidecars = sidecars or {}


def cmd_list_examples(cfg):
    from .closedform import list_examples

    rows = [{"name": n, "description": d, "anchor": a} for n, d, a in list_examples()]
    return Outcome({"examples": rows})


def cmd_verify_example(cfg):
    from .closedform import get_example

    res = get_example(cfg.example).verify()
    return Outcome(res, res["pass"])


def cmd_eigen(cfg):
    m = resolve_model(cfg, need_pair=True)
    pair = m.pair
    res = {"model": m.name, "lambda": pair.lam, "x0": pair.x0.tolist(), "info": _jsonable(pair.info)}
    if m.domain.dim == 1 and m.domain.kind == 0:
        a, b = m.domain.params
        xs = np.linspace(a, b, 203)[1:-1]
        log_eta = pair.log_eta(xs)
        rows = [(float(x), float(math.exp(v)), float(v)) for x, v in zip(xs, log_eta)]
        return Outcome(res, None, {"eta": (("x", "eta", "log_eta"), rows)})
    return Outcome(res)


def cmd_classify(cfg):
    from .eigen1d import classify

    m = resolve_model(cfg)
    if m.domain.dim != 1 or m.domain.kind != 0:
        raise PreconditionError("classification needs a bounded one-dimensional interval", MODULE)
    rep = classify(m.cov, m.domain.params, x0=m.x0[0], grid_size=cfg.grid_size, pair=m.pair if cfg.example else None)
    return Outcome(rep.as_dict())


def cmd_simulate(cfg):
    from .sde import exit_probability, simulate

    m = resolve_model(cfg, need_pair=cfg.measure == "pstar")
    sc = _sim_config(cfg, 1.0, 1e-3, 1000)
    ens = simulate(_measure(cfg, m), (m.domain, m.cov), m.x0, sc, cfg.threads)
    p, se = exit_probability(ens, ens.horizon)
    res = {"model": m.name, "measure_class": _measure_class(cfg), "ensemble": ens.summary(),
           "survival": {"estimate": p, "std_error": se}}
    side = {}
    if cfg.paths_csv:
        side["paths"] = ens
    return Outcome(res, None, side)


def cmd_growth(cfg):
    from .growth import growth_rate, wealth_star
    from .sde import simulate

    m = resolve_model(cfg, need_pair=True)
    sc = _sim_config(cfg, 200.0, 1e-3, 1000, record_every=0)
    ens = simulate(_measure(cfg, m), (m.domain, m.cov), m.x0, sc, cfg.threads)
    rep = growth_rate(wealth_star(m.pair, ens))
    res = {"model": m.name, "lambda": m.pair.lam, "measure_class": _measure_class(cfg),
           "ensemble": ens.summary(), "growth": rep.as_dict(),
           "share_at_lambda_minus_band": None}
    passed = None
    if cfg.band is not None:
        passed = bool(math.isfinite(rep.g_hat) and abs(rep.g_hat - m.pair.lam) <= cfg.band)
        res["share_at_lambda_minus_band"] = float(np.mean(rep.rates >= m.pair.lam - cfg.band))
    return Outcome(res, passed, {"gamma_curve": (("gamma", "fraction"), rep.curve_rows())})


def _candidate(text, dim):
    from .growth import theta_constant, theta_proportion, theta_zero

    kind, _, arg = text.partition(":")
    if kind == "zero":
        return theta_zero(dim)
    if kind == "star":
        return "star"
    if kind == "proportion":
        return theta_proportion(_floats(arg or "0.5"))
    if kind == "constant":
        return theta_constant(_floats(arg or "1"))
    raise PreconditionError(f"unknown candidate {text!r}; use zero, star, proportion:<p> or constant:<k>", MODULE)


def cmd_numeraire(cfg):
    from .growth import numeraire_check

    m = resolve_model(cfg, need_pair=True)
    sc = _sim_config(cfg, 1.0, 1e-3, 10_000)
    res = numeraire_check(m.pair, _candidate(cfg.candidate, m.domain.dim), sc, (m.domain, m.cov), m.x0,
                          threads=cfg.threads)
    rows = [(float(t), float(v), float(s)) for t, v, s in zip(res.times, res.mean_ratio, res.std_error)]
    return Outcome({"model": m.name, "candidate": cfg.candidate, **res.as_dict()}, res.monotone_pass,
                   {"mean_ratio": (("t", "mean_ratio", "std_error"), rows)})


def cmd_arbitrage(cfg):
    from .growth import arbitrage_convergence

    sc = _sim_config(cfg, cfg.arbitrage_t, 1e-3, 1000)
    rep = arbitrage_convergence(cfg.arbitrage_t, cfg.horizons, sc, measure=cfg.measure if cfg.measure != "drift" else "pstar",
                                threads=cfg.threads)
    ok = rep.decreasing("median_sup") and rep.decreasing("mean_abs_z")
    rows = [(r.T, r.median_sup, r.p95_sup, r.mean_abs_z, r.se_abs_z) for r in rep.rows]
    res = rep.as_dict()
    res.update({"median_decreasing": rep.decreasing("median_sup"), "z_decreasing": rep.decreasing("mean_abs_z")})
    return Outcome(res, ok, {"deviation": (("T", "median_sup", "p95_sup", "mean_abs_z", "se_abs_z"), rows)})


def cmd_robustness_sweep(cfg):
    from .growth import robustness_sweep
    from .model import DriftField
    from .sde import Pstar

    m = resolve_model(cfg, need_pair=True)
    texts = cfg.drifts or (("pstar", "5*(0.5-x)", "-5*x") if m.domain.dim == 1 else ("pstar",))
    drifts = []
    for t in texts:
        if t == "pstar":
            drifts.append(Pstar(m.pair))
        elif m.domain.dim != 1:
            raise PreconditionError("drift expressions are one-dimensional", MODULE)
        else:
            drifts.append(DriftField.from_expression(t))
    sc = _sim_config(cfg, 50.0, 1e-3, 200)
    rows = robustness_sweep(m.pair, (m.domain, m.cov), drifts, sc, m.x0, compact_level=cfg.compact_level,
                            threads=cfg.threads)
    out = [{**r.as_dict(), "measure_class": "P*" if t == "pstar" else ASSUMED} for t, r in zip(texts, rows)]
    ok = all(r.claim_holds is not False for r in rows)
    return Outcome({"model": m.name, "lambda": m.pair.lam, "rows": out}, ok,
                   {"sweep": (("drift", "g_hat", "tight", "occupancy", "claim_holds"),
                              [(r.drift, r.g_hat, r.tight, r.occupancy, r.claim_holds) for r in rows])})


HANDLERS = {
    "eigen": cmd_eigen,
    "classify": cmd_classify,
    "simulate": cmd_simulate,
    "growth": cmd_growth,
    "numeraire": cmd_numeraire,
    "arbitrage": cmd_arbitrage,
    "verify-example": cmd_verify_example,
    "robustness-sweep": cmd_robustness_sweep,
    "list-examples": cmd_list_examples,
}


# ---------------------------------------------------------------- reports

def _jsonable(obj):
    if is_dataclass(obj) and not isinstance(obj, type):
        return _jsonable(asdict(obj))
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def _write_sidecars(out: Path, kind, sidecars):
    written = []
    for name, content in sidecars.items():
        path = out / f"{kind}-{name}.csv"
        if hasattr(content, "write_csv"):
            content.write_csv(path)
        else:
            header, rows = content
            with open(path, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(header)
                for row in rows:
                    w.writerow(["" if isinstance(v, float) and not math.isfinite(v) else
                                (repr(v) if isinstance(v, float) else v) for v in row])
        written.append(path.name)
    return written


def run(cfg: ScenarioConfig):
    """Execute one scenario; returns ``(exit status, report dict)``."""
    from .sde import worker_threads

    start = time.perf_counter()
    with worker_threads(cfg.threads):
        outcome = HANDLERS[cfg.kind](cfg)
    status = EXIT_OK if outcome.passed in (None, True) else EXIT_GATE
    report = {
        "command": cfg.kind,
        "inputs": _jsonable(cfg.echo()),
        "version": version_string(),
        "results": _jsonable(outcome.results),
        "gate": None if outcome.passed is None else ("pass" if outcome.passed else "fail"),
        "exit_status": status,
        "sidecars": [],
    }
    if cfg.out:
        out = Path(cfg.out)
        out.mkdir(parents=True, exist_ok=True)
        report["sidecars"] = _write_sidecars(out, cfg.kind, outcome.sidecars)
    report["wall_clock_s"] = round(time.perf_counter() - start, 3)
    if cfg.out:
        with open(Path(cfg.out) / f"{cfg.kind}.json", "w") as fh:
            fh.write(dumps(report) + "\n")
    return status, report


def dumps(report):
    return json.dumps(report, indent=2, sort_keys=True, allow_nan=False)


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # usage errors, --help and --version
        return exc.code
    try:
        cfg = resolve_config(args)
        status, report = run(cfg)
    except RobustGrowthError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except ExpressionError as exc:
        print(f"error: [expr] {exc}", file=sys.stderr)
        return EXIT_ERROR
    except OSError as exc:
        print(f"error: [{MODULE}] {exc}", file=sys.stderr)
        return EXIT_ERROR
    if cfg.kind == "list-examples" and not cfg.out:
        for row in report["results"]["examples"]:
            print(f"{row['name']:<15} {row['description']}  ({row['anchor']})")
        return status
    print(dumps(report))
    return status


if __name__ == "__main__":
    sys.exit(main())
