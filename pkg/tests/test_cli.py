import csv
import json
import subprocess
import sys

import pytest

from robust_growth import cli


def run(capsys, *argv):
    status = cli.main(list(argv))
    out, err = capsys.readouterr()
    return status, out, err


def report(capsys, *argv):
    status, out, err = run(capsys, *argv)
    return status, json.loads(out), err


def header(path):
    with open(path) as fh:
        return next(csv.reader(fh))


SMALL = ("--n-paths", "200", "--t", "1", "--dt", "1e-2")


# ---------------------------------------------------------------- subcommands

def test_list_examples_plain(capsys):
    status, out, _ = run(capsys, "list-examples")
    lines = out.strip().splitlines()
    assert status == cli.EXIT_OK
    assert len(lines) == 8
    assert {ln.split()[0] for ln in lines} == set(cli_example_names())


def cli_example_names():
    from robust_growth.closedform import EXAMPLE_NAMES
    return EXAMPLE_NAMES


def test_list_examples_report(capsys, tmp_path):
    status, rep, _ = report(capsys, "list-examples", "--out", str(tmp_path))
    assert status == 0
    assert len(rep["results"]["examples"]) == 8
    assert (tmp_path / "list-examples.json").exists()


def test_verify_example(capsys):
    status, rep, _ = report(capsys, "verify-example", "gbm-6.2.1")
    assert status == cli.EXIT_OK
    assert rep["results"]["residual"] < 1e-5
    assert rep["gate"] == "pass" and rep["exit_status"] == 0


def test_eigen_inline(capsys, tmp_path):
    status, rep, _ = report(capsys, "eigen", "--c", "x*(1-x)", "--interval", "0", "1", "--out", str(tmp_path))
    assert status == 0
    assert rep["results"]["lambda"] == pytest.approx(1.0, abs=1e-3)
    assert header(tmp_path / "eigen-eta.csv") == ["x", "eta", "log_eta"]


def test_classify_zero(capsys):
    status, rep, _ = report(capsys, "classify", "--c", "x^3*(1-x)^3", "--interval", "0", "1")
    assert status == 0
    assert rep["results"]["lambda_sign"] == "zero"


def test_simulate_with_paths(capsys, tmp_path):
    status, rep, _ = report(capsys, "simulate", "--example", "ex-6.1.1", *SMALL, "--record-every", "10",
                            "--paths-csv", "--out", str(tmp_path))
    assert status == 0
    assert rep["results"]["ensemble"]["config"]["n_paths"] == 200
    assert header(tmp_path / "simulate-paths.csv") == ["path_id", "t", "x_1", "absorbed"]


def test_growth_sidecar(capsys, tmp_path):
    status, rep, _ = report(capsys, "growth", "--example", "ex-6.1.1", *SMALL, "--out", str(tmp_path))
    assert status == 0 and rep["gate"] is None
    assert rep["results"]["measure_class"] == "P*"
    assert header(tmp_path / "growth-gamma_curve.csv") == ["gamma", "fraction"]


def test_growth_gate_failure(capsys):
    # one unit of time is far too short for the empirical rate to sit within 1e-6 of lambda*
    status, rep, _ = report(capsys, "growth", "--example", "ex-6.1.1", *SMALL, "--band", "1e-6")
    assert status == cli.EXIT_GATE
    assert rep["gate"] == "fail" and rep["exit_status"] == 2


def test_numeraire(capsys, tmp_path):
    status, rep, _ = report(capsys, "numeraire", "--example", "ex-6.1.1", "--candidate", "proportion:0.5",
                            *SMALL, "--out", str(tmp_path))
    assert status == 0
    assert header(tmp_path / "numeraire-mean_ratio.csv") == ["t", "mean_ratio", "std_error"]


def test_arbitrage(capsys, tmp_path):
    status, rep, _ = report(capsys, "arbitrage", "--n-paths", "200", "--horizons", "4,64", "--out", str(tmp_path))
    assert status in (0, 2)
    assert [r["T"] for r in rep["results"]["rows"]] == [4.0, 64.0]
    assert header(tmp_path / "arbitrage-deviation.csv") == ["T", "median_sup", "p95_sup", "mean_abs_z", "se_abs_z"]


def test_robustness_sweep(capsys, tmp_path):
    status, rep, _ = report(capsys, "robustness-sweep", "--example", "ex-6.1.1", "--n-paths", "100", "--t", "5",
                            "--dt", "1e-2", "--drifts=pstar;-5*x", "--out", str(tmp_path))
    assert status in (0, 2)
    assert len(rep["results"]["rows"]) == 2
    assert [r["measure_class"] for r in rep["results"]["rows"]] == ["P*", cli.ASSUMED]
    assert header(tmp_path / "robustness-sweep-sweep.csv") == ["drift", "g_hat", "tight", "occupancy", "claim_holds"]


def test_user_drift_is_labelled_assumed(capsys):
    status, rep, _ = report(capsys, "simulate", "--example", "ex-6.1.1", *SMALL, "--measure", "drift",
                            "--drift", "0.5-x")
    assert status == 0
    assert rep["results"]["measure_class"] == "assumed-in-\u03a0*"


def test_report_fields(capsys):
    _, rep, _ = report(capsys, "eigen", "--example", "ex-6.1.1")
    assert set(rep) >= {"command", "inputs", "version", "results", "gate", "exit_status", "wall_clock_s"}
    assert rep["inputs"]["seed"] == 0


# ---------------------------------------------------------------- errors

@pytest.mark.parametrize("argv,module", [
    (["verify-example", "nope"], "[closedform]"),
    (["eigen", "--c", "x*(1-x)"], "[cli]"),
    (["eigen", "--c", "x*(1-", "--interval", "0", "1"], "[expr]"),
    (["simulate", "--example", "ex-6.1.1", "--dt", "0"], "[sde]"),
    (["numeraire", "--example", "ex-6.1.1", "--candidate", "bogus"], "[cli]"),
    (["eigen", "--example", "ex-6.1.1", "--seed", "-1"], "[cli]"),
    (["eigen", "--no-such-flag"], "[cli]"),
])
@pytest.mark.invariant
def test_errors_name_the_module(capsys, argv, module):
    status, _, err = run(capsys, *argv)
    assert status == cli.EXIT_ERROR
    assert err.startswith("error:") or "error: [" in err
    assert module in err


def test_unknown_example_lists_known_names(capsys):
    status, _, err = run(capsys, "verify-example", "no-such-example")
    assert status == 1
    assert "known" in err and "[closedform]" in err and "gbm-6.2.1" in err


def test_bad_output_directory(capsys, tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    status, _, err = run(capsys, "list-examples", "--out", str(blocker / "sub"))
    assert status == 1 and "[cli]" in err


# ---------------------------------------------------------------- config handling

def test_config_file_and_precedence(capsys, tmp_path):
    cfg = tmp_path / "run.ini"
    cfg.write_text("[scenario]\nexample = ex-6.1.1\n[sim]\nseed = 42\nn_paths = 50\nt = 1\ndt = 0.01\n")
    status, rep, _ = report(capsys, "simulate", "--config", str(cfg))
    assert status == 0
    assert rep["inputs"]["seed"] == 42 and rep["inputs"]["example"] == "ex-6.1.1"
    assert rep["results"]["ensemble"]["config"]["n_paths"] == 50
    _, rep, _ = report(capsys, "simulate", "--config", str(cfg), "--seed", "7")
    assert rep["inputs"]["seed"] == 7


@pytest.mark.parametrize("text,needle", [
    ("[nonsense]\nx = 1\n", "unknown config section"),
    ("[sim]\nbogus = 1\n", "unknown key"),
    ("[sim]\nn_paths = many\n", "n_paths"),
    ("[scenario]\nkind = growth\n", "kind"),
])
def test_config_errors(capsys, tmp_path, text, needle):
    cfg = tmp_path / "bad.ini"
    cfg.write_text(text)
    status, _, err = run(capsys, "simulate", "--config", str(cfg))
    assert status == 1 and needle in err and "[cli]" in err


def test_missing_config_file(capsys, tmp_path):
    status, _, err = run(capsys, "eigen", "--config", str(tmp_path / "absent.ini"))
    assert status == 1 and "cannot read" in err


def test_threads_environment_fallback(monkeypatch):
    parser = cli.build_parser()
    monkeypatch.setenv("ROBUST_GROWTH_THREADS", "3")
    assert cli.resolve_config(parser.parse_args(["eigen", "--example", "ex-6.1.1"])).threads == 3
    assert cli.resolve_config(parser.parse_args(["eigen", "--example", "ex-6.1.1", "--threads", "2"])).threads == 2


# ---------------------------------------------------------------- invariants

@pytest.mark.invariant
def test_reports_identical_apart_from_wall_clock(capsys, tmp_path):
    argv = ["simulate", "--example", "ex-6.1.2", *SMALL, "--seed", "5"]
    texts = []
    for threads in ("1", "4"):
        out = tmp_path / threads
        status, _, _ = run(capsys, *argv, "--threads", threads, "--out", str(out))
        assert status == 0
        rep = json.loads((out / "simulate.json").read_text())
        rep.pop("wall_clock_s")
        rep.pop("sidecars", None)
        texts.append(cli.dumps(rep))
    assert texts[0] == texts[1]


def test_console_script_exit_status():
    proc = subprocess.run([sys.executable, "-m", "robust_growth.cli", "verify-example", "missing"],
                          capture_output=True, text=True)
    assert proc.returncode == 1
    assert "[closedform]" in proc.stderr


def test_version_flag(capsys):
    assert cli.main(["--version"]) == 0
    assert cli.__version__ in capsys.readouterr().out
