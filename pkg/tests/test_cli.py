import json
import subprocess
import sys

import numpy as np
import pytest

from qmemc import __version__
from qmemc.cli import K_B, main
from qmemc.families import golden_mean
from qmemc.generator import save_machine


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    cap = capsys.readouterr()
    return code, cap.out, cap.err


def manifest(out):
    return json.loads((out / "manifest.json").read_text())


@pytest.fixture
def gm_file(tmp_path):
    path = tmp_path / "gm.json"
    save_machine(golden_mean(1, 1, 0.5), path)
    return path


@pytest.fixture
def markov_file(tmp_path):
    path = tmp_path / "m.json"
    path.write_text(json.dumps([[0.7, 0.3], [0.4, 0.6]]))
    return path


# -- analyze -------------------------------------------------------------------------


def test_analyze_family(capsys, tmp_path):
    out = tmp_path / "a"
    code, stdout, _ = run(capsys, "analyze", "--family", "golden-mean", "--R", 1, "--k", 1, "--p", 0.5, "--out", out)
    assert code == 0
    rep = json.loads((out / "report.json").read_text())
    for key in ("W_mu", "C_mu", "h_mu"):
        assert key in rep["classical"]
    for key in ("W_q", "e_q", "C_q"):
        assert key in rep["quantum"]
    assert all(p["phase"] == 0.0 for p in rep["phases"])
    assert "e_q" in stdout and (out / "report.txt").read_text() == stdout
    m = manifest(out)
    assert m["version"] == __version__ and m["command"] == "analyze"


def test_analyze_markov_efficiency(capsys, tmp_path, markov_file):
    out = tmp_path / "a"
    code, _, _ = run(capsys, "analyze", "--family", "markov", "--matrix", markov_file, "--out", out)
    assert code == 0
    rep = json.loads((out / "report.json").read_text())
    assert rep["quantum"]["e_q"] == pytest.approx(1.0, abs=1e-9)


def test_analyze_temperature_joules(capsys, tmp_path, gm_file):
    out = tmp_path / "a"
    assert run(capsys, "analyze", gm_file, "--temperature", 300, "--out", out)[0] == 0
    rep = json.loads((out / "report.json").read_text())
    scale = K_B * 300 * np.log(2)
    assert K_B == 1.380649e-23
    assert rep["joules"]["W_q_J"] == pytest.approx(rep["quantum"]["W_q"] * scale, rel=1e-12)
    assert rep["joules"]["W_mu_J"] == pytest.approx(rep["classical"]["W_mu"] * scale, rel=1e-12)
    assert run(capsys, "analyze", gm_file, "--temperature", -1, "--out", out)[0] == 2


def test_analyze_phases_file(capsys, tmp_path, gm_file):
    ph = tmp_path / "ph.json"
    ph.write_text(json.dumps([{"symbol": "1", "state": "A", "phase": 1.0}]))
    out = tmp_path / "a"
    assert run(capsys, "analyze", gm_file, "--phases", ph, "--out", out)[0] == 0
    rep = json.loads((out / "report.json").read_text())
    assert {"symbol": "1", "state": "A", "phase": 1.0} in rep["phases"]
    ph.write_text("[1.0]")
    assert run(capsys, "analyze", gm_file, "--phases", ph, "--out", out)[0] == 2


def test_input_errors_exit_2(capsys, tmp_path, gm_file):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"states": ["A"], "alphabet": ["0"], "transitions": [
        {"from": "A", "symbol": "0", "to": "A", "p": 0.5}]}))
    for argv in (
        ["analyze", bad],
        ["analyze", tmp_path / "missing.json"],
        ["analyze"],
        ["analyze", gm_file, "--family", "nemo"],
        ["analyze", "--family", "markov"],
        ["analyze", "--family", "golden-mean", "--p", 1.5],
        ["sweep", "--family", "nemo", "--n", 5],
        ["sweep", "--family", "nemo", "--n", 0, "--seed", 1],
        ["bogus"],
    ):
        code, _, err = run(capsys, *argv, "--out", tmp_path / "x") if argv[0] != "bogus" else run(capsys, *argv)
        assert code == 2, argv
        diag = json.loads(err.strip().splitlines()[-1])
        assert "error" in diag and "message" in diag


# -- sweep / chart / optimize ------------------------------------------------------------


def test_sweep_two_step_erase_rows(capsys, tmp_path):
    out = tmp_path / "s"
    code, _, _ = run(capsys, "sweep", "--family", "two-step-erase", "--n", 10000, "--seed", 1, "--out", out)
    assert code == 0
    lines = (out / "sweep.csv").read_text().splitlines()
    assert len(lines) == 10001
    m = manifest(out)
    assert m["seed"] == 1 and m["parameters"]["n"] == 10000


def test_sweep_nemo_range_and_rerun_identical(capsys, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    argv = ["sweep", "--family", "nemo", "--p", 0.5, "--n", 64, "--seed", 1]
    assert run(capsys, *argv, "--out", a)[0] == 0
    assert run(capsys, *argv, "--out", b, "--workers", 2)[0] == 0
    assert (a / "sweep.csv").read_bytes() == (b / "sweep.csv").read_bytes()
    assert (a / "manifest.json").read_bytes() == (b / "manifest.json").read_bytes()
    lines = (a / "sweep.csv").read_text().splitlines()
    col = lines[0].split(",").index("e_q")
    e = np.array([float(l.split(",")[col]) for l in lines[1:]])
    assert np.all(np.abs(e - 0.3885) <= 0.025)


def test_workers_env_override(capsys, tmp_path, monkeypatch):
    import qmemc.cli as cli

    seen = []
    real = cli.sweep

    def spy(G, n, seed, workers=1, **kw):
        seen.append(workers)
        return real(G, n, seed, 1, **kw)

    monkeypatch.setattr(cli, "sweep", spy)
    monkeypatch.setenv("QMEMC_WORKERS", "3")
    assert run(capsys, "sweep", "--family", "nemo", "--n", 4, "--seed", 1, "--workers", 1, "--out", tmp_path / "s")[0] == 0
    assert seen == [3]
    monkeypatch.setenv("QMEMC_WORKERS", "many")
    assert run(capsys, "sweep", "--family", "nemo", "--n", 4, "--seed", 1, "--out", tmp_path / "s")[0] == 2


def test_sweep_failure_rate_exit_3(capsys, tmp_path, monkeypatch):
    import qmemc.sweep as sw
    from qmemc.errors import NoConvergence

    def broken(G, ph):
        raise NoConvergence("forced")

    monkeypatch.setattr(sw, "solve_overlaps", broken)
    out = tmp_path / "s"
    code, _, err = run(capsys, "sweep", "--family", "nemo", "--n", 10, "--seed", 1, "--out", out)
    assert code == 3
    assert json.loads(err.strip())["error"] == "SolverFailureRate"
    assert (out / "sweep.csv").exists()  # records are kept even on failure
    assert run(capsys, "chart", "--family", "nemo", "--n", 10, "--seed", 1, "--out", tmp_path / "c")[0] == 3


def test_chart_from_input_and_fresh(capsys, tmp_path):
    s = tmp_path / "s"
    assert run(capsys, "sweep", "--family", "two-step-erase", "--n", 300, "--seed", 2, "--out", s)[0] == 0
    c1 = tmp_path / "c1"
    assert run(capsys, "chart", "--input", s / "sweep.csv", "--bins", 10, "--out", c1)[0] == 0
    rows = (c1 / "histogram.csv").read_text().splitlines()
    assert len(rows) == 101
    assert sum(int(r.split(",")[-1]) for r in rows[1:]) == 300
    assert (c1 / "chart.svg").read_text().startswith("<svg")
    c2 = tmp_path / "c2"
    assert run(capsys, "chart", "--family", "two-step-erase", "--n", 300, "--seed", 2, "--bins", 10, "--out", c2)[0] == 0
    assert (c1 / "histogram.csv").read_bytes() == (c2 / "histogram.csv").read_bytes()
    assert run(capsys, "chart", "--family", "nemo", "--n", 5, "--out", c2)[0] == 2  # no seed
    assert run(capsys, "chart", "--input", tmp_path / "nope.csv", "--out", c2)[0] == 2


def test_optimize(capsys, tmp_path, markov_file):
    out = tmp_path / "o"
    assert run(capsys, "optimize", "--family", "markov", "--matrix", markov_file, "--budget", 4, "--seed", 1, "--out", out)[0] == 0
    best = json.loads((out / "best.json").read_text())
    assert best["e_q"] == pytest.approx(1.0, abs=1e-9)
    assert manifest(out)["seed"] == 1


def test_optimize_no_compression_exit_3(capsys, tmp_path):
    from conftest import make_alternator

    path = tmp_path / "alt.json"
    save_machine(make_alternator(), path)
    assert run(capsys, "optimize", path, "--budget", 3, "--seed", 1, "--out", tmp_path / "o")[0] == 3


# -- oneshot / aep / family -----------------------------------------------------------------


def test_oneshot(capsys, tmp_path, gm_file):
    out = tmp_path / "o"
    code, stdout, _ = run(capsys, "oneshot", gm_file, "--epsilon", 0.001, "--out", out)
    assert code == 0
    rep = json.loads((out / "oneshot.json").read_text())
    assert rep["o_term_omitted"] is True and rep["epsilon"] == 0.001
    assert json.loads(stdout) == rep
    assert run(capsys, "oneshot", gm_file, "--epsilon", "0.001,0.01", "--no-smoothing", "--out", out)[0] == 0
    reps = json.loads((out / "oneshot.json").read_text())
    assert len(reps) == 2 and not reps[0]["smoothing"]


@pytest.mark.parametrize("eps", ["2", "0", "-0.1", "abc"])
def test_oneshot_bad_epsilon(capsys, tmp_path, gm_file, eps):
    assert run(capsys, "oneshot", gm_file, "--epsilon", eps, "--out", tmp_path / "o")[0] == 2


def test_aep(capsys, tmp_path):
    out = tmp_path / "e"
    code, stdout, _ = run(capsys, "aep", "--p", 0.3, "--N", "100,1000,10000", "--epsilon", 0.001, "--out", out)
    assert code == 0
    lines = (out / "aep.csv").read_text().splitlines()
    assert len(lines) == 4
    col = lines[0].split(",").index("gap")
    gaps = [float(l.split(",")[col]) for l in lines[1:]]
    assert gaps[0] > gaps[1] > gaps[2]
    assert run(capsys, "aep", "--epsilon", 2, "--out", out)[0] == 2
    assert run(capsys, "aep", "--p", 1.5, "--out", out)[0] == 2


def test_family_roundtrip(capsys, tmp_path):
    out = tmp_path / "f"
    assert run(capsys, "family", "--family", "golden-mean", "--R", 2, "--k", 3, "--p", 0.4, "--out", out)[0] == 0
    a = tmp_path / "a"
    assert run(capsys, "analyze", out / "machine.json", "--out", a)[0] == 0
    b = tmp_path / "b"
    assert run(capsys, "analyze", "--family", "golden-mean", "--R", 2, "--k", 3, "--p", 0.4, "--out", b)[0] == 0
    qa = json.loads((a / "report.json").read_text())["quantum"]
    qb = json.loads((b / "report.json").read_text())["quantum"]
    assert qa == qb


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "qmemc", "oneshot", "--family", "nemo", "--epsilon", "5",
                          "--out", str(tmp_path / "o")], capture_output=True, text=True)
    assert res.returncode == 2
    assert json.loads(res.stderr.strip())["error"] == "EpsilonOutOfRange"
    res = subprocess.run([sys.executable, "-m", "qmemc", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and __version__ in res.stdout
