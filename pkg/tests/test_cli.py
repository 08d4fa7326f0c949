import json
import subprocess
import sys

import numpy as np
import pytest

from cnmc import __version__
from cnmc.cli import _digest, main, read_csv
from cnmc.spectrum import find_lambda_star


def run(tmp_path, *argv, config=None):
    args = list(argv) + ["--out", str(tmp_path)]
    if config is not None:
        tmp_path.mkdir(parents=True, exist_ok=True)
        p = tmp_path / "run.json"
        p.write_text(json.dumps(config))
        args += ["--config", str(p)]
    return main(args)


def load(path):
    doc = json.loads(path.read_text())
    sha = doc.pop("sha256")
    assert sha == _digest(doc)
    return doc


def test_dispersion(tmp_path):
    assert run(tmp_path, "dispersion", config={"dispersion": {"n": 20}}) == 0
    text = (tmp_path / "dispersion.csv").read_text().splitlines()
    assert text[0] == "# schema: 1" and text[2].startswith("# sha256: ")
    rows = read_csv(tmp_path / "dispersion.csv")
    nu = np.array([float(r["nu"]) for r in rows])
    assert len(rows) == 20 and np.all(np.diff(nu) > 0)
    doc = load(tmp_path / "dispersion.json")
    assert doc["table"]["nu_zero"] < 0


def test_lambda_star(tmp_path, capsys):
    assert run(tmp_path, "lambda-star") == 0
    doc = load(tmp_path / "lambda_star.json")
    for key in ("lambda_star", "nu_zero", "A", "bracket", "resolutions"):
        assert key in doc
    assert doc["lambda_star"] == pytest.approx(0.5209443804, abs=1e-10)
    assert doc["resolutions"]["drift"] < 1e-5
    assert json.loads(capsys.readouterr().out)["lambda_star"] == doc["lambda_star"]


@pytest.mark.parametrize("op", ["nmc", "regularized", "lattice", "multiperiodic"])
def test_eval_operators(tmp_path, op):
    cfg = {"eval": {"operator": op, "constant": 0.5, "tau": 0.02, "epsilon": 0.1}, "kmax": 2}
    assert run(tmp_path, "eval", config=cfg) == 0
    rows = read_csv(tmp_path / "eval.csv")
    vals = [float(r["value"]) for r in rows]
    assert set(rows[0]) == {"s1", "value"}
    assert np.ptp(vals) < 1e-10 * max(1.0, abs(vals[0]))


def test_eval_linearized_direction(tmp_path):
    # default direction is the unit mode, which is not constant
    cfg = {"eval": {"operator": "linearized", "constant": 0.5}, "kmax": 2}
    assert run(tmp_path, "eval", config=cfg) == 0
    rows = read_csv(tmp_path / "eval.csv")
    s = np.array([float(r["s1"]) for r in rows])
    vals = np.array([float(r["value"]) for r in rows])
    assert np.allclose(vals, vals[0] * np.cos(s) / np.cos(s[0]), rtol=1e-9)


def test_eval_field_and_flags(tmp_path):
    cfg = {"params": {"N": 3, "alpha": 0.5},
           "eval": {"field": {"coefficients": [{"k": [0, 0], "value": 0.6},
                                                {"k": [0, 1], "value": 0.05}]}}}
    assert run(tmp_path, "eval", "--kmax", "2", "--grid", "12", config=cfg) == 0
    rows = read_csv(tmp_path / "eval.csv")
    assert set(rows[0]) == {"s1", "s2", "value"}
    assert len(rows) == 28  # fundamental cell of a 12 x 12 grid
    meta = (tmp_path / "eval.csv").read_text().splitlines()[1]
    assert json.loads(meta[len("# config: "):])["spec"]["grid"] == 12


def test_branch_and_verify(tmp_path):
    cfg = {"kmax": 6, "branch": {"tau": [0.01], "b_grid": [0.0, 0.005, 0.01]}}
    assert run(tmp_path, "branch", config=cfg) == 0
    rows = read_csv(tmp_path / "branch.csv")
    assert [float(r["b"]) for r in rows] == [0.0, 0.005, 0.01]
    assert all(float(r["residual"]) < 1e-8 for r in rows)
    assert list(rows[0])[:6] == ["tau", "b", "lambda", "residual", "cnmc_deviation",
                                 "newton_iters"]
    assert load(tmp_path / "branch.json")["status"]["0.01"]["error"] is None
    pt = tmp_path / "point_tau0.01_002.json"
    assert load(pt)["point"]["b"] == 0.01
    out = tmp_path / "v"
    assert run(out, "verify", config={"verify": {"input": str(pt)}}) == 0
    assert load(out / "verify.json")["report"]["passed"]


def test_probe_kernel_reproducible(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(a, "probe-kernel", "--seed", "3") == 0
    assert run(b, "probe-kernel", "--seed", "3") == 0
    ra, rb = read_csv(a / "probe_kernel.csv"), read_csv(b / "probe_kernel.csv")
    assert ra == rb
    assert {"t1", "lambda1", "lambda2", "lambda3", "lambda4", "K", "Kbar", "M", "Mbar"} == set(ra[0])
    assert all(0 < float(r["K"]) <= 1 for r in ra)


def test_selftest_subset(tmp_path):
    assert run(tmp_path, "selftest", "--threads", "1",
               config={"selftest": {"criteria": [1, 3]}}) == 0
    checks = load(tmp_path / "selftest.json")["checks"]
    assert [c["criterion"] for c in checks] == [1, 3]


class TestErrors:
    def _err(self, capsys):
        return json.loads(capsys.readouterr().err.strip().splitlines()[-1])

    def test_bad_params(self, tmp_path, capsys):
        assert run(tmp_path, "eval", config={"params": {"N": 2, "alpha": 1.5}}) == 2
        assert self._err(capsys)["error"] == "ConfigError"

    def test_tau_too_large(self, tmp_path, capsys):
        ls = find_lambda_star(0.5, 2)
        cfg = {"branch": {"tau": [1.0 / (6 * ls)]}}
        assert run(tmp_path, "branch", config=cfg) == 2
        assert "tau" in self._err(capsys)["message"]

    def test_verify_needs_input(self, tmp_path, capsys):
        assert run(tmp_path, "verify") == 2

    def test_missing_config(self, tmp_path, capsys):
        assert main(["eval", "--config", str(tmp_path / "nope.json"), "--out", str(tmp_path)]) == 2

    def test_module_error_origin(self, tmp_path, capsys):
        cfg = {"eval": {"constant": -1.0}}
        assert run(tmp_path, "eval", config=cfg) == 1
        err = self._err(capsys)
        assert err["error"] == "ValueError" and err["origin"].startswith("cnmc.")


def test_module_entry_point():
    r = subprocess.run([sys.executable, "-m", "cnmc", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and r.stdout.strip() == __version__
