import json
import subprocess
import sys

import numpy as np
import pytest

from nonlocal_kit import __version__
from nonlocal_kit.cli import config_hash, load_config, main
from nonlocal_kit.operator import read_grid_csv


def run(tmp_path, command, cfg, *extra, name="run"):
    path = tmp_path / f"{name}.json"
    path.write_text(json.dumps(cfg))
    out = tmp_path / name
    code = main([command, "--config", str(path), "--out", str(out), *extra])
    return code, out


def read_csv(path):
    lines = path.read_text().splitlines()
    comments = [ln for ln in lines if ln.startswith("#")]
    body = [ln for ln in lines if not ln.startswith("#")]
    header = body[0].split(",")
    rows = [[float(c) if c else np.nan for c in ln.split(",")] for ln in body[1:]]
    return comments, header, np.array(rows)


GETOOR = {"params": {"n": 1, "s": 0.5, "normalized": True}, "function": {"name": "getoor-profile"},
          "points": [[0.0], [0.3], [-0.6]]}


def test_eval_getoor(tmp_path):
    code, out = run(tmp_path, "eval", GETOOR)
    assert code == 0
    comments, header, rows = read_csv(out / "eval.csv")
    assert header[:2] == ["x1", "classical"]
    np.testing.assert_allclose(rows[:, 1], 1.0, atol=1e-4)
    np.testing.assert_allclose(rows[:, header.index("divergent")], 1.0, atol=1e-4)
    assert comments[0] == f"# nonlocal-kit {__version__}"
    assert comments[1] == f"# config-sha256 {config_hash(load_config(tmp_path / 'run.json', None))}"


def test_eval_constant_is_zero(tmp_path):
    code, out = run(tmp_path, "eval", {"params": {"n": 2, "s": 0.3}, "function": {"name": "constant", "value": 4},
                                       "grids": {"2": 4}})
    assert code == 0
    _, header, rows = read_csv(out / "eval.csv")
    div = np.abs(rows[:, header.index("divergent")])
    assert np.all(div <= 3 * rows[:, header.index("divergent_error")] + 1e-12)
    assert np.max(div) < 1e-8


def test_eval_tail_violation_exits_2(tmp_path, capsys):
    cfg = {"params": {"n": 1, "s": 0.5, "k": 1}, "function": {"name": "monomial", "exponent": [2]}}
    code, _ = run(tmp_path, "eval", cfg)
    assert code == 2
    assert "2s+k" in capsys.readouterr().err


@pytest.mark.parametrize("cfg", [{"params": {"n": 1, "s": 0.5, "bogus": 1}}, {"unknown": True},
                                 {"params": {"n": 5}}, {"quadrature": {"rel_tol": -1}},
                                 {"function": {"name": "no-such-function"}}])
def test_invalid_configs_exit_2(tmp_path, cfg):
    cfg = {"function": {"name": "constant"}, **cfg}
    code, _ = run(tmp_path, "eval", cfg)
    assert code == 2


def test_missing_config_file_exits_2(tmp_path):
    assert main(["eval", "--config", str(tmp_path / "absent.json"), "--out", str(tmp_path)]) == 2


def test_convergence_report(tmp_path):
    cfg = {"params": {"n": 1, "s": 0.5, "k": 2}, "function": {"name": "power-tail", "power": 2.5},
           "grids": {"1": 9}, "grid_radius": 0.5, "R_values": [8, 16, 32]}
    code, out = run(tmp_path, "convergence", cfg)
    assert code == 0
    _, header, rows = read_csv(out / "convergence.csv")
    res = rows[:, header.index("residual_to_limit")]
    assert res[0] > res[1] > res[2]


def test_solve_divergent(tmp_path):
    cfg = {"params": {"n": 1, "s": 0.5, "k": 2}, "exterior": {"name": "monomial", "exponent": [2]},
           "points": [[0.0], [0.5], [0.97], [1.5]]}
    code, out = run(tmp_path, "solve", cfg)
    assert code == 0
    _, header, rows = read_csv(out / "solution.csv")
    assert rows[3, header.index("value")] == 2.25
    assert rows[2, header.index("low_accuracy")] == 1 and rows[0, header.index("low_accuracy")] == 0
    meta = json.loads((out / "solve.json").read_text())["_meta"]
    assert meta["version"] == __version__


def test_multiplicity(tmp_path):
    code, out = run(tmp_path, "multiplicity", {"params": {"n": 1, "s": 0.5, "k": 3}})
    assert code == 0
    data = json.loads((out / "multiplicity.json").read_text())
    assert data["rank"] == data["N_k"] == 3


def test_shadow_outputs(tmp_path):
    cfg = {"params": {"n": 1, "s": 0.5, "k": 1}, "function": {"name": "power-tail", "power": 1.2},
           "dictionary": {"poles": 16}, "epsilon": 0.1}
    code, out = run(tmp_path, "shadow", cfg)
    assert code == 0
    rep = json.loads((out / "shadow.json").read_text())["report"]
    assert rep["harmonicity_residual"] <= 5e-3
    _, header, rows = read_csv(out / "curves.csv")
    assert header == ["x", "u", "u_eps"]
    far = np.abs(rows[:, 0]) > rep["R_eps"]
    np.testing.assert_array_equal(rows[far, 1], rows[far, 2])
    assert (out / "curves.svg").read_text().startswith("<svg")


def test_nonlinear_shadow_outputs(tmp_path):
    cfg = {"params": {"n": 1, "s": 0.5, "k": 2}, "function": {"name": "monomial", "exponent": [2]},
           "nonlinear": {"name": "sin", "lipschitz": 1.0}, "dictionary": {"poles": 32}, "svg": False}
    code, out = run(tmp_path, "nonlinear-shadow", cfg)
    assert code == 0
    rep = json.loads((out / "nonlinear.json").read_text())["report"]
    assert rep["holds"] and rep["eta_sup"] <= rep["bound"]
    assert not (out / "curves.svg").exists()
    _, header, rows = read_csv(out / "eta.csv")
    assert header[-1] == "eta"


def test_nonlinear_linear_map_needs_coefficients(tmp_path):
    cfg = {"params": {"n": 1, "s": 0.5}, "function": {"name": "gaussian-bump"},
           "nonlinear": {"name": "linear", "coefficients": [1.0]}}
    assert run(tmp_path, "nonlinear-shadow", cfg)[0] == 2


ORACLE = {"params": {"n": 1, "s": 0.5}, "exterior": {"name": "annulus-indicator", "inner": 1, "outer": 2},
          "points": [[0.0], [0.4]], "mc": {"samples": 20000}, "seed": 17}


def test_oracle_is_deterministic_across_threads(tmp_path):
    code, a = run(tmp_path, "oracle", ORACLE, name="a")
    code_b, b = run(tmp_path, "oracle", ORACLE, "--threads", "3", name="b")
    assert code == code_b == 0
    assert (a / "oracle.json").read_bytes() == (b / "oracle.json").read_bytes()
    est = json.loads((a / "oracle.json").read_text())["estimates"]
    assert abs(est[0]["estimate"] - 2 / 3) <= 3 * est[0]["stderr"]


def test_oracle_seed_flag_and_env(tmp_path, monkeypatch):
    monkeypatch.setenv("NONLOCAL_KIT_THREADS", "2")
    _, a = run(tmp_path, "oracle", ORACLE, "--seed", "18", name="a")
    _, b = run(tmp_path, "oracle", {**ORACLE, "seed": 18}, name="b")
    ea = json.loads((a / "oracle.json").read_text())["estimates"]
    eb = json.loads((b / "oracle.json").read_text())["estimates"]
    assert ea == eb


def test_oracle_rejects_divergent_order(tmp_path):
    assert run(tmp_path, "oracle", {**ORACLE, "params": {"n": 1, "s": 0.5, "k": 1}})[0] == 2


def test_degenerate_sampler_exits_3(tmp_path):
    assert run(tmp_path, "oracle", {**ORACLE, "points": [[0.999999]]})[0] == 3


def test_repeat_runs_are_byte_identical(tmp_path):
    _, a = run(tmp_path, "eval", GETOOR, name="a")
    _, b = run(tmp_path, "eval", GETOOR, name="b")
    for f in ("eval.csv", "eval.json"):
        assert (a / f).read_bytes() == (b / f).read_bytes()


def test_grid_csv_readable_by_reader(tmp_path):
    cfg = {"params": {"n": 2, "s": 0.5}, "source": {"name": "constant"}, "grids": {"2": 4}}
    code, out = run(tmp_path, "solve", cfg)
    assert code == 0
    comments, header, rows = read_csv(out / "solution.csv")
    assert header[:3] == ["x1", "x2", "value"]


def test_console_script_version():
    res = subprocess.run([sys.executable, "-m", "nonlocal_kit.cli", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.strip() == __version__
