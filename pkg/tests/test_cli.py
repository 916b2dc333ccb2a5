import csv
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from twistlab.cli import DEFAULT_TOLERANCES, config_hash, csv_text, dumps_report, main, run

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def load(name):
    return json.loads((CONFIGS / name).read_text())


def test_verify_thm1_on_product_map(tmp_path):
    code, rep = run("verify-thm1", load("product.json"), seed=1, out=str(tmp_path))
    assert code == 0 and rep["passed"]
    assert rep["outputs"]["counts"] == [1, 2, 1]
    assert (tmp_path / "report.json").exists() and (tmp_path / "exponents.csv").exists()


def test_negative_tolerance_is_invalid(tmp_path):
    cfg = load("hyperbolic.json")
    cfg["tolerances"] = {"green": -1e-3}
    code, rep = run("green", cfg, out=str(tmp_path))
    assert code == 3 and rep["error"]["type"] == "InvalidConfig"


@pytest.mark.parametrize("cfg", [
    {"map": {"family": "henon", "params": {}}},
    {"map": {"family": "standard", "params": {}}},
    {"map": {"family": "standard", "params": {"eps": 1.0}}, "orbit": {"period": 0}},
    {"map": {"family": "standard", "params": {"eps": 1.0}}, "weakkam": {"tol": 0}},
    {"orbit": {"period": 1}},
])
def test_invalid_configs(cfg, tmp_path):
    assert run("green", cfg, out=str(tmp_path))[0] == 3


def test_verification_failure_exit_code(tmp_path):
    # samples along the vertical through the hyperbolic point leave the Green cone
    t = 0.05 * 2.0 ** -np.arange(0, 30, 0.25)
    path = tmp_path / "vertical.csv"
    np.savetxt(path, np.vstack([[0.5, 0.0], np.column_stack([np.full(len(t), 0.5), t])]),
               delimiter=",", header="q,p", comments="")
    cfg = load("hyperbolic.json")
    cfg["samples"] = {"kind": "csv", "path": str(path)}
    code, rep = run("verify-cone", cfg, out=str(tmp_path / "o"))
    assert code == 1 and rep["passed"] is False
    assert rep["outputs"]["pass_rate"] < 1


def test_non_convergence_exit_code(tmp_path, capsys):
    cfg = load("weakkam.json")
    cfg["weakkam"]["max_iters"] = 1
    code, rep = run("weakkam", cfg, out=str(tmp_path))
    assert code == 2 and rep["error"]["type"] == "NoConvergence"
    assert "weak_kam.solve_calibrated" in capsys.readouterr().err


def test_reports_are_deterministic(tmp_path):
    cfg = load("weakkam.json")
    cfg["weakkam"]["resolution"] = 64
    for d in ("a", "b"):
        assert run("weakkam", cfg, seed=42, out=str(tmp_path / d))[0] == 0
    for name in ("report.json", "u_minus.csv", "u_minus.bin"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    meta = json.loads((tmp_path / "a" / "meta.json").read_text())
    assert "timestamp" in meta


def test_report_embeds_hash_and_tolerances(tmp_path):
    cfg = load("mane.json")
    cfg["tolerances"] = {"mane": 1e-7}
    code, rep = run("mane", cfg, out=str(tmp_path))
    assert code == 0
    saved = json.loads((tmp_path / "report.json").read_text())
    assert saved["config_hash"] == config_hash(cfg)
    assert saved["tolerances"]["mane"] == 1e-7
    assert set(DEFAULT_TOLERANCES) <= set(saved["tolerances"])
    # stable key order: the file is its own canonical dump
    assert (tmp_path / "report.json").read_text(encoding="utf-8") == dumps_report(saved)


def test_config_hash_ignores_key_order():
    assert config_hash({"a": 1, "b": [1, 2]}) == config_hash({"b": [1, 2], "a": 1})
    assert config_hash({"a": 1}) != config_hash({"a": 2})


def test_csv_format():
    text = csv_text(["x", "label"], [[0.1, "a,b"], [1 / 3, "c"]])
    assert text.endswith("\r\n") and "\r\n" in text
    rows = list(csv.reader(text.splitlines()))
    assert rows[1] == ["0.10000000000000001", "a,b"]
    assert float(rows[2][0]) == 1 / 3 and len(rows[2][0].replace("0.", "", 1)) == 17


def test_selftests_via_main(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"selftest": {"instances": 60}}))
    assert main(["pbilin-selftest", "--config", str(cfg), "--out", str(tmp_path / "o"), "--seed", "3"]) == 0
    rep = json.loads((tmp_path / "o" / "report.json").read_text())
    assert rep["outputs"]["worst"]["min_band_eigenvalue"] >= -1e-9
    assert main(["appendix-selftest", "--config", str(cfg), "--out", str(tmp_path / "p")]) == 0


def test_main_config_errors(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["green", "--config", str(bad)]) == 3
    assert main(["green"]) == 3
    assert "cli.load_config" in capsys.readouterr().err


def test_console_entry_point(tmp_path):
    out = subprocess.run([sys.executable, "-m", "twistlab", "verify-thm2", "--config",
                          str(CONFIGS / "hyperbolic.json"), "--out", str(tmp_path)],
                         capture_output=True, text=True)
    assert out.returncode == 0, out.stderr
    rep = json.loads((tmp_path / "report.json").read_text())
    assert rep["outputs"]["bound"] > 0 and rep["outputs"]["slack"] >= -1e-6
