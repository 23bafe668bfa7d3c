import json
from pathlib import Path

import numpy as np
import pytest

from indefconc.cli import main
from indefconc.fieldio import load_field, save_field
from indefconc.mesh import build_grid

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def _write(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def _reference():
    return json.loads((CONFIGS / "reference_1d.json").read_text())


def test_validate_example(tmp_path, capsys):
    assert main(["validate", "--config", str(CONFIGS / "reference_1d.json"), "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "assumptions.json").read_text())
    assert rep["uniform_delta"] == 1.0 and rep["passed"]


def test_validate_negative_V(tmp_path):
    cfg = _reference()
    cfg["family"]["V"] = {"kind": "constant", "params": {"value": -0.5}}
    assert main(["validate", "--config", _write(tmp_path, cfg), "--out", str(tmp_path)]) == 1


def test_malformed_and_invalid_configs(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    assert main(["validate", "--config", str(bad)]) == 2
    cfg = _reference()
    cfg["grid"]["dim"] = 5
    assert main(["study", "--config", _write(tmp_path, cfg)]) == 2
    assert main(["solve", "--config", str(tmp_path / "missing.json")]) == 2


def test_unbuildable_family_exits_2(tmp_path):
    cfg = _reference()
    cfg["family"]["q_minus"] = 1.0
    assert main(["solve", "--config", _write(tmp_path, cfg), "--out", str(tmp_path)]) == 2


def test_solve_writes_files_and_is_deterministic(tmp_path, capsys):
    args = ["solve", "--config", str(CONFIGS / "reference_1d.json"), "--n", "3"]
    assert main(args + ["--out", str(tmp_path / "a")]) == 0
    assert main(args + ["--out", str(tmp_path / "b")]) == 0
    a = json.loads((tmp_path / "a" / "solve_n3.json").read_text())
    b = json.loads((tmp_path / "b" / "solve_n3.json").read_text())
    assert a["s"] == b["s"] and a["residual"] <= 1e-6
    u, _ = load_field(tmp_path / "a" / "solve_n3_u")
    assert (tmp_path / "a" / "solve_n3_u.bin").read_bytes() == (tmp_path / "b" / "solve_n3_u.bin").read_bytes()
    assert u.values.min() >= 0


def test_solve_n_out_of_range(tmp_path, capsys):
    assert main(["solve", "--config", str(CONFIGS / "reference_1d.json"), "--n", "9", "--out", str(tmp_path)]) == 2
    assert "outside the family" in capsys.readouterr().err


def test_solve_nonpositive_Q_custom_family(tmp_path, capsys):
    g = build_grid(1, -1.0, 1.0, 200)
    save_field(g.sample(lambda x: -1.0 - x**2), tmp_path / "qneg", name="Q")
    cfg = {"grid": {"dim": 1, "lo": -1.0, "hi": 1.0, "n_nodes": 200},
           "family": {"kind": "custom", "p": 4.0, "V": {"kind": "constant", "params": {"value": 0.0}},
                      "centers": [[0.0]], "members": [{"Q": "qneg.json"}]}}
    assert main(["solve", "--config", _write(tmp_path, cfg), "--out", str(tmp_path)]) == 1
    assert "no admissible start" in capsys.readouterr().err


def test_study_kerr_well_and_csv_determinism(tmp_path, capsys):
    cfgpath = str(CONFIGS / "kerr_well_1d.json")
    assert main(["study", "--config", cfgpath, "--out", str(tmp_path / "a")]) == 0
    assert main(["study", "--config", cfgpath, "--out", str(tmp_path / "b"), "--jobs", "2"]) == 0
    a = (tmp_path / "a" / "study.csv").read_bytes()
    assert a == (tmp_path / "b" / "study.csv").read_bytes()
    assert a.splitlines()[0] == b"n,eps,q,h1_ratio,lp_ratio,tail_q,total_q,norm_n,m1,m2,selected,margin"
    summary = json.loads((tmp_path / "a" / "study.json").read_text())
    assert summary["passed"]


def test_study_two_point_selected_column(tmp_path, capsys):
    assert main(["study", "--config", str(CONFIGS / "two_point_1d.json"), "--out", str(tmp_path)]) == 0
    rows = (tmp_path / "study.csv").read_text().splitlines()[1:]
    selected = {r.split(",")[10] for r in rows}
    assert selected <= {"1", "2"}
    summary = json.loads((tmp_path / "study.json").read_text())
    assert summary["verdicts"]["single_point"] is True


def test_study_single_member(tmp_path, capsys):
    cfg = _reference()
    cfg["family"]["eps"] = [0.25]
    cfg["analysis"]["eps_list"] = [0.25]
    assert main(["study", "--config", _write(tmp_path, cfg), "--out", str(tmp_path)]) == 1
    assert "insufficient n" in capsys.readouterr().out


def test_spectrum_and_oracle(tmp_path, capsys):
    cfgpath = str(CONFIGS / "reference_1d.json")
    assert main(["spectrum", "--config", cfgpath, "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    lam = float(out.split("min_eig=")[1].split()[0])
    assert lam == pytest.approx(np.pi**2 / 4, rel=1e-3)
    assert main(["oracle", "--config", cfgpath, "--n", "2", "--out", str(tmp_path)]) == 0
    head = json.loads((tmp_path / "oracle_n2.json").read_text())
    assert head["provenance"] == "oracle"
