import csv
import json
import math
from pathlib import Path

import pytest

from membrelax.cli import main

DATA = Path(__file__).resolve().parent.parent / "data"


def run(capsys, *args):
    code = main([str(a) for a in args])
    out, err = capsys.readouterr()
    return code, out, err


def test_density_value(capsys):
    code, out, _ = run(capsys, "density", "--model", DATA / "convex.json", "--xi", "0", "--b", "0,0,0")
    assert code == 0 and float(out) == 1.0


def test_density_missing_model(capsys, tmp_path):
    code, out, err = run(capsys, "density", "--model", tmp_path / "nope.json", "--xi", "0", "--b", "0,0,0")
    assert code == 2 and "model file not found" in err and "Traceback" not in err


def test_density_recession_unit(capsys):
    code, out, _ = run(capsys, "density", "--model", DATA / "convex.json", "--recession", "--xi-unit")
    assert code == 0 and float(out) == pytest.approx(1.0, abs=1e-3)


def test_bad_vector_is_a_usage_error(capsys):
    code, _, err = run(capsys, "density", "--model", "convex-norm", "--b", "1,2")
    assert code == 2 and "--b" in err


def test_cell_qstar_convex(capsys):
    code, out, _ = run(capsys, "cell", "qstar", "--model", DATA / "convex.json", "--xi", "0", "--b", "0,0,1")
    assert code == 0 and float(out) == pytest.approx(math.sqrt(2), rel=0.02)


def test_cell_qstar_laminate(capsys):
    code, out, _ = run(capsys, "cell", "qstar", "--model", DATA / "laminate.json", "--xi", "0", "--b", "0,0,0")
    assert code == 0 and float(out) == pytest.approx(0.5, rel=0.03)


def test_cell_sweep_one_row(capsys, tmp_path):
    out_path = tmp_path / "sweep.csv"
    code, _, _ = run(capsys, "cell", "sweep", "--model", "convex-norm", "--samples", DATA / "samples.csv",
                     "--out", out_path)
    rows = list(csv.reader(open(out_path)))
    assert code == 0 and len(rows) == 2 and rows[0][-4:] == ["value", "lambda", "iters", "flag"]
    assert float(rows[1][9]) == pytest.approx(math.sqrt(2), rel=0.02)


def test_membrane_atom_scene(capsys):
    code, out, _ = run(capsys, "membrane", "--model", "convex-norm", "--scene", DATA / "atom_scene.json")
    doc = json.loads(out)
    assert code == 0 and doc["total"] == pytest.approx(2.0, rel=0.03)
    assert set(doc) >= {"bulk", "jump", "cantor", "singular", "total", "tolerances"}


def test_membrane_with_loads(capsys):
    code, out, _ = run(capsys, "membrane", "--model", "convex-norm", "--scene", DATA / "atom_scene.json",
                       "--loads", DATA / "loads.json")
    assert code == 0 and json.loads(out)["load_work"] == pytest.approx(1.0)


def test_membrane_invalid_scene(capsys, tmp_path):
    out_path = tmp_path / "e.json"
    code, _, err = run(capsys, "membrane", "--model", "convex-norm", "--scene", DATA / "bad_trace_scene.json",
                       "--out", out_path)
    assert code == 4 and "trace-mismatch" in err and not out_path.exists()


def test_membrane_no_moment_jump(capsys):
    code, out, _ = run(capsys, "membrane", "--model", "convex-norm", "--scene", DATA / "jump_scene.json",
                       "--no-moment")
    assert code == 0 and json.loads(out)["total"] == pytest.approx(2.0, rel=0.03)


def test_gamma_affine_study(capsys, tmp_path):
    out_path = tmp_path / "study.csv"
    code, out, _ = run(capsys, "gamma", "--model", "convex-norm", "--scene", DATA / "affine_scene.json",
                       "--out", out_path)
    rows = list(csv.DictReader(open(out_path)))
    assert code == 0 and out.strip() == "PASS"
    assert float(rows[-1]["rel_gap"]) <= 0.02 and len(rows) == 4


def test_gamma_dirac_study(capsys):
    code, out, _ = run(capsys, "gamma", "--model", "convex-norm", "--scene", DATA / "dirac_scene.json",
                       "--builder", "example-dirac", "--eps", "0.0625,0.03125,0.015625", "--format", "json")
    doc = json.loads(out)
    assert code == 0 and doc["verdict"] == "PASS"
    plateau = doc["pairing_names"].index("plateau.3")
    assert doc["rows"][-1]["pairings"][plateau] == pytest.approx(1.0, rel=0.01)


def test_gamma_eps_must_decrease(capsys):
    code, _, err = run(capsys, "gamma", "--model", "convex-norm", "--scene", DATA / "affine_scene.json",
                       "--eps", "0.1,0.2")
    assert code == 2


def test_gamma_underresolved_names_grid(capsys):
    code, _, err = run(capsys, "gamma", "--model", "convex-norm", "--scene", DATA / "dirac_scene.json",
                       "--builder", "example-dirac", "--eps", "0.0625,0.03125", "--slab-shape", "16,16,8")
    assert code == 5 and "cells across" in err


def test_verify_subset_and_determinism(capsys, tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    code, out, _ = run(capsys, "verify", "--only", "growth", "--seed", 7, "--out", a, "--format", "json")
    assert code == 0 and out.splitlines() == [line for line in out.splitlines() if "growth" in line]
    run(capsys, "verify", "--only", "growth", "--seed", 7, "--out", b, "--format", "json")
    assert a.read_bytes() == b.read_bytes()


def test_verify_unknown_check(capsys):
    code, _, err = run(capsys, "verify", "--only", "nope")
    assert code == 2 and "unknown checks" in err
