"""Command-line front end.

Exit codes: 0 success, 1 a study or verification verdict failed, 2 usage or
input error, 3 solver failure, 4 scene validation failure, 5 slab grid too
coarse.  Outputs are written once, via a temporary file and a rename.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import cell, models, thinfilm, verify
from .errors import (ConvergenceError, DomainError, MembrelaxError, ModelError, QuadratureError,
                     ResolutionError, SceneError)
from .fields import load_scene, validate_scene
from .membrane import DensityCache, LoadSet, TermError, load_work, membrane_energy, membrane_energy_no_moment

EXIT_OK, EXIT_VERDICT, EXIT_USAGE, EXIT_SOLVER, EXIT_SCENE, EXIT_RESOLUTION = 0, 1, 2, 3, 4, 5


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    command: str
    model: str = None
    seed: int = 0
    out: str = None
    format: str = "csv"
    tolerances: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)


# ------------------------------------------------------------------ parsing

def parse_vector(text, n, what):
    """Comma-separated floats; a single ``0`` means the zero vector."""
    try:
        vals = [float(v) for v in str(text).split(",") if v.strip() != ""]
    except ValueError:
        raise UsageError(f"{what}: expected {n} comma-separated numbers, got {text!r}") from None
    if vals == [0.0] and n > 1:
        vals = [0.0] * n
    if len(vals) != n or not np.all(np.isfinite(vals)):
        raise UsageError(f"{what}: expected {n} finite numbers, got {text!r}")
    return np.array(vals)


def parse_xi(text):
    """``xi_bar`` as 6 numbers in row order ``xi11,xi12,xi21,xi22,xi31,xi32``."""
    return parse_vector(text, 6, "--xi").reshape(3, 2)


def parse_eps(text):
    eps = [float(v) for v in text.split(",")]
    try:
        return thinfilm.check_eps_list(eps)
    except DomainError as exc:
        raise UsageError(str(exc)) from None


def read_samples(path):
    """Sample CSV with header ``xi11..xi32,b1,b2,b3``."""
    path = Path(path)
    if not path.is_file():
        raise UsageError(f"samples file not found: {path}")
    keys = cell.SWEEP_HEADER[:9]
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            try:
                v = np.array([float(row[k]) for k in keys])
            except (KeyError, ValueError):
                raise UsageError(f"samples file needs numeric columns {','.join(keys)}") from None
            out.append((v[:6].reshape(3, 2), v[6:]))
    if not out:
        raise UsageError("samples file has no rows")
    return out


def get_model(name):
    if name is None:
        raise UsageError("--model is required")
    builtins = models.builtin_models()
    if name in builtins and not Path(name).exists():
        return builtins[name]
    try:
        return models.load_model(name)
    except FileNotFoundError:
        raise UsageError(f"model file not found: {name}") from None


# ------------------------------------------------------------------ output

def write_atomic(path, text):
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent if str(path.parent) else ".", prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def csv_text(rows):
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    return buf.getvalue()


def emit(cfg, csv_rows, json_doc, summary=None):
    """Write the table to ``--out`` (or stdout) in the chosen format."""
    text = csv_text(csv_rows) if cfg.format == "csv" else json.dumps(json_doc, indent=2, sort_keys=True) + "\n"
    if cfg.out:
        write_atomic(cfg.out, text)
        if summary is not None:
            print(summary)
    else:
        sys.stdout.write(text)


def grid_budget(cfg):
    p = cfg.params
    grid = cell.CellGrid(p.get("n_alpha") or 16, p.get("n_three") or 8)
    budget = cell.SolverBudget(seed=cfg.seed, starts=p.get("starts") or 8)
    if "qtol" in cfg.tolerances:
        budget = cell.SolverBudget(seed=cfg.seed, starts=budget.starts, qtol_const=cfg.tolerances["qtol"])
    return grid, budget


# ---------------------------------------------------------------- commands

def cmd_density(cfg):
    model = get_model(cfg.model)
    p = cfg.params
    if p.get("samples"):
        samples = read_samples(p["samples"])
    else:
        if p.get("xi_unit"):
            xi_bar = np.zeros((3, 2))
            xi_bar[0, 0] = 1.0
            b = np.zeros(3)
        else:
            xi_bar = parse_xi(p.get("xi") or "0")
            b = parse_vector(p.get("b") or "0", 3, "--b")
        samples = [(xi_bar, b)]
    rows = [cell.SWEEP_HEADER[:9] + ["value"]]
    docs = []
    for xi_bar, b in samples:
        if p.get("w_zero"):
            val, arg = models.w_zero(model, xi_bar)
            extra = {"argmin_b": arg.tolist()}
        elif p.get("recession"):
            val = models.recession_density(model, models.join(xi_bar, b))
            extra = {}
        else:
            val = models.eval_density(model, models.join(xi_bar, b))
            extra = {}
        rows.append([repr(float(v)) for v in np.ravel(xi_bar)] + [repr(float(v)) for v in b]
                    + [repr(float(val))])
        docs.append({"xi_bar": xi_bar.tolist(), "b": b.tolist(), "value": float(val), **extra})
    if len(samples) == 1 and not cfg.out:
        print(repr(float(docs[0]["value"])) if cfg.format == "csv" else json.dumps(docs[0]))
    else:
        emit(cfg, rows, {"rows": docs})
    return EXIT_OK


def cmd_cell(cfg):
    model = get_model(cfg.model)
    grid, budget = grid_budget(cfg)
    p = cfg.params
    sub = p["sub"]
    if sub == "sweep":
        rows = cell.qstar_sweep(model, read_samples(p["samples"]), grid, budget)
        table = cell.sweep_rows_csv(rows)
        doc = {"rows": [{"xi_bar": r.xi_bar.tolist(), "b": r.b.tolist(),
                         "solution": None if r.solution is None else r.solution.to_dict(),
                         "error": r.error} for r in rows]}
        emit(cfg, table, doc)
        return EXIT_OK
    xi_bar = parse_xi(p.get("xi") or "0")
    b = parse_vector(p.get("b") or "0", 3, "--b")
    if sub == "qstar":
        sol = cell.qstar(model, xi_bar, b, grid, budget)
    elif sub == "rotated":
        nu = parse_vector(p.get("nu") or "0,1", 2, "--nu")
        nu = nu / np.linalg.norm(nu)
        sol = cell.qstar_rotated(model, xi_bar, b, nu, grid, budget)
    elif sub == "qw0":
        value = cell.qw_zero(model, xi_bar, grid, budget)
        return _scalar(cfg, "qw0", value, {"xi_bar": xi_bar.tolist()})
    elif sub == "recession":
        value = cell.qstar_recession(model, xi_bar, b, grid, budget)
        return _scalar(cfg, "recession", value, {"xi_bar": xi_bar.tolist(), "b": b.tolist()})
    elif sub == "gamma-surface":
        z = parse_vector(p.get("z") or "1,0,0", 3, "--z")
        nu = parse_vector(p.get("nu") or "0,1", 2, "--nu")
        try:
            spec = cell.JumpSpec(tuple(z), tuple(nu / np.linalg.norm(nu)), tuple(b))
        except DomainError as exc:
            raise UsageError(str(exc)) from None
        value = cell.gamma_surface(model, spec, grid, budget)
        return _scalar(cfg, "gamma", value, {"z": z.tolist(), "nu": list(spec.nu), "b": b.tolist()})
    else:
        raise UsageError(f"unknown cell subcommand {sub!r}")
    row = cell.SweepRow(xi_bar, b, sol)
    if cfg.out:
        emit(cfg, cell.sweep_rows_csv([row]), sol.to_dict(), summary=repr(sol.value))
    elif cfg.format == "json":
        print(json.dumps(sol.to_dict(), sort_keys=True))
    else:
        print(repr(sol.value))
    return EXIT_OK


def _scalar(cfg, name, value, inputs):
    doc = {name: float(value), **inputs}
    if cfg.out:
        emit(cfg, [[name], [repr(float(value))]], doc, summary=repr(float(value)))
    elif cfg.format == "json":
        print(json.dumps(doc, sort_keys=True))
    else:
        print(repr(float(value)))
    return EXIT_OK


def _load_scene(path):
    if not path:
        raise UsageError("--scene is required")
    try:
        return load_scene(path)
    except FileNotFoundError as exc:
        raise UsageError(str(exc)) from None


def cmd_membrane(cfg):
    model = get_model(cfg.model)
    grid, budget = grid_budget(cfg)
    scene, measure, doc = _load_scene(cfg.params.get("scene"))
    report = validate_scene(scene)
    if not report.ok:
        raise SceneError("scene validation failed", report.findings)
    cache = DensityCache()
    if cfg.params.get("no_moment"):
        res = membrane_energy_no_moment(model, scene, grid, budget, cache)
    else:
        res = membrane_energy(model, scene, measure, grid, budget, cache)
    loads_path = cfg.params.get("loads")
    if loads_path:
        if not Path(loads_path).is_file():
            raise UsageError(f"loads file not found: {loads_path}")
        loads = LoadSet.from_dict(json.loads(Path(loads_path).read_text()))
        res.load_work = load_work(loads, scene, measure)
    out = res.to_dict()
    text = json.dumps(out, indent=2, sort_keys=True) + "\n"
    if cfg.out:
        write_atomic(cfg.out, text)
        print(repr(res.total))
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_gamma(cfg):
    p = cfg.params
    eps = parse_eps(p.get("eps") or "0.25,0.125,0.0625,0.03125")
    model = get_model(cfg.model)
    grid, budget = grid_budget(cfg)
    scene, measure, _ = _load_scene(p.get("scene"))
    report = validate_scene(scene)
    if not report.ok:
        raise SceneError("scene validation failed", report.findings)
    grids = None
    if p.get("slab_shape"):
        shape = tuple(int(v) for v in parse_vector(p["slab_shape"], 3, "--slab-shape"))
        grids = lambda e: thinfilm.SlabGrid.uniform(scene.domain, shape)
    slab_files = None
    if p.get("slabs"):
        slab_files = {}
        for item in p["slabs"]:
            try:
                e, prefix = item.split("=", 1)
                slab_files[float(e)] = prefix
            except ValueError:
                raise UsageError(f"--slab expects eps=prefix, got {item!r}") from None
    study = thinfilm.gamma_study(model, scene, measure, p.get("builder") or "recovery", eps, grids,
                                 grid, budget, cfg.tolerances.get("rel", 0.05), slab_files)
    word = "PASS" if study.verdict else "FAIL"
    emit(cfg, study.csv_rows(), study.to_dict(), summary=word)
    return EXIT_OK if study.verdict else EXIT_VERDICT


def cmd_verify(cfg):
    grid, budget = grid_budget(cfg)
    only = cfg.params.get("only")
    names = [n.strip() for n in only.split(",")] if only else None
    if names:
        unknown = [n for n in names if n not in verify.CHECKS]
        if unknown:
            raise UsageError(f"unknown checks: {', '.join(unknown)}; "
                             f"choose from {', '.join(verify.CHECKS)}")
    ctx = verify.Context(seed=cfg.seed, grid=grid, budget=budget)
    results = verify.run_checks(ctx, names)
    lines = [r.line() for r in results]
    for line in lines:
        print(line)
    if cfg.out:
        doc = {"seed": cfg.seed, "checks": [{"name": r.name, "ok": r.ok, "slack": r.slack} for r in results]}
        if cfg.format == "json":
            write_atomic(cfg.out, json.dumps(doc, indent=2, sort_keys=True) + "\n")
        else:
            write_atomic(cfg.out, csv_text([["check", "verdict", "slack"]]
                                           + [[r.name, "PASS" if r.ok else "FAIL", repr(r.slack)]
                                              for r in results]))
    return EXIT_OK if all(r.ok for r in results) else EXIT_VERDICT


COMMANDS = {"density": cmd_density, "cell": cmd_cell, "membrane": cmd_membrane,
            "gamma": cmd_gamma, "verify": cmd_verify}


# ------------------------------------------------------------------- main

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser():
    common = _Parser(add_help=False)
    common.add_argument("--model", help="model JSON file or a built-in name (convex-norm, separable-laminate)")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", help="output file (written atomically)")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("--tol-qtol", type=float, help="q_tol constant (default 0.05)")
    common.add_argument("--tol-rel", type=float, help="gamma study relative tolerance (default 0.05)")
    common.add_argument("--n-alpha", type=int, help="cell grid in-plane nodes (default 16)")
    common.add_argument("--n-three", type=int, help="cell grid thickness layers (default 8)")
    common.add_argument("--starts", type=int, help="multi-start count (default 8)")

    p = _Parser(prog="membrelax", description="Relaxed membrane energies with bending moments.")
    sub = p.add_subparsers(dest="command", required=True)

    d = sub.add_parser("density", parents=[common], help="evaluate W, its recession or W0")
    d.add_argument("--xi")
    d.add_argument("--b")
    d.add_argument("--xi-unit", action="store_true", help="use xi = e1 (x) e1")
    d.add_argument("--recession", action="store_true")
    d.add_argument("--w-zero", action="store_true")
    d.add_argument("--samples")

    c = sub.add_parser("cell", help="cell problems")
    csub = c.add_subparsers(dest="sub", required=True)
    for name in ("qstar", "qw0", "recession", "rotated", "gamma-surface", "sweep"):
        s = csub.add_parser(name, parents=[common])
        if name == "sweep":
            s.add_argument("--samples", required=True)
        else:
            s.add_argument("--xi")
            s.add_argument("--b")
        if name in ("rotated", "gamma-surface"):
            s.add_argument("--nu")
        if name == "gamma-surface":
            s.add_argument("--z")

    m = sub.add_parser("membrane", parents=[common], help="limit energy of a scene")
    m.add_argument("--scene")
    m.add_argument("--no-moment", action="store_true")
    m.add_argument("--loads")

    g = sub.add_parser("gamma", parents=[common], help="epsilon study on slab fields")
    g.add_argument("--scene")
    g.add_argument("--builder", choices=("recovery", "example-dirac", "slab-files"))
    g.add_argument("--eps")
    g.add_argument("--slab-shape")
    g.add_argument("--slab", dest="slabs", action="append")

    v = sub.add_parser("verify", parents=[common], help="invariant suite")
    v.add_argument("--only", help="comma-separated check names")
    return p


def config_from_args(ns):
    skip = {"command", "model", "seed", "out", "format", "tol_qtol", "tol_rel"}
    tol = {}
    if ns.tol_qtol is not None:
        tol["qtol"] = ns.tol_qtol
    if ns.tol_rel is not None:
        tol["rel"] = ns.tol_rel
    if ns.seed < 0:
        raise UsageError("--seed must be a nonnegative integer")
    params = {k: v for k, v in vars(ns).items() if k not in skip}
    return RunConfig(ns.command, ns.model, ns.seed, ns.out, ns.format, tol, params)


def main(argv=None):
    try:
        cfg = config_from_args(build_parser().parse_args(argv))
        return COMMANDS[cfg.command](cfg)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ModelError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SceneError as exc:
        print(f"scene error: {exc}", file=sys.stderr)
        for f in exc.findings:
            print(f"  {f.code}: {f.message}" + (f" [{f.where}]" if f.where else ""), file=sys.stderr)
        return EXIT_SCENE
    except ResolutionError as exc:
        shape = f" (minimum grid {exc.min_shape})" if exc.min_shape else ""
        print(f"resolution error: {exc}{shape}", file=sys.stderr)
        return EXIT_RESOLUTION
    except (ConvergenceError, QuadratureError, TermError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        diag = getattr(exc, "diagnostics", None) or getattr(getattr(exc, "cause", None), "diagnostics", None)
        if diag:
            print(f"  diagnostics: {json.dumps(diag, default=str)}", file=sys.stderr)
        return EXIT_SOLVER
    except MembrelaxError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
