"""Invariant suite: each check compares solver output with an identity or an
independent oracle and reports the slack (tolerance minus measured error).

Checks are deterministic given the seed.  Results from expensive sweeps are
shared through a :class:`Context` so that, e.g., the growth check reuses the
convex sweep.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .cell import (CellGrid, JumpSpec, SolverBudget, check_directional_convexity, gamma_surface,
                   q_tol, qstar, qstar_recession, qstar_rotated, qstar_sweep, qw_zero, solve_cell)
from .fields import (Atom, BendingMeasure, CantorPart, horizontal_jump_scene, scene_from_dict,
                     staircase_scene, unit_square_scene, AcPart)
from .membrane import DensityCache, membrane_energy
from .models import builtin_models, join, w_zero
from .oracles import EnvelopeDensity, convex_norm_value, two_point_laminate, well_envelope
from .thinfilm import dirac_grid, dirac_l1_distance, example_dirac, gamma_study, moment_average
from .fields import bump, plateau


@dataclass
class CheckResult:
    name: str
    ok: bool
    slack: float
    detail: dict = field(default_factory=dict)

    def line(self):
        word = "PASS" if self.ok else "FAIL"
        return f"{word} {self.name} slack={self.slack:.6g}"


@dataclass
class Context:
    seed: int = 0
    grid: CellGrid = field(default_factory=CellGrid)
    budget: SolverBudget = field(default_factory=SolverBudget)
    workers: int = None
    store: dict = field(default_factory=dict)

    @property
    def models(self):
        return builtin_models()

    def memo(self, key, compute):
        if key not in self.store:
            self.store[key] = compute()
        return self.store[key]


def _result(name, errors, tol, detail):
    """``slack = tol - max(errors)``; ``ok`` iff nonnegative."""
    worst = max(errors) if len(errors) else 0.0
    slack = float(tol - worst)
    return CheckResult(name, slack >= 0, slack, detail)


E1 = np.eye(3)[0]
E3 = np.eye(3)[2]


def rank_one(z, nu):
    return np.outer(np.asarray(z, dtype=float), np.asarray(nu, dtype=float))


# -------------------------------------------------------------- cell checks

def convex_samples(seed, n=10):
    """``n`` points ``(xi_bar, b)`` with joint norms evenly spread on ``[0, 2]``."""
    rng = np.random.default_rng(seed)
    out = []
    for r in np.linspace(0.0, 2.0, n):
        d = rng.normal(size=9)
        d *= r / np.linalg.norm(d)
        out.append((d[:6].reshape(3, 2), d[6:]))
    return out


def _convex_sweep(ctx):
    def run():
        model = ctx.models["convex-norm"]
        samples = convex_samples(ctx.seed)
        rows = qstar_sweep(model, samples, ctx.grid, ctx.budget, ctx.workers)
        return samples, rows
    return ctx.memo("convex-sweep", run)


def check_convex(ctx):
    samples, rows = _convex_sweep(ctx)
    errs, vals = [], []
    for (xi, b), row in zip(samples, rows):
        if row.error is not None:
            errs.append(math.inf)
            continue
        exact = float(convex_norm_value(join(xi, b)))
        vals.append(row.solution.value)
        errs.append(abs(row.solution.value - exact) / exact)
    return _result("convex", errs, 0.02, {"values": vals, "rel_errors": errs})


def check_growth(ctx):
    samples, rows = _convex_sweep(ctx)
    c = ctx.models["convex-norm"].constants
    tol = q_tol(ctx.grid, ctx.budget)
    errs = []
    for (xi, b), row in zip(samples, rows):
        s = float(np.linalg.norm(xi) + np.linalg.norm(b))
        if row.error is not None:
            errs.append(math.inf)
            continue
        v = row.solution.value
        # positive entries are violations beyond q_tol
        errs.append(max(c.beta_lo * s - v, v - c.beta_hi * (1 + s)))
    res = _result("growth", errs, tol, {"excess": errs, "q_tol": tol})
    res.detail["violations"] = int(sum(e > tol for e in errs))
    return res


LAMINATE_ORACLE_ZERO = 0.5


def check_laminate(ctx):
    model = ctx.models["separable-laminate"]
    oracle, *_ = two_point_laminate(lambda b: model.well_energy(b)[0], np.zeros(3))
    sol = qstar(model, np.zeros((3, 2)), np.zeros(3), ctx.grid, ctx.budget)
    err = abs(sol.value - oracle) / oracle
    return _result("laminate", [err], 0.03, {"value": sol.value, "oracle": oracle})


INF_B_XI = (np.zeros((3, 2)),
            0.5 * rank_one(E1, [1.0, 0.0]),
            np.array([[0.3, -0.2], [0.1, 0.4], [0.0, 0.2]]))


def cw_lower_bound(model, xi_bar):
    """A function ``b -> L(b)`` with ``L <= CW(xi_bar | .)``.

    The discrete cell value is a midpoint-rule average whose arguments have
    mean ``(xi_bar | b)``, so by Jensen it is at least ``CW(xi_bar | b)``.
    """
    nxi = float(np.linalg.norm(xi_bar))
    if model.is_convex:
        return lambda b: float(model.value(join(xi_bar, b)))
    if model.kind == "separable-laminate":
        env = well_envelope(model)

        def bound(b):
            s, r = env.coords(np.asarray(b, dtype=float)[None])
            if abs(s[0]) > env.width or r[0] > env.width:
                return model.constants.beta_lo * (nxi + float(np.linalg.norm(b)))
            return nxi + float(env(np.asarray(b, dtype=float)[None])[0])
        return bound
    c = model.constants
    return lambda b: c.beta_lo * (nxi + float(np.linalg.norm(b)))


def inf_b_min(model, xi_bar, grid, budget, offsets=np.linspace(-1.0, 1.0, 5)):
    """Minimum of ``qstar(xi_bar | b)`` over ``b* + offsets^3`` and ``b*``.

    ``b*`` is the ``w_zero`` minimizer.  Points whose lower bound exceeds the
    running minimum by more than ``q_tol`` are skipped; this cannot change the
    minimum, since every discrete value lies above the bound.
    """
    _, b_star = w_zero(model, xi_bar)
    O = np.stack(np.meshgrid(offsets, offsets, offsets, indexing="ij"), -1).reshape(-1, 3)
    pts = np.vstack([b_star[None], b_star + O])
    lb = cw_lower_bound(model, xi_bar)
    bounds = np.array([lb(b) for b in pts])
    order = np.argsort(bounds, kind="stable")
    margin = q_tol(grid, budget)
    best, best_b, solved = math.inf, None, 0
    for i in order:
        if bounds[i] > best + margin:
            break
        v = qstar(model, xi_bar, pts[i], grid, budget).value
        solved += 1
        if v < best:
            best, best_b = v, pts[i]
    return best, best_b, {"grid_points": len(pts), "solved": solved}


def check_inf_b(ctx):
    errs, detail = [], []
    for name, model in ctx.models.items():
        for xi in INF_B_XI:
            m, b, info = inf_b_min(model, xi, ctx.grid, ctx.budget)
            ref = qw_zero(model, xi, ctx.grid, ctx.budget)
            errs.append(abs(m - ref) / ref)
            detail.append({"model": name, "min": m, "argmin": list(map(float, b)), "qw_zero": ref, **info})
    return _result("inf-b", errs, 0.03, {"cases": detail})


IDEMPOTENCE_SAMPLES = (
    (np.zeros((3, 2)), np.zeros(3)),
    (np.zeros((3, 2)), 0.5 * E3),
    (0.3 * rank_one(E1, [1.0, 0.0]), 0.2 * E3),
    (np.zeros((3, 2)), np.array([0.0, 0.0, 1.5])),
    (np.array([[0.2, 0.0], [0.0, -0.1], [0.1, 0.0]]), np.array([0.3, 0.0, -0.4])),
)


def check_idempotence(ctx):
    model = ctx.models["separable-laminate"]
    env = EnvelopeDensity(model)
    errs, rows = [], []
    for xi, b in IDEMPOTENCE_SAMPLES:
        a = qstar(model, xi, b, ctx.grid, ctx.budget).value
        e = solve_cell(env, xi, b, ctx.grid, ctx.budget).value
        errs.append(abs(a - e) / e)
        rows.append({"from_W": a, "from_envelope": e})
    return _result("idempotence", errs, 0.03, {"samples": rows})


DIAG = (1 / math.sqrt(2), 1 / math.sqrt(2))
SURFACE_SPECS = (
    JumpSpec((1.0, 0.0, 0.0), (0.0, 1.0), (0.0, 0.0, 0.0)),
    JumpSpec((1.0, 0.0, 0.0), DIAG, (0.0, 0.0, 0.0)),
    JumpSpec((0.0, 0.0, 1.0), (0.0, 1.0), (0.0, 0.0, 0.5)),
    JumpSpec((0.6, 0.0, 0.8), (0.6, 0.8), (0.0, 0.0, 1.0)),
)


def check_surface(ctx):
    errs, rows = [], []
    for name, model in ctx.models.items():
        for spec in SURFACE_SPECS:
            g = gamma_surface(model, spec, ctx.grid, ctx.budget)
            r = qstar_recession(model, rank_one(spec.z, spec.nu), spec.b, ctx.grid, ctx.budget)
            errs.append(abs(g - r) / max(abs(r), 1e-12))
            rows.append({"model": name, "gamma": g, "recession": r})
    return _result("surface", errs, 0.04, {"cases": rows})


ROTATION_SAMPLES = (
    (np.zeros((3, 2)), np.zeros(3)),
    (np.zeros((3, 2)), E3),
    (0.5 * rank_one(E1, [1.0, 0.0]), 0.3 * E3),
    (np.array([[0.2, 0.1], [0.0, 0.3], [0.1, 0.0]]), np.array([0.2, 0.0, 0.6])),
)


def check_rotated(ctx):
    errs, rows = [], []
    for name, model in ctx.models.items():
        for xi, b in ROTATION_SAMPLES:
            ref = qstar(model, xi, b, ctx.grid, ctx.budget).value
            for nu in ((0.0, 1.0), DIAG):
                v = qstar_rotated(model, xi, b, nu, ctx.grid, ctx.budget).value
                errs.append(abs(v - ref) / ref)
                rows.append({"model": name, "nu": list(nu), "rotated": v, "standard": ref})
    return _result("rotated", errs, 0.04, {"cases": rows})


CONVEXITY_LINES = (
    ((np.zeros((3, 2)), np.zeros(3)), (np.zeros((3, 2)), E3)),
    ((np.zeros((3, 2)), np.zeros(3)), (rank_one(E1, [1.0, 0.0]), np.zeros(3))),
    ((np.zeros((3, 2)), 0.5 * E3), (rank_one(E3, [0.0, 1.0]), E3)),
    ((0.2 * rank_one(E1, [0.0, 1.0]), np.zeros(3)), (rank_one([0.0, 1.0, 0.0], DIAG), 0.5 * E3)),
    ((np.zeros((3, 2)), np.array([0.3, 0.0, 0.0])), (np.zeros((3, 2)), np.array([0.0, 0.6, 0.8]))),
)


def check_directional(ctx):
    tol = q_tol(ctx.grid, ctx.budget)
    worst, rows = [], []
    ts = np.linspace(-1.0, 1.0, 5)
    for name, model in ctx.models.items():
        for base, direction in CONVEXITY_LINES:
            rep = check_directional_convexity(model, base, direction, ts, ctx.grid, ctx.budget)
            worst.append(rep["worst"])
            rows.append({"model": name, "worst": rep["worst"], "values": rep["values"]})
    return _result("directional", worst, tol, {"lines": rows, "q_tol": tol})


# ---------------------------------------------------------- energy checks

def laminate_recession(xi_bar, b):
    """``(Q*W)^inf`` of the separable model: ``|xi_bar| + (1 + k)|b|``.

    ``CW <= Q*W <= W`` and both outer densities share this recession.
    """
    return float(np.linalg.norm(xi_bar) + 1.5 * np.linalg.norm(b))


def check_membrane(ctx):
    cv = ctx.models["convex-norm"]
    lam = ctx.models["separable-laminate"]
    cache = DensityCache()
    atom = BendingMeasure(atoms=(Atom(np.array([0.5, 0.5]), E3),))
    e_atom = membrane_energy(cv, unit_square_scene(), atom, ctx.grid, ctx.budget, cache)
    e_jump = membrane_energy(cv, horizontal_jump_scene(E1), BendingMeasure(), ctx.grid, ctx.budget, cache)
    a, kappa = np.array([1.0, 0.0, 0.0]), np.array([0.0, 0.0, 0.5])
    sc = staircase_scene(a)
    stair = BendingMeasure(cantor=CantorPart(kappa, 0.0, 1.0, 0.0, 1.0))
    e_st = membrane_energy(lam, sc, stair, ctx.grid, ctx.budget, cache)
    mass = float(np.linalg.norm(a)) * sc.width
    ref = mass * laminate_recession(rank_one(a / np.linalg.norm(a), [0.0, 1.0]), kappa / np.linalg.norm(a))
    errs = [abs(e_atom.total - 2) / 2, abs(e_jump.total - 2) / 2, abs(e_st.cantor - ref) / ref]
    return _result("membrane", errs, 0.03, {"atom": e_atom.to_dict(), "jump": e_jump.to_dict(),
                                            "staircase": e_st.to_dict(), "cantor_oracle": ref})


AFFINE_XI = np.array([[0.3, 0.0], [0.0, 0.2], [0.1, 0.1]])
AFFINE_B = np.array([0.0, 0.0, 0.4])
RECOVERY_EPS = (1 / 4, 1 / 8, 1 / 16, 1 / 32)


def affine_study(ctx, model_name="convex-norm"):
    def run():
        sc = unit_square_scene(AFFINE_XI)
        meas = BendingMeasure(ac=(AcPart((0.0, 0.0, 1.0, 1.0), AFFINE_B),))
        return gamma_study(ctx.models[model_name], sc, meas, "recovery", RECOVERY_EPS,
                           cell_grid=ctx.grid, budget=ctx.budget)
    return ctx.memo(("affine", model_name), run)


def check_gamma(ctx):
    st = affine_study(ctx)
    gaps = st.rel_gaps()
    decreasing = all(b <= a + 1e-12 for a, b in zip(gaps[:-1], gaps[1:]))
    res = _result("gamma", [gaps[-1]], 0.02, {"rel_gap": gaps, "J_eps": [r.J_eps for r in st.rows],
                                              "E": st.E_target, "nonincreasing": decreasing})
    res.ok = res.ok and decreasing
    return res


def dirac_scene():
    doc = {"domain": [-0.5, -0.5, 0.5, 0.5],
           "regions": [{"name": "all", "rect": [-0.5, -0.5, 0.5, 0.5]}],
           "measure": {"atoms": [{"point": [0.0, 0.0], "weight": [0.0, 0.0, 1.0]}]}}
    return scene_from_dict(doc)


def check_dirac(ctx):
    out = {}
    for eps in (1 / 16, 1 / 64):
        u = example_dirac(eps, dirac_grid(eps))
        m = moment_average(u, eps)
        out[eps] = {"l1": dirac_l1_distance(u),
                    "plateau": float(m.pair(plateau((0.0, 0.0), 0.1, 0.2))[2]),
                    "off_origin": float(m.pair(bump((0.25, 0.0), 0.25))[2])}
    fine, coarse = out[1 / 64], out[1 / 16]
    ratio = coarse["off_origin"] / max(fine["off_origin"], 1e-300)
    errs = [fine["l1"] - 1 / 64,                   # <= 0 required
            abs(fine["plateau"] - 1.0) - 0.01,     # <= 0 required
            4.0 - ratio]                           # <= 0 required
    return _result("dirac", errs, 0.0, {"eps_1/64": fine, "eps_1/16": coarse, "decrease": ratio})


def study_matrix(ctx):
    """Every builder family on the scenes it supports."""
    def run():
        cv = ctx.models["convex-norm"]
        lam = ctx.models["separable-laminate"]
        studies = {"affine-convex": affine_study(ctx, "convex-norm"),
                   "constant-laminate": gamma_study(lam, unit_square_scene(), BendingMeasure(), "recovery",
                                                    RECOVERY_EPS, cell_grid=ctx.grid, budget=ctx.budget),
                   "jump-convex": gamma_study(cv, horizontal_jump_scene(E1), BendingMeasure(), "recovery",
                                              (1 / 8, 1 / 16, 1 / 32, 1 / 64), cell_grid=ctx.grid,
                                              budget=ctx.budget),
                   "atom-convex": gamma_study(cv, unit_square_scene(),
                                              BendingMeasure(atoms=(Atom(np.array([0.5, 0.5]), E3),)),
                                              "recovery", (1 / 4, 1 / 16, 1 / 64), cell_grid=ctx.grid,
                                              budget=ctx.budget)}
        sc, meas = dirac_scene()
        studies["example-dirac"] = gamma_study(cv, sc, meas, "example-dirac", (1 / 16, 1 / 32, 1 / 64),
                                               cell_grid=ctx.grid, budget=ctx.budget)
        return studies
    return ctx.memo("matrix", run)


def check_liminf(ctx):
    studies = study_matrix(ctx)
    errs, rows = [], {}
    for name, st in studies.items():
        last = st.rows[-1]
        # positive when the final energy undercuts the limit beyond tolerance
        errs.append(st.E_target - st.E_tolerance - last.J_eps if last.error is None else math.inf)
        rows[name] = {"J_final": last.J_eps, "E": st.E_target, "tol": st.E_tolerance, "verdict": st.verdict}
    return _result("liminf", errs, 0.0, {"studies": rows})


CHECKS = {
    "convex": check_convex,
    "growth": check_growth,
    "laminate": check_laminate,
    "inf-b": check_inf_b,
    "idempotence": check_idempotence,
    "surface": check_surface,
    "rotated": check_rotated,
    "directional": check_directional,
    "membrane": check_membrane,
    "gamma": check_gamma,
    "dirac": check_dirac,
    "liminf": check_liminf,
}


def run_checks(ctx, only=None):
    names = list(CHECKS) if not only else list(only)
    unknown = [n for n in names if n not in CHECKS]
    if unknown:
        raise KeyError(f"unknown checks: {', '.join(unknown)}")
    return [CHECKS[n](ctx) for n in names]
