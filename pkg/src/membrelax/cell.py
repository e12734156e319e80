"""Discrete cell problems on ``Q' x I``.

The test field ``phi`` lives on the nodes of a uniform grid that is periodic
in the two in-plane axes and has ``n_three + 1`` node layers across
``I = (-1/2, 1/2)``.  Gradients are those of the trilinear interpolant taken
at cell centres (forward differences averaged over the cell), integrated by
the one-point rule.

Internally the solver works with ``psi = lambda * phi`` and ``s = log lambda``
so the integrand reads ``W(xi_bar + psi_alpha / lambda | psi_3)``.  The mean
of ``psi_3`` is pinned to ``b`` by subtracting the mean of the free field's
third-direction gradient and adding ``x3 * b``; the feasible set is then a
linear space and no multiplier is needed.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize

from .errors import ConvergenceError, DomainError
from .models import (as_matrix, check_ladder, extrapolate_ladder, join,
                     ladder_fit_weights, w_zero)


@dataclass(frozen=True)
class CellGrid:
    n_alpha: int = 16
    n_three: int = 8

    def __post_init__(self):
        if self.n_alpha < 4 or self.n_three < 2:
            raise DomainError("cell grid needs n_alpha >= 4 and n_three >= 2")

    @property
    def h(self):
        return 1.0 / self.n_alpha

    @property
    def h3(self):
        return 1.0 / self.n_three

    @property
    def node_shape(self):
        return (self.n_alpha, self.n_alpha, self.n_three + 1, 3)

    @property
    def x3(self):
        return -0.5 + np.arange(self.n_three + 1) * self.h3

    def refined(self, factor=2):
        return CellGrid(self.n_alpha * factor, self.n_three * factor)


@dataclass
class SolverBudget:
    """Knobs of the discrete cell solve.

    The first continuation stage screens every start with at most
    ``screen_maxiter`` iterations; the best ``keep`` are then polished.
    ``qtol_const`` sets the reported discretization tolerance
    ``q_tol = qtol_const * (1/n_alpha + 1/n_three)``.
    """

    starts: int = 8
    deltas: tuple = (1e-1, 1e-2, 1e-3)
    keep: int = 2
    screen_maxiter: int = 60
    maxiter: int = 300
    seed: int = 0
    lambda_bounds: tuple = (1e-3, 1e3)
    qtol_const: float = 0.05


def q_tol(grid, budget=None):
    budget = budget or SolverBudget()
    return budget.qtol_const * (1.0 / grid.n_alpha + 1.0 / grid.n_three)


# ----------------------------------------------------------------- operators

def _avg_next(a, axis):
    return 0.5 * (a + np.roll(a, -1, axis))


def _avg_next_T(g, axis):
    return 0.5 * (g + np.roll(g, 1, axis))


def cell_gradient(psi, h, h3):
    """Cell-centre gradients of the trilinear interpolant.

    ``psi`` has shape ``(n, n, m+1, 3)``; returns ``(n, n, m, 3, 2)`` in-plane
    and ``(n, n, m, 3)`` transverse gradients.
    """
    d1 = np.roll(psi, -1, 0) - psi
    d1 = _avg_next(d1, 1)
    d1 = 0.5 * (d1[:, :, :-1] + d1[:, :, 1:]) / h
    d2 = np.roll(psi, -1, 1) - psi
    d2 = _avg_next(d2, 0)
    d2 = 0.5 * (d2[:, :, :-1] + d2[:, :, 1:]) / h
    d3 = psi[:, :, 1:] - psi[:, :, :-1]
    d3 = _avg_next(_avg_next(d3, 0), 1) / h3
    return np.stack([d1, d2], axis=-1), d3


def cell_gradient_T(ga, g3, h, h3):
    """Adjoint of :func:`cell_gradient`."""
    n, _, m = g3.shape[:3]
    out = np.zeros((n, n, m + 1, 3))

    def layers_T(g):
        full = np.zeros((n, n, m + 1, 3))
        full[:, :, :-1] += 0.5 * g
        full[:, :, 1:] += 0.5 * g
        return full

    t = layers_T(ga[..., 0] / h)
    t = _avg_next_T(t, 1)
    out += np.roll(t, 1, 0) - t
    t = layers_T(ga[..., 1] / h)
    t = _avg_next_T(t, 0)
    out += np.roll(t, 1, 1) - t
    t = _avg_next_T(_avg_next_T(g3 / h3, 1), 0)
    out[:, :, 1:] += t
    out[:, :, :-1] -= t
    return out


def planar_gradient(psi, h):
    """Cell-centre gradient of a bilinear periodic field ``(n, n, 3)``."""
    d1 = _avg_next(np.roll(psi, -1, 0) - psi, 1) / h
    d2 = _avg_next(np.roll(psi, -1, 1) - psi, 0) / h
    return np.stack([d1, d2], axis=-1)


def planar_gradient_T(g, h):
    t = _avg_next_T(g[..., 0] / h, 1)
    out = np.roll(t, 1, 0) - t
    t = _avg_next_T(g[..., 1] / h, 0)
    out += np.roll(t, 1, 1) - t
    return out


# ---------------------------------------------------------------- wrappers

class ScaledDensity:
    """``W_t(xi) = W(t xi) / t``; smoothing width scales with ``t`` so it
    stays fixed in the normalized variable."""

    def __init__(self, model, t):
        self.model, self.t = model, float(t)
        self.constants = model.constants
        self.is_convex = model.is_convex

    def value_grad(self, xi, delta=0.0):
        v, g = self.model.value_grad(self.t * xi, delta * self.t)
        return v / self.t, g

    def value(self, xi):
        return self.value_grad(xi)[0]


class RecessionDensity:
    """``W^inf`` as a density.  Closed form when available, otherwise the
    fixed-exponent ladder fit (linear in the samples, hence differentiable)."""

    def __init__(self, model, t_ladder=(256.0, 1024.0, 4096.0)):
        self.model = model
        self.constants = model.constants
        self.is_convex = model.is_convex
        self.ts = np.asarray(t_ladder, dtype=float)[-3:]
        self.weights = ladder_fit_weights(self.ts, model.constants.r)[0]

    def value_grad(self, xi, delta=0.0):
        if self.model.has_closed_form_recession:
            return self.model.recession_value_grad(xi, delta)
        val = 0.0
        grad = 0.0
        for w, t in zip(self.weights, self.ts):
            v, g = self.model.value_grad(t * xi, delta * t)
            val = val + w * v / t
            grad = grad + w * g
        return val, grad

    def value(self, xi):
        return self.value_grad(xi)[0]


class RotatedDensity:
    """``W~(eta_bar | c) = W(eta_bar R^T | c)`` for a planar rotation ``R``."""

    def __init__(self, model, R):
        self.model, self.R = model, np.asarray(R, dtype=float)
        self.constants = model.constants
        self.is_convex = model.is_convex

    def value_grad(self, xi, delta=0.0):
        rot = np.concatenate([xi[..., :, :2] @ self.R.T, xi[..., :, 2:]], axis=-1)
        v, g = self.model.value_grad(rot, delta)
        return v, np.concatenate([g[..., :, :2] @ self.R, g[..., :, 2:]], axis=-1)

    def value(self, xi):
        return self.value_grad(xi)[0]


def frame(nu):
    """Rotation ``R = [tau | nu]`` with ``tau = (nu_2, -nu_1)``; identity at ``e_2``."""
    nu = np.asarray(nu, dtype=float)
    if nu.shape != (2,) or abs(np.linalg.norm(nu) - 1) > 1e-12:
        raise DomainError("nu must be a unit vector in R^2")
    return np.array([[nu[1], nu[0]], [-nu[0], nu[1]]])


# ------------------------------------------------------------ field + result

@dataclass
class CellField:
    grid: CellGrid
    values: np.ndarray

    def gradients(self):
        return cell_gradient(self.values, self.grid.h, self.grid.h3)

    def sample(self, y, x3):
        """Periodic trilinear interpolation at in-plane points ``y`` (cell
        coordinates, wrapped into ``Q'``) and heights ``x3``."""
        y = np.asarray(y, dtype=float)
        x3 = np.asarray(x3, dtype=float)
        n, m = self.grid.n_alpha, self.grid.n_three
        u = (y + 0.5) * n
        i0 = np.floor(u).astype(int)
        fr = u - i0
        i0 = np.mod(i0, n)
        i1 = np.mod(i0 + 1, n)
        w3 = np.clip((x3 + 0.5) * m, 0, m)
        k0 = np.minimum(np.floor(w3).astype(int), m - 1)
        f3 = (w3 - k0)[..., None]
        out = 0.0
        for a, wa in ((i0[..., 0], 1 - fr[..., 0]), (i1[..., 0], fr[..., 0])):
            for b_, wb in ((i0[..., 1], 1 - fr[..., 1]), (i1[..., 1], fr[..., 1])):
                w = (wa * wb)[..., None]
                lo = self.values[a, b_, k0]
                hi = self.values[a, b_, k0 + 1]
                out = out + w * (lo * (1 - f3) + hi * f3)
        return out

    def to_dict(self):
        return {"n_alpha": self.grid.n_alpha, "n_three": self.grid.n_three,
                "values": self.values.tolist()}

    @classmethod
    def from_dict(cls, doc):
        grid = CellGrid(doc["n_alpha"], doc["n_three"])
        values = np.asarray(doc["values"], dtype=float)
        if values.shape != grid.node_shape:
            raise DomainError("cell field values do not match the grid")
        return cls(grid, values)


@dataclass
class CellSolution:
    value: float
    lam: float
    field: CellField
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self, include_field=True):
        doc = {"value": self.value, "lambda": self.lam, "diagnostics": self.diagnostics}
        if include_field:
            doc["field"] = self.field.to_dict()
        return doc

    @classmethod
    def from_dict(cls, doc):
        return cls(float(doc["value"]), float(doc["lambda"]),
                   CellField.from_dict(doc["field"]), dict(doc.get("diagnostics", {})))


# ------------------------------------------------------------------ solver

def _low_mode_field(rng, grid, amp):
    """Random smooth start: in-plane Fourier modes 0..2 times a cubic in x3.

    Avoids the in-plane Nyquist modes that the cell-centre gradient cannot see.
    """
    n = grid.n_alpha
    xs = np.arange(n) / n
    out = np.zeros(grid.node_shape)
    z = grid.x3
    for k1 in range(3):
        for k2 in range(3):
            phase = rng.uniform(0, 2 * np.pi)
            plane = np.cos(2 * np.pi * (k1 * xs[:, None] + k2 * xs[None, :]) + phase)
            coef = rng.normal(size=(4, 3))
            prof = coef[0] + np.outer(z, coef[1]) + np.outer(z ** 2, coef[2]) + np.outer(z ** 3, coef[3])
            out += plane[:, :, None, None] * prof[None, None]
    return amp * out / 9.0


def _laminate_profile(grid, slope_lo, slope_hi, theta):
    """Field with transverse slope ``slope_lo`` on the lowest ``theta``
    fraction of layers and ``slope_hi`` above."""
    m = grid.n_three
    k_split = int(round(theta * m))
    slopes = np.array([slope_lo if k < k_split else slope_hi for k in range(m)])
    prof = np.concatenate([np.zeros((1, 3)), np.cumsum(slopes, axis=0) * grid.h3])
    return np.broadcast_to(prof, grid.node_shape).copy()


def _fraction_field(grid, b0, theta):
    """Two-well mixture at volume fraction ``theta`` of ``+b0``.

    Node columns carry ``k`` or ``k + 1`` layers of slope ``+b0`` (the rest
    ``-b0``), split into two in-plane blocks so the column average hits
    ``theta`` up to ``1 / (n_alpha * n_three)``.
    """
    n, m = grid.n_alpha, grid.n_three
    target = theta * m
    k = int(math.floor(target))
    extra = int(round((target - k) * n))
    out = np.empty(grid.node_shape)
    for i in range(n):
        kk = min(k + (1 if i < extra else 0), m)
        out[i] = _laminate_profile(grid, b0, -b0, kk / m)[0]
    return out


def _starts(density, xi_bar, b, grid, budget, warm):
    rng = np.random.default_rng(budget.seed)
    zero = (np.zeros(grid.node_shape), 0.0)
    if getattr(density, "is_convex", False):
        # every local minimizer of a convex problem is global
        return [zero] + ([warm] if warm is not None else [])
    scale = 1.0 + np.linalg.norm(xi_bar) + np.linalg.norm(b)
    _, b0 = w_zero(density, xi_bar, n_coarse=11)
    if np.linalg.norm(b0) < 1e-8:
        b0 = rng.normal(size=3)
        b0 /= np.linalg.norm(b0)
    bn = float(b0 @ b0)
    theta = float(np.clip(0.5 * (1 + (b @ b0) / bn), 0, 1))
    starts = [zero,
              (_laminate_profile(grid, b0, -b0, 0.5), 0.0),
              (_laminate_profile(grid, b0, -b0, theta), 0.0),
              # in-plane mixing is cheap once lambda is large
              (_fraction_field(grid, b0, theta), math.log(100.0))]
    while len(starts) < budget.starts:
        starts.append((_low_mode_field(rng, grid, 0.3 * scale), 0.0))
    starts = starts[:budget.starts]
    if warm is not None:
        starts.append(warm)
    return starts


class _CellObjective:
    """Objective in ``(psi, t)`` with ``log lambda = S tanh(t / S)``; the
    squash keeps ``lambda`` inside its bracket without bound constraints."""

    def __init__(self, density, xi_bar, b, grid, log_bound):
        self.density, self.xi_bar, self.b, self.grid = density, xi_bar, b, grid
        self.S = log_bound
        self.ncell = grid.n_alpha ** 2 * grid.n_three
        self.shape = grid.node_shape

    def fields(self, x):
        psi = x[:-1].reshape(self.shape)
        ga, g3 = cell_gradient(psi, self.grid.h, self.grid.h3)
        g3 = g3 - g3.mean(axis=(0, 1, 2)) + self.b
        return psi, ga, g3

    def __call__(self, x, delta):
        _, ga, g3 = self.fields(x)
        th = math.tanh(x[-1] / self.S)
        inv = math.exp(-self.S * th)
        XI = join(self.xi_bar + inv * ga, g3)
        val, g = self.density.value_grad(XI, delta)
        g = g / self.ncell
        dga = inv * g[..., :2]
        dg3 = g[..., 2]
        dg3 = dg3 - dg3.mean(axis=(0, 1, 2))
        dpsi = cell_gradient_T(dga, dg3, self.grid.h, self.grid.h3)
        ds = -inv * float(np.sum(g[..., :2] * ga)) * (1 - th * th)
        return float(np.sum(val) / self.ncell), np.append(dpsi.ravel(), ds)

    def exact(self, x):
        return self(x, 0.0)[0]

    def physical(self, x):
        """``(lambda, phi)`` with the constraint shift applied."""
        psi = x[:-1].reshape(self.shape)
        _, g3 = cell_gradient(psi, self.grid.h, self.grid.h3)
        shift = self.b - g3.mean(axis=(0, 1, 2))
        psi = psi + self.grid.x3[None, None, :, None] * shift
        lam = math.exp(self.log_lambda(x))
        return lam, psi / lam

    def log_lambda(self, x):
        return self.S * math.tanh(x[-1] / self.S)

    def to_t(self, s):
        s = float(np.clip(s, -0.999999 * self.S, 0.999999 * self.S))
        return self.S * math.atanh(s / self.S)


def _lbfgs(fun, x0, delta, maxiter):
    res = optimize.minimize(fun, x0, args=(delta,), jac=True, method="L-BFGS-B",
                            options={"maxiter": maxiter, "ftol": 1e-10, "gtol": 1e-8,
                                     "maxcor": 10})
    return res


def solve_cell(density, xi_bar, b, grid=None, budget=None, warm=None):
    """Discrete infimum of ``int W(xi_bar + grad_a phi | lambda grad_3 phi)``
    over periodic ``phi`` and ``lambda`` with ``lambda mean(grad_3 phi) = b``.

    ``density`` is anything with ``value_grad(xi, delta)`` and ``constants``;
    ``warm`` is an optional :class:`CellSolution` (any grid) used as an
    extra start.
    """
    grid = grid or CellGrid()
    budget = budget or SolverBudget()
    xi_bar = as_matrix(xi_bar, (3, 2))
    b = as_matrix(b, (3,))
    lo, hi = (math.log(v) for v in budget.lambda_bounds)
    if not lo < 0 < hi or abs(lo + hi) > 1e-12:
        raise DomainError("lambda bounds must be symmetric about 1 in log scale")
    obj = _CellObjective(density, xi_bar, b, grid, hi)

    warm_start = None
    if warm is not None:
        warm_start = _prolong(warm, grid)
    runs = []
    for psi0, s0 in _starts(density, xi_bar, b, grid, budget, warm_start):
        runs.append({"x": np.append(np.asarray(psi0).ravel(), obj.to_t(s0)), "iters": 0,
                     "history": [], "status": 0})

    # the affine field x3*b with lambda = 1 is always feasible
    trivial = np.zeros(int(np.prod(grid.node_shape)) + 1)
    best_x, best_val = trivial, obj.exact(trivial)

    active = list(range(len(runs)))
    for stage, delta in enumerate(budget.deltas):
        for idx in active:
            run = runs[idx]
            cap = budget.screen_maxiter if stage == 0 and len(active) > budget.keep else budget.maxiter
            res = _lbfgs(obj, run["x"], delta, cap)
            run["x"], run["status"] = res.x, res.status
            run["iters"] += int(res.nit)
            val = obj.exact(res.x)
            run["history"].append(val)
            if np.isfinite(val) and val < best_val:
                best_x, best_val = res.x.copy(), val
        if stage == 0:
            active = sorted(active, key=lambda i: runs[i]["history"][-1])[:budget.keep]

    if not np.isfinite(best_val):
        raise ConvergenceError("no start produced a finite cell energy",
                               {"histories": [r["history"] for r in runs]})
    tol = q_tol(grid, budget)
    lead = runs[active[0]]
    hist = lead["history"]
    swings = np.diff(hist)
    if lead["status"] not in (0,) and len(swings) > 1 and np.any(swings[:-1] * swings[1:] < 0) \
            and np.max(np.abs(swings)) > tol:
        raise ConvergenceError("cell objective oscillates through the continuation",
                               {"history": hist, "status": int(lead["status"])})

    lam, phi = obj.physical(best_x)
    residual = float(np.linalg.norm(
        lam * cell_gradient(phi, grid.h, grid.h3)[1].mean(axis=(0, 1, 2)) - b))
    diag = {
        "iterations": int(sum(r["iters"] for r in runs)),
        "restarts": len(runs),
        "lambda_at_bound": bool(abs(obj.log_lambda(best_x)) > hi - 1e-6),
        "constraint_residual": residual,
        "q_tol": tol,
        "n_alpha": grid.n_alpha,
        "n_three": grid.n_three,
    }
    return CellSolution(float(best_val), lam, CellField(grid, phi), diag)


def _prolong(sol, grid):
    """Interpolate a solution onto ``grid``; returns a ``(psi, s)`` start."""
    n, m = grid.n_alpha, grid.n_three
    ys = -0.5 + np.arange(n) / n
    Y = np.stack(np.meshgrid(ys, ys, indexing="ij"), axis=-1)
    Y = np.broadcast_to(Y[:, :, None, :], (n, n, m + 1, 2))
    Z = np.broadcast_to(grid.x3[None, None, :], (n, n, m + 1))
    phi = sol.field.sample(Y, Z)
    return sol.lam * phi, math.log(sol.lam)


# -------------------------------------------------------------- operations

def qstar(model, xi_bar, b, grid=None, budget=None, warm=None):
    """Relaxed bending density ``Q*W(xi_bar | b)`` on the discrete cell."""
    return solve_cell(model, xi_bar, b, grid, budget, warm)


def _sweep_one(args):
    model, xi_bar, b, grid, budget = args
    try:
        return qstar(model, xi_bar, b, grid, budget), None
    except Exception as exc:  # reported per row
        return None, f"{type(exc).__name__}: {exc}"


@dataclass
class SweepRow:
    xi_bar: np.ndarray
    b: np.ndarray
    solution: CellSolution = None
    error: str = None


def worker_count(workers=None):
    if workers is not None:
        return max(1, int(workers))
    return max(1, int(os.environ.get("MEMBRELAX_THREADS", "1")))


def qstar_sweep(model, samples, grid=None, budget=None, workers=None):
    """``qstar`` over a list of ``(xi_bar, b)``; per-row errors never abort."""
    samples = list(samples)
    if not samples:
        raise DomainError("qstar_sweep needs at least one sample")
    jobs = [(model, np.asarray(x, float), np.asarray(b, float), grid, budget) for x, b in samples]
    nw = min(worker_count(workers), len(jobs))
    if nw > 1:
        with ProcessPoolExecutor(max_workers=nw) as pool:
            results = list(pool.map(_sweep_one, jobs))
    else:
        results = [_sweep_one(j) for j in jobs]
    return [SweepRow(j[1], j[2], sol, err) for j, (sol, err) in zip(jobs, results)]


SWEEP_HEADER = ["xi11", "xi12", "xi21", "xi22", "xi31", "xi32", "b1", "b2", "b3",
                "value", "lambda", "iters", "flag"]


def sweep_rows_csv(rows):
    """Rows of the sweep CSV (header first)."""
    out = [SWEEP_HEADER]
    for row in rows:
        head = [repr(float(v)) for v in np.ravel(row.xi_bar)] + [repr(float(v)) for v in row.b]
        if row.solution is None:
            out.append(head + ["nan", "nan", "0", "error:" + row.error.replace(",", ";")])
        else:
            s = row.solution
            flag = "lambda_at_bound" if s.diagnostics.get("lambda_at_bound") else "ok"
            out.append(head + [repr(s.value), repr(s.lam), str(s.diagnostics["iterations"]), flag])
    return out


def _solve_w0_cell(model, xi_bar, grid, budget):
    n = grid.n_alpha
    h = grid.h
    ncell = n * n
    rng = np.random.default_rng(budget.seed)
    _, b0 = w_zero(model, xi_bar, n_coarse=11)

    def fun(x, delta):
        psi = x[: ncell * 3].reshape(n, n, 3)
        c = x[ncell * 3:].reshape(n, n, 3)
        ga = planar_gradient(psi, h)
        val, g = model.value_grad(join(xi_bar + ga, c), delta)
        g = g / ncell
        dpsi = planar_gradient_T(g[..., :2], h)
        return float(val.sum() / ncell), np.concatenate([dpsi.ravel(), g[..., 2].ravel()])

    starts = [np.concatenate([np.zeros(ncell * 3), np.tile(b0, ncell)]),
              np.concatenate([np.zeros(ncell * 3), np.tile(-b0, ncell)])]
    half = np.where((np.arange(n) < n // 2)[:, None, None], b0, -b0)
    starts.append(np.concatenate([np.zeros(ncell * 3), np.broadcast_to(half, (n, n, 3)).ravel()]))
    scale = 0.3 * (1 + np.linalg.norm(xi_bar))
    while len(starts) < budget.starts:
        xs = np.arange(n) / n
        psi = np.zeros((n, n, 3))
        for k1 in range(3):
            for k2 in range(3):
                plane = np.cos(2 * np.pi * (k1 * xs[:, None] + k2 * xs[None, :]) + rng.uniform(0, 2 * np.pi))
                psi += plane[:, :, None] * rng.normal(size=3)
        c = b0 + rng.normal(size=(n, n, 3)) * 0.5
        starts.append(np.concatenate([scale * psi.ravel() / 9, c.ravel()]))

    best = math.inf
    xs_ = [s.copy() for s in starts]
    active = list(range(len(xs_)))
    iters = 0
    for stage, delta in enumerate(budget.deltas):
        vals = {}
        for i in active:
            res = optimize.minimize(fun, xs_[i], args=(delta,), jac=True, method="L-BFGS-B",
                                    options={"maxiter": budget.maxiter, "ftol": 1e-12, "gtol": 1e-9})
            xs_[i] = res.x
            iters += int(res.nit)
            vals[i] = fun(res.x, 0.0)[0]
            best = min(best, vals[i])
        if stage == 0:
            active = sorted(active, key=vals.get)[:budget.keep]
    if not np.isfinite(best):
        raise ConvergenceError("no finite value in the W0 cell problem", {"iterations": iters})
    return best, iters


def qw_zero(model, xi_bar, grid=None, budget=None):
    """2D quasiconvexification of ``W_0`` at ``xi_bar``.

    Solved as ``inf`` over periodic ``psi`` and a free per-cell ``c`` of
    ``int W(xi_bar + grad psi | c)``, which equals ``int W_0(xi_bar + grad psi)``
    after minimizing ``c`` pointwise.
    """
    grid = grid or CellGrid()
    budget = budget or SolverBudget()
    xi_bar = as_matrix(xi_bar, (3, 2))
    return _solve_w0_cell(model, xi_bar, grid, budget)[0]


DEFAULT_QSTAR_LADDER = (256.0, 512.0, 1024.0)


def qstar_recession(model, xi_bar, b, grid=None, budget=None, t_ladder=DEFAULT_QSTAR_LADDER,
                    rtol=2e-2):
    """``(Q*W)^inf(xi_bar | b)`` by extrapolating ``Q*W(t xi)/t``.

    Each ladder value is the cell problem for ``W(t .)/t`` at the unit
    direction; the result is rescaled by ``|(xi_bar|b)|``.
    """
    xi_bar = as_matrix(xi_bar, (3, 2))
    b = as_matrix(b, (3,))
    ts = check_ladder(t_ladder)
    n = float(np.linalg.norm(join(xi_bar, b)))
    if n == 0.0:
        return 0.0
    vals = [solve_cell(ScaledDensity(model, t), xi_bar / n, b / n, grid, budget).value for t in ts]
    return n * extrapolate_ladder(vals, ts, model.constants.r, rtol)


def qstar_of_recession(model, xi_bar, b, grid=None, budget=None):
    """``Q*(W^inf)(xi_bar | b)``: the cell problem with ``W`` replaced by its recession."""
    return solve_cell(RecessionDensity(model), xi_bar, b, grid, budget).value


def qstar_rotated(model, xi_bar, b, nu, grid=None, budget=None):
    """Cell problem posed on the rotated square ``Q'_nu``.

    With ``R = [tau | nu]`` and ``psi(y) = phi(R y)``, the problem becomes the
    standard one for ``W~(eta|c) = W(eta R^T | c)`` at ``xi_bar R``.
    """
    R = frame(nu)
    xi_bar = as_matrix(xi_bar, (3, 2))
    if np.array_equal(np.asarray(nu, dtype=float), [0.0, 1.0]):
        sol = solve_cell(model, xi_bar, b, grid, budget)
    else:
        sol = solve_cell(RotatedDensity(model, R), xi_bar @ R, b, grid, budget)
    sol.diagnostics["nu"] = list(map(float, nu))
    return sol


@dataclass(frozen=True)
class JumpSpec:
    z: tuple
    nu: tuple
    b: tuple

    def __post_init__(self):
        if abs(np.linalg.norm(self.nu) - 1) > 1e-12:
            raise DomainError("jump normal must be a unit vector")

    @property
    def tau(self):
        return (self.nu[1], -self.nu[0])


def gamma_surface(model, spec, grid=None, budget=None):
    """Surface density ``gamma(z, nu, b)``.

    Writing the competitor as ``phi = (x . nu) z + psi`` with ``psi`` periodic
    on ``Q'_nu`` turns the trace condition into the rotated cell problem for
    ``W^inf`` at ``z (x) nu``.
    """
    z = np.asarray(spec.z, dtype=float)
    nu = np.asarray(spec.nu, dtype=float)
    return qstar_rotated(RecessionDensity(model), np.outer(z, nu), np.asarray(spec.b, float),
                         nu, grid, budget).value


def is_rank_one(a, tol=1e-10):
    s = np.linalg.svd(np.asarray(a, dtype=float), compute_uv=False)
    return s[0] == 0 or s[1] <= tol * s[0]


def check_directional_convexity(model, base, direction, t_samples, grid=None, budget=None):
    """Worst midpoint-convexity violation of ``t -> Q*W(base + t direction)``.

    ``direction = (z (x) nu, b')`` must have a rank-one planar part.
    """
    xi0, b0 = (np.asarray(v, dtype=float) for v in base)
    dxi, db = (np.asarray(v, dtype=float) for v in direction)
    if not is_rank_one(dxi):
        raise DomainError("direction's planar part must be rank one")
    ts = np.sort(np.asarray(t_samples, dtype=float))
    values = np.array([solve_cell(model, xi0 + t * dxi, b0 + t * db, grid, budget).value
                       for t in ts])
    violations = []
    for i in range(1, len(ts) - 1):
        w = (ts[i] - ts[i - 1]) / (ts[i + 1] - ts[i - 1])
        chord = (1 - w) * values[i - 1] + w * values[i + 1]
        violations.append(float(values[i] - chord))
    worst = max(violations) if violations else 0.0
    tol = q_tol(grid or CellGrid(), budget)
    return {"t": ts.tolist(), "values": values.tolist(), "violations": violations,
            "worst": max(worst, 0.0), "tolerance": tol, "ok": worst <= tol}
