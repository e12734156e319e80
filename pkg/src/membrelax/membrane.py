"""The limit membrane functional and the work of the loads.

``E(u, b)`` adds four terms: the bulk density ``Q*W`` on the absolutely
continuous parts, and the recession ``(Q*W)^inf`` on jump lines, on the
Cantor strip and on the remaining singular part of ``b``.
"""

from __future__ import annotations

import threading
from dataclasses import asdict, dataclass, field

import numpy as np

from .cell import (CellGrid, ScaledDensity, SolverBudget, q_tol, qstar,
                   qw_zero, DEFAULT_QSTAR_LADDER)
from .errors import ConvergenceError, DomainError, MembrelaxError
from .fields import (GEOM_TOL, BendingMeasure, QuadratureConfig, ZERO_MEASURE,
                     besicovitch_split, bump_profile, cantor_integral, rect_area,
                     rect_intersection, require_valid, weakstar_pairing)
from .models import check_ladder, extrapolate_ladder, join


class DensityCache:
    """Thread-safe memo of cell-problem values.

    Keys combine the model fingerprint, the kind of density and the
    arguments rounded to ``1e-12``.  A value, once stored, never changes.
    """

    def __init__(self):
        self._data = {}
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    @staticmethod
    def key(model, kind, *arrays):
        q = tuple(tuple(np.round(np.asarray(a, dtype=float).ravel() / 1e-12).astype(np.int64).tolist())
                  for a in arrays)
        return (model.fingerprint(), kind) + q

    def get(self, key, compute):
        with self._lock:
            if key in self._data:
                self.hits += 1
                return self._data[key]
        value = compute()
        with self._lock:
            # first writer wins so repeated lookups agree
            value = self._data.setdefault(key, value)
            self.misses += 1
        return value

    def __len__(self):
        return len(self._data)


@dataclass
class EnergyBreakdown:
    bulk: float
    jump: float
    cantor: float
    singular: float
    total: float
    tolerances: dict = field(default_factory=dict)
    load_work: float = None

    def to_dict(self):
        doc = asdict(self)
        if doc["load_work"] is None:
            doc.pop("load_work")
        return doc


class TermError(MembrelaxError):
    """A cell solve failed while evaluating one energy term."""

    def __init__(self, term, cause):
        super().__init__(f"{term} term: {cause}")
        self.term = term
        self.cause = cause


class _Densities:
    """Cell-problem values behind the energy terms, memoized."""

    def __init__(self, model, grid, budget, cache, ladder, moment=True):
        self.model, self.grid, self.budget = model, grid or CellGrid(), budget or SolverBudget()
        self.cache = cache if cache is not None else DensityCache()
        self.ladder = check_ladder(ladder)
        self.moment = moment
        self.tag = (self.grid.n_alpha, self.grid.n_three)

    def bulk(self, xi_bar, b):
        if self.moment:
            key = DensityCache.key(self.model, ("qstar",) + self.tag, xi_bar, b)
            return self.cache.get(key, lambda: qstar(self.model, xi_bar, b, self.grid, self.budget).value)
        key = DensityCache.key(self.model, ("qw0",) + self.tag, xi_bar)
        return self.cache.get(key, lambda: qw_zero(self.model, xi_bar, self.grid, self.budget))

    def recession(self, xi_bar, b):
        """Recession of the bulk density, 1-homogeneous through the unit direction."""
        xi_bar = np.asarray(xi_bar, dtype=float)
        b = np.zeros(3) if not self.moment else np.asarray(b, dtype=float)
        n = float(np.linalg.norm(join(xi_bar, b)))
        if n == 0.0:
            return 0.0
        ux, ub = xi_bar / n, b / n
        kind = ("rec-qstar" if self.moment else "rec-qw0",) + self.tag + tuple(self.ladder)
        key = DensityCache.key(self.model, kind, ux, ub)
        return n * self.cache.get(key, lambda: self._unit_recession(ux, ub))

    def _unit_recession(self, ux, ub):
        vals = []
        for t in self.ladder:
            dens = ScaledDensity(self.model, t)
            if self.moment:
                vals.append(qstar(dens, ux, ub, self.grid, self.budget).value)
            else:
                vals.append(qw_zero(dens, ux, self.grid, self.budget))
        return extrapolate_ladder(vals, self.ladder, self.model.constants.r, 2e-2)


def bulk_cells(scene, ac_parts):
    """Sub-rectangles on which both ``grad u`` and the area density are constant.

    Returns ``[(area, M, density)]`` with equal pairs merged.
    """
    X0, Y0, X1, Y1 = scene.domain
    for p in ac_parts:
        if p.rect[0] < X0 - GEOM_TOL or p.rect[1] < Y0 - GEOM_TOL or p.rect[2] > X1 + GEOM_TOL \
                or p.rect[3] > Y1 + GEOM_TOL:
            raise DomainError("area density rectangle leaves the domain")
    merged = {}
    for r in scene.regions:
        xs = sorted({r.rect[0], r.rect[2], *[min(max(v, r.rect[0]), r.rect[2])
                                           for p in ac_parts for v in (p.rect[0], p.rect[2])]})
        ys = sorted({r.rect[1], r.rect[3], *[min(max(v, r.rect[1]), r.rect[3])
                                           for p in ac_parts for v in (p.rect[1], p.rect[3])]})
        for i in range(len(xs) - 1):
            for j in range(len(ys) - 1):
                cell = (xs[i], ys[j], xs[i + 1], ys[j + 1])
                a = rect_area(cell)
                if a <= 0:
                    continue
                d = np.zeros(3)
                for p in ac_parts:
                    if rect_intersection(cell, p.rect):
                        d = d + p.density
                k = (tuple(r.M.ravel()), tuple(d))
                merged[k] = merged.get(k, 0.0) + a
    return [(a, np.array(k[0]).reshape(3, 2), np.array(k[1])) for k, a in merged.items()]


def _jump_pieces(scene, seg_index, on_jump):
    """Sub-intervals of a jump segment with their summed line density."""
    seg = scene.jumps[seg_index]
    L = seg.length
    d = seg.tangent
    pieces = [p.part for p in on_jump if p.jump == seg_index]
    cuts = {0.0, L}
    spans = []
    for p in pieces:
        s = sorted((float((p.p0 - seg.p0) @ d), float((p.p1 - seg.p0) @ d)))
        s = [min(max(v, 0.0), L) for v in s]
        cuts.update(s)
        spans.append((s[0], s[1], p.density))
    cuts = sorted(cuts)
    out = []
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        if hi - lo <= GEOM_TOL:
            continue
        mid = 0.5 * (lo + hi)
        rho = sum((dens for a, b, dens in spans if a <= mid <= b), np.zeros(3))
        out.append((hi - lo, rho))
    return out


def _term(name, fn):
    try:
        return fn()
    except (ConvergenceError, DomainError) as exc:
        raise TermError(name, exc) from exc


def membrane_energy(model, scene, measure=ZERO_MEASURE, grid=None, budget=None, cache=None,
                    ladder=DEFAULT_QSTAR_LADDER):
    """``E(u, b)`` for a structured scene and bending measure."""
    require_valid(scene)
    dens = _Densities(model, grid, budget, cache, ladder)
    split = besicovitch_split(scene, measure)
    tol = q_tol(dens.grid, dens.budget)
    tv_area = 0.0

    def bulk():
        nonlocal tv_area
        total = 0.0
        for area, M, d in bulk_cells(scene, split.b_a.ac):
            total += area * dens.bulk(M, d)
            tv_area += area
        return total

    def jump():
        total, mass = 0.0, 0.0
        for k, seg in enumerate(scene.jumps):
            z, nu = scene.jump_amplitude(seg), scene.jump_normal(seg)
            for length, rho in _jump_pieces(scene, k, split.b_j):
                total += length * dens.recession(np.outer(z, nu), rho)
                mass += length
        return total, mass

    def cantor():
        st = scene.staircase
        if st is None or np.linalg.norm(st.a) == 0:
            return 0.0, 0.0
        amp = float(np.linalg.norm(st.a))
        dc_mass = amp * scene.width
        kappa = np.zeros(3)
        if split.b_c.cantor is not None:
            # b_c = kappa mu and |D^c u| = |a| mu, so d b_c / d|D^c u| = kappa / |a|
            kappa = split.b_c.cantor.density
        return dc_mass * dens.recession(np.outer(st.a / amp, [0.0, 1.0]), kappa / amp), dc_mass

    def singular():
        sig = split.b_sigma
        total, mass = 0.0, 0.0
        zero = np.zeros((3, 2))
        for a in sig.atoms:
            total += dens.recession(zero, a.weight)
            mass += 1.0
        for p in sig.lines:
            total += p.length * dens.recession(zero, p.density)
            mass += p.length
        if sig.cantor is not None:
            total += sig.cantor.mass * dens.recession(zero, sig.cantor.density)
            mass += sig.cantor.mass
        return total, mass

    b = _term("bulk", bulk)
    j, jm = _term("jump", jump)
    c, cm = _term("cantor", cantor)
    s, sm = _term("singular", singular)
    tols = {"bulk": tol * tv_area, "jump": tol * jm, "cantor": tol * cm, "singular": tol * sm,
            "q_tol": tol}
    return EnergyBreakdown(b, j, c, s, b + j + c + s, tols)


def membrane_energy_no_moment(model, scene, grid=None, budget=None, cache=None,
                              ladder=DEFAULT_QSTAR_LADDER):
    """``E(u)`` with ``QW_0`` in the bulk and ``(QW_0)^inf`` on jumps and the Cantor strip."""
    require_valid(scene)
    dens = _Densities(model, grid, budget, cache, ladder, moment=False)
    tol = q_tol(dens.grid, dens.budget)
    zero_b = np.zeros(3)
    bulk = _term("bulk", lambda: sum(area * dens.bulk(M, zero_b)
                                     for area, M, _ in bulk_cells(scene, ())))

    def jump():
        return sum(seg.length * dens.recession(np.outer(scene.jump_amplitude(seg),
                                                        scene.jump_normal(seg)), zero_b)
                   for seg in scene.jumps)

    def cantor():
        st = scene.staircase
        if st is None or np.linalg.norm(st.a) == 0:
            return 0.0
        return scene.width * dens.recession(np.outer(st.a, [0.0, 1.0]), zero_b)

    j = _term("jump", jump)
    c = _term("cantor", cantor)
    tols = {"bulk": tol * scene.area, "jump": tol * sum(s.length for s in scene.jumps),
            "cantor": tol * (scene.width if scene.staircase is not None else 0.0),
            "singular": 0.0, "q_tol": tol}
    return EnergyBreakdown(bulk, j, c, 0.0, bulk + j + c, tols)


# ------------------------------------------------------------------- loads

@dataclass(frozen=True)
class MomentLoad:
    """Closed-form ``g0+`` vanishing on the boundary of ``omega``.

    ``kind`` is ``zero``, ``bump`` (tensor bump at ``center`` with half-width
    ``radius`` times ``amplitude``) or ``sine`` (product of half-sines over
    the domain times ``amplitude``).
    """

    kind: str = "zero"
    amplitude: tuple = (0.0, 0.0, 0.0)
    center: tuple = (0.5, 0.5)
    radius: float = 0.25

    def field(self, domain):
        amp = np.asarray(self.amplitude, dtype=float)
        X0, Y0, X1, Y1 = domain
        if self.kind == "zero":
            return lambda x: np.zeros(np.asarray(x).shape[:-1] + (3,))
        if self.kind == "bump":
            c, r = np.asarray(self.center, dtype=float), float(self.radius)

            def f(x):
                x = np.asarray(x, dtype=float)
                v = bump_profile((x[..., 0] - c[0]) / r) * bump_profile((x[..., 1] - c[1]) / r)
                return v[..., None] * amp
            return f
        if self.kind == "sine":
            def f(x):
                x = np.asarray(x, dtype=float)
                v = np.sin(np.pi * (x[..., 0] - X0) / (X1 - X0)) * np.sin(np.pi * (x[..., 1] - Y0) / (Y1 - Y0))
                return v[..., None] * amp
            return f
        raise DomainError(f"unknown moment load kind {self.kind!r}")


@dataclass(frozen=True)
class LoadSet:
    """``f_bar``, ``g1+`` and ``g1-`` are constant vectors or per-region
    dicts of vectors; ``g0_plus`` is a :class:`MomentLoad`."""

    f_bar: object = (0.0, 0.0, 0.0)
    g1_plus: object = (0.0, 0.0, 0.0)
    g1_minus: object = (0.0, 0.0, 0.0)
    g0_plus: MomentLoad = MomentLoad()

    def force(self, region_name):
        total = np.zeros(3)
        for part in (self.f_bar, self.g1_plus, self.g1_minus):
            v = part.get(region_name, (0.0, 0.0, 0.0)) if isinstance(part, dict) else part
            total = total + np.asarray(v, dtype=float)
        return total

    def check(self, domain, samples=64):
        """``g0+`` must vanish on the boundary of ``omega`` (sampled)."""
        X0, Y0, X1, Y1 = domain
        t = np.linspace(0, 1, samples)
        edges = np.concatenate([
            np.column_stack([X0 + t * (X1 - X0), np.full(samples, Y0)]),
            np.column_stack([X0 + t * (X1 - X0), np.full(samples, Y1)]),
            np.column_stack([np.full(samples, X0), Y0 + t * (Y1 - Y0)]),
            np.column_stack([np.full(samples, X1), Y0 + t * (Y1 - Y0)])])
        worst = float(np.max(np.abs(self.g0_plus.field(domain)(edges))))
        if worst > 1e-12:
            raise DomainError(f"g0+ does not vanish on the boundary (max {worst:.3g})")
        return True

    @classmethod
    def from_dict(cls, doc):
        g0 = doc.get("g0_plus") or {}
        return cls(doc.get("f_bar", (0.0, 0.0, 0.0)), doc.get("g1_plus", (0.0, 0.0, 0.0)),
                   doc.get("g1_minus", (0.0, 0.0, 0.0)),
                   MomentLoad(g0.get("kind", "zero"), tuple(g0.get("amplitude", (0.0, 0.0, 0.0))),
                              tuple(g0.get("center", (0.5, 0.5))), float(g0.get("radius", 0.25))))


def _staircase_region_integral(scene, rect):
    """``int_rect cantor_profile(x2) dx`` for the scene's staircase."""
    st = scene.staircase
    L = st.y1 - st.y0

    def F(y):
        # integral from y0 of the clipped profile
        if y <= st.y0:
            return 0.0
        if y >= st.y1:
            return L * cantor_integral(1.0) + (y - st.y1)
        return L * cantor_integral((y - st.y0) / L)

    return (rect[2] - rect[0]) * (F(rect[3]) - F(rect[1]))


def load_work(loads, scene, measure=ZERO_MEASURE, cfg=None):
    """``F(u, b) = int (f_bar + g1+ + g1-) . u + int g0+ . db``."""
    loads.check(scene.domain)
    total = 0.0
    for r in scene.regions:
        f = loads.force(r.name)
        if not np.any(f):
            continue
        # u is affine on the region: the centroid rule is exact
        total += r.area * float(f @ r.affine(r.centroid))
        if scene.staircase is not None:
            total += float(f @ scene.staircase.a) * _staircase_region_integral(scene, r.rect)
    pairing = weakstar_pairing(measure, loads.g0_plus.field(scene.domain), cfg or QuadratureConfig())
    return total + float(pairing.value)


__all__ = ["DensityCache", "EnergyBreakdown", "TermError", "membrane_energy",
           "membrane_energy_no_moment", "MomentLoad", "LoadSet", "load_work", "bulk_cells",
           "BendingMeasure"]
