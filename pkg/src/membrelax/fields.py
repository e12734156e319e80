"""Planar BV deformations and structured bending measures.

A scene is a rectangle ``omega`` partitioned into axis-aligned rectangular
regions carrying affine maps ``u = M x + c``, jump segments on shared edges,
and an optional horizontal devil's staircase ``a * cantor(x2)`` across the
full width.  Measures are kept as symbolic parts (area densities, line
densities, atoms, a staircase-aligned Cantor part) so that each part's
carrier is known exactly.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import AmbiguityError, DomainError, QuadratureError, SceneError

GEOM_TOL = 1e-9
# distances in (GEOM_TOL, NEAR_TOL] count as a near-miss rather than a clear separation
NEAR_TOL = 1e-6


# -------------------------------------------------------------- cantor function

def cantor(t, digits=40):
    """Middle-thirds Cantor function on ``[0, 1]`` (clipped outside)."""
    t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
    out = np.zeros_like(t)
    done = np.zeros(t.shape, dtype=bool)
    x = t.copy()
    scale = 0.5
    for _ in range(digits):
        x = 3.0 * x
        d = np.floor(x)
        d = np.minimum(d, 2.0)
        hit = (d == 1) & ~done
        out = np.where(hit, out + scale, out)
        done |= hit
        out = np.where(~done & (d == 2), out + scale, out)
        x = x - d
        scale /= 2
    # t = 1 sits on the last ternary branch forever; the series then sums to 1
    return np.where(t >= 1.0, 1.0, out)


def cantor_integral(t, depth=60):
    """``int_0^t cantor(s) ds`` exactly, by self-similarity.

    ``F(t) = F(3t)/6`` on ``[0, 1/3]``, ``1/12 + (t - 1/3)/2`` on the middle
    third and ``1/4 + (t - 2/3)/2 + F(3t - 2)/6`` on the last third.
    """
    t = float(min(max(t, 0.0), 1.0))
    total, weight = 0.0, 1.0
    for _ in range(depth):
        if t <= 1.0 / 3.0:
            t = 3.0 * t
        elif t <= 2.0 / 3.0:
            return total + weight * (1.0 / 12.0 + (t - 1.0 / 3.0) / 2.0)
        else:
            total += weight * (0.25 + (t - 2.0 / 3.0) / 2.0)
            t = 3.0 * t - 2.0
        weight /= 6.0
    return total  # the remainder is below 6^-depth


# ----------------------------------------------------------------- geometry

def rect_area(r):
    return max(r[2] - r[0], 0.0) * max(r[3] - r[1], 0.0)


def rect_intersection(a, b):
    r = (max(a[0], b[0]), max(a[1], b[1]), min(a[2], b[2]), min(a[3], b[3]))
    return r if r[2] > r[0] and r[3] > r[1] else None


def _on_segment_line(p, a, b):
    """Distance from ``p`` to the infinite line through ``a, b``."""
    d = b - a
    n = np.array([-d[1], d[0]]) / np.linalg.norm(d)
    return abs(float((p - a) @ n))


# ------------------------------------------------------------------ scene

@dataclass(frozen=True)
class Region:
    name: str
    rect: tuple
    M: np.ndarray
    c: np.ndarray

    @property
    def area(self):
        return rect_area(self.rect)

    @property
    def centroid(self):
        x0, y0, x1, y1 = self.rect
        return np.array([(x0 + x1) / 2, (y0 + y1) / 2])

    def affine(self, x):
        return np.asarray(x) @ self.M.T + self.c


@dataclass(frozen=True)
class JumpSegment:
    p0: np.ndarray
    p1: np.ndarray
    minus: str
    plus: str
    z: np.ndarray = None
    nu: np.ndarray = None

    @property
    def length(self):
        return float(np.linalg.norm(self.p1 - self.p0))

    @property
    def tangent(self):
        return (self.p1 - self.p0) / self.length


@dataclass(frozen=True)
class Staircase:
    """``a * cantor((x2 - y0) / (y1 - y0))`` across the full domain width."""

    a: np.ndarray
    y0: float
    y1: float

    def profile(self, x2):
        return cantor((np.asarray(x2) - self.y0) / (self.y1 - self.y0))


@dataclass(frozen=True)
class Finding:
    code: str
    message: str
    where: str = ""


@dataclass
class ValidationReport:
    findings: list = field(default_factory=list)

    @property
    def ok(self):
        return not self.findings

    def codes(self):
        return [f.code for f in self.findings]

    def to_dict(self):
        return {"ok": self.ok, "findings": [vars(f) for f in self.findings]}


@dataclass(frozen=True)
class PlanarScene:
    domain: tuple
    regions: tuple
    jumps: tuple = ()
    staircase: Staircase = None

    @property
    def width(self):
        return self.domain[2] - self.domain[0]

    @property
    def height(self):
        return self.domain[3] - self.domain[1]

    @property
    def area(self):
        return rect_area(self.domain)

    def region(self, name):
        for r in self.regions:
            if r.name == name:
                return r
        raise SceneError(f"unknown region {name!r}", [Finding("unknown-region", name)])

    def jump_amplitude(self, seg):
        """``u+ - u-`` at the segment start (constant along a valid segment)."""
        return self.region(seg.plus).affine(seg.p0) - self.region(seg.minus).affine(seg.p0)

    def jump_normal(self, seg):
        """Unit normal pointing from the minus region into the plus region."""
        t = seg.tangent
        nu = np.array([-t[1], t[0]])
        if (self.region(seg.plus).centroid - seg.p0) @ nu < 0:
            nu = -nu
        return nu

    def region_index(self, x):
        """Index of the region containing each point (first match)."""
        x = np.asarray(x, dtype=float)
        idx = np.full(x.shape[:-1], -1)
        for k, r in enumerate(self.regions):
            x0, y0, x1, y1 = r.rect
            inside = (x[..., 0] >= x0) & (x[..., 0] <= x1) & (x[..., 1] >= y0) & (x[..., 1] <= y1)
            idx = np.where((idx < 0) & inside, k, idx)
        return idx

    def u(self, x):
        """Evaluate the deformation at points ``(..., 2)``."""
        x = np.asarray(x, dtype=float)
        idx = self.region_index(x)
        if np.any(idx < 0):
            raise DomainError("point outside every region")
        out = np.zeros(x.shape[:-1] + (3,))
        for k, r in enumerate(self.regions):
            sel = idx == k
            out[sel] = r.affine(x[sel])
        if self.staircase is not None:
            out = out + self.staircase.profile(x[..., 1])[..., None] * self.staircase.a
        return out

    def gradient(self, x):
        idx = self.region_index(np.asarray(x, dtype=float))
        Ms = np.stack([r.M for r in self.regions])
        return Ms[idx]


def validate_scene(scene):
    """Check partition, trace and staircase invariants; never raises."""
    rep = ValidationReport()
    add = rep.findings.append
    X0, Y0, X1, Y1 = scene.domain
    if not (X1 > X0 and Y1 > Y0):
        add(Finding("bad-domain", "domain must have positive extent"))
        return rep
    names = [r.name for r in scene.regions]
    if len(set(names)) != len(names):
        add(Finding("duplicate-region", "region names must be unique"))
    for r in scene.regions:
        x0, y0, x1, y1 = r.rect
        if not (x1 > x0 and y1 > y0):
            add(Finding("bad-region", "region has no area", r.name))
        if x0 < X0 - GEOM_TOL or y0 < Y0 - GEOM_TOL or x1 > X1 + GEOM_TOL or y1 > Y1 + GEOM_TOL:
            add(Finding("region-outside", "region extends beyond the domain", r.name))
        if r.M.shape != (3, 2) or r.c.shape != (3,) or not np.all(np.isfinite(r.M)) \
                or not np.all(np.isfinite(r.c)):
            add(Finding("bad-affine-map", "affine map must be finite with M 3x2, c in R^3", r.name))

    # partition: cover the domain by the arrangement of all rectangle edges
    xs = sorted({X0, X1, *[v for r in scene.regions for v in (r.rect[0], r.rect[2])]})
    ys = sorted({Y0, Y1, *[v for r in scene.regions for v in (r.rect[1], r.rect[3])]})
    for i in range(len(xs) - 1):
        for j in range(len(ys) - 1):
            cell = (xs[i], ys[j], xs[i + 1], ys[j + 1])
            if cell[0] < X0 or cell[2] > X1 or cell[1] < Y0 or cell[3] > Y1 or rect_area(cell) <= 0:
                continue
            cover = [r.name for r in scene.regions if rect_intersection(cell, r.rect)]
            where = f"[{cell[0]:g},{cell[2]:g}]x[{cell[1]:g},{cell[3]:g}]"
            if not cover:
                add(Finding("partition-gap", "part of the domain is not covered", where))
            elif len(cover) > 1:
                add(Finding("partition-overlap", f"regions {cover} overlap", where))

    by_name = {r.name: r for r in scene.regions}
    for k, seg in enumerate(scene.jumps):
        where = f"jump {k}"
        if seg.minus not in by_name or seg.plus not in by_name:
            add(Finding("unknown-region", "jump refers to an unknown region", where))
            continue
        if seg.length <= GEOM_TOL:
            add(Finding("degenerate-jump", "jump segment has zero length", where))
            continue
        rm, rp = by_name[seg.minus], by_name[seg.plus]
        edge = _shared_edge(rm.rect, rp.rect)
        if edge is None or not (_point_on_rect_edge(seg.p0, edge) and _point_on_rect_edge(seg.p1, edge)):
            add(Finding("jump-off-edge", "jump does not lie on the regions' shared edge", where))
            continue
        dz = (rp.M - rm.M) @ (seg.p1 - seg.p0)
        if np.linalg.norm(dz) > GEOM_TOL:
            add(Finding("trace-mismatch", "u+ - u- is not constant along the segment", where))
        z = scene.jump_amplitude(seg)
        if seg.z is not None and np.linalg.norm(np.asarray(seg.z) - z) > GEOM_TOL:
            add(Finding("trace-mismatch", f"declared jump {np.asarray(seg.z, dtype=float).tolist()} differs from traces {z.tolist()}",
                        where))
        if seg.nu is not None and np.linalg.norm(np.asarray(seg.nu) - scene.jump_normal(seg)) > GEOM_TOL:
            add(Finding("normal-orientation", "declared normal does not point from - to +", where))

    # adjacent regions whose traces differ must be separated by declared jumps
    regs = list(scene.regions)
    for i in range(len(regs)):
        for j in range(i + 1, len(regs)):
            edge = _shared_edge(regs[i].rect, regs[j].rect)
            if edge is None:
                continue
            a, b = np.array(edge[:2]), np.array(edge[2:])
            da = regs[j].affine(a) - regs[i].affine(a)
            db = regs[j].affine(b) - regs[i].affine(b)
            if max(np.linalg.norm(da), np.linalg.norm(db)) <= GEOM_TOL:
                continue
            covered = 0.0
            for seg in scene.jumps:
                if {seg.minus, seg.plus} == {regs[i].name, regs[j].name}:
                    covered += _overlap_length(seg.p0, seg.p1, a, b)
            if covered < np.linalg.norm(b - a) - GEOM_TOL:
                add(Finding("missing-jump", "traces differ on a shared edge without a declared jump",
                            f"{regs[i].name}|{regs[j].name}"))

    st = scene.staircase
    if st is not None:
        if not (Y0 - GEOM_TOL <= st.y0 < st.y1 <= Y1 + GEOM_TOL):
            add(Finding("bad-staircase", "staircase interval must lie inside the domain height"))
        else:
            strip = (X0, st.y0, X1, st.y1)
            inside = [r for r in scene.regions if rect_intersection(strip, r.rect)]
            if len({tuple(np.round(r.M, 12).ravel()) for r in inside}) > 1:
                add(Finding("mixed-staircase-strip",
                            "regions crossing the staircase strip carry different gradients"))
            for k, seg in enumerate(scene.jumps):
                lo, hi = sorted((seg.p0[1], seg.p1[1]))
                if hi > st.y0 + GEOM_TOL and lo < st.y1 - GEOM_TOL:
                    add(Finding("mixed-staircase-strip", "a jump crosses the staircase strip",
                                f"jump {k}"))
    return rep


def _shared_edge(a, b):
    """Common boundary segment of two closed rectangles with positive length."""
    x0, x1 = max(a[0], b[0]), min(a[2], b[2])
    y0, y1 = max(a[1], b[1]), min(a[3], b[3])
    if abs(x1 - x0) <= GEOM_TOL and y1 - y0 > GEOM_TOL:
        return (x0, y0, x0, y1)
    if abs(y1 - y0) <= GEOM_TOL and x1 - x0 > GEOM_TOL:
        return (x0, y0, x1, y0)
    return None


def _point_on_rect_edge(p, edge):
    x0, y0, x1, y1 = edge
    return (x0 - GEOM_TOL <= p[0] <= x1 + GEOM_TOL) and (y0 - GEOM_TOL <= p[1] <= y1 + GEOM_TOL)


def _overlap_length(p0, p1, a, b):
    """Length of the overlap of two collinear segments."""
    d = (b - a) / np.linalg.norm(b - a)
    s = sorted((float((p0 - a) @ d), float((p1 - a) @ d)))
    return max(0.0, min(s[1], np.linalg.norm(b - a)) - max(s[0], 0.0))


def require_valid(scene):
    rep = validate_scene(scene)
    if not rep.ok:
        raise SceneError("invalid scene: " + "; ".join(f"{f.code} ({f.where})" if f.where else f.code
                                                      for f in rep.findings), rep.findings)
    return scene


# ---------------------------------------------------------------- measures

@dataclass(frozen=True)
class AcPart:
    rect: tuple
    density: np.ndarray


@dataclass(frozen=True)
class LinePart:
    p0: np.ndarray
    p1: np.ndarray
    density: np.ndarray

    @property
    def length(self):
        return float(np.linalg.norm(self.p1 - self.p0))


@dataclass(frozen=True)
class Atom:
    point: np.ndarray
    weight: np.ndarray


@dataclass(frozen=True)
class CantorPart:
    """``density * mu`` where ``mu`` is the derivative of the staircase on
    ``[y0, y1]`` in ``x2`` times length in ``x1`` over ``[x0, x1]``."""

    density: np.ndarray
    y0: float
    y1: float
    x0: float
    x1: float

    @property
    def mass(self):
        return self.x1 - self.x0


@dataclass(frozen=True)
class BendingMeasure:
    ac: tuple = ()
    lines: tuple = ()
    atoms: tuple = ()
    cantor: CantorPart = None

    def scaled(self, t, parts=("ac", "lines", "atoms", "cantor")):
        t = float(t)
        kw = {}
        if "ac" in parts:
            kw["ac"] = tuple(replace(p, density=t * p.density) for p in self.ac)
        if "lines" in parts:
            kw["lines"] = tuple(replace(p, density=t * p.density) for p in self.lines)
        if "atoms" in parts:
            kw["atoms"] = tuple(replace(p, weight=t * p.weight) for p in self.atoms)
        if "cantor" in parts and self.cantor is not None:
            kw["cantor"] = replace(self.cantor, density=t * self.cantor.density)
        return replace(self, **kw)

    def plus(self, other):
        if self.cantor is not None and other.cantor is not None:
            raise DomainError("cannot add two Cantor parts")
        return BendingMeasure(self.ac + other.ac, self.lines + other.lines, self.atoms + other.atoms,
                              self.cantor if self.cantor is not None else other.cantor)


ZERO_MEASURE = BendingMeasure()


@dataclass(frozen=True)
class JumpLinePart:
    part: LinePart
    jump: int


@dataclass(frozen=True)
class BesicovitchSplit:
    b_a: BendingMeasure
    b_j: tuple          # JumpLinePart pieces lying on J_u
    b_c: BendingMeasure
    b_sigma: BendingMeasure

    @property
    def b_j_measure(self):
        return BendingMeasure(lines=tuple(p.part for p in self.b_j))

    def parts(self):
        return (self.b_a, self.b_j_measure, self.b_c, self.b_sigma)

    def total(self):
        out = ZERO_MEASURE
        for p in self.parts():
            out = out.plus(p)
        return out


def _split_line(part, scene):
    """Split a line part at the endpoints of collinear jump segments.

    Returns ``(on_jump, off_jump)`` lists; ``on_jump`` items carry the jump index.
    """
    a, b = part.p0, part.p1
    L = part.length
    if L <= GEOM_TOL:
        raise DomainError("line part has zero length")
    d = (b - a) / L
    cuts = []
    for k, seg in enumerate(scene.jumps):
        dist = max(_on_segment_line(seg.p0, a, b), _on_segment_line(seg.p1, a, b))
        if dist <= GEOM_TOL:
            s0, s1 = sorted((float((seg.p0 - a) @ d), float((seg.p1 - a) @ d)))
            lo, hi = max(s0, 0.0), min(s1, L)
            if hi - lo > GEOM_TOL:
                cuts.append((lo, hi, k))
        elif dist <= NEAR_TOL:
            s0, s1 = sorted((float((seg.p0 - a) @ d), float((seg.p1 - a) @ d)))
            if min(s1, L) - max(s0, 0.0) > -NEAR_TOL:
                raise AmbiguityError(
                    f"line part is {dist:.3g} away from jump {k}: neither on nor clearly off J_u",
                    [Finding("geometry-near-miss", f"distance {dist:.3g}", f"jump {k}")])
    cuts.sort()
    on, off = [], []
    pos = 0.0
    for lo, hi, k in cuts:
        lo = max(lo, pos)
        if hi <= lo:
            continue
        if lo - pos > GEOM_TOL:
            off.append(LinePart(a + pos * d, a + lo * d, part.density))
        on.append(JumpLinePart(LinePart(a + lo * d, a + hi * d, part.density), k))
        pos = hi
    if L - pos > GEOM_TOL:
        off.append(LinePart(a + pos * d, b, part.density))
    return on, off


def _cantor_matches(scene, cp):
    st = scene.staircase
    if st is None or np.linalg.norm(st.a) == 0:
        return False
    dev = max(abs(cp.y0 - st.y0), abs(cp.y1 - st.y1),
              abs(cp.x0 - scene.domain[0]), abs(cp.x1 - scene.domain[2]))
    if dev <= GEOM_TOL:
        return True
    if dev <= NEAR_TOL:
        raise AmbiguityError(f"Cantor part misses the staircase by {dev:.3g}",
                             [Finding("geometry-near-miss", f"deviation {dev:.3g}", "cantor")])
    return False


def besicovitch_split(scene, measure):
    """Route each part of ``measure`` to its carrier relative to ``D u``."""
    require_valid(scene)
    on_j, sigma_lines = [], []
    for part in measure.lines:
        on, off = _split_line(part, scene)
        on_j.extend(on)
        sigma_lines.extend(off)
    b_c = ZERO_MEASURE
    sigma_cantor = None
    if measure.cantor is not None:
        if _cantor_matches(scene, measure.cantor):
            b_c = BendingMeasure(cantor=measure.cantor)
        else:
            sigma_cantor = measure.cantor
    return BesicovitchSplit(
        b_a=BendingMeasure(ac=measure.ac),
        b_j=tuple(on_j),
        b_c=b_c,
        b_sigma=BendingMeasure(lines=tuple(sigma_lines), atoms=measure.atoms, cantor=sigma_cantor),
    )


def measure_total_variation(measure):
    tv = sum(rect_area(p.rect) * float(np.linalg.norm(p.density)) for p in measure.ac)
    tv += sum(p.length * float(np.linalg.norm(p.density)) for p in measure.lines)
    tv += sum(float(np.linalg.norm(p.weight)) for p in measure.atoms)
    if measure.cantor is not None:
        tv += measure.cantor.mass * float(np.linalg.norm(measure.cantor.density))
    return tv


def total_variations(scene, measure=ZERO_MEASURE):
    """Closed-form masses: ``area``, ``Du``, ``H1_J``, ``Dc``, ``b``."""
    dc = 0.0
    if scene.staircase is not None:
        dc = float(np.linalg.norm(scene.staircase.a)) * scene.width
    h1 = sum(seg.length for seg in scene.jumps)
    du = sum(r.area * float(np.linalg.norm(r.M)) for r in scene.regions)
    du += sum(seg.length * float(np.linalg.norm(scene.jump_amplitude(seg))) for seg in scene.jumps)
    du += dc
    return {"area": scene.area, "Du": du, "H1_J": h1, "Dc": dc,
            "b": measure_total_variation(measure)}


# -------------------------------------------------------------- quadrature

@dataclass(frozen=True)
class QuadratureConfig:
    order: int = 6
    rtol: float = 1e-10
    atol: float = 1e-12
    max_level: int = 7
    cantor_max_level: int = 14


def _gauss(order):
    x, w = np.polynomial.legendre.leggauss(order)
    return 0.5 * (x + 1), 0.5 * w


def _edges(lo, hi, k, extra):
    e = np.linspace(lo, hi, k + 1)
    inside = [t for t in extra if lo + GEOM_TOL < t < hi - GEOM_TOL]
    return np.unique(np.concatenate([e, inside])) if inside else e


def _rect_rule(rect, f, order, level):
    x0, y0, x1, y1 = rect
    g, w = _gauss(order)
    k = 2 ** level
    bx, by = getattr(f, "breaks", ((), ()))
    ex = _edges(x0, x1, k, bx)
    ey = _edges(y0, y1, k, by)
    px = (ex[:-1, None] + np.outer(np.diff(ex), g)).ravel()
    wx = np.outer(np.diff(ex), w).ravel()
    py = (ey[:-1, None] + np.outer(np.diff(ey), g)).ravel()
    wy = np.outer(np.diff(ey), w).ravel()
    P = np.stack(np.meshgrid(px, py, indexing="ij"), axis=-1)
    vals = np.asarray(f(P))
    W = np.outer(wx, wy)
    return np.tensordot(W, vals, axes=([0, 1], [0, 1]))


def _line_rule(p0, p1, f, order, level):
    g, w = _gauss(order)
    k = 2 ** level
    bx, by = getattr(f, "breaks", ((), ()))
    d = p1 - p0
    cuts = [(t - p0[0]) / d[0] for t in bx if abs(d[0]) > GEOM_TOL]
    cuts += [(t - p0[1]) / d[1] for t in by if abs(d[1]) > GEOM_TOL]
    e = _edges(0.0, 1.0, k, cuts)
    s = (e[:-1, None] + np.outer(np.diff(e), g)).ravel()
    ws = np.outer(np.diff(e), w).ravel()
    P = p0 + s[:, None] * (p1 - p0)
    vals = np.asarray(f(P))
    return np.linalg.norm(p1 - p0) * np.tensordot(ws, vals, axes=(0, 0))


def _adaptive(rule, cfg, what):
    prev = rule(0)
    for level in range(1, cfg.max_level + 1):
        cur = rule(level)
        err = float(np.max(np.abs(cur - prev)))
        if err <= max(cfg.atol, cfg.rtol * float(np.max(np.abs(cur)))):
            return cur, err
        prev = cur
    raise QuadratureError(f"{what}: quadrature budget exhausted (last change {err:.3g})", cur)


def _cantor_rule(cp, f, order, level):
    """Level-``k`` triadic approximation: mass ``2^-k`` at each surviving interval's midpoint."""
    left = np.array([0.0])
    for _ in range(level):
        left = np.concatenate([left / 3.0, left / 3.0 + 2.0 / 3.0])
    mids = cp.y0 + (left + 0.5 * 3.0 ** -level) * (cp.y1 - cp.y0)
    g, w = _gauss(order)
    k = 8
    e = np.linspace(cp.x0, cp.x1, k + 1)
    px = (e[:-1, None] + np.outer(np.diff(e), g)).ravel()
    wx = np.outer(np.diff(e), w).ravel()
    P = np.stack(np.meshgrid(px, mids, indexing="ij"), axis=-1)
    vals = np.asarray(f(P))
    return np.tensordot(wx, vals, axes=(0, 0)).sum(axis=0) * 2.0 ** -level


@dataclass
class PairingResult:
    value: np.ndarray
    error: float
    cantor_level: int = 0


def weakstar_pairing(measure, test, cfg=None):
    """``int test d measure`` part by part.

    ``test`` maps points ``(..., 2)`` to scalars ``(...)`` (result in R^3) or
    to vectors ``(..., 3)`` (dotted with the density; scalar result).
    Returns a :class:`PairingResult` with an error estimate.  A test may
    carry ``breaks = (x_lines, y_lines)`` where it is only piecewise smooth;
    the composite rules then split there.
    """
    cfg = cfg or QuadratureConfig()
    probe = np.asarray(test(np.zeros((1, 2)) + 0.0))
    vector = probe.ndim == 2 and probe.shape[-1] == 3

    def combine(raw, density):
        raw = np.asarray(raw, dtype=float)
        return float(raw @ density) if vector else raw * density

    total = 0.0 if vector else np.zeros(3)
    err = 0.0
    for p in measure.ac:
        v, e = _adaptive(lambda lv, p=p: _rect_rule(p.rect, test, cfg.order, lv), cfg, "area part")
        total = total + combine(v, p.density)
        err += e * float(np.linalg.norm(p.density))
    for p in measure.lines:
        v, e = _adaptive(lambda lv, p=p: _line_rule(p.p0, p.p1, test, cfg.order, lv), cfg, "line part")
        total = total + combine(v, p.density)
        err += e * float(np.linalg.norm(p.density))
    for p in measure.atoms:
        v = np.asarray(test(np.asarray(p.point, dtype=float)[None]))[0]
        total = total + combine(v, p.weight)
    level = 0
    if measure.cantor is not None:
        cp = measure.cantor
        prev = _cantor_rule(cp, test, cfg.order, 1)
        e = math.inf
        for level in range(2, cfg.cantor_max_level + 1):
            cur = _cantor_rule(cp, test, cfg.order, level)
            e = float(np.max(np.abs(cur - prev)))
            if e <= max(cfg.atol, cfg.rtol * float(np.max(np.abs(cur)))):
                break
            prev = cur
        else:
            partial = total + combine(cur, cp.density)
            raise QuadratureError(f"Cantor part: budget exhausted at level {level} (change {e:.3g})",
                                  partial)
        total = total + combine(cur, cp.density)
        err += e * float(np.linalg.norm(cp.density))
    return PairingResult(np.asarray(total) if not vector else total, err, level)


# ----------------------------------------------------------- test functions

def bump_profile(s):
    """``(1 - s^2)^2`` on ``|s| < 1``, zero outside."""
    s = np.asarray(s, dtype=float)
    return np.where(np.abs(s) < 1, (1 - s * s) ** 2, 0.0)


def bump(center, radius, vector=None):
    """Tensor bump ``B((x1-c1)/r) B((x2-c2)/r)``; vector-valued if ``vector`` is given."""
    c = np.asarray(center, dtype=float)

    def f(x):
        x = np.asarray(x, dtype=float)
        v = bump_profile((x[..., 0] - c[0]) / radius) * bump_profile((x[..., 1] - c[1]) / radius)
        return v if vector is None else v[..., None] * np.asarray(vector, dtype=float)

    # piecewise polynomial between these lines; quadrature splits there
    f.breaks = ((c[0] - radius, c[0] + radius), (c[1] - radius, c[1] + radius))
    return f


def smoothstep(t):
    """``C^2`` ramp from 0 (``t <= 0``) to 1 (``t >= 1``)."""
    t = np.clip(np.asarray(t, dtype=float), 0, 1)
    return t ** 3 * (10 - 15 * t + 6 * t * t)


def plateau(center, inner, outer, vector=None):
    """Equal to 1 on the square of half-side ``inner``; zero outside half-side ``outer``.

    A tensor product of ramps, so its kinks in smoothness are axis aligned.
    """
    c = np.asarray(center, dtype=float)

    def f(x):
        x = np.asarray(x, dtype=float)
        ramp = lambda d: smoothstep((outer - np.abs(d)) / (outer - inner))
        v = ramp(x[..., 0] - c[0]) * ramp(x[..., 1] - c[1])
        return v if vector is None else v[..., None] * np.asarray(vector, dtype=float)

    f.breaks = tuple(tuple(ck + s * r for s in (-1, 1) for r in (inner, outer)) for ck in c)
    return f


# ---------------------------------------------------------------- loading

def _vec(v, n=3, what="vector"):
    arr = np.asarray(v, dtype=float)
    if arr.shape != (n,) or not np.all(np.isfinite(arr)):
        raise DomainError(f"{what} must be a finite {n}-vector")
    return arr


def scene_from_dict(doc):
    """Build ``(scene, measure)`` from the scene-file document."""
    try:
        domain = tuple(float(v) for v in doc["domain"])
        regions = []
        for r in doc["regions"]:
            M = np.asarray(r.get("M", np.zeros((3, 2))), dtype=float)
            if M.shape != (3, 2):
                raise DomainError(f"region {r.get('name')}: M must be 3x2")
            regions.append(Region(str(r["name"]), tuple(float(v) for v in r["rect"]), M,
                                  _vec(r.get("c", [0, 0, 0]), what="c")))
        jumps = []
        for j in doc.get("jumps", []):
            pts = [np.asarray(p, dtype=float) for p in j["points"]]
            for p0, p1 in zip(pts[:-1], pts[1:]):
                jumps.append(JumpSegment(p0, p1, str(j["minus"]), str(j["plus"]),
                                         None if j.get("z") is None else _vec(j["z"], what="z"),
                                         None if j.get("nu") is None else _vec(j["nu"], 2, "nu")))
        st = doc.get("staircase")
        staircase = None
        if st:
            staircase = Staircase(_vec(st["a"], what="staircase a"), float(st["y0"]), float(st["y1"]))
        scene = PlanarScene(domain, tuple(regions), tuple(jumps), staircase)
        measure = measure_from_dict(doc.get("measure") or {}, scene)
    except (KeyError, TypeError) as exc:
        raise SceneError(f"malformed scene document: {exc!r}",
                         [Finding("malformed", repr(exc))]) from exc
    return scene, measure


def measure_from_dict(doc, scene):
    ac = []
    for p in doc.get("ac", []):
        rect = scene.region(p["region"]).rect if "region" in p else tuple(float(v) for v in p["rect"])
        ac.append(AcPart(rect, _vec(p["density"], what="ac density")))
    lines = []
    for p in doc.get("lines", []):
        pts = [np.asarray(q, dtype=float) for q in p["points"]]
        for p0, p1 in zip(pts[:-1], pts[1:]):
            lines.append(LinePart(p0, p1, _vec(p["density"], what="line density")))
    atoms = [Atom(_vec(a["point"], 2, "atom point"), _vec(a["weight"], what="atom weight"))
             for a in doc.get("atoms", [])]
    cantor_part = None
    c = doc.get("cantor")
    if c:
        st = scene.staircase
        y0 = float(c.get("y0", st.y0 if st else scene.domain[1]))
        y1 = float(c.get("y1", st.y1 if st else scene.domain[3]))
        cantor_part = CantorPart(_vec(c["density"], what="cantor density"), y0, y1,
                                 float(c.get("x0", scene.domain[0])), float(c.get("x1", scene.domain[2])))
    return BendingMeasure(tuple(ac), tuple(lines), tuple(atoms), cantor_part)


def load_scene(path):
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"scene file not found: {path}")
    with open(path) as fh:
        doc = json.load(fh)
    return scene_from_dict(doc) + (doc,)


# ---------------------------------------------------------- stock scenes

def unit_square_scene(M=None, c=None):
    M = np.zeros((3, 2)) if M is None else np.asarray(M, dtype=float)
    c = np.zeros(3) if c is None else np.asarray(c, dtype=float)
    return PlanarScene((0.0, 0.0, 1.0, 1.0), (Region("all", (0.0, 0.0, 1.0, 1.0), M, c),))


def horizontal_jump_scene(z, y=0.5):
    """Unit square, ``u = 0`` below ``x2 = y`` and ``u = z`` above."""
    lo = Region("below", (0.0, 0.0, 1.0, y), np.zeros((3, 2)), np.zeros(3))
    hi = Region("above", (0.0, y, 1.0, 1.0), np.zeros((3, 2)), np.asarray(z, dtype=float))
    seg = JumpSegment(np.array([0.0, y]), np.array([1.0, y]), "below", "above")
    return PlanarScene((0.0, 0.0, 1.0, 1.0), (lo, hi), (seg,))


def staircase_scene(a, y0=0.0, y1=1.0):
    base = unit_square_scene()
    return replace(base, staircase=Staircase(np.asarray(a, dtype=float), float(y0), float(y1)))
