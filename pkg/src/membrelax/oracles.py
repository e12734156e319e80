"""Independent reference values used to check the cell solver.

None of these touch the discrete cell problem: they work directly with the
closed-form densities through laminates and convex envelopes.
"""

from __future__ import annotations

import numpy as np
from scipy.spatial import ConvexHull

from .models import EnergyDensity, huber_norm


def two_point_laminate(g, b, radius=3.0, n_dir=26, n_mag=121, n_theta=41):
    """Best two-point laminate ``theta g(v1) + (1 - theta) g(v2)`` with
    ``theta v1 + (1 - theta) v2 = b``.

    Enumerates ``v1 = b + (1 - theta) w`` and ``v2 = b - theta w`` over a
    direction set (axes, face and corner diagonals), magnitudes up to
    ``2 * radius`` and a theta grid.  Returns ``(value, v1, v2, theta)``.
    ``g`` maps ``(..., 3)`` arrays to values.
    """
    b = np.asarray(b, dtype=float)
    dirs = []
    for i in (-1, 0, 1):
        for j in (-1, 0, 1):
            for k in (-1, 0, 1):
                if (i, j, k) != (0, 0, 0):
                    dirs.append(np.array([i, j, k], dtype=float))
    dirs = np.array(dirs[:n_dir])
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    mags = np.linspace(0, 2 * radius, n_mag)
    thetas = np.linspace(0, 1, n_theta)
    W = dirs[:, None, :] * mags[None, :, None]
    best = (float(g(b)), b, b, 1.0)
    for th in thetas:
        v1 = b + (1 - th) * W
        v2 = b - th * W
        val = th * g(v1) + (1 - th) * g(v2)
        idx = np.unravel_index(np.argmin(val), val.shape)
        if val[idx] < best[0]:
            best = (float(val[idx]), v1[idx], v2[idx], float(th))
    return best


def convex_envelope_1d(xs, fs):
    """Lower convex envelope of samples ``(xs, fs)`` evaluated at ``xs``."""
    xs = np.asarray(xs, dtype=float)
    fs = np.asarray(fs, dtype=float)
    order = np.argsort(xs)
    xs, fs = xs[order], fs[order]
    hull = []
    for i in range(len(xs)):
        while len(hull) >= 2:
            a, c = hull[-2], hull[-1]
            cross = (xs[c] - xs[a]) * (fs[i] - fs[a]) - (fs[c] - fs[a]) * (xs[i] - xs[a])
            if cross <= 0:
                hull.pop()
            else:
                break
        hull.append(i)
    env = np.interp(xs, xs[hull], fs[hull])
    out = np.empty_like(env)
    out[order] = env
    return out


class WellEnvelope:
    """Convex envelope ``Cg`` of the separable double well.

    ``g`` is symmetric about the well axis, so ``Cg(b) = h(s, |b_perp|)``
    where ``h`` is the 2D convex envelope of ``g`` restricted to a plane
    through the axis.  ``h`` is the lower hull of samples on a box; its
    value at a point is the maximum over the lower facets' planes.  That
    maximum is tabulated once on a regular ``(s, r >= 0)`` grid and
    interpolated bilinearly.
    """

    def __init__(self, model, half_width=4.0, n=121, table_width=3.0, table_step=0.05):
        self.model = model
        a = model.well
        self.axis = a / np.linalg.norm(a)
        s = np.linspace(-half_width, half_width, n)
        S, R = np.meshgrid(s, s, indexing="ij")
        pts = S[..., None] * self.axis + R[..., None] * self._perp()
        G = model.well_energy(pts)[0]
        hull = ConvexHull(np.column_stack([S.ravel(), R.ravel(), G.ravel()]))
        eq = hull.equations[hull.equations[:, 2] < -1e-12]
        # n0 s + n1 r + n2 z + d = 0  ->  z = p0 s + p1 r + p2
        self.planes = -eq[:, [0, 1, 3]] / eq[:, 2:3]
        self.s_nodes = np.arange(-table_width, table_width + table_step / 2, table_step)
        self.r_nodes = np.arange(0.0, table_width + table_step / 2, table_step)
        Sg, Rg = np.meshgrid(self.s_nodes, self.r_nodes, indexing="ij")
        self.table = self.hull_value(Sg.ravel(), Rg.ravel()).reshape(Sg.shape)
        self.step = table_step
        self.width = table_width

    def hull_value(self, s, r, chunk=512):
        """Exact lower-hull value at ``(s, r)`` points (slow; max over planes)."""
        out = np.empty(len(s))
        for lo in range(0, len(s), chunk):
            sl = slice(lo, lo + chunk)
            lin = np.outer(s[sl], self.planes[:, 0]) + np.outer(r[sl], self.planes[:, 1])
            out[sl] = np.max(lin + self.planes[:, 2], axis=1)
        return out

    def _perp(self):
        e = np.eye(3)[np.argmin(np.abs(self.axis))]
        p = e - (e @ self.axis) * self.axis
        return p / np.linalg.norm(p)

    def coords(self, b):
        b = np.asarray(b, dtype=float)
        s = b @ self.axis
        r = np.linalg.norm(b - s[..., None] * self.axis, axis=-1)
        return s, r

    def value_grad(self, b):
        """``Cg(b)`` and its gradient, for arrays ``(..., 3)`` inside the table."""
        b = np.asarray(b, dtype=float)
        shape = b.shape[:-1]
        flat = b.reshape(-1, 3)
        s, r = self.coords(flat)
        if np.any(np.abs(s) > self.width) or np.any(r > self.width):
            raise ValueError("envelope queried outside its table")
        u = (s - self.s_nodes[0]) / self.step
        v = r / self.step
        i = np.clip(np.floor(u).astype(int), 0, len(self.s_nodes) - 2)
        j = np.clip(np.floor(v).astype(int), 0, len(self.r_nodes) - 2)
        fu, fv = u - i, v - j
        T = self.table
        t00, t10, t01, t11 = T[i, j], T[i + 1, j], T[i, j + 1], T[i + 1, j + 1]
        val = (t00 * (1 - fu) * (1 - fv) + t10 * fu * (1 - fv) + t01 * (1 - fu) * fv + t11 * fu * fv)
        ds = ((t10 - t00) * (1 - fv) + (t11 - t01) * fv) / self.step
        dr = ((t01 - t00) * (1 - fu) + (t11 - t10) * fu) / self.step
        perp = flat - s[:, None] * self.axis
        safe = np.where(r > 0, r, 1.0)[:, None]
        grad = ds[:, None] * self.axis + np.where(r[:, None] > 0, dr[:, None] * perp / safe, 0.0)
        return val.reshape(shape), grad.reshape(shape + (3,))

    def __call__(self, b):
        return self.value_grad(b)[0]


_ENVELOPES = {}


def well_envelope(model):
    """Cached :class:`WellEnvelope` per model fingerprint."""
    key = model.fingerprint()
    if key not in _ENVELOPES:
        _ENVELOPES[key] = WellEnvelope(model)
    return _ENVELOPES[key]


class EnvelopeDensity(EnergyDensity):
    """``|xi_bar| + Cg(b)``: the relaxation of the separable model.

    Convex, so the cell solver treats it with a single start.
    """

    kind = "separable-envelope"
    is_convex = True
    has_closed_form_recession = False

    def __init__(self, model, envelope=None):
        self.envelope = envelope or well_envelope(model)
        super().__init__({"of": model.to_dict()}, model.constants)

    def value_grad(self, xi, delta=0.0):
        v1, g1 = huber_norm(xi[..., :, :2], delta, (-2, -1))
        v2, g2 = self.envelope.value_grad(xi[..., :, 2])
        return v1 + v2, np.concatenate([g1, g2[..., :, None]], axis=-1)


def axis_envelope(s):
    """Closed form of ``Cg`` along the axis of the unit double well with
    weight 1/2: ``max(1/2, 3|s|/2 - 1)``."""
    return np.maximum(0.5, 1.5 * np.abs(s) - 1.0)


def convex_norm_value(xi):
    """``sqrt(1 + |xi|^2)``, the convex-norm density (equal to its relaxations)."""
    xi = np.asarray(xi, dtype=float)
    return np.sqrt(1.0 + np.sum(xi * xi, axis=(-2, -1)))


def dense_line_min(f, lo, hi, n=200001):
    """Minimum of a scalar function on a dense grid; returns ``(value, t)``."""
    t = np.linspace(lo, hi, n)
    v = f(t)
    i = int(np.argmin(v))
    return float(v[i]), float(t[i])


__all__ = ["two_point_laminate", "convex_envelope_1d", "WellEnvelope", "well_envelope", "EnvelopeDensity",
           "axis_envelope", "convex_norm_value", "dense_line_min"]
