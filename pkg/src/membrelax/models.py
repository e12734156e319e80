"""Stored-energy densities on 3x3 matrices.

A matrix ``xi`` is written column-wise as ``(xi_bar | b)``: the first two
columns form the 3x2 planar block and the third column is the Cosserat
vector.  All densities evaluate on stacked arrays of shape ``(..., 3, 3)``.

Three families are built in:

``convex-norm``
    ``c * sqrt(1 + |xi|^2)``.
``separable-laminate``
    ``|xi_bar| + min(|b - a|, |b + a|) + k |b|``, a double well in the third
    column with wells at ``+-a``.
``user-table``
    a table over ``(|xi|, angle)`` where the angle is ``atan2(|b|, |xi_bar|)``,
    bilinear inside the table and linear in ``|xi|`` beyond its last radius.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import optimize

from .errors import ConvergenceError, DomainError, ModelError

DEFAULT_LADDER = (64.0, 256.0, 1024.0, 4096.0)


def planar(xi):
    """Planar 3x2 block of a full matrix (a view)."""
    return np.asarray(xi)[..., :, :2]


def third(xi):
    """Third column of a full matrix."""
    return np.asarray(xi)[..., :, 2]


def join(xi_bar, b):
    """Assemble ``(xi_bar | b)``; inverse of :func:`planar` / :func:`third`."""
    xi_bar = np.asarray(xi_bar, dtype=float)
    b = np.asarray(b, dtype=float)
    return np.concatenate([xi_bar, b[..., :, None]], axis=-1)


def as_matrix(xi, shape=(3, 3)):
    arr = np.asarray(xi, dtype=float)
    if arr.shape[-len(shape):] != shape:
        raise DomainError(f"expected trailing shape {shape}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise DomainError("matrix has non-finite entries")
    return arr


def huber_norm(x, delta, axes):
    """Huber-smoothed Euclidean norm over ``axes`` and its gradient.

    ``delta <= 0`` gives the exact norm with the zero subgradient at 0.
    """
    n = np.sqrt(np.sum(x * x, axis=axes, keepdims=True))
    safe = np.where(n > 0, n, 1.0)
    if delta <= 0:
        val = n
        grad = np.where(n > 0, x / safe, 0.0)
    else:
        inner = n <= delta
        val = np.where(inner, n * n / (2 * delta), n - delta / 2)
        grad = np.where(inner, x / delta, x / safe)
    return np.squeeze(val, axis=axes), grad


@dataclass(frozen=True)
class Constants:
    """Structural constants: growth ``beta_lo|xi| <= W <= beta_hi(1+|xi|)``,
    recession gap ``C(1+|xi|^(1-r))`` and Lipschitz constant ``L``."""

    beta_lo: float
    beta_hi: float
    C: float
    r: float
    L: float

    def check(self):
        if not (0 < self.beta_lo <= self.beta_hi < math.inf):
            raise ModelError(f"need 0 < beta_lo <= beta_hi, got {self}")
        if not (0 < self.r < 1):
            raise ModelError(f"r must lie in (0, 1), got {self.r}")
        if self.C < 0 or self.L < 0:
            raise ModelError("C and L must be nonnegative")


class EnergyDensity:
    """Base class.  Subclasses implement ``value_grad`` and, when available,
    ``recession_value_grad``."""

    kind = "abstract"
    is_convex = False
    has_closed_form_recession = False

    def __init__(self, params, constants):
        self.params = params
        self.constants = constants

    def value_grad(self, xi, delta=0.0):
        raise NotImplementedError

    def recession_value_grad(self, xi, delta=0.0):
        raise NotImplementedError(f"{self.kind} has no closed-form recession")

    def value(self, xi):
        return self.value_grad(xi, 0.0)[0]

    def recession(self, xi):
        return self.recession_value_grad(xi, 0.0)[0]

    def to_dict(self):
        return {"kind": self.kind, "params": _jsonable(self.params),
                "constants": asdict(self.constants)}

    def fingerprint(self):
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    def __repr__(self):
        return f"{type(self).__name__}({self.params!r})"


class ConvexNorm(EnergyDensity):
    kind = "convex-norm"
    is_convex = True
    has_closed_form_recession = True

    def __init__(self, scale=1.0, constants=None):
        scale = float(scale)
        if scale <= 0:
            raise ModelError("convex-norm scale must be positive")
        self.scale = scale
        # |sqrt(1+s^2) - s| <= 1, so the recession gap is bounded by `scale`;
        # beta_lo = scale/sqrt(2) is sharp for W >= beta_lo (|xi_bar| + |b|)
        default = Constants(scale / math.sqrt(2.0), scale, scale, 0.5, scale)
        super().__init__({"scale": scale}, constants or default)

    def value_grad(self, xi, delta=0.0):
        root = np.sqrt(1.0 + np.sum(xi * xi, axis=(-2, -1)))
        return self.scale * root, self.scale * xi / root[..., None, None]

    def recession_value_grad(self, xi, delta=0.0):
        val, grad = huber_norm(xi, delta, (-2, -1))
        return self.scale * val, self.scale * grad


class SeparableLaminate(EnergyDensity):
    kind = "separable-laminate"
    has_closed_form_recession = True

    def __init__(self, well=(0.0, 0.0, 1.0), weight=0.5, constants=None):
        self.well = np.asarray(well, dtype=float)
        self.weight = float(weight)
        if self.well.shape != (3,) or self.weight <= 0:
            raise ModelError("separable-laminate needs a 3-vector well and weight > 0")
        k, a = self.weight, float(np.linalg.norm(self.well))
        lip = math.hypot(1.0, 1.0 + k)
        default = Constants(min(1.0, k), max(a, lip), a, 0.5, lip)
        super().__init__({"well": self.well.tolist(), "weight": k}, constants or default)

    def well_energy(self, b, delta=0.0):
        """The double well ``g(b)`` and its gradient, on arrays ``(..., 3)``."""
        vp, gp = huber_norm(b - self.well, delta, (-1,))
        vm, gm = huber_norm(b + self.well, delta, (-1,))
        vb, gb = huber_norm(b, delta, (-1,))
        plus = (vp <= vm)[..., None]
        return np.minimum(vp, vm) + self.weight * vb, np.where(plus, gp, gm) + self.weight * gb

    def value_grad(self, xi, delta=0.0):
        v1, g1 = huber_norm(xi[..., :, :2], delta, (-2, -1))
        v2, g2 = self.well_energy(xi[..., :, 2], delta)
        return v1 + v2, np.concatenate([g1, g2[..., :, None]], axis=-1)

    def recession_value_grad(self, xi, delta=0.0):
        v1, g1 = huber_norm(xi[..., :, :2], delta, (-2, -1))
        v2, g2 = huber_norm(xi[..., :, 2], delta, (-1,))
        k1 = 1.0 + self.weight
        return v1 + k1 * v2, np.concatenate([g1, k1 * g2[..., :, None]], axis=-1)


class UserTable(EnergyDensity):
    """Tabulated density ``T(rho, theta)``, ``rho = |xi|``,
    ``theta = atan2(|b|, |xi_bar|)`` in ``[0, pi/2]``."""

    kind = "user-table"
    has_closed_form_recession = True

    def __init__(self, radii, angles, values, convex=False, constants=None):
        self.radii = np.asarray(radii, dtype=float)
        self.angles = np.asarray(angles, dtype=float)
        self.table = np.asarray(values, dtype=float)
        if self.radii.ndim != 1 or len(self.radii) < 2 or self.radii[0] != 0:
            raise ModelError("user-table radii must start at 0 and have >= 2 entries")
        if np.any(np.diff(self.radii) <= 0) or np.any(np.diff(self.angles) <= 0):
            raise ModelError("user-table axes must be strictly increasing")
        if len(self.angles) < 2 or self.angles[0] != 0 or abs(self.angles[-1] - np.pi / 2) > 1e-12:
            raise ModelError("user-table angles must span [0, pi/2]")
        if self.table.shape != (len(self.radii), len(self.angles)):
            raise ModelError("user-table values must have shape (len(radii), len(angles))")
        if not np.all(np.isfinite(self.table)) or np.any(self.table < 0):
            raise ModelError("user-table values must be finite and nonnegative")
        self.slopes = (self.table[-1] - self.table[-2]) / (self.radii[-1] - self.radii[-2])
        if np.any(self.slopes <= 0):
            raise ModelError("user-table must grow linearly: last radial slopes must be positive")
        self.is_convex = bool(convex)
        params = {"radii": self.radii.tolist(), "angles": self.angles.tolist(),
                  "values": self.table.tolist(), "convex": self.is_convex}
        super().__init__(params, constants)

    def _polar(self, xi):
        p = np.sqrt(np.sum(xi[..., :, :2] ** 2, axis=(-2, -1)))
        q = np.sqrt(np.sum(xi[..., :, 2] ** 2, axis=-1))
        rho = np.hypot(p, q)
        theta = np.arctan2(q, p)
        return p, q, rho, theta

    def _chain(self, xi, p, q, rho, d_rho, d_theta):
        # d theta/dp = -q/rho^2, d theta/dq = p/rho^2
        rho2 = np.where(rho > 0, rho * rho, 1.0)
        ps = np.where(p > 0, p, 1.0)
        qs = np.where(q > 0, q, 1.0)
        sr = np.where(rho > 0, rho, 1.0)
        dp = d_rho * p / sr - d_theta * q / rho2
        dq = d_rho * q / sr + d_theta * p / rho2
        g_planar = np.where(p[..., None, None] > 0, xi[..., :, :2] / ps[..., None, None], 0.0)
        g_third = np.where(q[..., None] > 0, xi[..., :, 2] / qs[..., None], 0.0)
        return np.concatenate([dp[..., None, None] * g_planar,
                               (dq[..., None] * g_third)[..., :, None]], axis=-1)

    def _angle_interp(self, row, theta):
        j = np.clip(np.searchsorted(self.angles, theta, side="right") - 1, 0, len(self.angles) - 2)
        t0, t1 = self.angles[j], self.angles[j + 1]
        w = (theta - t0) / (t1 - t0)
        return row[..., j] * (1 - w) + row[..., j + 1] * w, (row[..., j + 1] - row[..., j]) / (t1 - t0), j, w

    def value_grad(self, xi, delta=0.0):
        p, q, rho, theta = self._polar(xi)
        i = np.clip(np.searchsorted(self.radii, rho, side="right") - 1, 0, len(self.radii) - 2)
        r0, r1 = self.radii[i], self.radii[i + 1]
        s = (rho - r0) / (r1 - r0)  # > 1 beyond the table: linear extrapolation
        j = np.clip(np.searchsorted(self.angles, theta, side="right") - 1, 0, len(self.angles) - 2)
        a0, a1 = self.angles[j], self.angles[j + 1]
        w = (theta - a0) / (a1 - a0)
        T = self.table
        f00, f01, f10, f11 = T[i, j], T[i, j + 1], T[i + 1, j], T[i + 1, j + 1]
        lo = f00 * (1 - w) + f01 * w
        hi = f10 * (1 - w) + f11 * w
        val = lo * (1 - s) + hi * s
        d_rho = (hi - lo) / (r1 - r0)
        d_theta = ((f01 - f00) * (1 - s) + (f11 - f10) * s) / (a1 - a0)
        return val, self._chain(xi, p, q, rho, d_rho, d_theta)

    def recession_value_grad(self, xi, delta=0.0):
        p, q, rho, theta = self._polar(xi)
        B, dB, _, _ = self._angle_interp(self.slopes, theta)
        return B * rho, self._chain(xi, p, q, rho, B, dB * rho)


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    return obj


# ---------------------------------------------------------------- certificates

@dataclass
class CertificateReport:
    samples: int
    growth_violations: int = 0
    recession_violations: int = 0
    lipschitz_violations: int = 0
    worst: dict = field(default_factory=dict)

    @property
    def ok(self):
        return not (self.growth_violations or self.recession_violations
                    or self.lipschitz_violations)


def _sample_matrices(rng, n):
    dirs = rng.normal(size=(n, 3, 3))
    dirs /= np.linalg.norm(dirs, axis=(1, 2), keepdims=True)
    radii = 10.0 ** rng.uniform(-2, 2, size=n)
    mats = dirs * radii[:, None, None]
    mats[0] = 0.0
    return mats


def _recession_any(model, mats):
    if model.has_closed_form_recession:
        return model.recession(mats)
    return np.array([recession_density(model, m) for m in mats])


def certify(model, constants=None, samples=2000, seed=0):
    """Check growth, recession and Lipschitz certificates on random samples."""
    c = constants or model.constants
    rng = np.random.default_rng(seed)
    mats = _sample_matrices(rng, samples)
    norms = np.linalg.norm(mats, axis=(1, 2))
    W = model.value(mats)
    rep = CertificateReport(samples)

    low, high = c.beta_lo * norms, c.beta_hi * (1 + norms)
    rep.growth_violations = int(np.sum((W < low) | (W > high)))
    gap = np.abs(_recession_any(model, mats) - W)
    rep.recession_violations = int(np.sum(gap > c.C * (1 + norms ** (1 - c.r))))

    other = mats + rng.normal(size=mats.shape) * rng.choice([1e-3, 1e-1, 10.0], size=(samples, 1, 1))
    dist = np.linalg.norm(mats - other, axis=(1, 2))
    ratio = np.abs(W - model.value(other)) / np.where(dist > 0, dist, 1.0)
    rep.lipschitz_violations = int(np.sum(ratio > c.L * (1 + 1e-12)))
    rep.worst = {"growth_low": float(np.min(W - low)), "growth_high": float(np.min(high - W)),
                 "lipschitz_ratio": float(np.max(ratio))}
    return rep


def estimate_constants(model, samples=2000, seed=0, r=0.5):
    """Constants for a model that did not declare them, padded by 1%."""
    rng = np.random.default_rng(seed)
    mats = _sample_matrices(rng, samples)
    norms = np.linalg.norm(mats, axis=(1, 2))
    W = model.value(mats)
    # lower growth against |xi_bar| + |b| >= |xi|, so both forms of the bound hold
    split = np.linalg.norm(mats[:, :, :2], axis=(1, 2)) + np.linalg.norm(mats[:, :, 2], axis=1)
    nz = split > 0
    beta_lo = 0.99 * float(np.min(W[nz] / split[nz]))
    beta_hi = 1.01 * float(np.max(W / (1 + norms)))
    gap = np.abs(_recession_any(model, mats) - W)
    C = 1.01 * float(np.max(gap / (1 + norms ** (1 - r))))
    # Lipschitz ratio over a wide spread of pair separations
    other = mats + rng.normal(size=mats.shape) * rng.choice([1e-3, 1e-1, 10.0], size=(samples, 1, 1))
    dist = np.linalg.norm(mats - other, axis=(1, 2))
    L = 1.01 * float(np.max(np.abs(W - model.value(other)) / dist))
    if beta_lo <= 0:
        raise ModelError("density is not coercive on the certification sample")
    return Constants(beta_lo, max(beta_hi, beta_lo), C, r, L)


# -------------------------------------------------------------------- loading

def model_from_dict(doc):
    """Build a density from ``{"kind": ..., "params": {...}, "constants": {...}}``.

    Declared constants are checked against the certificates and the model is
    rejected if any fails.  ``certify_samples`` sets the sample count.
    """
    if not isinstance(doc, dict) or "kind" not in doc:
        raise ModelError("model document must be an object with a 'kind'")
    kind, params = doc["kind"], dict(doc.get("params", {}))
    samples = int(doc.get("certify_samples", 2000))
    declared = doc.get("constants")
    constants = Constants(**declared) if declared else None
    if constants is not None:
        constants.check()
    try:
        if kind == "convex-norm":
            model = ConvexNorm(constants=constants, **params)
        elif kind == "separable-laminate":
            model = SeparableLaminate(constants=constants, **params)
        elif kind == "user-table":
            model = UserTable(constants=constants, **params)
        else:
            raise ModelError(f"unknown density kind {kind!r}")
    except TypeError as exc:
        raise ModelError(f"bad parameters for {kind}: {exc}") from None
    if model.constants is None:
        model.constants = estimate_constants(model, samples)
    model.constants.check()
    rep = certify(model, samples=samples)
    if not rep.ok:
        raise ModelError(f"{kind} model fails its certificates: {rep}")
    return model


def load_model(path):
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"model file not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ModelError(f"model file is not valid JSON: {exc}") from None
    return model_from_dict(doc)


def builtin_models():
    return {"convex-norm": ConvexNorm(), "separable-laminate": SeparableLaminate()}


# ------------------------------------------------------------------ operations

def eval_density(model, xi):
    """``W(xi)`` for a single 3x3 matrix."""
    xi = as_matrix(xi)
    return float(model.value(xi))


def ladder_fit_weights(ts, r):
    """Least-squares weights mapping samples ``f(t_i)`` to the constant ``a``
    of the model ``a + c t^-r``, plus the residual projector."""
    ts = np.asarray(ts, dtype=float)
    A = np.stack([np.ones_like(ts), ts ** (-r)], axis=1)
    pinv = np.linalg.pinv(A)
    return pinv[0], np.eye(len(ts)) - A @ pinv


def extrapolate_ladder(values, ts, r, rtol):
    """Limit of ``f(t)`` from samples on an increasing ladder.

    The decay model is ``a + c t^-s``.  Through the three largest points the
    exponent ``s`` is solved for exactly when the samples decay
    monotonically; otherwise ``s`` is pinned to the model's ``r`` and
    ``(a, c)`` come from least squares.  The residual is the misfit of the
    chosen curve on a fourth ladder point (exact fit) or on the three points
    (pinned fit); above ``rtol * max(1, |a|)`` it raises
    :class:`ConvergenceError`.
    """
    values = np.asarray(values, dtype=float)
    ts = np.asarray(ts, dtype=float)
    f0, f1, f2 = values[-3:]
    t0, t1, t2 = ts[-3:]
    d1, d2 = f1 - f0, f2 - f1
    scale = max(1.0, abs(f2))
    a = None
    if abs(d1) <= 1e-14 * scale and abs(d2) <= 1e-14 * scale:
        a, resid = float(f2), 0.0
    elif d1 * d2 > 0 and abs(d2) < abs(d1):
        def gap(s):
            return (t2 ** -s - t1 ** -s) / (t1 ** -s - t0 ** -s) - d2 / d1
        lo, hi = 1e-3, 20.0
        if gap(lo) * gap(hi) < 0:
            s = optimize.brentq(gap, lo, hi, xtol=1e-14)
            c = d2 / (t2 ** -s - t1 ** -s)
            a = float(f2 - c * t2 ** -s)
            resid = 0.0
            if len(values) >= 4:
                resid = abs(a + c * ts[-4] ** -s - values[-4])
    if a is None:
        w, proj = ladder_fit_weights(ts[-3:], r)
        a = float(w @ values[-3:])
        resid = float(np.max(np.abs(proj @ values[-3:])))
    if not np.isfinite(a) or resid > rtol * max(1.0, abs(a)):
        raise ConvergenceError(
            "recession extrapolation residual above tolerance",
            {"estimate": a, "residual": resid, "samples": values.tolist(), "ladder": ts.tolist()})
    return a


def check_ladder(t_ladder):
    ts = np.asarray(t_ladder, dtype=float)
    if ts.ndim != 1 or len(ts) < 3 or np.any(np.diff(ts) <= 0) or ts[0] <= 0:
        raise DomainError("t_ladder must be a strictly increasing positive list of >= 3 entries")
    if ts[-1] < 2.0 ** 10:
        raise DomainError("the last ladder entry must be >= 2^10")
    return ts


def recession_density(model, xi, t_ladder=DEFAULT_LADDER, closed_form=True, rtol=1e-2):
    """``W^inf(xi)``.  Uses the closed form when the model has one (and
    ``closed_form`` is set); otherwise extrapolates ``W(t xi)/t`` along the
    ladder.  Evaluated on ``xi/|xi|`` and rescaled, so positively
    1-homogeneous by construction."""
    xi = as_matrix(xi)
    ts = check_ladder(t_ladder)
    n = float(np.linalg.norm(xi))
    if n == 0.0:
        return 0.0
    unit = xi / n
    if closed_form and model.has_closed_form_recession:
        return n * float(model.recession(unit))
    vals = model.value(ts[:, None, None] * unit) / ts
    return n * extrapolate_ladder(vals, ts, model.constants.r, rtol)


def w_zero_radius(model, xi_bar):
    """Search radius for ``inf_b W(xi_bar|b)``; coercivity puts every
    minimizer inside it."""
    c = model.constants
    return c.beta_hi / c.beta_lo * (1 + float(np.linalg.norm(xi_bar)))


def w_zero(model, xi_bar, n_coarse=21, tie_tol=1e-8):
    """``W_0(xi_bar) = inf_b W(xi_bar|b)`` and a minimizing ``b``.

    Coarse grid search over the ball of radius :func:`w_zero_radius`, then
    Nelder-Mead polishing from the best grid points.  Ties resolve to the
    smallest-norm minimizer, then lexicographically.
    """
    xi_bar = as_matrix(xi_bar, (3, 2))
    R = w_zero_radius(model, xi_bar)
    ax = np.linspace(-R, R, n_coarse)
    B = np.stack(np.meshgrid(ax, ax, ax, indexing="ij"), axis=-1).reshape(-1, 3)
    B = B[np.linalg.norm(B, axis=1) <= R * (1 + 1e-12)]
    vals = model.value(join(np.broadcast_to(xi_bar, (len(B), 3, 2)), B))
    order = np.argsort(vals, kind="stable")[:8]

    def f(b):
        return float(model.value(join(xi_bar, b)))

    cands = []
    for b0 in B[order]:
        res = optimize.minimize(f, b0, method="Nelder-Mead",
                                options={"xatol": 1e-10, "fatol": 1e-13, "maxiter": 4000})
        cands.append((float(res.fun), np.asarray(res.x)))
    best = min(v for v, _ in cands)
    ties = [b for v, b in cands if v <= best + tie_tol]
    # snap components that are zero to optimizer accuracy so ties compare cleanly
    ties = [np.where(np.abs(b) < 1e-7, 0.0, b) for b in ties]
    ties.sort(key=lambda b: (round(float(np.linalg.norm(b)), 6), *np.round(b, 6)))
    return best, ties[0]
