"""Scalar fields on the plane and coefficient fields on boundary curves.

Plane fields expose ``value``, ``grad`` and ``hess`` as vectorized maps
over points with trailing axis 2.  Coefficient fields are the objects
the assembly consumes: they evaluate at interior points and/or along a
parametrized boundary curve, and provide the tangential derivative
along the curve (analytically where possible, otherwise by centered
differences in arc length with step 1e-6 * curve length).

The string grammar understood by ``parse_coefficient``:

    const:<v>                          constant
    poly:<c00>,<c10>,<c01>,<c20>,<c11>,<c02>   quadratic polynomial
    inv_curvature                      1 / oriented curvature (boundary only)
    nodal:<csv-path>                   P1 field from per-node values
    harmonic_cubic | affine | log_radial       named exact fields
"""

from __future__ import annotations

import csv
import math

import numpy as np


# ----------------------------------------------------------------------
# plane fields


class QuadraticField:
    """c00 + c10 x + c01 y + c20 x^2 + c11 xy + c02 y^2."""

    def __init__(self, c00=0.0, c10=0.0, c01=0.0, c20=0.0, c11=0.0, c02=0.0):
        self.c = tuple(float(v) for v in (c00, c10, c01, c20, c11, c02))

    def value(self, p):
        p = np.asarray(p, dtype=float)
        x, y = p[..., 0], p[..., 1]
        c = self.c
        return c[0] + c[1] * x + c[2] * y + c[3] * x * x + c[4] * x * y + c[5] * y * y

    def grad(self, p):
        p = np.asarray(p, dtype=float)
        x, y = p[..., 0], p[..., 1]
        c = self.c
        return np.stack([c[1] + 2 * c[3] * x + c[4] * y,
                         c[2] + c[4] * x + 2 * c[5] * y], axis=-1)

    def hess(self, p):
        p = np.asarray(p, dtype=float)
        c = self.c
        h = np.empty(p.shape[:-1] + (2, 2))
        h[..., 0, 0] = 2 * c[3]
        h[..., 0, 1] = h[..., 1, 0] = c[4]
        h[..., 1, 1] = 2 * c[5]
        return h


class CubicHarmonic:
    """u = x^3 - 3 x y^2, a harmonic cubic (real part of z^3)."""

    def value(self, p):
        p = np.asarray(p, dtype=float)
        x, y = p[..., 0], p[..., 1]
        return x**3 - 3.0 * x * y * y

    def grad(self, p):
        p = np.asarray(p, dtype=float)
        x, y = p[..., 0], p[..., 1]
        return np.stack([3.0 * (x * x - y * y), -6.0 * x * y], axis=-1)

    def hess(self, p):
        p = np.asarray(p, dtype=float)
        x, y = p[..., 0], p[..., 1]
        h = np.empty(p.shape[:-1] + (2, 2))
        h[..., 0, 0] = 6.0 * x
        h[..., 0, 1] = h[..., 1, 0] = -6.0 * y
        h[..., 1, 1] = -6.0 * x
        return h


class LogRadial:
    """u = log|p| / log 2, harmonic away from the origin; u=0 on |p|=1, u=1 on |p|=2."""

    _L2 = math.log(2.0)

    def value(self, p):
        p = np.asarray(p, dtype=float)
        r2 = p[..., 0] ** 2 + p[..., 1] ** 2
        return 0.5 * np.log(r2) / self._L2

    def grad(self, p):
        p = np.asarray(p, dtype=float)
        r2 = (p[..., 0] ** 2 + p[..., 1] ** 2)[..., None]
        return p / (r2 * self._L2)

    def hess(self, p):
        p = np.asarray(p, dtype=float)
        x, y = p[..., 0], p[..., 1]
        r4 = (x * x + y * y) ** 2 * self._L2
        h = np.empty(p.shape[:-1] + (2, 2))
        h[..., 0, 0] = (y * y - x * x) / r4
        h[..., 0, 1] = h[..., 1, 0] = -2.0 * x * y / r4
        h[..., 1, 1] = (x * x - y * y) / r4
        return h


class ProductField:
    """Pointwise product of two plane fields, derivatives by product rule."""

    def __init__(self, f, g):
        self.f, self.g = f, g

    def value(self, p):
        return self.f.value(p) * self.g.value(p)

    def grad(self, p):
        fv = self.f.value(p)[..., None]
        gv = self.g.value(p)[..., None]
        return self.f.grad(p) * gv + self.g.grad(p) * fv

    def hess(self, p):
        fv = self.f.value(p)[..., None, None]
        gv = self.g.value(p)[..., None, None]
        fg = self.f.grad(p)
        gg = self.g.grad(p)
        cross = fg[..., :, None] * gg[..., None, :]
        return (self.f.hess(p) * gv + self.g.hess(p) * fv
                + cross + np.swapaxes(cross, -1, -2))


class CallableField:
    """Plane field from a value callable; derivatives by central differences.

    Step h = 1e-5 * scale (scale should be the domain diameter).
    """

    def __init__(self, func, scale=1.0):
        self.func = func
        self.h = 1e-5 * float(scale)

    def value(self, p):
        p = np.asarray(p, dtype=float)
        return np.asarray(self.func(p[..., 0], p[..., 1]), dtype=float)

    def _sh(self, p, dx, dy):
        q = np.array(p, dtype=float, copy=True)
        q[..., 0] += dx
        q[..., 1] += dy
        return self.value(q)

    def grad(self, p):
        h = self.h
        gx = (self._sh(p, h, 0) - self._sh(p, -h, 0)) / (2 * h)
        gy = (self._sh(p, 0, h) - self._sh(p, 0, -h)) / (2 * h)
        return np.stack([gx, gy], axis=-1)

    def hess(self, p):
        h = self.h
        u0 = self.value(np.asarray(p, dtype=float))
        uxx = (self._sh(p, h, 0) - 2 * u0 + self._sh(p, -h, 0)) / h**2
        uyy = (self._sh(p, 0, h) - 2 * u0 + self._sh(p, 0, -h)) / h**2
        uxy = (self._sh(p, h, h) - self._sh(p, h, -h)
               - self._sh(p, -h, h) + self._sh(p, -h, -h)) / (4 * h**2)
        out = np.empty(np.shape(u0) + (2, 2))
        out[..., 0, 0] = uxx
        out[..., 0, 1] = out[..., 1, 0] = uxy
        out[..., 1, 1] = uyy
        return out


EXACT_SOLUTIONS = {
    "harmonic_cubic": CubicHarmonic(),
    "affine": QuadraticField(0.0, 1.0, 1.0),
    "log_radial": LogRadial(),
}


# ----------------------------------------------------------------------
# coefficient fields


class Coefficient:
    """Scalar data attached to a problem: interior and/or boundary trace.

    ``eval_points`` evaluates at plane points, ``eval_curve`` along a
    parametrized curve, ``tangential_deriv`` differentiates the trace
    along arc length.  Subclasses override what they support; the
    generic tangential derivative is a centered difference in arc
    length with step 1e-6 * length (shrinking near open-curve ends).
    """

    def eval_points(self, p):
        raise ValueError(f"{type(self).__name__} is defined only on boundary curves")

    def eval_curve(self, curve, t):
        return self.eval_points(curve.point(t))

    def tangential_deriv(self, curve, t):
        t = np.asarray(t, dtype=float)
        L = curve.total_length
        s = np.atleast_1d(curve.arc_length(t)).astype(float)
        h = 1e-6 * L
        if curve.closed:
            sm, sp_ = (s - h) % L, (s + h) % L
            den = np.full_like(s, 2 * h)
        else:
            # one-sided at the very ends of an open curve
            sm, sp_ = np.clip(s - h, 0.0, L), np.clip(s + h, 0.0, L)
            den = sp_ - sm
        tm = curve.param_at_arc_length(sm)
        tp = curve.param_at_arc_length(sp_)
        d = (np.atleast_1d(self.eval_curve(curve, tp))
             - np.atleast_1d(self.eval_curve(curve, tm))) / den
        return d.reshape(t.shape) if t.ndim else float(d[0])


class FieldCoefficient(Coefficient):
    """Coefficient backed by a plane field with analytic gradient."""

    def __init__(self, field):
        self.field = field

    def eval_points(self, p):
        return self.field.value(np.asarray(p, dtype=float))

    def eval_curve(self, curve, t):
        return self.field.value(curve.point(t))

    def tangential_deriv(self, curve, t):
        d1 = curve.velocity(t)
        sp = np.hypot(d1[..., 0], d1[..., 1])
        g = self.field.grad(curve.point(t))
        return (d1[..., 0] * g[..., 0] + d1[..., 1] * g[..., 1]) / sp


class ConstantCoefficient(FieldCoefficient):
    def __init__(self, value):
        super().__init__(QuadraticField(value))
        self.constant = float(value)

    def eval_points(self, p):
        p = np.asarray(p, dtype=float)
        return np.full(p.shape[:-1], self.constant)

    def eval_curve(self, curve, t):
        return np.full(np.shape(np.asarray(t, dtype=float)), self.constant)

    def tangential_deriv(self, curve, t):
        return np.zeros(np.shape(np.asarray(t, dtype=float)))


class InverseCurvature(Coefficient):
    """1 / (oriented curvature); positive exactly on strictly convex arcs."""

    def eval_curve(self, curve, t):
        return 1.0 / (curve.normal_sign * curve.curvature(t))

    def tangential_deriv(self, curve, t):
        dkdt = getattr(curve, "curvature_dt", None)
        if dkdt is None:
            return super().tangential_deriv(curve, t)
        kappa = curve.curvature(t)
        # d/ds (1/(sign k)) = -sign k'(t) / (k^2 |r'|)
        return -curve.normal_sign * dkdt(t) / (kappa**2 * curve.speed(t))


class NodalCoefficient(Coefficient):
    """P1 field given by one value per mesh node.

    Interior evaluation locates the containing triangle (KD-tree over
    centroids plus barycentric test); boundary evaluation interpolates
    along the Ventcel chain of the queried curve by parameter fraction.
    """

    def __init__(self, mesh, values):
        values = np.asarray(values, dtype=float)
        if values.shape != (len(mesh.nodes),):
            raise ValueError("nodal coefficient needs one value per mesh node")
        self.mesh = mesh
        self.values = values
        self._tree = None
        self._chains = {}

    def eval_points(self, p):
        from scipy.spatial import cKDTree

        mesh = self.mesh
        if self._tree is None:
            cent = mesh.nodes[mesh.triangles].mean(axis=1)
            self._tree = cKDTree(cent)
        p = np.asarray(p, dtype=float)
        flat = p.reshape(-1, 2)
        k = min(12, len(mesh.triangles))
        _, cand = self._tree.query(flat, k=k)
        cand = np.atleast_2d(cand)
        out = np.full(len(flat), np.nan)
        tri_nodes = mesh.nodes[mesh.triangles]
        for row, q in enumerate(flat):
            for ti in cand[row]:
                a, b, c = tri_nodes[ti]
                det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1])
                l1 = ((q[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (q[1] - a[1])) / det
                l2 = ((b[0] - a[0]) * (q[1] - a[1]) - (q[0] - a[0]) * (b[1] - a[1])) / det
                l0 = 1.0 - l1 - l2
                if min(l0, l1, l2) >= -1e-10:
                    vi = self.values[self.mesh.triangles[ti]]
                    out[row] = l0 * vi[0] + l1 * vi[1] + l2 * vi[2]
                    break
        if np.any(np.isnan(out)):
            raise ValueError("point outside the mesh for nodal coefficient")
        return out.reshape(p.shape[:-1])

    def _chain(self, curve):
        key = curve.token()
        if key not in self._chains:
            rows = [(e.ta, e.tb, e.a, e.b) for e in self.mesh.bedges
                    if e.curve is not None and e.curve.token() == key]
            if not rows:
                raise ValueError("curve has no boundary edges in the mesh")
            rows.sort()
            self._chains[key] = (
                np.array([r[0] for r in rows]),
                np.array([r[1] for r in rows]),
                np.array([r[2] for r in rows], dtype=int),
                np.array([r[3] for r in rows], dtype=int),
            )
        return self._chains[key]

    def eval_curve(self, curve, t):
        ta, tb, a, b = self._chain(curve)
        t = np.asarray(t, dtype=float)
        tt = np.atleast_1d(t).astype(float)
        k = np.clip(np.searchsorted(ta, tt, side="right") - 1, 0, len(ta) - 1)
        xi = np.clip((tt - ta[k]) / (tb[k] - ta[k]), 0.0, 1.0)
        vals = (1 - xi) * self.values[a[k]] + xi * self.values[b[k]]
        return vals.reshape(t.shape) if t.ndim else float(vals[0])

    def tangential_deriv(self, curve, t):
        ta, tb, a, b = self._chain(curve)
        t = np.asarray(t, dtype=float)
        tt = np.atleast_1d(t).astype(float)
        k = np.clip(np.searchsorted(ta, tt, side="right") - 1, 0, len(ta) - 1)
        pa = self.mesh.nodes[a[k]]
        pb = self.mesh.nodes[b[k]]
        ell = np.hypot(*(pb - pa).T)
        d = (self.values[b[k]] - self.values[a[k]]) / ell
        return d.reshape(t.shape) if t.ndim else float(d[0])


class BoundaryFunction(Coefficient):
    """Coefficient from a callable (curve, t) -> value, boundary only."""

    def __init__(self, func, dfds=None):
        self.func = func
        self.dfds = dfds

    def eval_curve(self, curve, t):
        return np.asarray(self.func(curve, np.asarray(t, dtype=float)), dtype=float)

    def tangential_deriv(self, curve, t):
        if self.dfds is not None:
            return np.asarray(self.dfds(curve, np.asarray(t, dtype=float)), dtype=float)
        return super().tangential_deriv(curve, t)


ZERO = ConstantCoefficient(0.0)


def parse_coefficient(text, mesh=None, role="coefficient"):
    """Parse the coefficient grammar; raises ValueError naming the role."""
    text = text.strip()
    if text.startswith("const:"):
        try:
            return ConstantCoefficient(float(text[6:]))
        except ValueError:
            raise ValueError(f"{role}: bad constant in {text!r}") from None
    if text.startswith("poly:"):
        parts = [p for p in text[5:].split(",") if p.strip() != ""]
        if not 1 <= len(parts) <= 6:
            raise ValueError(f"{role}: poly takes 1..6 coefficients, got {text!r}")
        try:
            coeffs = [float(p) for p in parts]
        except ValueError:
            raise ValueError(f"{role}: bad number in {text!r}") from None
        coeffs += [0.0] * (6 - len(coeffs))
        return FieldCoefficient(QuadraticField(*coeffs))
    if text == "inv_curvature":
        return InverseCurvature()
    if text.startswith("nodal:"):
        if mesh is None:
            raise ValueError(f"{role}: nodal coefficient needs a mesh")
        path = text[6:]
        vals = _read_nodal_csv(path, len(mesh.nodes))
        return NodalCoefficient(mesh, vals)
    if text in EXACT_SOLUTIONS:
        return FieldCoefficient(EXACT_SOLUTIONS[text])
    raise ValueError(f"{role}: unknown coefficient {text!r}")


def _read_nodal_csv(path, n_nodes):
    vals = np.full(n_nodes, np.nan)
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or row[0].strip().lower() in ("node", "#"):
                continue
            i = int(row[0])
            vals[i] = float(row[1])
    if np.any(np.isnan(vals)):
        raise ValueError(f"nodal csv {path} does not cover all {n_nodes} nodes")
    return vals
