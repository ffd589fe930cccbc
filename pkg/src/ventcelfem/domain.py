"""Built-in problem domains.

A domain specification lists the boundary pieces and which condition
each carries: Ventcel pieces are parametrized curves (with outward
orientation recorded on the curve), Dirichlet pieces are straight
polylines, except for the annulus whose Dirichlet circle is polygonal
at whatever resolution the mesh generator uses.

Built-ins:

    cable    region between the convex cable arc and the x axis;
             the arc is the Ventcel boundary, the three straight
             sides are Dirichlet
    square   unit square (0,1) x (1,2); bottom and top edges Ventcel,
             left and right edges Dirichlet
    annulus  ring r_inner < |p| < r_outer; one circle Ventcel, the
             other Dirichlet
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import CABLE_HALF_WIDTH, CableArc, Circle, Curve, Segment


@dataclass
class DomainSpec:
    kind: str
    ventcel_curves: tuple
    dirichlet_polylines: tuple
    params: dict = field(default_factory=dict)

    def bbox(self):
        if self.kind == "cable":
            c = CABLE_HALF_WIDTH
            return (-c, c, 0.0, c)
        if self.kind == "square":
            return (0.0, 1.0, 1.0, 2.0)
        if self.kind == "annulus":
            r = self.params["r_outer"]
            return (-r, r, -r, r)
        raise ValueError(f"unknown domain kind {self.kind!r}")

    def diameter(self):
        x0, x1, y0, y1 = self.bbox()
        return math.hypot(x1 - x0, y1 - y0)

    def dirichlet_length(self):
        if self.kind == "annulus":
            return 2.0 * math.pi * self.params["dirichlet_radius"]
        total = 0.0
        for poly in self.dirichlet_polylines:
            seg = np.diff(np.asarray(poly, dtype=float), axis=0)
            total += float(np.hypot(seg[:, 0], seg[:, 1]).sum())
        return total

    def validate(self):
        """Lightweight sanity check; raises on an unusable specification."""
        if not self.ventcel_curves:
            raise ValueError("domain needs at least one Ventcel curve")
        if self.dirichlet_length() <= 0 and not all(
                c.closed for c in self.ventcel_curves):
            raise ValueError("open Ventcel chains require Dirichlet boundary")


def cable_domain() -> DomainSpec:
    c = CABLE_HALF_WIDTH
    poly = np.array([[-c, c], [-c, 0.0], [c, 0.0], [c, c]])
    return DomainSpec("cable", (CableArc(),), (poly,))


def square_domain() -> DomainSpec:
    bottom = Segment((0.0, 1.0), (1.0, 1.0), normal_sign=-1)
    top = Segment((0.0, 2.0), (1.0, 2.0), normal_sign=+1)
    left = np.array([[0.0, 1.0], [0.0, 2.0]])
    right = np.array([[1.0, 1.0], [1.0, 2.0]])
    return DomainSpec("square", (bottom, top), (left, right))


def annulus_domain(r_inner=1.0, r_outer=2.0, ventcel_on="outer") -> DomainSpec:
    if not 0 < r_inner < r_outer:
        raise ValueError("annulus needs 0 < r_inner < r_outer")
    if ventcel_on not in ("inner", "outer"):
        raise ValueError("ventcel_on must be 'inner' or 'outer'")
    if ventcel_on == "outer":
        curve = Circle(r_outer, normal_sign=-1)
        rd = r_inner
    else:
        curve = Circle(r_inner, normal_sign=+1)
        rd = r_outer
    params = {"r_inner": float(r_inner), "r_outer": float(r_outer),
              "ventcel_on": ventcel_on, "dirichlet_radius": float(rd)}
    return DomainSpec("annulus", (curve,), (), params)


def make_domain(text: str) -> DomainSpec:
    """Domain from its config string: cable | square | annulus[:r0,r1,side]."""
    text = text.strip()
    if text == "cable":
        return cable_domain()
    if text == "square":
        return square_domain()
    if text == "annulus":
        return annulus_domain()
    if text.startswith("annulus:"):
        parts = text[len("annulus:"):].split(",")
        if len(parts) != 3:
            raise ValueError(
                f"annulus takes r_inner,r_outer,side, got {text!r}")
        try:
            r0, r1 = float(parts[0]), float(parts[1])
        except ValueError:
            raise ValueError(f"bad radius in {text!r}") from None
        return annulus_domain(r0, r1, parts[2].strip())
    raise ValueError(f"unknown domain {text!r}")
