"""P1 finite elements for the mixed Dirichlet/Ventcel problem.

The conforming space is piecewise linear on triangles; its trace on a
Ventcel chain is one-dimensional P1 in arc length along the chords.
Dirichlet conditions are imposed by node elimination, and the endpoint
nodes of an open Ventcel chain belong to the Dirichlet set, which is
how the trace space vanishing at chain ends is encoded.

The bilinear form assembled here is, for trial v and test w,

    (Dv, Dw)_domain + (a2 tang(v), tang(w))_chain
        + ((d a2/ds) tang(v), w)_chain + (a0 v, w)_chain

with tang the tangential derivative along the chain.  The first-order
term makes the matrix unsymmetric whenever a2 varies along the chain.
A nonnegative shift sigma0 = M^2/(2 lambda2) - lambda0 (M, lambda2,
lambda0 coefficient bounds over the quadrature points) restores a
coercivity certificate; the shifted matrix is kept alongside the plain
one and never replaces it in the solve path.

Quadrature: 3-point edge-midpoint rule on triangles (exact to degree
2), 3-point Gauss on each boundary chord with coefficients evaluated
on the exact curve at the mapped parameters.  Boundary data needs a
well-defined trace along the chain (smooth fields or nodal P1 data).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

# 3-point Gauss-Legendre on [0, 1]
GAUSS3_XI = np.array([0.5 * (1.0 - np.sqrt(0.6)), 0.5, 0.5 * (1.0 + np.sqrt(0.6))])
GAUSS3_W = np.array([5.0 / 18.0, 4.0 / 9.0, 5.0 / 18.0])

# P1 basis values at the three edge midpoints of a triangle
_MID_BASIS = np.array([[0.5, 0.5, 0.0],
                       [0.0, 0.5, 0.5],
                       [0.5, 0.0, 0.5]])


@dataclass
class VentcelEdgeData:
    a: int
    b: int
    curve: object
    ta: float
    tb: float
    ell: float                    # chord length
    tq: np.ndarray                # (3,) parameters of the Gauss points
    wq: np.ndarray                # (3,) weights scaled by chord length


class FeSpace:
    """Geometry-resolved P1 space with the Dirichlet set eliminated."""

    def __init__(self, mesh):
        self.mesh = mesh
        n = len(mesh.nodes)

        mask = np.zeros(n, dtype=bool)
        for e in mesh.bedges:
            if e.tag == "dirichlet":
                mask[e.a] = mask[e.b] = True
        self.dirichlet_mask = mask
        self.free = np.flatnonzero(~mask)

        self.ventcel_edges = []
        for e in mesh.bedges:
            if e.tag != "ventcel":
                continue
            pa, pb = mesh.nodes[e.a], mesh.nodes[e.b]
            ell = float(np.hypot(*(pb - pa)))
            tq = e.ta + GAUSS3_XI * (e.tb - e.ta)
            self.ventcel_edges.append(VentcelEdgeData(
                e.a, e.b, e.curve, e.ta, e.tb, ell, tq, ell * GAUSS3_W))

        # triangle geometry: areas, constant basis gradients, midpoints
        p = mesh.nodes[mesh.triangles]
        self.tri_area = 0.5 * (
            (p[:, 1, 0] - p[:, 0, 0]) * (p[:, 2, 1] - p[:, 0, 1])
            - (p[:, 2, 0] - p[:, 0, 0]) * (p[:, 1, 1] - p[:, 0, 1]))
        if np.any(self.tri_area <= 0):
            raise ValueError("mesh has nonpositive triangle areas")
        g = np.empty_like(p)
        for i in range(3):
            j, k = (i + 1) % 3, (i + 2) % 3
            g[:, i, 0] = p[:, j, 1] - p[:, k, 1]
            g[:, i, 1] = p[:, k, 0] - p[:, j, 0]
        self.tri_grads = g / (2.0 * self.tri_area)[:, None, None]
        self.tri_midpoints = 0.5 * (p + p[:, [1, 2, 0], :])

    @property
    def n_nodes(self):
        return len(self.mesh.nodes)

    @property
    def n_free(self):
        return len(self.free)

    def ventcel_dofs(self):
        """Indices of non-Dirichlet nodes lying on Ventcel chains."""
        seen = set()
        for e in self.ventcel_edges:
            seen.add(e.a)
            seen.add(e.b)
        return np.array(sorted(i for i in seen if not self.dirichlet_mask[i]),
                        dtype=int)


def build_space(mesh) -> FeSpace:
    return FeSpace(mesh)


@dataclass
class CoefficientBounds:
    """Extrema of the boundary coefficients over the quadrature points."""

    lambda2: float                # inf a2
    Lambda2: float                # sup a2
    grad_bound: float             # sup |d a2 / ds|
    lambda0: float                # inf a0
    Lambda0: float                # sup a0

    @property
    def sigma0(self) -> float:
        return self.grad_bound**2 / (2.0 * self.lambda2) - self.lambda0

    def coercivity_constant(self) -> float:
        """Certified lower bound for the (shifted) form on the energy norm."""
        if self.grad_bound == 0.0:
            return min(1.0, self.lambda2)
        return min(1.0, 0.5 * self.lambda2)


def coefficient_bounds(space: FeSpace, a2, a0, check=True) -> CoefficientBounds:
    lam2, Lam2 = np.inf, -np.inf
    m_grad = 0.0
    lam0, Lam0 = np.inf, -np.inf
    for e in space.ventcel_edges:
        v2 = np.atleast_1d(a2.eval_curve(e.curve, e.tq))
        d2 = np.atleast_1d(a2.tangential_deriv(e.curve, e.tq))
        v0 = np.atleast_1d(a0.eval_curve(e.curve, e.tq))
        lam2, Lam2 = min(lam2, v2.min()), max(Lam2, v2.max())
        m_grad = max(m_grad, np.abs(d2).max())
        lam0, Lam0 = min(lam0, v0.min()), max(Lam0, v0.max())
    if not space.ventcel_edges:
        raise ValueError("space has no Ventcel edges")
    bounds = CoefficientBounds(float(lam2), float(Lam2), float(m_grad),
                               float(lam0), float(Lam0))
    if check and bounds.lambda2 <= 0:
        raise ValueError(
            f"a2 must be strictly positive on the Ventcel boundary "
            f"(min {bounds.lambda2:g})")
    if check and bounds.lambda0 < -1e-12:
        raise ValueError(
            f"a0 must be nonnegative on the Ventcel boundary "
            f"(min {bounds.lambda0:g})")
    return bounds


def dirichlet_boundary_samples(mesh) -> np.ndarray:
    """Points covering the Dirichlet boundary at spacing at most h/4.

    Every Dirichlet node appears among the samples (edge endpoints are
    always included).
    """
    h = mesh.h
    pts = []
    for e in mesh.bedges:
        if e.tag != "dirichlet":
            continue
        pa, pb = mesh.nodes[e.a], mesh.nodes[e.b]
        ell = np.hypot(*(pb - pa))
        m = max(1, int(np.ceil(ell / (0.25 * h))))
        xi = np.linspace(0.0, 1.0, m + 1)[:, None]
        pts.append(pa + xi * (pb - pa))
    if not pts:
        return np.zeros((0, 2))
    return np.concatenate(pts)


def mcshane_lift(space: FeSpace, phi, lipschitz_k: float) -> np.ndarray:
    """Lipschitz extension of the Dirichlet data to all nodes.

    phi~(p) = min over boundary samples q of [phi(q) + K |p - q|];
    with K at least the Lipschitz constant of the trace this matches
    phi at every Dirichlet node (the nodes are among the samples) and
    extends with the same constant.  Samples are spaced at most h/4
    along each Dirichlet edge.
    """
    samples = dirichlet_boundary_samples(space.mesh)
    if len(samples) == 0:
        return np.zeros(space.n_nodes)
    values = np.atleast_1d(phi.eval_points(samples))

    out = np.empty(space.n_nodes)
    nodes = space.mesh.nodes
    K = float(lipschitz_k)
    for lo in range(0, len(nodes), 1024):
        chunk = nodes[lo:lo + 1024]
        d = np.hypot(chunk[:, None, 0] - samples[None, :, 0],
                     chunk[:, None, 1] - samples[None, :, 1])
        out[lo:lo + 1024] = (values[None, :] + K * d).min(axis=1)
    return out


class FeSystem:
    """Assembled matrices for one coefficient pair on one space."""

    def __init__(self, space, a2, a0, bounds, parts):
        self.space = space
        self.a2 = a2
        self.a0 = a0
        self.bounds = bounds
        self.K_int = parts["K_int"]
        self.M_int = parts["M_int"]
        self.S_b = parts["S_b"]
        self.M_b = parts["M_b"]
        self.A = parts["A"]
        self.sigma0 = bounds.sigma0
        self.shift_applied = self.sigma0 > 0
        shift = max(self.sigma0, 0.0)
        self.A_sigma = (self.A + shift * self.M_b).tocsr() if shift else self.A
        free = space.free
        self.matrix = self.A[free][:, free].tocsr()
        self.matrix_shifted = self.A_sigma[free][:, free].tocsr()

    def gram_v0(self):
        """Free-dof Gram matrix of the energy norm |Dv|^2 + |tang v|^2."""
        free = self.space.free
        return (self.K_int + self.S_b)[free][:, free].tocsr()

    def v0_norm(self, v: np.ndarray) -> float:
        g = self.K_int.dot(v) + self.S_b.dot(v)
        return float(np.sqrt(max(v @ g, 0.0)))

    def v_norm(self, v: np.ndarray) -> float:
        g = (self.K_int.dot(v) + self.S_b.dot(v)
             + self.M_int.dot(v) + self.M_b.dot(v))
        return float(np.sqrt(max(v @ g, 0.0)))


def assemble_bilinear(space: FeSpace, a2, a0, check=True) -> FeSystem:
    """Assemble the full bilinear form; rows test, columns trial."""
    bounds = coefficient_bounds(space, a2, a0, check=check)
    n = space.n_nodes
    tris = space.mesh.triangles
    area = space.tri_area
    grads = space.tri_grads

    rows, cols, k_vals, m_vals = [], [], [], []
    for i in range(3):
        for j in range(3):
            rows.append(tris[:, i])
            cols.append(tris[:, j])
            k_vals.append(area * np.einsum("td,td->t",
                                           grads[:, i], grads[:, j]))
            m_vals.append(area / (6.0 if i == j else 12.0))
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    K_int = sp.coo_matrix((np.concatenate(k_vals), (rows, cols)),
                          shape=(n, n)).tocsr()
    m_vals = [np.broadcast_to(v, tris.shape[:1]) for v in m_vals]
    M_int = sp.coo_matrix((np.concatenate(m_vals), (rows, cols)),
                          shape=(n, n)).tocsr()

    br, bc = [], []
    s_vals, mb_vals, a2_vals, c_vals, a0_vals = [], [], [], [], []
    for e in space.ventcel_edges:
        a2q = np.atleast_1d(a2.eval_curve(e.curve, e.tq))
        da2q = np.atleast_1d(a2.tangential_deriv(e.curve, e.tq))
        a0q = np.atleast_1d(a0.eval_curve(e.curve, e.tq))
        phi = np.stack([1.0 - GAUSS3_XI, GAUSS3_XI])      # (2, q)
        dphi = np.array([-1.0, 1.0]) / e.ell              # (2,)
        idx = (e.a, e.b)
        for i in range(2):
            for j in range(2):
                br.append(idx[i])
                bc.append(idx[j])
                s_vals.append(e.ell * dphi[i] * dphi[j])
                mb_vals.append(float(e.wq @ (phi[i] * phi[j])))
                a2_vals.append(float(np.dot(e.wq, a2q)) * dphi[i] * dphi[j])
                c_vals.append(float(np.dot(e.wq * da2q, phi[i]) * dphi[j]))
                a0_vals.append(float(np.dot(e.wq * a0q, phi[i] * phi[j])))
    if br:
        br = np.array(br)
        bc = np.array(bc)
        S_b = sp.coo_matrix((np.array(s_vals), (br, bc)), shape=(n, n)).tocsr()
        M_b = sp.coo_matrix((np.array(mb_vals), (br, bc)), shape=(n, n)).tocsr()
        A2_b = sp.coo_matrix((np.array(a2_vals), (br, bc)), shape=(n, n)).tocsr()
        C_b = sp.coo_matrix((np.array(c_vals), (br, bc)), shape=(n, n)).tocsr()
        A0_b = sp.coo_matrix((np.array(a0_vals), (br, bc)), shape=(n, n)).tocsr()
    else:
        S_b = M_b = A2_b = C_b = A0_b = sp.csr_matrix((n, n))

    A = (K_int + A2_b + C_b + A0_b).tocsr()
    parts = {"K_int": K_int, "M_int": M_int, "S_b": S_b, "M_b": M_b, "A": A}
    return FeSystem(space, a2, a0, bounds, parts)


@dataclass
class LoadData:
    full: np.ndarray              # linear functional on all nodes
    rhs_free: np.ndarray          # reduced right-hand side after lifting
    lift: np.ndarray              # nodal lifting of the Dirichlet data


def assemble_load(system: FeSystem, f1=None, f2=None, g1=None, g2=None,
                  lift=None) -> LoadData:
    """Assemble L(w) = (f1, w) - (f2, Dw) + (g1, w)_chain - (g2, tang w)_chain.

    f2 is a pair of coefficients (components of a plane vector field).
    The returned reduced right-hand side already subtracts the action
    of the bilinear form on the lifting.
    """
    space = system.space
    n = space.n_nodes
    tris = space.mesh.triangles
    area = space.tri_area
    L = np.zeros(n)

    if f1 is not None:
        vals = np.atleast_2d(f1.eval_points(space.tri_midpoints))
        w = (area / 3.0)[:, None] * vals        # (M, 3) midpoint weights
        contrib = w @ _MID_BASIS                # (M, 3) per-vertex
        np.add.at(L, tris, contrib)
    if f2 is not None:
        fx = np.atleast_2d(f2[0].eval_points(space.tri_midpoints))
        fy = np.atleast_2d(f2[1].eval_points(space.tri_midpoints))
        mean_x = fx.mean(axis=1) * area
        mean_y = fy.mean(axis=1) * area
        contrib = -(space.tri_grads[..., 0] * mean_x[:, None]
                    + space.tri_grads[..., 1] * mean_y[:, None])
        np.add.at(L, tris, contrib)
    for e in space.ventcel_edges:
        phi = np.stack([1.0 - GAUSS3_XI, GAUSS3_XI])
        dphi = np.array([-1.0, 1.0]) / e.ell
        if g1 is not None:
            g1q = np.atleast_1d(g1.eval_curve(e.curve, e.tq))
            L[e.a] += float(np.dot(e.wq * g1q, phi[0]))
            L[e.b] += float(np.dot(e.wq * g1q, phi[1]))
        if g2 is not None:
            g2q = np.atleast_1d(g2.eval_curve(e.curve, e.tq))
            s = float(np.dot(e.wq, g2q))
            L[e.a] -= s * dphi[0]
            L[e.b] -= s * dphi[1]

    if lift is None:
        lift = np.zeros(n)
    rhs_free = (L - system.A.dot(lift))[space.free]
    return LoadData(full=L, rhs_free=rhs_free, lift=lift)
