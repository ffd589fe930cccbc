"""Problem bundles, the linear solve, diagnostics, and CSV export.

A problem couples a domain with boundary coefficients (a2, a0), loads
(f1, f2 interior; g1, g2 on the Ventcel chain), Dirichlet data phi with
its Lipschitz constant, and optionally the exact solution it was
manufactured from.  The solve pipeline is

    triangulate -> build space -> assemble -> lift Dirichlet data ->
    reduced solve -> add lifting back

so the discrete solution matches the Dirichlet data exactly at
Dirichlet nodes and is independent (up to conditioning) of the lifting
used.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse.linalg as spla

from .domain import DomainSpec
from .fields import (EXACT_SOLUTIONS, BoundaryFunction, Coefficient,
                     ConstantCoefficient, FieldCoefficient)
from .femcore import (FeSystem, LoadData, assemble_bilinear, assemble_load,
                      build_space, mcshane_lift)
from .mesh import Mesh, triangulate


class SingularSystemError(RuntimeError):
    """The reduced linear system could not be solved reliably."""


@dataclass
class VentcelProblem:
    domain: DomainSpec
    a2: Coefficient
    a0: Coefficient
    f1: Coefficient | None = None
    f2: tuple | None = None
    g1: Coefficient | None = None
    g2: Coefficient | None = None
    phi: Coefficient | None = None
    lipschitz_k: float | None = None
    exact: object | None = None


class _PointFunction(Coefficient):
    """Interior-only coefficient from a vectorized callable on points."""

    def __init__(self, func):
        self.func = func

    def eval_points(self, p):
        return np.asarray(self.func(np.asarray(p, dtype=float)), dtype=float)


def manufactured_problem(domain: DomainSpec, exact, a2, a0) -> VentcelProblem:
    """Problem whose solution is a given plane field.

    Interior load f1 = -Laplacian(exact); the chain load is derived
    from the boundary condition evaluated with the exact field's
    derivatives and the curve frame:

        g1 = u_nu - a2 * (u_tautau + kappa u_nu) + a0 * u

    (all quantities oriented outward).  Dirichlet data is the trace of
    the exact field.
    """
    if isinstance(exact, str):
        try:
            exact = EXACT_SOLUTIONS[exact]
        except KeyError:
            raise ValueError(f"exact: unknown exact solution {exact!r}") from None

    def neg_laplacian(p):
        h = exact.hess(p)
        return -(h[..., 0, 0] + h[..., 1, 1])

    def g1_func(curve, t):
        t = np.asarray(t, dtype=float)
        p = curve.point(t)
        d1 = curve.velocity(t)
        sp = np.hypot(d1[..., 0], d1[..., 1])
        g = exact.grad(p)
        H = exact.hess(p)
        u_nu = curve.normal_sign * (d1[..., 0] * g[..., 1]
                                    - d1[..., 1] * g[..., 0]) / sp
        u_tt = (d1[..., 0] ** 2 * H[..., 0, 0]
                + 2 * d1[..., 0] * d1[..., 1] * H[..., 0, 1]
                + d1[..., 1] ** 2 * H[..., 1, 1]) / sp**2
        kappa = curve.normal_sign * curve.curvature(t)
        u_ss = u_tt + kappa * u_nu
        a2v = np.atleast_1d(a2.eval_curve(curve, t))
        a0v = np.atleast_1d(a0.eval_curve(curve, t))
        return (u_nu - a2v.reshape(np.shape(u_nu)) * u_ss
                + a0v.reshape(np.shape(u_nu)) * exact.value(p))

    return VentcelProblem(
        domain=domain, a2=a2, a0=a0,
        f1=_PointFunction(neg_laplacian),
        g1=BoundaryFunction(g1_func),
        phi=FieldCoefficient(exact),
        exact=exact,
    )


@dataclass
class Solution:
    space: object
    system: FeSystem
    load: LoadData
    values: np.ndarray            # nodal solution including Dirichlet data
    homogeneous: np.ndarray       # part vanishing on the Dirichlet set


def _dirichlet_node_positions(space):
    return space.mesh.nodes[space.dirichlet_mask]


def estimate_trace_lipschitz(space, phi) -> float:
    """Smallest K making the node-exactness of the lifting certain.

    Computes the max difference quotient of phi between Dirichlet nodes
    and a dense sample of the Dirichlet boundary (the same density the
    lifting uses), with a small safety factor.
    """
    from .femcore import dirichlet_boundary_samples

    samples = dirichlet_boundary_samples(space.mesh)
    if len(samples) == 0:
        return 0.0
    svals = np.atleast_1d(phi.eval_points(samples))
    nodes = _dirichlet_node_positions(space)
    nvals = np.atleast_1d(phi.eval_points(nodes))
    scale = space.mesh.scale()
    best = 0.0
    for lo in range(0, len(nodes), 512):
        chunk = nodes[lo:lo + 512]
        cv = nvals[lo:lo + 512]
        d = np.hypot(chunk[:, None, 0] - samples[None, :, 0],
                     chunk[:, None, 1] - samples[None, :, 1])
        q = np.abs(cv[:, None] - svals[None, :]) / np.maximum(d, 1e-14 * scale)
        q[d <= 1e-14 * scale] = 0.0
        best = max(best, float(q.max()))
    return best * (1.0 + 1e-9)


def solve_linear(matrix, rhs) -> np.ndarray:
    """Direct sparse solve of the reduced system."""
    try:
        lu = spla.splu(matrix.tocsc())
        x = lu.solve(rhs)
    except (RuntimeError, ValueError, MemoryError) as exc:
        raise SingularSystemError(f"sparse factorization failed: {exc}") from exc
    if not np.all(np.isfinite(x)):
        raise SingularSystemError("solver produced non-finite values")
    return x


def solve_ventcel(problem: VentcelProblem, n: int | None = None,
                  mesh: Mesh | None = None) -> Solution:
    if mesh is None:
        if n is None:
            raise ValueError("pass a mesh or a subdivision count n")
        mesh = triangulate(problem.domain, n)
    space = build_space(mesh)
    system = assemble_bilinear(space, problem.a2, problem.a0)

    if problem.phi is not None:
        k = problem.lipschitz_k
        if k is None:
            k = estimate_trace_lipschitz(space, problem.phi)
        lift = mcshane_lift(space, problem.phi, k)
    else:
        lift = np.zeros(space.n_nodes)

    load = assemble_load(system, f1=problem.f1, f2=problem.f2,
                         g1=problem.g1, g2=problem.g2, lift=lift)
    v_free = solve_linear(system.matrix, load.rhs_free)

    u = lift.copy()
    u[space.free] += v_free
    hom = np.zeros(space.n_nodes)
    hom[space.free] = v_free
    return Solution(space=space, system=system, load=load,
                    values=u, homogeneous=hom)


def defect_correction_solve(system: FeSystem, load: LoadData):
    """Solve plainly, then once through the shifted equation.

    The shifted form adds sigma0 * (v, w) on the chain to both sides;
    with the plain solution inserted on the right the shifted solve
    must reproduce it.  Returns (v_plain, v_shifted) on the free dofs.
    """
    v_plain = solve_linear(system.matrix, load.rhs_free)
    if not system.shift_applied:
        return v_plain, v_plain.copy()
    full = np.zeros(system.space.n_nodes)
    full[system.space.free] = v_plain
    extra = (system.sigma0 * system.M_b.dot(full))[system.space.free]
    v_shifted = solve_linear(system.matrix_shifted, load.rhs_free + extra)
    return v_plain, v_shifted


@dataclass
class UniquenessReport:
    n_free: int
    rcond: float
    sigma_min: float
    singular: bool


def uniqueness_diagnostic(system: FeSystem, seed: int = 0) -> UniquenessReport:
    """Conditioning report for the reduced matrix.

    rcond is 1 / (norm1(A) * est norm1(inv A)); sigma_min comes from 20
    steps of inverse power iteration on A^T A.  ``singular`` flags
    rcond below 1e-14 or a failed factorization.
    """
    A = system.matrix.tocsc()
    m = A.shape[0]
    norm1 = float(np.max(np.abs(A).sum(axis=0))) if m else 0.0
    try:
        lu = spla.splu(A)
    except (RuntimeError, ValueError) as exc:
        del exc
        return UniquenessReport(m, 0.0, 0.0, True)

    op = spla.LinearOperator(
        (m, m), matvec=lambda b: lu.solve(b),
        rmatvec=lambda b: lu.solve(b, trans="T"), dtype=np.float64)
    try:
        inv_norm1 = float(spla.onenormest(op)) if m > 1 else \
            float(np.abs(lu.solve(np.ones(1)))[0])
    except (RuntimeError, ValueError, TypeError):
        return UniquenessReport(m, 0.0, 0.0, True)
    rcond = 1.0 / (norm1 * inv_norm1) if norm1 * inv_norm1 > 0 else 0.0

    rng = np.random.default_rng(seed)
    x = rng.standard_normal(m)
    x /= np.linalg.norm(x)
    rho = 0.0
    for _ in range(20):
        z = lu.solve(lu.solve(x, trans="T"))
        rho = float(x @ z)
        nz = np.linalg.norm(z)
        if not np.isfinite(nz) or nz == 0:
            return UniquenessReport(m, rcond, 0.0, True)
        x = z / nz
    sigma_min = 1.0 / np.sqrt(rho) if rho > 0 else 0.0
    singular = (not np.isfinite(rcond)) or rcond < 1e-14
    return UniquenessReport(m, rcond, float(sigma_min), singular)


# ----------------------------------------------------------------------
# CSV export


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_solution_csv(solution: Solution, path: str) -> None:
    """Nodal solution as x,y,u rows."""
    import os

    lines = ["x,y,u"]
    for (x, y), u in zip(solution.space.mesh.nodes, solution.values):
        lines.append(f"{_fmt(x)},{_fmt(y)},{_fmt(u)}")
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    os.replace(tmp, path)


def write_trace_csv(solution: Solution, path: str) -> None:
    """Ventcel-chain trace at the boundary quadrature points.

    Columns: curve_id,t,s,u,u_tau with s the arc length along the
    curve, u the P1 value at the mapped chord point, u_tau the chord
    slope of the trace.
    """
    import os

    from .femcore import GAUSS3_XI

    space = solution.space
    u = solution.values
    edges = sorted(space.ventcel_edges, key=lambda e: (e.curve.token(), e.ta))
    lines = ["curve_id,t,s,u,u_tau"]
    for e in edges:
        ua, ub = u[e.a], u[e.b]
        slope = (ub - ua) / e.ell
        svals = np.atleast_1d(e.curve.arc_length(e.tq))
        for xi, t, s in zip(GAUSS3_XI, e.tq, svals):
            val = (1 - xi) * ua + xi * ub
            lines.append(",".join([e.curve.token(), _fmt(t), _fmt(s),
                                   _fmt(val), _fmt(slope)]))
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    os.replace(tmp, path)
