"""Command-line driver: solve, convergence, verify, mesh, info.

Configuration comes from flags and/or a "key = value" text file, with
flags winning; the output directory can also come from the
VENTCELFEM_OUTPUT_DIR environment variable (flag > env > file >
default).  Exit codes: 0 success, 1 verification-suite failure,
2 configuration error, 3 solver failure.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass, fields as dataclass_fields

import numpy as np

from . import verify
from .domain import make_domain
from .fields import EXACT_SOLUTIONS, parse_coefficient
from .femcore import build_space, coefficient_bounds
from .mesh import mesh_quality, triangulate, write_mesh
from .solver import (
    SingularSystemError,
    VentcelProblem,
    manufactured_problem,
    solve_ventcel,
    uniqueness_diagnostic,
    write_solution_csv,
    write_trace_csv,
)

ENV_OUTPUT_DIR = "VENTCELFEM_OUTPUT_DIR"

COMMANDS = ("solve", "convergence", "verify", "mesh", "info")

DEFAULT_EXACT = {
    "cable": "harmonic_cubic",
    "square": "affine",
    "annulus": "log_radial",
}


class ConfigError(Exception):
    """Configuration problem; message names the offending key."""


@dataclass
class RunConfig:
    command: str = "info"
    domain: str = "cable"
    n: int = 16
    levels: int = 4
    a2: str = "const:1"
    a0: str = "const:0"
    f1: str = ""
    f2x: str = ""
    f2y: str = ""
    g1: str = ""
    g2: str = ""
    phi: str = ""
    exact: str = ""
    seed: int = 42
    output_dir: str = "."


CONFIG_KEYS = tuple(f.name for f in dataclass_fields(RunConfig)
                    if f.name != "command")
INT_KEYS = frozenset(("n", "levels", "seed"))


def read_config_file(path: str) -> dict:
    """Parse a key = value file; '#' starts a comment."""
    out = {}
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"config: cannot read {path!r}: {exc}") from None
    with fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(
                    f"config: {path}:{lineno}: expected key = value")
            key, value = line.split("=", 1)
            key = key.strip()
            if key not in CONFIG_KEYS:
                raise ConfigError(f"config: unknown key {key!r} in {path}")
            out[key] = value.strip()
    return out


def _coerce(key: str, value):
    if key in INT_KEYS:
        try:
            return int(value)
        except (TypeError, ValueError):
            raise ConfigError(f"{key}: expected an integer, got {value!r}") \
                from None
    return str(value)


def build_config(args: argparse.Namespace) -> RunConfig:
    """Merge defaults, config file, environment, and flags."""
    cfg = RunConfig(command=args.command)
    if args.config:
        for key, value in read_config_file(args.config).items():
            setattr(cfg, key, _coerce(key, value))
    env_dir = os.environ.get(ENV_OUTPUT_DIR)
    if env_dir:
        cfg.output_dir = env_dir
    for key in CONFIG_KEYS:
        value = getattr(args, key, None)
        if value is not None:
            setattr(cfg, key, _coerce(key, value))

    if cfg.n < 2:
        raise ConfigError(f"n: subdivision must be at least 2, got {cfg.n}")
    if cfg.command == "convergence" and cfg.levels < 3:
        raise ConfigError(
            f"levels: need at least 3 for a convergence study, got {cfg.levels}")
    if cfg.exact and cfg.exact not in EXACT_SOLUTIONS:
        known = ", ".join(sorted(EXACT_SOLUTIONS))
        raise ConfigError(f"exact: unknown solution {cfg.exact!r} (known: {known})")
    return cfg


def config_echo(cfg: RunConfig) -> str:
    """Reparseable key = value block (command excluded)."""
    return "\n".join(f"{key} = {getattr(cfg, key)}" for key in CONFIG_KEYS)


def _domain_or_error(cfg: RunConfig):
    try:
        return make_domain(cfg.domain)
    except ValueError as exc:
        raise ConfigError(f"domain: {exc}") from None


def _coefficient(text: str, mesh, role: str):
    try:
        return parse_coefficient(text, mesh, role=role)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def build_problem(cfg: RunConfig, dom, mesh) -> VentcelProblem:
    a2 = _coefficient(cfg.a2, mesh, "a2")
    a0 = _coefficient(cfg.a0, mesh, "a0")
    opt = lambda text, role: _coefficient(text, mesh, role) if text else None
    f2 = None
    if cfg.f2x or cfg.f2y:
        f2 = (_coefficient(cfg.f2x or "const:0", mesh, "f2x"),
              _coefficient(cfg.f2y or "const:0", mesh, "f2y"))
    exact = EXACT_SOLUTIONS[cfg.exact] if cfg.exact else None
    return VentcelProblem(
        domain=dom, a2=a2, a0=a0,
        f1=opt(cfg.f1, "f1"), f2=f2,
        g1=opt(cfg.g1, "g1"), g2=opt(cfg.g2, "g2"),
        phi=opt(cfg.phi, "phi"), exact=exact)


def _write_text(path: str, text: str) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def cmd_solve(cfg: RunConfig) -> int:
    dom = _domain_or_error(cfg)
    mesh = triangulate(dom, cfg.n)
    problem = build_problem(cfg, dom, mesh)
    solution = solve_ventcel(problem, mesh=mesh)

    os.makedirs(cfg.output_dir, exist_ok=True)
    sol_path = os.path.join(cfg.output_dir, "solution.csv")
    write_solution_csv(solution, sol_path)
    write_trace_csv(solution, os.path.join(cfg.output_dir, "trace.csv"))

    system = solution.system
    rhs = solution.load.rhs_free
    v = solution.homogeneous[solution.space.free]
    residual = float(np.linalg.norm(system.matrix.dot(v) - rhs)
                     / (1.0 + np.linalg.norm(rhs)))
    diag = uniqueness_diagnostic(system, seed=cfg.seed)
    b = system.bounds
    lines = [
        f"nodes = {solution.space.n_nodes}",
        f"free_dofs = {solution.space.n_free}",
        f"h = {mesh.h:.17g}",
        f"algebraic_residual = {residual:.17g}",
        f"rcond = {diag.rcond:.17g}",
        f"sigma_min = {diag.sigma_min:.17g}",
        f"lambda2 = {b.lambda2:.17g}",
        f"Lambda2 = {b.Lambda2:.17g}",
        f"grad_bound = {b.grad_bound:.17g}",
        f"lambda0 = {b.lambda0:.17g}",
        f"Lambda0 = {b.Lambda0:.17g}",
        f"sigma0 = {b.sigma0:.17g}",
    ]
    if problem.exact is not None:
        e2, ev, et = verify.solution_errors(solution, problem.exact)
        lines += [f"e_L2 = {e2:.17g}", f"e_V0 = {ev:.17g}",
                  f"e_trace = {et:.17g}"]
    _write_text(os.path.join(cfg.output_dir, "diagnostics.txt"),
                "\n".join(lines) + "\n")
    print(f"solved {cfg.domain} n={cfg.n}: {solution.space.n_nodes} nodes, "
          f"algebraic residual {residual:.3g}")
    print(f"wrote {sol_path}")
    return 0


def cmd_convergence(cfg: RunConfig) -> int:
    dom = _domain_or_error(cfg)
    exact = cfg.exact or DEFAULT_EXACT.get(dom.kind, "")
    if not exact:
        raise ConfigError(f"exact: no default for domain {cfg.domain!r}")
    a2 = _coefficient(cfg.a2, None, "a2")
    a0 = _coefficient(cfg.a0, None, "a0")
    problem = manufactured_problem(dom, exact, a2, a0)
    report = verify.manufactured_convergence(problem, n0=cfg.n,
                                             levels=cfg.levels)
    os.makedirs(cfg.output_dir, exist_ok=True)
    path = os.path.join(cfg.output_dir, "convergence.csv")
    report.write_csv(path)
    o2, ov, ot = report.observed_orders
    print(f"convergence {cfg.domain}/{exact}: orders L2 {o2:.3f}, "
          f"V0 {ov:.3f}, trace {ot:.3f}")
    print(f"wrote {path}")
    return 0


def cmd_verify(cfg: RunConfig) -> int:
    result = verify.run_suite(cfg.output_dir, seed=cfg.seed)
    sys.stdout.write(result.summary_text())
    return 0 if result.passed else 1


def cmd_mesh(cfg: RunConfig) -> int:
    dom = _domain_or_error(cfg)
    mesh = triangulate(dom, cfg.n)
    os.makedirs(cfg.output_dir, exist_ok=True)
    path = os.path.join(cfg.output_dir, "mesh.txt")
    write_mesh(mesh, path)
    print(f"mesh {cfg.domain} n={cfg.n}: {len(mesh.nodes)} nodes, "
          f"{len(mesh.triangles)} triangles, quality {mesh_quality(mesh):.4f}")
    print(f"wrote {path}")
    return 0


def cmd_info(cfg: RunConfig) -> int:
    dom = _domain_or_error(cfg)
    mesh = triangulate(dom, cfg.n)
    space = build_space(mesh)
    a2 = _coefficient(cfg.a2, mesh, "a2")
    a0 = _coefficient(cfg.a0, mesh, "a0")
    bounds = coefficient_bounds(space, a2, a0, check=False)
    print(config_echo(cfg))
    print(f"# nodes = {space.n_nodes}, free = {space.n_free}, h = {mesh.h:.6g}")
    print(f"# lambda2 = {bounds.lambda2:.17g}")
    print(f"# Lambda2 = {bounds.Lambda2:.17g}")
    print(f"# grad_bound = {bounds.grad_bound:.17g}")
    print(f"# lambda0 = {bounds.lambda0:.17g}")
    print(f"# Lambda0 = {bounds.Lambda0:.17g}")
    print(f"# sigma0 = {bounds.sigma0:.17g}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="ventcelfem",
        description="P1 solver for mixed second-order boundary conditions "
                    "on curved chains, with a verification suite.")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", help="key = value configuration file")
    parser.add_argument("--domain", help="cable | square | annulus[:r0,r1,side]")
    parser.add_argument("--n", type=int, help="mesh subdivision (>= 2)")
    parser.add_argument("--levels", type=int, help="refinement levels (>= 3)")
    parser.add_argument("--a2", help="chain diffusion coefficient")
    parser.add_argument("--a0", help="chain reaction coefficient")
    parser.add_argument("--f1", help="interior source")
    parser.add_argument("--f2x", help="interior flux source, x component")
    parser.add_argument("--f2y", help="interior flux source, y component")
    parser.add_argument("--g1", help="chain source")
    parser.add_argument("--g2", help="chain flux source")
    parser.add_argument("--phi", help="wall (Dirichlet) data")
    parser.add_argument("--exact", help="exact solution name for error studies")
    parser.add_argument("--seed", type=int, help="random seed")
    parser.add_argument("--output-dir", dest="output_dir", help="artifact directory")
    args = parser.parse_args(argv)

    try:
        cfg = build_config(args)
        handler = {
            "solve": cmd_solve,
            "convergence": cmd_convergence,
            "verify": cmd_verify,
            "mesh": cmd_mesh,
            "info": cmd_info,
        }[cfg.command]
        return handler(cfg)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except SingularSystemError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
