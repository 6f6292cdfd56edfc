"""Batch front end: ``radial-bump <validate|solve|verify|sweep|probe>``.

Configs are JSON documents (schema in the README).  Every report embeds the
resolved config with defaults filled in, is written atomically and keeps
wall-clock numbers under keys named ``timing``.
"""

from __future__ import annotations

import argparse
import copy
import dataclasses
import importlib
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import expressions
from .curvature import (STRICT, WEAK, Constant, CurvatureSpec, RadialPower, Separable,
                        Tabulated, check_hypotheses, tw_constants)
from .elliptic import LinearSystem, ellipticity_check, frozen_operator
from .elliptic import solve as solve_linear
from .geometry import (INTERIOR, ChartedDomain, GeodesicCap, GridError, LevelSet, build_grid,
                       geodesic_angle)
from .nonlinear import (CONVERGED, HYPOTHESIS_FAIL, SolverConfig, check_c0_bounds,
                        residual, solve_bump, uniqueness_probe)
from .oracle import (ShootingError, atomic_write_text, build_surface, curvature_match,
                     export_mesh, radial_ode_reference, reflected_cap_profile, write_profile)

EXIT_OK = 0
EXIT_HYPOTHESIS = 1
EXIT_CONFIG = 2
EXIT_NONCONVERGED = 3
EXIT_VERIFY = 4

DEFAULT_CHECKS = {"hypothesis_q": 10_000, "hypothesis_rho": 1000,
                  "ellipticity_samples": 10_000, "curvature_constant": 10.0}


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# config handling
# ---------------------------------------------------------------------------

def load_config(path) -> dict:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return resolve_config(raw)


def resolve_config(raw) -> dict:
    """Validate ``raw`` and return a copy with every default filled in."""
    if not isinstance(raw, dict) or "problem" not in raw:
        raise ConfigError("config must be an object with a 'problem' section")
    cfg = copy.deepcopy(raw)
    prob = cfg["problem"]
    if not isinstance(prob, dict):
        raise ConfigError("'problem' must be an object")
    prob.setdefault("dimension", 2)
    prob.setdefault("pole", "auto_antipodal")
    for key in ("domain", "curvature", "grid_spacing"):
        if key not in prob:
            raise ConfigError(f"problem.{key} is required")
    n = prob["dimension"]
    if not isinstance(n, int) or n < 2:
        raise ConfigError("problem.dimension must be an integer >= 2")
    if not _positive(prob["grid_spacing"]):
        raise ConfigError("problem.grid_spacing must be positive")
    prob.setdefault("min_interior_nodes", 25)
    m = prob["min_interior_nodes"]
    if not isinstance(m, int) or isinstance(m, bool) or m < 1:
        raise ConfigError("problem.min_interior_nodes must be a positive integer")

    dom = prob["domain"]
    if not isinstance(dom, dict) or dom.get("type") not in ("cap", "level_set"):
        raise ConfigError("problem.domain.type must be 'cap' or 'level_set'")
    if dom["type"] == "cap":
        if "theta0_deg" in dom:
            dom["theta0"] = math.radians(float(dom.pop("theta0_deg")))
        if "theta0" not in dom or not 0 < float(dom["theta0"]) < math.pi:
            raise ConfigError("cap needs theta0 (radians) or theta0_deg in (0, 180)")
        dom["theta0"] = float(dom["theta0"])
        dom.setdefault("center", [0.0] * n + [-1.0])
        if len(dom["center"]) != n + 1:
            raise ConfigError("cap center must have n + 1 components")
    else:
        for key in ("expression", "bounds", "center"):
            if key not in dom:
                raise ConfigError(f"level_set needs '{key}'")

    cur = prob["curvature"]
    if not isinstance(cur, dict) or cur.get("family") not in (
            "constant", "radial_power", "separable", "tabulated"):
        raise ConfigError("curvature.family must be constant|radial_power|separable|tabulated")
    cur.setdefault("params", {})
    cur.setdefault("r1", 1.0)
    cur.setdefault("r2", 1.0)
    cur.setdefault("epsilon", 0.0)
    r1, r2 = cur["r1"], cur["r2"]
    if not (_number(r1) and _number(r2) and 0 < r1 <= 1 <= r2):
        raise ConfigError("curvature radii must satisfy 0 < r1 <= 1 <= r2")
    if not _number(cur["epsilon"]) or cur["epsilon"] < 0:
        raise ConfigError("curvature.epsilon must be nonnegative")

    solver = cfg.setdefault("solver", {})
    if not isinstance(solver, dict):
        raise ConfigError("'solver' must be an object")
    try:
        cfg["solver"] = SolverConfig(**solver).to_dict()
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"solver: {exc}") from exc

    outputs = cfg.setdefault("outputs", {})
    for key in ("report_path", "mesh_path", "profile_path", "solution_path"):
        outputs.setdefault(key, None)
    cfg.setdefault("seed", 0)
    if not isinstance(cfg["seed"], int):
        raise ConfigError("seed must be an integer")
    checks = cfg.setdefault("checks", {})
    for key, value in DEFAULT_CHECKS.items():
        checks.setdefault(key, value)
    probe = cfg.setdefault("probe", {})
    probe.setdefault("extra_starts", [])
    probe.setdefault("perturbation", 0.05)
    # fail early on unbuildable objects
    build_domain(cfg)
    build_spec(cfg)
    return cfg


def _number(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def _positive(v) -> bool:
    return _number(v) and v > 0


def build_domain(cfg: dict) -> ChartedDomain:
    prob = cfg["problem"]
    n = prob["dimension"]
    dom = prob["domain"]
    pole = None if prob["pole"] == "auto_antipodal" else np.asarray(prob["pole"], float)
    try:
        if dom["type"] == "cap":
            shape = GeodesicCap(np.asarray(dom["center"], float), dom["theta0"])
        else:
            f, _ = expressions.compile_function(dom["expression"], [f"x{i + 1}" for i in range(n)])
            shape = LevelSet(lambda x: f(*np.moveaxis(np.asarray(x, float), -1, 0)),
                             dom["bounds"], dom["center"])
        return ChartedDomain(n, shape, float(prob["grid_spacing"]), pole)
    except (ValueError, GridError, TypeError) as exc:
        raise ConfigError(f"domain: {exc}") from exc


def build_spec(cfg: dict) -> CurvatureSpec:
    cur = cfg["problem"]["curvature"]
    p = cur["params"]
    n = cfg["problem"]["dimension"]
    try:
        family = cur["family"]
        if family == "constant":
            base = Constant(float(p["c"]))
        elif family == "radial_power":
            base = RadialPower(float(p.get("c", 1.0)), float(p["gamma"]))
        elif family == "separable":
            base = Separable(p["f"], p["g"], n)
        else:
            module = importlib.import_module(p["module"])
            base = Tabulated(getattr(module, p["H"]), getattr(module, p["grad"]),
                             bool(p.get("radial", False)))
        return CurvatureSpec(base, float(cur["r1"]), float(cur["r2"]), float(cur["epsilon"]))
    except (KeyError, ValueError, TypeError, ImportError, AttributeError,
            expressions.ExpressionError) as exc:
        raise ConfigError(f"curvature: {exc}") from exc


def solver_config(cfg: dict) -> SolverConfig:
    return SolverConfig(**cfg["solver"])


def _grid(cfg, domain):
    try:
        return build_grid(domain, min_interior=cfg["problem"]["min_interior_nodes"])
    except GridError as exc:
        raise ConfigError(f"grid: {exc}") from exc


# ---------------------------------------------------------------------------
# reports and files
# ---------------------------------------------------------------------------

def _clean(obj):
    """JSON-safe copy: numpy scalars unwrapped, non-finite floats -> None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj) if math.isfinite(obj) else None
    return obj


def write_report(report: dict, path) -> None:
    text = json.dumps(_clean(report), indent=2, sort_keys=True) + "\n"
    if path is None:
        sys.stdout.write(text)
    else:
        atomic_write_text(path, text)


def write_solution(path, u, grid) -> None:
    lines = ["# radial-bump solution",
             f"# dimension {grid.dimension}",
             f"# grid_spacing {grid.h!r}",
             f"# unknowns {grid.size}",
             f"# grid_hash {grid.hash()}"]
    lines += ["%.17g" % v for v in u]
    atomic_write_text(path, "\n".join(lines) + "\n")


class SolutionFormatError(ValueError):
    pass


def read_solution(path):
    """Return ``(header dict, values)``; unparsable values raise SolutionFormatError."""
    header, values = {}, []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                parts = line[1:].split(None, 1)
                if len(parts) == 2:
                    header[parts[0]] = parts[1]
                continue
            try:
                values.append(float(line))
            except ValueError as exc:
                raise SolutionFormatError(f"bad value line {line!r}") from exc
    return header, np.array(values)


def grid_summary(grid) -> dict:
    return {"unknowns": grid.size, "boundary_points": grid.n_boundary,
            "irregular": int(np.count_nonzero(grid.kind)), "h": grid.h,
            "hash": grid.hash()}


def _oracle(spec, domain):
    """1-D reference profile for radial H on an antipodally charted cap, else None."""
    if not (spec.base.radial and domain.antipodal):
        return None
    f = spec.radial_profile(domain.dimension)
    return radial_ode_reference(domain.shape.radius, f, n=domain.dimension,
                                r1=spec.r1, r2=spec.r2)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_validate(cfg: dict) -> tuple[int, dict]:
    domain, spec = build_domain(cfg), build_spec(cfg)
    checks = cfg["checks"]
    tic = time.perf_counter()
    # one sampling pass carries both verdicts
    weak = check_hypotheses(spec, domain, WEAK, n_q=checks["hypothesis_q"],
                            n_rho=checks["hypothesis_rho"])
    reports = {WEAK: weak.to_dict(), STRICT: dataclasses.replace(weak, mode=STRICT).to_dict()}
    c1, c2, c3 = tw_constants(spec, domain)
    grid = _grid(cfg, domain)
    out = {"command": "validate", "config": cfg,
           "weak_pass": reports[WEAK]["passed"], "strict_pass": reports[STRICT]["passed"],
           "hypotheses": reports, "tw_constants": {"C1": c1, "C2": c2, "C3": c3},
           "grid": grid_summary(grid), "timing": time.perf_counter() - tic}
    code = EXIT_OK if out["weak_pass"] else EXIT_HYPOTHESIS
    out["exit_code"] = code
    return code, out


def _verification(u, spec, domain, grid, cfg) -> dict:
    cm = curvature_match(u, spec, domain, grid, cfg["checks"]["curvature_constant"])
    lo, hi, ok = check_c0_bounds(u, spec, grid.h)
    ell = ellipticity_check(u, grid, cfg["checks"]["ellipticity_samples"], seed=cfg["seed"])
    # ||L_u^-1 1||_inf: equals ||L_u^-1||_inf when the inverse is entrywise signed
    A, _, _ = frozen_operator(u, grid)
    z = solve_linear(LinearSystem(A, np.ones(grid.size), (1.0, 1.0)))
    return {"curvature_match": cm.to_dict(),
            "c0_bounds": {"min": lo, "max": hi, "pass": ok},
            "ellipticity": ell.to_dict(),
            "inverse_norm_estimate": float(np.max(np.abs(z))),
            "sup_norm": float(np.max(np.abs(u), initial=0.0))}


def _solve(cfg: dict, initial=None):
    domain, spec = build_domain(cfg), build_spec(cfg)
    grid = _grid(cfg, domain)
    tic = time.perf_counter()
    u, rep = solve_bump(domain, spec, solver_config(cfg), initial=initial, grid=grid)
    out = {"command": "solve", "config": cfg, "grid": grid_summary(grid),
           "status": rep.status, "report": rep.to_dict()}
    if rep.status == HYPOTHESIS_FAIL:
        code = EXIT_HYPOTHESIS
    elif rep.status != CONVERGED:
        code = EXIT_NONCONVERGED
    else:
        out["verification"] = ver = _verification(u, spec, domain, grid, cfg)
        passed = ver["curvature_match"]["passed"] and ver["c0_bounds"]["pass"]
        code = EXIT_OK if passed else EXIT_VERIFY
        _write_outputs(cfg, u, domain, grid, out)
    out["timing"] = time.perf_counter() - tic
    out["exit_code"] = code
    return code, out, u, (domain, spec, grid)


def cmd_solve(cfg: dict, initial=None) -> tuple[int, dict]:
    code, out, _, _ = _solve(cfg, initial)
    return code, out


def _write_outputs(cfg, u, domain, grid, out):
    paths = cfg["outputs"]
    if paths["solution_path"]:
        write_solution(paths["solution_path"], u, grid)
    if paths["mesh_path"]:
        if grid.dimension == 2:
            export_mesh(build_surface(u, domain, grid), paths["mesh_path"])
        else:
            out.setdefault("notes", []).append("mesh export needs n = 2; skipped")
    if paths["profile_path"]:
        theta = geodesic_angle(grid)
        order = np.argsort(theta, kind="stable")
        write_profile(paths["profile_path"], np.r_[theta[order], domain_radius(domain)],
                      np.r_[u[order], 0.0])


def domain_radius(domain) -> float:
    if isinstance(domain.shape, GeodesicCap):
        return domain.shape.radius
    q = domain.sample_sphere_points(512, boundary_fraction=1.0)
    return float(np.max(np.arccos(np.clip(q @ domain.center_point, -1, 1))))


def cmd_verify(cfg: dict, solution_path) -> tuple[int, dict]:
    domain, spec = build_domain(cfg), build_spec(cfg)
    grid = _grid(cfg, domain)
    out = {"command": "verify", "config": cfg, "grid": grid_summary(grid),
           "solution_path": str(solution_path)}
    try:
        header, u = read_solution(solution_path)
    except OSError as exc:
        raise ConfigError(f"cannot read solution: {exc}") from exc
    except SolutionFormatError as exc:
        out.update(error=str(exc), exit_code=EXIT_VERIFY)
        return EXIT_VERIFY, out
    if u.size != grid.size or header.get("grid_hash", grid.hash()) != grid.hash():
        out.update(error=f"solution has {u.size} values for a grid of {grid.size} "
                         f"(hash {header.get('grid_hash')} vs {grid.hash()})",
                   exit_code=EXIT_CONFIG)
        return EXIT_CONFIG, out
    if not np.all(np.isfinite(u)):
        out.update(error="non-finite values", exit_code=EXIT_VERIFY)
        return EXIT_VERIFY, out
    F = residual(u, spec, domain, grid)
    out["residual_sup"] = float(np.max(np.abs(F), initial=0.0))
    # cut-cell stencils are first order; full-stencil nodes show the O(h^2) rate
    out["residual_sup_interior"] = float(np.max(np.abs(F[grid.kind == INTERIOR]), initial=0.0))
    out["verification"] = ver = _verification(u, spec, domain, grid, cfg)
    # a valid H-bump need not lie in A; the bounds are reported, not required
    out["in_A"] = ver["c0_bounds"]["pass"]
    code = EXIT_OK if ver["curvature_match"]["passed"] else EXIT_VERIFY
    out["exit_code"] = code
    return code, out


SWEEP_SHORTCUTS = {
    "grid_spacing": ("problem", "grid_spacing"),
    "theta0": ("problem", "domain", "theta0"),
    "epsilon": ("problem", "curvature", "epsilon"),
    "r1": ("problem", "curvature", "r1"),
    "r2": ("problem", "curvature", "r2"),
}


def _sweep_path(cfg, name):
    if name in SWEEP_SHORTCUTS:
        return SWEEP_SHORTCUTS[name]
    if name == "theta0_deg":
        return ("problem", "domain", "theta0")
    if name in cfg["problem"]["curvature"]["params"]:
        return ("problem", "curvature", "params", name)
    if "." in name:
        return tuple(name.split("."))
    raise ConfigError(f"unknown sweep parameter {name!r}")


def _set_path(cfg, path, value):
    node = cfg
    for key in path[:-1]:
        node = node[key]
    node[path[-1]] = value


def _sweep_child(args):
    raw, name, value = args
    try:
        child = resolve_config(raw)
        code, out, u, (domain, spec, grid) = _solve(child)
    except ConfigError as exc:
        return {"value": value, "exit_code": EXIT_CONFIG, "error": str(exc)}, None
    entry = {"value": value, "exit_code": code, "status": out["status"],
             "timing": out["timing"]}
    if "verification" in out:
        entry["curvature_mismatch"] = out["verification"]["curvature_match"]["sup_mismatch"]
        entry["sup_norm"] = out["verification"]["sup_norm"]
    if out["status"] != CONVERGED:
        return entry, None
    try:
        ref = _oracle(spec, domain)
    except ShootingError as exc:
        ref = None
        entry["oracle_error"] = str(exc)
    if ref is not None:
        entry["error_vs_oracle"] = float(np.max(np.abs(u - ref(geodesic_angle(grid)))))
    return entry, (grid.hash(), u)


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("RADIAL_BUMP_THREADS", "1")))
    except ValueError:
        return 1


def cmd_sweep(cfg: dict, name: str, values) -> tuple[int, dict]:
    if not values:
        raise ConfigError("sweep needs at least one value")
    path = _sweep_path(cfg, name)
    jobs = []
    for value in values:
        raw = copy.deepcopy(cfg)
        v = math.radians(value) if name == "theta0_deg" else value
        try:
            _set_path(raw, path, v)
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"cannot set {name}: {exc}") from exc
        jobs.append((raw, name, value))
    if name == "epsilon":
        base = copy.deepcopy(cfg)
        _set_path(base, path, 0.0)
        jobs.append((base, name, 0.0))
    tic = time.perf_counter()
    workers = min(_workers(), len(jobs))
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_sweep_child, jobs))
    else:
        results = [_sweep_child(job) for job in jobs]
    reference = results.pop()[1] if name == "epsilon" else None
    entries = [r[0] for r in results]
    out = {"command": "sweep", "config": cfg, "parameter": name, "values": list(values),
           "runs": entries}

    errs = [e.get("error_vs_oracle") for e in entries]
    if name == "grid_spacing" and len(values) > 1 and all(e is not None and e > 0 for e in errs):
        out["observed_orders"] = [math.log(errs[i] / errs[i + 1]) / math.log(values[i] / values[i + 1])
                                  for i in range(len(values) - 1)]
        out["observed_order_fit"] = float(np.polyfit(np.log(values), np.log(errs), 1)[0])
    if reference is not None:
        dist = []
        for (entry, sol) in results:
            if sol is None or sol[0] != reference[0]:
                dist.append(None)
            else:
                dist.append(float(np.max(np.abs(sol[1] - reference[1]))))
            entry["distance_to_eps0"] = dist[-1]
        ordered = [d for _, d in sorted(zip(values, dist), reverse=True)]
        out["monotone_shrinking"] = bool(all(d is not None for d in ordered) and all(
            b <= a for a, b in zip(ordered, ordered[1:])))
    out["timing"] = time.perf_counter() - tic
    failed = [e["exit_code"] for e in entries if e["exit_code"] != EXIT_OK]
    code = failed[0] if failed else EXIT_OK
    out["exit_code"] = code
    return code, out


def _extra_starts(cfg, domain, spec, grid):
    starts = []
    pert = float(cfg["probe"]["perturbation"])
    x = grid.points
    depth = -domain.phi(x)
    bump = depth / max(float(np.max(depth)), 1e-300)
    for name in cfg["probe"]["extra_starts"]:
        if name == "reflected_cap":
            if not isinstance(domain.shape, GeodesicCap):
                raise ConfigError("reflected_cap start needs a cap domain")
            try:
                u0 = reflected_cap_profile(domain.shape.radius, geodesic_angle(grid))
            except ValueError as exc:
                raise ConfigError(str(exc)) from exc
            u0 = u0 + pert * bump
        elif isinstance(name, (int, float)):
            u0 = np.full(grid.size, float(name))
        else:
            raise ConfigError(f"unknown extra start {name!r}")
        starts.append((str(name), u0))
    return starts


def cmd_probe(cfg: dict, n_starts: int, seed: int) -> tuple[int, dict]:
    if n_starts < 1:
        raise ConfigError("--starts must be at least 1")
    domain, spec = build_domain(cfg), build_spec(cfg)
    grid = _grid(cfg, domain)
    tic = time.perf_counter()
    res = uniqueness_probe(domain, spec, solver_config(cfg), n_starts=n_starts, seed=seed,
                           extra_starts=_extra_starts(cfg, domain, spec, grid), grid=grid)
    sols = res.pop("solutions")
    centre = int(np.argmin(np.sum((grid.points - domain.chart_center) ** 2, axis=1)))
    for d in res["distinct_solutions"]:
        u = sols[d["representative"]]
        d["center_value"] = float(u[centre])
        d["sup_norm"] = float(np.max(np.abs(u)))
    out = {"command": "probe", "config": cfg, "seed": seed, "grid": grid_summary(grid),
           "probe": res, "timing": time.perf_counter() - tic}
    if res["n_converged"] == 0:
        code = EXIT_NONCONVERGED
    else:
        code = EXIT_OK if res["agree"] else EXIT_VERIFY
    out["exit_code"] = code
    return code, out


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def _values(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"--values must be comma-separated numbers: {exc}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="radial-bump",
                                     description="Prescribed mean curvature radial graphs on S^n.")
    parser.add_argument("command", choices=["validate", "solve", "verify", "sweep", "probe"])
    parser.add_argument("--config", required=True, help="JSON run configuration")
    parser.add_argument("--out", help="report path (default: outputs.report_path or stdout)")
    parser.add_argument("--param", help="sweep parameter")
    parser.add_argument("--values", help="comma-separated sweep values")
    parser.add_argument("--starts", type=int, default=5, help="probe start count")
    parser.add_argument("--seed", type=int, help="probe seed (default: config seed)")
    parser.add_argument("--solution", help="solution file for verify")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    threads = os.environ.get("RADIAL_BUMP_THREADS")
    if threads:
        # cap BLAS pools in this process and any children
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ.setdefault(var, threads)
    try:
        cfg = load_config(args.config)
        if args.command == "validate":
            code, out = cmd_validate(cfg)
        elif args.command == "solve":
            code, out = cmd_solve(cfg)
        elif args.command == "verify":
            if not args.solution:
                raise ConfigError("verify needs --solution")
            code, out = cmd_verify(cfg, args.solution)
        elif args.command == "sweep":
            if not args.param or args.values is None:
                raise ConfigError("sweep needs --param and --values")
            code, out = cmd_sweep(cfg, args.param, _values(args.values))
        else:
            seed = cfg["seed"] if args.seed is None else args.seed
            code, out = cmd_probe(cfg, args.starts, seed)
    except ConfigError as exc:
        print(f"radial-bump: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    write_report(out, args.out or cfg["outputs"]["report_path"])
    return code


if __name__ == "__main__":
    sys.exit(main())
