"""Fixed-point and Newton solvers for the radial-graph Dirichlet problem.

The discrete problem is ``F(u) = a^ij(grad u) u_ij - R(u, |grad u|^2) = 0`` with
``R = n (1 + P)(1 - sqrt(1 + P) e^u H(e^u q))``.  One Picard step freezes the
coefficients and the right-hand side at ``w`` and solves ``L_w u = t R(w)``.
"""

from __future__ import annotations

import dataclasses
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import elliptic
from .curvature import WEAK, CurvatureSpec, check_hypotheses, regularize
from .geometry import Grid, build_grid, conformal_factor, frame_derivatives, frame_from_partials

PICARD = "picard"
NEWTON = "newton"
PICARD_THEN_NEWTON = "picard_then_newton"

CONVERGED = "CONVERGED"
MAX_ITER = "MAX_ITER"
DIVERGED = "DIVERGED"
HYPOTHESIS_FAIL = "HYPOTHESIS_FAIL"


@dataclass(frozen=True)
class SolverConfig:
    scheme: str = PICARD_THEN_NEWTON
    t_schedule: tuple[float, ...] = (0.25, 0.5, 0.75, 1.0)
    eps_schedule: tuple[float, ...] = (0.1, 0.01, 0.0)
    tol_residual: float = 1e-9
    tol_increment: float = 1e-11
    max_iterations: int = 200
    newton_damping: tuple[float, float] = (1.0, 0.5)
    newton_switch: float = 1e-3
    linear_method: str = elliptic.DIRECT
    divergence_factor: float = 1e6
    hypothesis_samples: tuple[int, int] = (2000, 200)
    force: bool = False

    def __post_init__(self):
        ts = tuple(float(t) for t in self.t_schedule)
        es = tuple(float(e) for e in self.eps_schedule)
        object.__setattr__(self, "t_schedule", ts)
        object.__setattr__(self, "eps_schedule", es)
        object.__setattr__(self, "newton_damping", tuple(self.newton_damping))
        object.__setattr__(self, "hypothesis_samples", tuple(self.hypothesis_samples))
        if self.scheme not in (PICARD, NEWTON, PICARD_THEN_NEWTON):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if not ts or ts[-1] != 1.0 or any(b <= a for a, b in zip(ts, ts[1:])) or ts[0] <= 0:
            raise ValueError("t_schedule must increase strictly in (0, 1] and end at 1")
        if es and (es[-1] != 0.0 or any(b >= a for a, b in zip(es, es[1:])) or min(es) < 0):
            raise ValueError("eps_schedule must decrease strictly to 0")
        if self.tol_residual <= 0 or self.tol_increment <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be positive")

    def to_dict(self) -> dict:
        return {k: (list(v) if isinstance(v, tuple) else v)
                for k, v in dataclasses.asdict(self).items()}


@dataclass
class SolveReport:
    status: str
    iterations: list[dict] = field(default_factory=list)
    residual_history: list[float] = field(default_factory=list)
    c0_bounds: dict = field(default_factory=dict)
    grad_sup: float = float("nan")
    final_residual: float = float("nan")
    eps_distances: list[float] = field(default_factory=list)
    hypotheses: dict | None = None
    timing: list[float] = field(default_factory=list)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


# ---------------------------------------------------------------------------
# residual and linearisation
# ---------------------------------------------------------------------------

def _pieces(u, spec, grid):
    grad, hess = grid.partials(u)
    v, U = frame_from_partials(grid.points, grad, hess)
    P = np.sum(v ** 2, axis=1)
    q = grid.sphere_points()
    eu = np.exp(u)
    E = spec.rho_H(eu, q)
    return v, U, P, q, eu, E


def residual(u, spec: CurvatureSpec, domain, grid: Grid, t: float = 1.0) -> np.ndarray:
    """Nodal residual of the prescribed mean curvature equation (scaled by t)."""
    u = np.asarray(u, dtype=float)
    n = grid.dimension
    v, U, P, _, _, E = _pieces(u, spec, grid)
    a = elliptic.coefficient_matrix(v)
    lhs = np.einsum("pij,pij->p", a, U)
    return lhs - n * t * (1 + P) * (1 - np.sqrt(1 + P) * E)


def jacobian(u, spec: CurvatureSpec, grid: Grid, t: float = 1.0) -> sp.csr_matrix:
    """Exact derivative of :func:`residual` with respect to nodal values."""
    u = np.asarray(u, dtype=float)
    n = grid.dimension
    v, U, P, q, eu, E = _pieces(u, spec, grid)
    a = elliptic.coefficient_matrix(v)
    J = elliptic.operator_matrix(a, grid)
    lam = conformal_factor(grid.points)
    trU = np.trace(U, axis1=1, axis2=2)
    Uv = np.einsum("pij,pj->pi", U, v)
    dR_dP = n * (1 - 1.5 * np.sqrt(1 + P) * E)
    for m in range(n):
        c = (2 * v[:, m] * trU - 2 * Uv[:, m] - 2 * t * v[:, m] * dR_dP) / lam
        J = J + sp.diags(c) @ grid.d1[m][0]
    dE_du = eu * spec.radial_derivative(q, eu)
    J = J + sp.diags(t * n * (1 + P) ** 1.5 * dE_du)
    return J.tocsr()


def picard_step(w, t: float, spec: CurvatureSpec, domain, grid: Grid,
                method: str = elliptic.DIRECT) -> np.ndarray:
    """``T_t w``: solve ``L_w u = t R(w)`` with zero boundary values."""
    system = elliptic.assemble(w, t, spec, domain, grid)
    return elliptic.solve(system, method)


def newton_step(u, spec: CurvatureSpec, domain, grid: Grid, damping=(1.0, 0.5),
                t: float = 1.0, max_backtracks: int = 30):
    """One damped Newton update with backtracking on ``||F||_inf``.

    Returns ``(u_new, residual_norm)``.  A singular linearisation falls back
    to a Picard step.
    """
    u = np.asarray(u, dtype=float)
    F = residual(u, spec, domain, grid, t)
    f0 = np.max(np.abs(F))
    if f0 == 0:
        return u.copy(), 0.0
    try:
        J = jacobian(u, spec, grid, t)
        delta = elliptic.solve(elliptic.LinearSystem(J, -F, (1.0, 1.0)))
    except (elliptic.SingularSystemError, RuntimeError):
        new = picard_step(u, t, spec, domain, grid)
        return new, float(np.max(np.abs(residual(new, spec, domain, grid, t))))
    alpha, shrink = damping
    best = None
    for _ in range(max_backtracks):
        trial = u + alpha * delta
        f = np.max(np.abs(residual(trial, spec, domain, grid, t)))
        if np.isfinite(f) and f < f0:
            return trial, float(f)
        if np.isfinite(f) and (best is None or f < best[1]):
            best = (trial, float(f))
        alpha *= shrink
    # no decrease found: keep the iterate
    return u.copy(), float(f0)


# ---------------------------------------------------------------------------
# driver
# ---------------------------------------------------------------------------

def check_c0_bounds(u, spec: CurvatureSpec, h: float = 0.0):
    """``(min, max, pass)`` of ``log r1 - tol <= u <= log r2 + tol``."""
    u = np.asarray(u, dtype=float)
    tol = 1e-8 + 10 * h ** 2
    lo, hi = float(np.min(u, initial=0.0)), float(np.max(u, initial=0.0))
    ok = np.log(spec.r1) - tol <= lo and hi <= np.log(spec.r2) + tol
    return lo, hi, bool(ok)


def _run_stage(u, t, spec, domain, grid, config: SolverConfig, history):
    """Iterate at fixed (t, spec) until the residual tolerance is met."""
    res = np.max(np.abs(residual(u, spec, domain, grid, t)))
    history.append(float(res))
    start = max(res, config.tol_residual)
    use_newton = config.scheme == NEWTON
    it = 0
    status = CONVERGED
    while res > config.tol_residual:
        if it >= config.max_iterations:
            status = MAX_ITER
            break
        it += 1
        if use_newton:
            new, res = newton_step(u, spec, domain, grid, config.newton_damping, t)
        else:
            new = picard_step(u, t, spec, domain, grid, config.linear_method)
            prev = res
            res = float(np.max(np.abs(residual(new, spec, domain, grid, t))))
            if config.scheme == PICARD_THEN_NEWTON and (res < config.newton_switch or res > prev):
                use_newton = True
        if not np.all(np.isfinite(new)) or not np.isfinite(res):
            history.append(float("inf"))
            return u, it, DIVERGED
        step = float(np.max(np.abs(new - u)))
        u = new
        history.append(float(res))
        if res > config.divergence_factor * start:
            return u, it, DIVERGED
        if step <= config.tol_increment and res > config.tol_residual:
            if use_newton or config.scheme == PICARD:
                # stalled above tolerance
                status = MAX_ITER
                break
            use_newton = True
    return u, it, status


def solve_bump(domain, spec: CurvatureSpec, config: SolverConfig | None = None,
               initial=None, grid: Grid | None = None, hypotheses=None):
    """Solve the Dirichlet problem by t- and eps-continuation.

    The t-schedule runs in the first eps stage; later eps stages warm-start
    from the previous stage at t = 1.

    Returns ``(u, report)``.
    """
    config = config or SolverConfig()
    grid = grid or build_grid(domain)
    report = SolveReport(status=CONVERGED)
    if hypotheses is None:
        nq, nr = config.hypothesis_samples
        hypotheses = check_hypotheses(spec, domain, WEAK, n_q=nq, n_rho=nr)
    report.hypotheses = hypotheses.to_dict()
    if not hypotheses.weak_pass and not config.force:
        report.status = HYPOTHESIS_FAIL
        return np.zeros(grid.size), report

    u = np.zeros(grid.size) if initial is None else np.array(initial, dtype=float)
    eps_stages = config.eps_schedule or (0.0,)
    if spec.r1 == spec.r2:
        eps_stages = (0.0,)
    previous = None
    for k, eps in enumerate(eps_stages):
        stage_spec = regularize(spec, eps)
        ts = config.t_schedule if k == 0 else (1.0,)
        for t in ts:
            tic = time.perf_counter()
            u, its, status = _run_stage(u, t, stage_spec, domain, grid, config,
                                        report.residual_history)
            report.timing.append(time.perf_counter() - tic)
            report.iterations.append({"epsilon": eps, "t": t, "iterations": its,
                                      "status": status})
            if status != CONVERGED:
                report.status = status
                _finish(report, u, spec, grid)
                return u, report
        if previous is not None:
            report.eps_distances.append(float(np.max(np.abs(u - previous))))
        previous = u.copy()
    _finish(report, u, spec, grid)
    return u, report


def _finish(report, u, spec, grid):
    if report.residual_history:
        report.final_residual = report.residual_history[-1]
    lo, hi, ok = check_c0_bounds(u, spec, grid.h)
    report.c0_bounds = {"min": lo, "max": hi, "lower": float(np.log(spec.r1)),
                        "upper": float(np.log(spec.r2)), "pass": ok}
    if np.all(np.isfinite(u)):
        v, _ = frame_derivatives(u, grid)
        report.grad_sup = float(np.max(np.sum(v ** 2, axis=1)))


# ---------------------------------------------------------------------------
# uniqueness probe
# ---------------------------------------------------------------------------

def smooth_random_field(grid: Grid, rng, lo: float, hi: float, modes: int = 3) -> np.ndarray:
    """Random low-frequency field, damped towards the boundary and clipped."""
    x = grid.points
    n = grid.dimension
    field_ = np.zeros(grid.size)
    span = np.ptp(x, axis=0).max() + grid.h
    for _ in range(modes):
        k = rng.normal(size=n) * 2 * np.pi / span
        field_ += rng.normal() * np.cos(x @ k + rng.uniform(0, 2 * np.pi))
    field_ *= 0.5 * (hi - lo) / max(np.max(np.abs(field_)), 1e-12)
    depth = np.clip(-grid.domain.phi(x) / (0.25 * span), 0, 1)
    return np.clip(field_ * depth, lo, hi)


def uniqueness_probe(domain, spec: CurvatureSpec, config: SolverConfig | None = None,
                     n_starts: int = 5, seed: int = 0, extra_starts=(),
                     grid: Grid | None = None, agree_tol: float = 1e-6) -> dict:
    """Solve from several initial fields and compare solutions lying in A.

    ``extra_starts`` is a sequence of ``(label, field)`` pairs appended to the
    generated starts.
    """
    config = config or SolverConfig()
    grid = grid or build_grid(domain)
    if n_starts < 1:
        raise ValueError("n_starts must be positive")
    rng = np.random.default_rng(seed)
    lo, hi = np.log(spec.r1), np.log(spec.r2)
    starts = [("zero", np.zeros(grid.size))]
    n_const = (n_starts - 1 + 1) // 2
    n_rand = n_starts - 1 - n_const
    for j in range(n_const):
        c = lo + (j + 1) / (n_const + 1) * (hi - lo)
        starts.append((f"constant {c:.6g}", np.full(grid.size, c)))
    for j in range(n_rand):
        starts.append((f"random {j}", smooth_random_field(grid, rng, lo, hi)))
    starts.extend(extra_starts)

    nq, nr = config.hypothesis_samples
    hyp = check_hypotheses(spec, domain, WEAK, n_q=nq, n_rho=nr)
    results = []
    solutions = []
    for label, u0 in starts:
        u, rep = solve_bump(domain, spec, config, initial=u0, grid=grid, hypotheses=hyp)
        entry = {"label": label, "status": rep.status,
                 "in_A": bool(rep.status == CONVERGED and rep.c0_bounds.get("pass", False)),
                 "min": rep.c0_bounds.get("min"), "max": rep.c0_bounds.get("max"),
                 "final_residual": rep.final_residual}
        results.append(entry)
        solutions.append(u if rep.status == CONVERGED else None)

    conv = [i for i, s in enumerate(solutions) if s is not None]
    in_a = [i for i in conv if results[i]["in_A"]]
    pairwise = []
    for a_i, i in enumerate(in_a):
        for j in in_a[a_i + 1:]:
            pairwise.append({"a": i, "b": j,
                             "sup_distance": float(np.max(np.abs(solutions[i] - solutions[j])))})
    # cluster all converged solutions into distinct ones
    distinct: list[dict] = []
    for i in conv:
        for d in distinct:
            if np.max(np.abs(solutions[i] - solutions[d["representative"]])) < agree_tol:
                d["members"].append(i)
                break
        else:
            distinct.append({"representative": i, "members": [i], "in_A": results[i]["in_A"]})
    max_dist = max((p["sup_distance"] for p in pairwise), default=0.0)
    return {"seed": seed, "n_starts": len(starts), "starts": results,
            "pairwise": pairwise, "max_in_A_distance": max_dist,
            "agree": bool(max_dist < agree_tol), "n_converged": len(conv),
            "distinct_solutions": distinct, "solutions": solutions}
