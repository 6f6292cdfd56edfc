"""Frozen-coefficient linear Dirichlet problems ``L_w u = b``.

``L_w u = a^ij u_ij`` with ``a^ij = (1 + |grad w|^2) delta_ij - w_i w_j`` is kept
in non-divergence form; expanding the frame Hessian gives chart coefficients
``lam^-2 a^ij`` on ``d_ij u`` and ``-lam^-2 a^ij Gamma^k_ij`` on ``d_k u``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .geometry import Grid, conformal_factor, frame_derivatives, log_factor_gradient

DIRECT = "direct"
KRYLOV = "krylov"


class AssemblyError(RuntimeError):
    pass


class SingularSystemError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class LinearSystem:
    matrix: sp.csr_matrix
    rhs: np.ndarray
    coeff_bounds: tuple[float, float]


def coefficient_matrix(frame_grad: np.ndarray) -> np.ndarray:
    """``a^ij = (1 + |v|^2) delta_ij - v_i v_j`` per node."""
    n = frame_grad.shape[-1]
    p = np.sum(frame_grad ** 2, axis=-1)
    return (1 + p)[..., None, None] * np.eye(n) - frame_grad[..., :, None] * frame_grad[..., None, :]


def operator_matrix(a: np.ndarray, grid: Grid) -> sp.csr_matrix:
    """Sparse matrix of ``u -> a^ij u_ij`` with zero boundary data."""
    x = grid.points
    lam2 = conformal_factor(x) ** 2
    s = log_factor_gradient(x)
    n = grid.dimension
    # sum_ij a^ij Gamma^k_ij = 2 (a s)_k - tr(a) s_k
    first = -(2 * np.einsum("pkj,pj->pk", a, s) - np.trace(a, axis1=1, axis2=2)[:, None] * s) / lam2[:, None]
    A = sp.csr_matrix((grid.size, grid.size))
    for (k, l), (D, _) in grid.d2.items():
        c = a[:, k, l] / lam2
        if k != l:
            c = c + a[:, l, k] / lam2
        A = A + sp.diags(c) @ D
    for k in range(n):
        A = A + sp.diags(first[:, k]) @ grid.d1[k][0]
    return A.tocsr()


def frozen_operator(w, grid: Grid):
    """Operator matrix of ``L_w`` and the coefficient field ``a^ij``."""
    v, _ = frame_derivatives(w, grid)
    a = coefficient_matrix(v)
    return operator_matrix(a, grid), a, v


def mean_curvature_rhs(w, frame_grad, t, spec, grid: Grid) -> np.ndarray:
    """``n t (1 + |grad w|^2)(1 - sqrt(1 + |grad w|^2) e^w H(e^w q))``."""
    n = grid.dimension
    p = np.sum(frame_grad ** 2, axis=-1)
    q = grid.sphere_points()
    ew = np.exp(w)
    E = spec.rho_H(ew, q)  # e^w H(e^w q)
    return t * (n * (1 + p) * (1 - np.sqrt(1 + p) * E))


def assemble(w, t: float, spec, domain, grid: Grid) -> LinearSystem:
    """Linear system for one application of the operator ``T_t`` at ``w``."""
    w = np.asarray(w, dtype=float)
    if w.shape != (grid.size,) or not np.all(np.isfinite(w)):
        raise AssemblyError("w must be a finite field on the grid unknowns")
    A, a, v = frozen_operator(w, grid)
    eig = np.linalg.eigvalsh(a)
    bounds = (float(eig.min()), float(eig.max()))
    if bounds[0] < 1 - 1e-12 * bounds[1]:
        raise AssemblyError(f"ellipticity lower bound violated: {bounds[0]}")
    rhs = mean_curvature_rhs(w, v, t, spec, grid)
    if not (np.all(np.isfinite(rhs)) and np.all(np.isfinite(A.data))):
        raise AssemblyError("non-finite coefficient in assembly")
    return LinearSystem(A, rhs, bounds)


def relative_residual(system: LinearSystem, u) -> float:
    r = system.matrix @ u - system.rhs
    return float(np.max(np.abs(r), initial=0.0) / (np.max(np.abs(system.rhs), initial=0.0) + 1))


def _direct(A, b):
    try:
        lu = spla.splu(A.tocsc())
    except RuntimeError as exc:
        raise SingularSystemError(f"singular factorization ({A.shape[0]} unknowns): {exc}") from exc
    u = lu.solve(b)
    # one step of iterative refinement
    u = u + lu.solve(b - A @ u)
    return u


def solve(system: LinearSystem, method: str = DIRECT, maxiter: int = 500,
          restart: int = 50) -> np.ndarray:
    """Solve the assembled system; Krylov failures fall back to DIRECT."""
    A, b = system.matrix, system.rhs
    if not np.any(b):
        return np.zeros_like(b)
    if method == DIRECT:
        u = _direct(A, b)
    elif method == KRYLOV:
        u = None
        try:
            ilu = spla.spilu(A.tocsc(), drop_tol=1e-5, fill_factor=20)
            M = spla.LinearOperator(A.shape, ilu.solve)
            x = None
            for _ in range(3):  # restart from the last iterate on stagnation
                x, info = spla.gmres(A, b, x0=x, M=M, rtol=1e-14, atol=0.0,
                                     restart=restart, maxiter=maxiter)
                if relative_residual(system, x) <= 1e-12:
                    u = x
                    break
        except RuntimeError:
            u = None
        if u is None:
            u = _direct(A, b)
    else:
        raise ValueError(f"unknown method {method!r}")
    if not np.all(np.isfinite(u)):
        raise SingularSystemError("non-finite solution")
    return u


@dataclass
class EllipticityReport:
    samples: int
    lower_margin: float
    upper_margin: float
    sup_grad_sq: float
    passed: bool

    def to_dict(self):
        return dict(self.__dict__)


def ellipticity_check(w, grid: Grid, samples: int = 10_000, seed: int = 0,
                      tol: float = 1e-12) -> EllipticityReport:
    """Check ``|xi|^2 <= a^ij xi_i xi_j <= (1 + 2 sup|grad w|^2)|xi|^2``."""
    rng = np.random.default_rng(seed)
    v, _ = frame_derivatives(np.asarray(w, dtype=float), grid)
    a = coefficient_matrix(v)
    sup = float(np.max(np.sum(v ** 2, axis=1)))
    nodes = rng.integers(0, grid.size, samples)
    xi = rng.standard_normal((samples, grid.dimension))
    xi /= np.linalg.norm(xi, axis=1, keepdims=True)
    form = np.einsum("si,sij,sj->s", xi, a[nodes], xi)
    lower = float(np.min(form - 1.0))
    upper = float(np.min(1 + 2 * sup - form))
    return EllipticityReport(samples, lower, upper, sup,
                             bool(lower >= -tol and upper >= -tol))


def quadratic_form(w, grid: Grid, xi: np.ndarray) -> np.ndarray:
    """``a^ij xi_i xi_j`` at every node for per-node vectors ``xi``."""
    v, _ = frame_derivatives(np.asarray(w, dtype=float), grid)
    return np.einsum("pi,pij,pj->p", xi, coefficient_matrix(v), xi)
