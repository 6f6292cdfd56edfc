import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import manufactured_error
from radial_bump.curvature import Constant, CurvatureSpec, RadialPower
from radial_bump.elliptic import (DIRECT, KRYLOV, AssemblyError, LinearSystem, assemble,
                                  coefficient_matrix, ellipticity_check, frozen_operator,
                                  quadratic_form, relative_residual, solve)
from radial_bump.geometry import build_grid, cap_domain, frame_derivatives

INVERSE = CurvatureSpec(RadialPower(1, 1), 0.5, 2)
SQUARE = CurvatureSpec(RadialPower(1.5, 2), 0.5, 2)


def _bump(grid, amp=0.3):
    x = grid.points
    R2 = np.max(np.sum(x * x, axis=1)) + grid.h ** 2
    return amp * (1 - np.sum(x * x, axis=1) / R2) * np.cos(2 * x[:, 0] + x[:, 1])


def test_zero_time_gives_zero_rhs_and_solution(cap60):
    domain, grid = cap60
    system = assemble(_bump(grid), 0.0, SQUARE, domain, grid)
    assert not np.any(system.rhs)
    for method in (DIRECT, KRYLOV):
        u = solve(system, method)
        assert np.array_equal(u, np.zeros(grid.size))


def test_inverse_radius_rhs_vanishes_at_zero(cap60):
    domain, grid = cap60
    system = assemble(np.zeros(grid.size), 1.0, INVERSE, domain, grid)
    assert np.max(np.abs(system.rhs)) < 1e-15


def test_rhs_is_linear_in_t(cap60):
    domain, grid = cap60
    w = _bump(grid)
    one = assemble(w, 1.0, SQUARE, domain, grid).rhs
    for t in (0.25, 0.5, 0.75):
        assert np.array_equal(assemble(w, t, SQUARE, domain, grid).rhs, t * one)


def test_rows_touch_stencil_neighbours_only(cap60):
    domain, grid = cap60
    system = assemble(_bump(grid), 1.0, SQUARE, domain, grid)
    A = system.matrix
    assert A.shape == (grid.size, grid.size)
    assert np.max(np.diff(A.indptr)) <= 3 ** grid.dimension
    rows, cols = A.nonzero()
    assert np.max(np.abs(grid.index[rows] - grid.index[cols])) <= 1
    assert system.coeff_bounds[0] >= 1 - 1e-12


def test_corrupt_field_rejected(cap60):
    domain, grid = cap60
    w = np.zeros(grid.size)
    w[3] = np.nan
    with pytest.raises(AssemblyError):
        assemble(w, 1.0, SQUARE, domain, grid)
    with pytest.raises(AssemblyError):
        assemble(np.zeros(grid.size - 1), 1.0, SQUARE, domain, grid)


def test_zero_field_gives_laplace_beltrami(cap60):
    # L_0 = lam^-2 (Laplacian) in two dimensions
    _, grid = cap60
    A, a, _ = frozen_operator(np.zeros(grid.size), grid)
    np.testing.assert_array_equal(a, np.broadcast_to(np.eye(2), a.shape))
    x = grid.points
    lam2 = (2 / (1 + np.sum(x * x, axis=1))) ** 2
    L = sum(grid.d2[(k, k)][0] for k in range(2))
    assert abs(A - sp.diags(1 / lam2) @ L).max() < 1e-9


@pytest.mark.parametrize("theta0", [np.pi / 6, np.pi / 3, 5 * np.pi / 12])
def test_manufactured_solution_second_order(theta0):
    hs = [0.1, 0.05, 0.025] if theta0 > 0.6 else [0.05, 0.025, 0.0125]
    errs = [manufactured_error(theta0, h) for h in hs]
    order = np.polyfit(np.log(hs), np.log(errs), 1)[0]
    assert order >= 2.0, errs
    assert errs[-1] < 2 * hs[-1] ** 2


@pytest.mark.parametrize("method", [DIRECT, KRYLOV])
def test_algebraic_residual(cap60, method):
    domain, grid = cap60
    system = assemble(_bump(grid), 1.0, SQUARE, domain, grid)
    u = solve(system, method)
    assert relative_residual(system, u) <= 1e-12


def test_direct_solve_is_deterministic(cap60):
    domain, grid = cap60
    w = _bump(grid)
    a = solve(assemble(w, 1.0, SQUARE, domain, grid))
    b = solve(assemble(w, 1.0, SQUARE, domain, grid))
    assert a.tobytes() == b.tobytes()


def test_krylov_failure_falls_back_to_direct(cap60):
    domain, grid = cap60
    system = assemble(_bump(grid), 1.0, SQUARE, domain, grid)
    u = solve(system, KRYLOV, maxiter=1, restart=2)
    assert relative_residual(system, u) <= 1e-12


def test_unknown_method():
    system = LinearSystem(sp.identity(3, format="csr"), np.ones(3), (1.0, 1.0))
    with pytest.raises(ValueError):
        solve(system, "magic")


def test_discrete_maximum_principle_coarse():
    # L_w u = f <= 0 with zero boundary data forces u >= 0
    domain = cap_domain(np.pi / 3, 0.1)
    grid = build_grid(domain)
    w = _bump(grid, 0.2)
    A, _, _ = frozen_operator(w, grid)
    rng = np.random.default_rng(0)
    f = -rng.uniform(0.1, 1.0, grid.size)
    u = solve(LinearSystem(A, f, (1.0, 1.0)))
    dense = np.linalg.solve(A.toarray(), f)
    np.testing.assert_allclose(u, dense, atol=1e-12)
    assert np.min(u) >= -1e-12


# -- ellipticity ---------------------------------------------------------------

def test_zero_field_margins(cap60):
    _, grid = cap60
    rep = ellipticity_check(np.zeros(grid.size), grid, samples=2000)
    assert rep.passed
    assert abs(rep.lower_margin) < 1e-15 and abs(rep.upper_margin) < 1e-15


def test_random_field_passes(cap60):
    _, grid = cap60
    rep = ellipticity_check(_bump(grid, 1.5), grid, samples=10_000, seed=3)
    assert rep.passed and rep.samples == 10_000 and rep.sup_grad_sq > 1


def test_parallel_and_perpendicular_directions(cap60):
    _, grid = cap60
    w = _bump(grid, 0.8)
    v, _ = frame_derivatives(w, grid)
    norm = np.linalg.norm(v, axis=1, keepdims=True)
    ok = norm[:, 0] > 1e-8
    par = v[ok] / norm[ok]
    perp = np.stack([-par[:, 1], par[:, 0]], axis=1)
    P = norm[ok, 0] ** 2
    sub = np.flatnonzero(ok)
    full_par = np.zeros_like(v)
    full_perp = np.zeros_like(v)
    full_par[sub] = par
    full_perp[sub] = perp
    np.testing.assert_allclose(quadratic_form(w, grid, full_par)[sub], 1.0, atol=1e-12)
    np.testing.assert_allclose(quadratic_form(w, grid, full_perp)[sub], 1 + P, atol=1e-12)


@given(arrays(float, 2, elements=st.floats(-20, 20)), arrays(float, 2, elements=st.floats(-5, 5)))
def test_quadratic_form_identity(v, xi):
    a = coefficient_matrix(v[None])[0]
    lhs = xi @ a @ xi
    rhs = (1 + v @ v) * (xi @ xi) - (v @ xi) ** 2
    assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12)
    assert lhs >= (xi @ xi) * (1 - 1e-12) - 1e-12
    assert lhs <= (1 + 2 * (v @ v)) * (xi @ xi) * (1 + 1e-12) + 1e-12


def test_constant_H_one_rhs_sign(cap60):
    # w = 0, H = 1: the domain itself solves the equation and the rhs vanishes
    domain, grid = cap60
    spec = CurvatureSpec(Constant(1.0), 1.0, 1.0)
    assert not np.any(assemble(np.zeros(grid.size), 1.0, spec, domain, grid).rhs)
