"""Symbolic reference computations shared by the test modules."""

import functools

import numpy as np
import sympy

from radial_bump.elliptic import LinearSystem, frozen_operator, solve
from radial_bump.geometry import build_grid, cap_domain


@functools.lru_cache(maxsize=None)
def laplace_beltrami_pair(radius: float):
    """``(u*, L0 u*)`` as numpy callables of chart points for a disk of ``radius``.

    ``L0 u = g^ij (d_ij u - Gamma^k_ij d_k u)`` with the Christoffel symbols of
    ``g = lam^2 delta`` taken from the Levi-Civita formula.
    """
    x1, x2 = xs = sympy.symbols("x1 x2", real=True)
    u = (radius ** 2 - x1 ** 2 - x2 ** 2) * sympy.exp(x1) * sympy.cos(x2)
    lam = 2 / (1 + x1 ** 2 + x2 ** 2)
    g = lam ** 2
    total = 0
    for i in range(2):
        gamma_k = [(2 * int(i == k) * sympy.diff(g, xs[i]) - sympy.diff(g, xs[k])) / (2 * g)
                   for k in range(2)]
        total += sympy.diff(u, xs[i], 2) - sum(gk * sympy.diff(u, xs[k])
                                               for k, gk in enumerate(gamma_k))
    f = sympy.simplify(total / g)
    fu = sympy.lambdify(xs, u, "numpy")
    ff = sympy.lambdify(xs, f, "numpy")
    return (lambda x: fu(x[:, 0], x[:, 1])), (lambda x: ff(x[:, 0], x[:, 1]))


def manufactured_error(theta0: float, h: float) -> float:
    """Sup error of the discrete Laplace-Beltrami solve against ``u*``."""
    domain = cap_domain(theta0, h)
    grid = build_grid(domain)
    exact, rhs = laplace_beltrami_pair(float(np.tan(theta0 / 2)))
    A, _, _ = frozen_operator(np.zeros(grid.size), grid)
    u = solve(LinearSystem(A, rhs(grid.points), (1.0, 1.0)))
    return float(np.max(np.abs(u - exact(grid.points))))


def reflected_cap_residual():
    """Symbolic residual of ``log(2 cos theta)`` in the reduced H = 1 equation (n = 2)."""
    th = sympy.symbols("theta", positive=True)
    u = sympy.log(2 * sympy.cos(th))
    up = sympy.diff(u, th)
    w = 1 + up ** 2
    lhs = sympy.diff(u, th, 2) + w * sympy.cot(th) * up
    rhs = 2 * w * (1 - sympy.sqrt(w) * sympy.exp(u))
    expr = lhs - rhs
    # sqrt(sec^2) = sec on (0, pi/2)
    return sympy.simplify(expr.subs(sympy.sqrt(w), 1 / sympy.cos(th)).rewrite(sympy.cos))
