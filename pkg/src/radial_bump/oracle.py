"""Independent checks on computed radial graphs.

Nothing here evaluates the discrete PDE.  Mean curvature is recomputed from
the first and second fundamental forms of the embedding ``X = e^u q``, and
rotationally symmetric solutions come from a 1-D boundary value problem
solved twice (shooting and Chebyshev collocation).
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import BarycentricInterpolator
from scipy.optimize import brentq
from scipy.spatial import Delaunay

from .geometry import Grid, chart_to_sphere

# ---------------------------------------------------------------------------
# surface mesh
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SurfaceMesh:
    vertices: np.ndarray
    faces: np.ndarray
    normals: np.ndarray
    n_nodes: int  # vertices[:n_nodes] are grid unknowns, the rest boundary points


def build_surface(u, domain, grid: Grid, min_area: float = 1e-14) -> SurfaceMesh:
    """Triangulated radial graph over a 2-D chart grid.

    Normals point towards the origin side (``<N, X> < 0``); faces are
    counter-clockwise with respect to them.
    """
    if grid.dimension != 2:
        raise ValueError("mesh construction needs n = 2")
    u = np.asarray(u, dtype=float)
    chart = np.concatenate([grid.points, grid.boundary_points])
    radius = np.concatenate([np.exp(u), np.ones(grid.n_boundary)])
    X = radius[:, None] * chart_to_sphere(chart, domain.pole)

    tri = Delaunay(chart).simplices
    centroids = chart[tri].mean(axis=1)
    tri = tri[domain.contains(centroids)]
    a, b, c = X[tri[:, 0]], X[tri[:, 1]], X[tri[:, 2]]
    cross = np.cross(b - a, c - a)
    area = 0.5 * np.linalg.norm(cross, axis=1)
    keep = area >= min_area
    tri, cross = tri[keep], cross[keep]
    centre = X[tri].mean(axis=1)
    flip = np.sum(cross * centre, axis=1) > 0
    tri[flip] = tri[flip][:, [0, 2, 1]]
    cross[flip] *= -1

    normals = np.zeros_like(X)
    for k in range(3):
        np.add.at(normals, tri[:, k], cross)
    norm = np.linalg.norm(normals, axis=1, keepdims=True)
    normals = np.where(norm > 0, normals / np.where(norm > 0, norm, 1), -X / np.linalg.norm(X, axis=1, keepdims=True))
    return SurfaceMesh(vertices=X, faces=tri, normals=normals, n_nodes=grid.size)


def export_mesh(mesh: SurfaceMesh, path) -> None:
    """Write a Wavefront OBJ file (17 significant digits)."""
    lines = ["# radial graph mesh"]
    lines += ["v %.17g %.17g %.17g" % tuple(v) for v in mesh.vertices]
    lines += ["vn %.17g %.17g %.17g" % tuple(v) for v in mesh.normals]
    lines += ["f {0}//{0} {1}//{1} {2}//{2}".format(*(f + 1)) for f in mesh.faces]
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_obj(path):
    """Parse vertices, normals and faces (0-based) from an OBJ file."""
    verts, norms, faces = [], [], []
    with open(path) as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "v":
                verts.append([float(p) for p in parts[1:4]])
            elif parts[0] == "vn":
                norms.append([float(p) for p in parts[1:4]])
            elif parts[0] == "f":
                faces.append([int(p.split("/")[0]) - 1 for p in parts[1:]])
    return np.array(verts), np.array(norms), np.array(faces, dtype=int)


# ---------------------------------------------------------------------------
# mean curvature from fundamental forms
# ---------------------------------------------------------------------------

def full_stencil_nodes(grid: Grid) -> np.ndarray:
    """Nodes whose axis and diagonal lattice neighbours are all unknowns."""
    n = grid.dimension
    eye = np.eye(n, dtype=int)
    offsets = [s * eye[k] for k in range(n) for s in (1, -1)]
    for k in range(n):
        for l in range(k + 1, n):
            offsets += [a * eye[k] + b * eye[l] for a in (1, -1) for b in (1, -1)]
    ids = grid.neighbor_ids(np.array(offsets))
    return np.flatnonzero(np.all(ids >= 0, axis=1))


def _embedding(u, grid, ids):
    x = grid.points[ids]
    return np.exp(u[ids])[..., None] * chart_to_sphere(x, grid.domain.pole)


def mean_curvature(u, grid: Grid, nodes=None) -> tuple[np.ndarray, np.ndarray]:
    """Mean curvature ``trace(g^-1 b) / n`` at full-stencil nodes.

    Uses centred differences of the embedding and the normal with
    ``<N, X> < 0`` (unit sphere has H = +1).  Returns ``(nodes, H)``.
    """
    u = np.asarray(u, dtype=float)
    n = grid.dimension
    h = grid.h
    if nodes is None:
        nodes = full_stencil_nodes(grid)
    nodes = np.atleast_1d(nodes)
    eye = np.eye(n, dtype=int)

    def X_at(offset):
        ids = grid.neighbor_ids(offset[None, :])[nodes, 0]
        if np.any(ids < 0):
            raise ValueError("mean curvature needs a full stencil")
        return _embedding(u, grid, ids)

    X0 = _embedding(u, grid, nodes)
    dX = np.empty((len(nodes), n, n + 1))
    ddX = np.empty((len(nodes), n, n, n + 1))
    for k in range(n):
        Xp, Xm = X_at(eye[k]), X_at(-eye[k])
        dX[:, k] = (Xp - Xm) / (2 * h)
        ddX[:, k, k] = (Xp - 2 * X0 + Xm) / h ** 2
        for l in range(k + 1, n):
            cross = (X_at(eye[k] + eye[l]) - X_at(eye[k] - eye[l])
                     - X_at(-eye[k] + eye[l]) + X_at(-eye[k] - eye[l])) / (4 * h ** 2)
            ddX[:, k, l] = ddX[:, l, k] = cross

    if n == 2:
        N = np.cross(dX[:, 0], dX[:, 1])
    else:
        N = np.linalg.svd(dX)[2][:, -1, :]
    N /= np.linalg.norm(N, axis=1, keepdims=True)
    N *= -np.sign(np.sum(N * X0, axis=1))[:, None]
    g = np.einsum("pai,pbi->pab", dX, dX)
    if np.any(np.linalg.det(g) <= 0):
        raise ValueError("singular first fundamental form")
    b = np.einsum("pabi,pi->pab", ddX, N)
    H = np.einsum("pab,pba->p", np.linalg.inv(g), b) / n
    return nodes, H


def mean_curvature_at(u, grid: Grid, node: int) -> float:
    return float(mean_curvature(u, grid, np.array([node]))[1][0])


@dataclass
class CurvatureMatch:
    sup_mismatch: float
    threshold: float
    n_nodes: int
    passed: bool

    def to_dict(self):
        return dict(self.__dict__)


def curvature_match(u, spec, domain, grid: Grid, constant: float = 10.0) -> CurvatureMatch:
    """Compare the geometric mean curvature with ``H(e^u q)``."""
    u = np.asarray(u, dtype=float)
    nodes, Hg = mean_curvature(u, grid)
    X = _embedding(u, grid, nodes)
    mismatch = float(np.max(np.abs(Hg - spec.H(X)), initial=0.0))
    threshold = constant * grid.h ** 2
    return CurvatureMatch(mismatch, threshold, len(nodes), bool(mismatch <= threshold))


# ---------------------------------------------------------------------------
# rotationally symmetric reference
# ---------------------------------------------------------------------------

class ShootingError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class RadialProfile:
    """Profile ``u(theta)`` on ``[0, theta0]``."""

    theta: np.ndarray
    u: np.ndarray
    center_value: float
    _interp: object

    def __call__(self, theta):
        return self._interp(np.asarray(theta, dtype=float))


def _reduced_rhs(n, E):
    """First-order system of the rotationally reduced equation."""

    def rhs(theta, y):
        u, p = y
        w = 1 + p * p
        return [p, n * w * (1 - np.sqrt(w) * E(u)) - (n - 1) * w * p / np.tan(theta)]

    return rhs


def _energy(f):
    return lambda u: np.exp(u) * f(np.exp(u))


def _shoot(s, theta0, n, E, delta, rtol, dense=False):
    a = 1 - E(s)  # pole Hessian u_ij = a delta_ij
    y0 = [s + a * delta ** 2 / 2, a * delta]

    def blowup(theta, y):
        return 1e6 - abs(y[1])

    blowup.terminal = True
    sol = solve_ivp(_reduced_rhs(n, E), (delta, theta0), y0, method="DOP853",
                    rtol=rtol, atol=rtol, events=blowup, dense_output=dense)
    if sol.status == 1 and np.isfinite(sol.y[1, -1]):
        # slope blow-up: the graph turns vertical, keep only the side it leaves on
        return float(np.copysign(1e6, sol.y[1, -1])), sol
    if sol.status != 0 or not np.isfinite(sol.y[0, -1]):
        return np.nan, sol
    return float(sol.y[0, -1]), sol


def radial_ode_reference(theta0: float, f, n: int = 2, tolerance: float = 1e-12,
                         bracket=None, r1: float = 1.0, r2: float = 1.0,
                         scan: int = 21, delta: float = 1e-5) -> RadialProfile:
    """Shooting solution of the reduced two-point problem.

    Solves ``u'' + (n-1)(1+u'^2) cot(theta) u' = n(1+u'^2)(1 - sqrt(1+u'^2) e^u f(e^u))``
    with ``u'(0) = 0`` and ``u(theta0) = 0`` by a root search on ``u(0)``.
    The default bracket is ``[log r1 - 1, log r2 + 1]``; when it holds
    several roots the one inside ``[log r1, log r2]`` is preferred.
    """
    E = _energy(f)
    if bracket is None:
        bracket = (np.log(r1) - 1, np.log(r2) + 1)
    rtol = min(1e-12, tolerance)
    grid_s = np.linspace(bracket[0], bracket[1], scan)
    ends = np.array([_shoot(s, theta0, n, E, delta, rtol)[0] for s in grid_s])
    roots = []
    for i in range(scan - 1):
        a, b = ends[i], ends[i + 1]
        if not (np.isfinite(a) and np.isfinite(b)):
            continue
        if a == 0:
            roots.append(grid_s[i])
        elif a * b < 0:
            roots.append(brentq(lambda s: _shoot(s, theta0, n, E, delta, rtol)[0],
                                grid_s[i], grid_s[i + 1], xtol=1e-15, rtol=1e-15))
    if ends[-1] == 0:
        roots.append(grid_s[-1])
    if not roots:
        raise ShootingError(f"no shooting bracket found in {bracket}")
    inside = [s for s in roots if np.log(r1) - 1e-12 <= s <= np.log(r2) + 1e-12]
    s = (inside or roots)[0]
    end, sol = _shoot(s, theta0, n, E, delta, rtol, dense=True)
    if not abs(end) < max(tolerance, 1e-10):
        raise ShootingError(f"shooting residual {end} above tolerance")
    dense = sol.sol

    def interp(theta):
        theta = np.asarray(theta, dtype=float)
        out = np.where(theta < delta, s + (1 - E(s)) * theta ** 2 / 2, 0.0)
        m = theta >= delta
        if np.any(m):
            out = np.array(out, dtype=float)
            out[m] = dense(np.clip(theta[m], delta, theta0))[0]
        return out

    theta = np.linspace(0, theta0, 401)
    return RadialProfile(theta, interp(theta), float(s), interp)


def chebyshev_reference(theta0: float, f, n: int = 2, points: int = 48,
                        guess=None, tol: float = 1e-13, max_iter: int = 50) -> RadialProfile:
    """Chebyshev collocation solution of the same reduced problem (Newton)."""
    E = _energy(f)
    N = points - 1
    k = np.arange(N + 1)
    xc = np.cos(np.pi * k / N)  # 1 .. -1
    c = np.ones(N + 1)
    c[0] = c[-1] = 2
    c *= (-1) ** k
    X = np.tile(xc, (N + 1, 1)).T
    dX = X - X.T
    D = np.outer(c, 1 / c) / (dX + np.eye(N + 1))
    D -= np.diag(D.sum(axis=1))
    theta = (1 - xc) * theta0 / 2  # 0 .. theta0
    D = D * (-2 / theta0)
    D2 = D @ D
    u = np.zeros(N + 1) if guess is None else np.asarray(guess(theta), dtype=float)
    cot = np.zeros_like(theta)
    cot[1:] = 1 / np.tan(theta[1:])
    for _ in range(max_iter):
        p = D @ u
        w = 1 + p * p
        Eu = E(u)
        G = D2 @ u + (n - 1) * w * p * cot - n * w * (1 - np.sqrt(w) * Eu)
        dG_dp = (n - 1) * cot * (1 + 3 * p * p) - n * p * (2 - 3 * np.sqrt(w) * Eu)
        step = 1e-7
        dE = (E(u + step) - E(u - step)) / (2 * step)
        dG_du = n * w ** 1.5 * dE
        J = D2 + dG_dp[:, None] * D + np.diag(dG_du)
        G[0] = (D @ u)[0]
        J[0] = D[0]
        G[-1] = u[-1]
        J[-1] = 0
        J[-1, -1] = 1
        du = np.linalg.solve(J, -G)
        u = u + du
        if np.max(np.abs(du)) < tol:
            break
    order = np.argsort(theta)
    interp = BarycentricInterpolator(theta[order], u[order])
    return RadialProfile(theta[order], u[order], float(u[0]), interp)


def reflected_cap_profile(theta0: float, theta) -> np.ndarray:
    """``u(theta)`` of the unit sphere through the cap boundary, centred at
    ``2 cos(theta0)`` along the cap axis (the second H = 1 graph).

    Its far side is a radial graph over the cap only for ``theta0 >= pi/4``.
    """
    if not np.pi / 4 <= theta0 < np.pi / 2:
        raise ValueError("reflected cap is a radial graph only for pi/4 <= theta0 < pi/2")
    c = np.cos(theta0)
    ct = np.cos(np.asarray(theta, dtype=float))
    # discriminant written so that it is exact at theta = theta0
    disc = (1 - 2 * c * c) ** 2 + 4 * c * c * (ct - c) * (ct + c)
    return np.log(2 * c * ct + np.sqrt(np.maximum(disc, 0.0)))


def write_profile(path, theta, u) -> None:
    """Two-column ``theta u`` text file with a header line."""
    data = np.column_stack([theta, u])
    with open(path, "w") as fh:
        fh.write("# theta u\n")
        np.savetxt(fh, data, fmt="%.17g")


def read_profile(path):
    data = np.loadtxt(path, comments="#")
    return data[:, 0], data[:, 1]


def atomic_write_text(path, text: str) -> None:
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)
