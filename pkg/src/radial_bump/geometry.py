"""Stereographic charts on the sphere and finite-difference grids on chart images.

A domain of S^n is described in chart coordinates x in R^n obtained by
stereographic projection from a pole lying outside the closed domain.  The
round metric pulls back to ``lam(x)**2 * delta`` with ``lam = 2 / (1 + |x|^2)``,
so derivatives in an orthonormal frame follow from ordinary chart partials and
the conformal Christoffel symbols.

Grids are lattices ``h * Z^n`` cut by the chart image of the domain.  Nodes
whose axis arms cross the boundary carry Shortley-Weller arm fractions.
"""

from __future__ import annotations

import hashlib
import itertools
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

INTERIOR = 0
IRREGULAR = 1

SIGMA_MIN = 1e-6


class GridError(ValueError):
    """Raised when a grid cannot be built or a stencil cannot be formed."""


# ---------------------------------------------------------------------------
# chart maps
# ---------------------------------------------------------------------------

def _unit(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    norm = np.linalg.norm(v)
    if norm == 0:
        raise ValueError("zero vector cannot be normalised")
    return v / norm


def pole_rotation(pole) -> np.ndarray:
    """Rotation matrix R with ``R @ e_{n+1} = pole``."""
    pole = _unit(pole)
    m = pole.size
    e = np.zeros(m)
    e[-1] = 1.0
    c = float(e @ pole)
    eye = np.eye(m)
    # half turn in the (e_1, e_{n+1}) plane, maps e_{n+1} to -e_{n+1}
    half = eye.copy()
    half[0, 0] = -1.0
    half[-1, -1] = -1.0
    if c < 0:
        # rotate e_{n+1} to -pole (well conditioned), then compose
        return pole_rotation(-pole) @ half
    K = np.outer(pole, e) - np.outer(e, pole)
    return eye + K + K @ K / (1.0 + c)


def chart_to_sphere(x, pole=None) -> np.ndarray:
    """Inverse stereographic projection of chart points ``x`` (..., n)."""
    x = np.asarray(x, dtype=float)
    r2 = np.sum(x * x, axis=-1, keepdims=True)
    q = np.concatenate([2.0 * x, r2 - 1.0], axis=-1) / (1.0 + r2)
    if pole is None:
        return q
    return q @ pole_rotation(pole).T


def sphere_to_chart(q, pole=None) -> np.ndarray:
    """Stereographic projection of sphere points ``q`` (..., n+1) from ``pole``."""
    q = np.asarray(q, dtype=float)
    if pole is not None:
        q = q @ pole_rotation(pole)
    denom = 1.0 - q[..., -1:]
    if np.any(denom <= 4 * np.finfo(float).eps):
        raise ValueError("stereographic projection undefined at the pole")
    return q[..., :-1] / denom


def conformal_factor(x) -> np.ndarray:
    """``lam(x) = 2 / (1 + |x|^2)``."""
    x = np.asarray(x, dtype=float)
    return 2.0 / (1.0 + np.sum(x * x, axis=-1))


def log_factor_gradient(x) -> np.ndarray:
    """``s_i = d_i log lam = -2 x_i / (1 + |x|^2)``."""
    x = np.asarray(x, dtype=float)
    return -2.0 * x / (1.0 + np.sum(x * x, axis=-1, keepdims=True))


def christoffel(x) -> np.ndarray:
    """Conformal Christoffel symbols ``G[..., k, i, j]`` of the chart metric."""
    s = log_factor_gradient(x)
    n = s.shape[-1]
    eye = np.eye(n)
    # G^k_ij = s_i d_jk + s_j d_ik - s_k d_ij
    return (np.einsum("...i,jk->...kij", s, eye)
            + np.einsum("...j,ik->...kij", s, eye)
            - np.einsum("...k,ij->...kij", s, eye))


def frame_from_partials(x, grad, hess):
    """Convert chart partials to orthonormal-frame components.

    Parameters
    ----------
    x : (..., n) chart points
    grad : (..., n) chart gradient ``d_i u``
    hess : (..., n, n) chart Hessian ``d_ij u``

    Returns
    -------
    u_i, u_ij : frame gradient and covariant frame Hessian.
    """
    lam = conformal_factor(x)[..., None]
    s = log_factor_gradient(x)
    sg = np.sum(s * grad, axis=-1)
    n = grad.shape[-1]
    gamma_g = (s[..., :, None] * grad[..., None, :]
               + grad[..., :, None] * s[..., None, :]
               - sg[..., None, None] * np.eye(n))
    u_i = grad / lam
    u_ij = (hess - gamma_g) / lam[..., None] ** 2
    return u_i, u_ij


# ---------------------------------------------------------------------------
# domains
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GeodesicCap:
    """Points of S^n within geodesic distance ``radius`` of ``center``."""

    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", _unit(self.center))
        if not 0.0 < self.radius < np.pi:
            raise ValueError("cap radius must lie in (0, pi)")


@dataclass(frozen=True)
class LevelSet:
    """Chart region ``{x : phi(x) < 0}``.

    ``phi`` must accept arrays of shape (..., n).  ``bounds`` is an (n, 2)
    box containing the region and ``center`` a chart point where phi < 0.
    """

    phi: Callable[[np.ndarray], np.ndarray]
    bounds: np.ndarray
    center: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "bounds", np.asarray(self.bounds, dtype=float))
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))


@dataclass(frozen=True)
class ChartedDomain:
    dimension: int
    shape: GeodesicCap | LevelSet
    grid_spacing: float
    pole: np.ndarray | None = None

    def __post_init__(self):
        n = self.dimension
        if n < 2:
            raise ValueError("dimension must be at least 2")
        if self.grid_spacing <= 0:
            raise ValueError("grid_spacing must be positive")
        if isinstance(self.shape, GeodesicCap):
            if self.shape.center.size != n + 1:
                raise ValueError("cap center must live in R^(n+1)")
            pole = -self.shape.center if self.pole is None else _unit(self.pole)
        else:
            if self.shape.bounds.shape != (n, 2) or self.shape.center.size != n:
                raise ValueError("level-set bounds/center do not match dimension")
            pole = np.eye(n + 1)[-1] if self.pole is None else _unit(self.pole)
        if pole.size != n + 1:
            raise ValueError("pole must live in R^(n+1)")
        object.__setattr__(self, "pole", pole)
        self._check_pole()

    # -- level set -------------------------------------------------------
    @property
    def antipodal(self) -> bool:
        return (isinstance(self.shape, GeodesicCap)
                and np.allclose(self.pole, -self.shape.center, atol=1e-14))

    def phi(self, x) -> np.ndarray:
        """Level-set function of the chart image (negative inside)."""
        x = np.asarray(x, dtype=float)
        shape = self.shape
        if isinstance(shape, LevelSet):
            return np.asarray(shape.phi(x), dtype=float)
        if self.antipodal:
            return np.sqrt(np.sum(x * x, axis=-1)) - np.tan(shape.radius / 2)
        q = chart_to_sphere(x, self.pole)
        return np.cos(shape.radius) - q @ shape.center

    def contains(self, x) -> np.ndarray:
        return self.phi(x) < 0

    @property
    def chart_center(self) -> np.ndarray:
        if isinstance(self.shape, LevelSet):
            return self.shape.center
        return sphere_to_chart(self.shape.center, self.pole)

    @property
    def center_point(self) -> np.ndarray:
        """Sphere point at the center of the domain."""
        if isinstance(self.shape, GeodesicCap):
            return self.shape.center
        return chart_to_sphere(self.shape.center, self.pole)

    def chart_bounds(self) -> np.ndarray:
        if isinstance(self.shape, LevelSet):
            return self.shape.bounds
        x = sphere_to_chart(self.cap_boundary(512), self.pole)
        lo, hi = x.min(axis=0), x.max(axis=0)
        pad = 0.05 * (hi - lo).max() + self.grid_spacing
        return np.stack([lo - pad, hi + pad], axis=1)

    # -- sampling --------------------------------------------------------
    def cap_boundary(self, count: int, rng=None) -> np.ndarray:
        """Sphere points on the boundary circle/sphere of a cap."""
        cap = self.shape
        n = self.dimension
        basis = np.linalg.svd(cap.center[None, :])[2][1:]  # orthonormal complement
        if n == 2:
            t = 2 * np.pi * np.arange(count) / count
            dirs = np.stack([np.cos(t), np.sin(t)], axis=1)
        else:
            rng = np.random.default_rng(0) if rng is None else rng
            dirs = rng.standard_normal((count, n))
            dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        return (np.cos(cap.radius) * cap.center
                + np.sin(cap.radius) * dirs @ basis)

    def boundary_chart_points(self, count: int, rng=None) -> np.ndarray:
        """Chart points on the boundary of the chart image."""
        if isinstance(self.shape, GeodesicCap):
            return sphere_to_chart(self.cap_boundary(count, rng), self.pole)
        n = self.dimension
        if n == 2:
            t = 2 * np.pi * np.arange(count) / count
            dirs = np.stack([np.cos(t), np.sin(t)], axis=1)
        else:
            rng = np.random.default_rng(0) if rng is None else rng
            dirs = rng.standard_normal((count, n))
            dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        c = self.chart_center
        reach = 2.0 * np.linalg.norm(self.shape.bounds[:, 1] - self.shape.bounds[:, 0])
        s = bisect_boundary(self.phi, c[None, :], dirs * reach)
        return c + s[:, None] * dirs * reach

    def sample_sphere_points(self, count: int, seed: int = 0,
                             boundary_fraction: float = 0.2) -> np.ndarray:
        """Deterministic sample of points in the closed domain."""
        rng = np.random.default_rng(seed)
        n_b = max(1, int(round(boundary_fraction * count)))
        n_i = max(1, count - n_b)
        lo, hi = self.chart_bounds().T
        inner = []
        have = 0
        while have < n_i:
            x = lo + (hi - lo) * rng.random((2 * n_i, self.dimension))
            x = x[self.contains(x)]
            inner.append(x)
            have += len(x)
        x_in = np.concatenate(inner)[:n_i]
        x_b = self.boundary_chart_points(n_b, rng)
        return chart_to_sphere(np.concatenate([x_in, x_b]), self.pole)

    def _check_pole(self, delta: float = 1e-9):
        if isinstance(self.shape, GeodesicCap):
            q = self.cap_boundary(256)
            if np.any(q @ self.pole >= 1.0 - delta) or self.shape.center @ self.pole >= 1 - delta:
                raise GridError("pole lies inside the closed domain")
            # the whole cap misses the pole iff angle(pole, center) > radius
            ang = np.arccos(np.clip(self.shape.center @ self.pole, -1, 1))
            if ang <= self.shape.radius + delta:
                raise GridError("pole lies inside the closed domain")
        else:
            b = self.shape.bounds
            corners = np.array(list(itertools.product(*b)))
            if np.any(self.phi(corners) < 0):
                raise GridError("level set is not contained in its bounding box")
            if not self.phi(self.shape.center[None, :])[0] < 0:
                raise GridError("level-set center must satisfy phi < 0")


def bisect_boundary(phi, start, step, iterations: int = 64) -> np.ndarray:
    """Fraction s in (0, 1] where ``phi(start + s * step)`` first changes sign.

    ``phi(start) < 0 <= phi(start + step)`` is assumed for every row.  An
    endpoint with ``phi == 0`` yields exactly 1.
    """
    start = np.atleast_2d(start)
    lo = np.zeros(len(step))
    hi = np.ones(len(step))
    end_val = phi(start + step)
    exact = end_val == 0
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        inside = phi(start + mid[:, None] * step) < 0
        lo = np.where(inside, mid, lo)
        hi = np.where(inside, hi, mid)
    s = 0.5 * (lo + hi)
    s[exact] = 1.0
    return s


# ---------------------------------------------------------------------------
# grid
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Grid:
    """Classified lattice on the chart image of a domain.

    Unknowns are the INTERIOR and IRREGULAR nodes.  For node ``p``, axis ``k``
    and direction ``d`` (0 = +, 1 = -) the arm ends either at unknown
    ``arm_node[p, k, d]`` or at boundary point ``arm_bnd[p, k, d]`` (the other
    entry is -1), at distance ``arm_sigma[p, k, d] * h``.
    """

    domain: ChartedDomain
    h: float
    index: np.ndarray
    points: np.ndarray
    kind: np.ndarray
    arm_sigma: np.ndarray
    arm_node: np.ndarray
    arm_bnd: np.ndarray
    boundary_points: np.ndarray
    lattice_origin: np.ndarray
    ids: np.ndarray
    d1: list = field(repr=False)
    d2: dict = field(repr=False)
    mixed_order: dict = field(repr=False)

    @property
    def dimension(self) -> int:
        return self.points.shape[1]

    @property
    def size(self) -> int:
        return len(self.points)

    @property
    def n_boundary(self) -> int:
        return len(self.boundary_points)

    def node_id(self, multi_index) -> int:
        """Unknown index at a lattice multi-index, -1 when absent."""
        off = np.asarray(multi_index) - self.lattice_origin
        if np.any(off < 0) or np.any(off >= np.array(self.ids.shape)):
            return -1
        return int(self.ids[tuple(off)])

    def neighbor_ids(self, offsets) -> np.ndarray:
        """Unknown indices at ``index + offset`` for each node and offset row."""
        offsets = np.atleast_2d(offsets)
        pos = self.index[:, None, :] + offsets[None, :, :] - self.lattice_origin
        shape = np.array(self.ids.shape)
        ok = np.all((pos >= 0) & (pos < shape), axis=-1)
        pos = np.where(ok[..., None], pos, 0)
        out = self.ids[tuple(np.moveaxis(pos, -1, 0))]
        return np.where(ok, out, -1)

    def sphere_points(self) -> np.ndarray:
        return chart_to_sphere(self.points, self.domain.pole)

    def boundary_sphere_points(self) -> np.ndarray:
        return chart_to_sphere(self.boundary_points, self.domain.pole)

    def hash(self) -> str:
        digest = hashlib.sha256()
        digest.update(np.asarray(self.index, dtype=np.int64).tobytes())
        digest.update(np.float64(self.h).tobytes())
        return digest.hexdigest()

    def apply(self, op, values, boundary_values=None) -> np.ndarray:
        A, B = op
        out = A @ values
        if boundary_values is not None:
            out = out + B @ boundary_values
        return out

    def partials(self, values, boundary_values=None):
        """Chart gradient (N, n) and Hessian (N, n, n) of nodal values."""
        n = self.dimension
        values = np.asarray(values, dtype=float)
        grad = np.stack([self.apply(self.d1[k], values, boundary_values)
                         for k in range(n)], axis=1)
        hess = np.empty((self.size, n, n))
        for (k, l), op in self.d2.items():
            hess[:, k, l] = hess[:, l, k] = self.apply(op, values, boundary_values)
        return grad, hess


def build_grid(domain: ChartedDomain, sigma_min: float = SIGMA_MIN,
               min_interior: int = 25) -> Grid:
    """Lattice grid on the chart image of ``domain`` with classified nodes."""
    n = domain.dimension
    h = domain.grid_spacing
    bounds = domain.chart_bounds()
    lo = np.floor(bounds[:, 0] / h).astype(int) - 2
    hi = np.ceil(bounds[:, 1] / h).astype(int) + 2
    extent = hi - lo + 1
    if np.prod(extent.astype(float)) > 5e7:
        raise GridError("grid too fine for the chart bounding box")
    lattice = np.stack(np.meshgrid(*[np.arange(a, b + 1) for a, b in zip(lo, hi)],
                                   indexing="ij"), axis=-1)
    inside = domain.contains(lattice * h)
    if not inside.any():
        raise GridError("grid too coarse: no lattice point inside the domain")

    cand = np.argwhere(inside)
    cand_x = (cand + lo) * h

    # arms: distance fraction to the next in-domain point or boundary crossing
    sigma = np.ones((len(cand), n, 2))
    cut = np.zeros((len(cand), n, 2), dtype=bool)
    for k in range(n):
        for d, sgn in enumerate((1, -1)):
            nb = cand.copy()
            nb[:, k] += sgn
            nb_in = inside[tuple(nb.T)]
            rows = np.flatnonzero(~nb_in)
            if rows.size:
                step = np.zeros((rows.size, n))
                step[:, k] = sgn * h
                sigma[rows, k, d] = bisect_boundary(domain.phi, cand_x[rows], step)
                cut[rows, k, d] = True

    snapped = np.any(sigma < sigma_min, axis=(1, 2))
    keep = ~snapped
    node_lat = cand[keep]
    N = len(node_lat)
    ids = -np.ones(extent, dtype=np.int64)
    ids[tuple(node_lat.T)] = np.arange(N)

    sigma = sigma[keep]
    cut = cut[keep]
    arm_node = -np.ones((N, n, 2), dtype=np.int64)
    arm_bnd = -np.ones((N, n, 2), dtype=np.int64)
    bpoints: list[np.ndarray] = []
    bkeys: dict[tuple, int] = {}

    def _bpoint(x):
        key = tuple(np.round(x / h * 1e9).astype(np.int64))
        if key not in bkeys:
            bkeys[key] = len(bpoints)
            bpoints.append(x)
        return bkeys[key]

    x_nodes = (node_lat + lo) * h
    for k in range(n):
        for d, sgn in enumerate((1, -1)):
            nb = node_lat.copy()
            nb[:, k] += sgn
            target = ids[tuple(nb.T)]
            for p in range(N):
                if not cut[p, k, d] and target[p] >= 0:
                    arm_node[p, k, d] = target[p]
                    continue
                # cut arm, or neighbour was snapped onto the boundary
                s = sigma[p, k, d] if cut[p, k, d] else 1.0
                sigma[p, k, d] = s
                xb = x_nodes[p].copy()
                xb[k] += sgn * s * h
                arm_bnd[p, k, d] = _bpoint(xb)

    kind = np.where(np.all(arm_node >= 0, axis=(1, 2)), INTERIOR, IRREGULAR)
    n_interior = int(np.sum(kind == INTERIOR))
    if n_interior < min_interior:
        raise GridError(f"grid too coarse: {n_interior} interior nodes "
                        f"(need at least {min_interior})")

    rows = np.repeat(np.arange(N), 2 * n)
    cols = arm_node.reshape(-1)
    mask = cols >= 0
    adj = sp.coo_matrix((np.ones(mask.sum()), (rows[mask], cols[mask])), shape=(N, N))
    n_comp, _ = connected_components(adj, directed=False)
    if n_comp != 1:
        raise GridError(f"disconnected grid: {n_comp} components")

    boundary_points = np.array(bpoints).reshape(-1, n)
    stencils = _Stencils(h, node_lat + lo, x_nodes, sigma, arm_node, arm_bnd,
                         boundary_points, ids, lo)
    d1 = [stencils.first(k) for k in range(n)]
    d2 = {}
    mixed_order = {}
    for k in range(n):
        d2[(k, k)] = stencils.second(k)
    for k, l in itertools.combinations(range(n), 2):
        d2[(k, l)], mixed_order[(k, l)] = stencils.mixed(k, l)

    return Grid(domain=domain, h=h, index=node_lat + lo, points=x_nodes,
                kind=kind, arm_sigma=sigma, arm_node=arm_node, arm_bnd=arm_bnd,
                boundary_points=boundary_points, lattice_origin=lo, ids=ids,
                d1=d1, d2=d2, mixed_order=mixed_order)


class _Stencils:
    """Sparse derivative operators ``(A, B)``: ``A @ u + B @ u_boundary``."""

    def __init__(self, h, index, points, sigma, arm_node, arm_bnd, bpoints, ids, lo):
        self.h = h
        self.index = index
        self.points = points
        self.sigma = sigma
        self.arm_node = arm_node
        self.arm_bnd = arm_bnd
        self.bpoints = bpoints
        self.ids = ids
        self.lo = lo
        self.N = len(points)
        self.B = len(bpoints)
        self._tree = cKDTree(bpoints) if len(bpoints) else None

    def _matrices(self, entries):
        rows, cols, vals, brows, bcols, bvals = entries
        A = sp.csr_matrix((vals, (rows, cols)), shape=(self.N, self.N))
        B = sp.csr_matrix((bvals, (brows, bcols)), shape=(self.N, self.B))
        A.sum_duplicates()
        B.sum_duplicates()
        return A, B

    def _arm_entries(self, k, w_plus, w_minus, w_center):
        N = self.N
        rows, cols, vals = [np.arange(N)], [np.arange(N)], [w_center]
        brows, bcols, bvals = [], [], []
        for d, w in ((0, w_plus), (1, w_minus)):
            node = self.arm_node[:, k, d]
            bnd = self.arm_bnd[:, k, d]
            m = node >= 0
            rows.append(np.flatnonzero(m)); cols.append(node[m]); vals.append(w[m])
            brows.append(np.flatnonzero(~m)); bcols.append(bnd[~m]); bvals.append(w[~m])
        cat = np.concatenate
        return self._matrices((cat(rows), cat(cols), cat(vals),
                               cat(brows), cat(bcols), cat(bvals)))

    def first(self, k):
        h = self.h
        sp_, sm = self.sigma[:, k, 0], self.sigma[:, k, 1]
        tot = sp_ + sm
        return self._arm_entries(k, sm / (h * sp_ * tot), -sp_ / (h * sm * tot),
                                 (sp_ - sm) / (h * sp_ * sm))

    def second(self, k):
        h2 = self.h ** 2
        sp_, sm = self.sigma[:, k, 0], self.sigma[:, k, 1]
        tot = sp_ + sm
        return self._arm_entries(k, 2 / (h2 * sp_ * tot), 2 / (h2 * sm * tot),
                                 -2 / (h2 * sp_ * sm))

    def _node_at(self, p, offset):
        pos = self.index[p] + offset - self.lo
        if np.any(pos < 0) or np.any(pos >= self.ids.shape):
            return -1
        return int(self.ids[tuple(pos)])

    def mixed(self, k, l):
        """Cross-derivative operator for axes k < l.

        Preference: 4-point cross, averaged opposite quadrants, one quadrant,
        least-squares quadratic fit.  Returns the operator and per-node order
        codes (2, 2, 1, 0 respectively).
        """
        h2 = self.h ** 2
        n = self.index.shape[1]
        ek = np.eye(n, dtype=int)[k]
        el = np.eye(n, dtype=int)[l]
        rows, cols, vals, brows, bcols, bvals = [], [], [], [], [], []
        order = np.zeros(self.N, dtype=np.int8)

        def add(p, ref, w):
            kind_, j = ref
            if kind_ == "n":
                rows.append(p); cols.append(j); vals.append(w)
            else:
                brows.append(p); bcols.append(j); bvals.append(w)

        for p in range(self.N):
            diag = {(a, b): self._node_at(p, a * ek + b * el)
                    for a in (1, -1) for b in (1, -1)}
            if all(v >= 0 for v in diag.values()):
                for (a, b), j in diag.items():
                    add(p, ("n", j), a * b / (4 * h2))
                order[p] = 2
                continue

            def arm_ref(axis, sgn):
                d = 0 if sgn > 0 else 1
                if self.sigma[p, axis, d] != 1.0:
                    return None
                j = self.arm_node[p, axis, d]
                return ("n", j) if j >= 0 else ("b", self.arm_bnd[p, axis, d])

            quads = {}
            for (a, b), j in diag.items():
                ra, rb = arm_ref(k, a), arm_ref(l, b)
                if j >= 0 and ra is not None and rb is not None:
                    quads[(a, b)] = (("n", j), ra, rb)
            for pair in (((1, 1), (-1, -1)), ((1, -1), (-1, 1))):
                if all(q in quads for q in pair):
                    for a, b in pair:
                        dj, ra, rb = quads[(a, b)]
                        w = a * b / (2 * h2)
                        add(p, dj, w); add(p, ra, -w); add(p, rb, -w); add(p, ("n", p), w)
                    order[p] = 2
                    break
            else:
                if quads:
                    (a, b), (dj, ra, rb) = next(iter(sorted(quads.items(), reverse=True)))
                    w = a * b / h2
                    add(p, dj, w); add(p, ra, -w); add(p, rb, -w); add(p, ("n", p), w)
                    order[p] = 1
                else:
                    for ref, w in self._fit(p, k, l):
                        add(p, ref, w)
                    order[p] = 0

        A, B = self._matrices((np.array(rows, dtype=np.int64), np.array(cols, dtype=np.int64),
                               np.array(vals), np.array(brows, dtype=np.int64),
                               np.array(bcols, dtype=np.int64), np.array(bvals)))
        return (A, B), order

    def _fit(self, p, k, l):
        """Weighted quadratic fit in the (k, l) plane through node p."""
        h = self.h
        n = self.index.shape[1]
        x0 = self.points[p]
        refs, coords = [], []
        for a in range(-2, 3):
            for b in range(-2, 3):
                off = np.zeros(n, dtype=int)
                off[k], off[l] = a, b
                j = self._node_at(p, off)
                if j >= 0:
                    refs.append(("n", j))
                    coords.append((a, b))
        if self._tree is not None:
            others = [i for i in range(n) if i not in (k, l)]
            for j in self._tree.query_ball_point(x0, 2.5 * h):
                xb = self.bpoints[j]
                if all(abs(xb[i] - x0[i]) < 1e-9 * h for i in others):
                    refs.append(("b", j))
                    coords.append(((xb[k] - x0[k]) / h, (xb[l] - x0[l]) / h))
        c = np.asarray(coords, dtype=float)
        V = np.stack([np.ones(len(c)), c[:, 0], c[:, 1],
                      c[:, 0] ** 2, c[:, 0] * c[:, 1], c[:, 1] ** 2], axis=1)
        if len(c) < 6 or np.linalg.matrix_rank(V) < 6:
            raise GridError(f"stencil underflow at node {p}; refine the grid")
        sw = 1.0 / np.sqrt(1.0 + np.sum(c * c, axis=1))
        weights = np.linalg.pinv(V * sw[:, None])[4] * sw / h ** 2
        return list(zip(refs, weights))


def frame_derivatives(values, grid: Grid, nodes=None, boundary_values=None):
    """Orthonormal-frame gradient and covariant Hessian at grid nodes.

    Parameters
    ----------
    values : (N,) nodal values at the unknowns
    grid : Grid
    nodes : optional index or index array restricting the output
    boundary_values : optional (B,) values at the boundary points; zero if
        omitted (homogeneous Dirichlet data)

    Returns
    -------
    u_i : (..., n) and u_ij : (..., n, n)
    """
    grad, hess = grid.partials(values, boundary_values)
    u_i, u_ij = frame_from_partials(grid.points, grad, hess)
    if nodes is not None:
        return u_i[nodes], u_ij[nodes]
    return u_i, u_ij


def cap_domain(theta0: float, grid_spacing: float, dimension: int = 2,
               center=None, pole=None) -> ChartedDomain:
    """Geodesic cap of radius ``theta0`` about ``center`` (default -e_{n+1})."""
    if center is None:
        center = -np.eye(dimension + 1)[-1]
    return ChartedDomain(dimension, GeodesicCap(np.asarray(center, float), theta0),
                         grid_spacing, pole)


def geodesic_angle(grid: Grid) -> np.ndarray:
    """Angle between each node's sphere point and the domain center."""
    q = grid.sphere_points()
    return np.arccos(np.clip(q @ grid.domain.center_point, -1.0, 1.0))
