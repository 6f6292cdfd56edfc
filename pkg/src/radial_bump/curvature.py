"""Prescribed mean curvature functions on the cone over a spherical domain.

A :class:`CurvatureSpec` wraps a base family ``H`` defined on the annular
region ``A = {rho q : r1 <= rho <= r2}``, an optional regularisation exponent
``eps`` (``H_eps(X) = |X|^-eps H(X)``) and the C^1 extension of ``H_eps`` to
every ``rho > 0``: outside ``[r1, r2]`` the product ``rho H(rho q)`` continues
affinely in ``rho`` with the slope it has at the nearest end of the band.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import expressions

WEAK = "weak"
STRICT = "strict"


def _broadcast(rho, q):
    rho = np.asarray(rho, dtype=float)
    q = np.asarray(q, dtype=float)
    shape = np.broadcast_shapes(rho.shape, q.shape[:-1])
    return (np.broadcast_to(rho, shape).astype(float),
            np.broadcast_to(q, shape + q.shape[-1:]))


def _split(X):
    X = np.asarray(X, dtype=float)
    rho = np.linalg.norm(X, axis=-1)
    return X, rho


# ---------------------------------------------------------------------------
# base families: value(X) and ambient gradient(X) on arrays of shape (..., m)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Constant:
    c: float

    tag = "constant"
    radial = True

    def value(self, X):
        return np.full(np.shape(X)[:-1], float(self.c))

    def gradient(self, X):
        return np.zeros(np.shape(X))


@dataclass(frozen=True)
class RadialPower:
    """``H(X) = c |X|^-gamma``."""

    c: float
    gamma: float

    tag = "radial_power"
    radial = True

    def value(self, X):
        _, rho = _split(X)
        return self.c * rho ** (-self.gamma)

    def gradient(self, X):
        X, rho = _split(X)
        return (-self.gamma * self.c * rho ** (-self.gamma - 2))[..., None] * X


@dataclass(frozen=True)
class Separable:
    """``H(rho q) = f(rho) g(q)`` with ``f`` in ``rho`` and ``g`` in ``q1..q_m``.

    ``g`` is evaluated at ``q = X / |X|`` so only its tangential gradient
    enters ``grad H``.
    """

    f_expr: str
    g_expr: str
    dimension: int = 2
    _f: Callable = field(init=False, repr=False, compare=False)
    _g: Callable = field(init=False, repr=False, compare=False)

    tag = "separable"
    radial = False

    def __post_init__(self):
        f, df = expressions.compile_function(self.f_expr, ["rho"])
        names = [f"q{i + 1}" for i in range(self.dimension + 1)]
        g, dg = expressions.compile_function(self.g_expr, names)
        object.__setattr__(self, "_f", (f, df))
        object.__setattr__(self, "_g", (g, dg))

    def value(self, X):
        X, rho = _split(X)
        q = X / rho[..., None]
        f, _ = self._f
        g, _ = self._g
        return f(rho) * g(*np.moveaxis(q, -1, 0))

    def gradient(self, X):
        X, rho = _split(X)
        q = X / rho[..., None]
        f, df = self._f
        g, dg = self._g
        qs = np.moveaxis(q, -1, 0)
        gv = g(*qs)
        grad_g = np.stack(dg(*qs), axis=-1)
        tangential = grad_g - np.sum(grad_g * q, axis=-1, keepdims=True) * q
        return ((df(rho)[0] * gv)[..., None] * q
                + (f(rho) / rho)[..., None] * tangential)


@dataclass(frozen=True)
class Tabulated:
    """User-supplied ``H(X)`` and ``grad H(X)`` callables."""

    H: Callable
    grad: Callable
    radial: bool = False

    tag = "tabulated"

    def value(self, X):
        return np.asarray(self.H(np.asarray(X, dtype=float)), dtype=float)

    def gradient(self, X):
        return np.asarray(self.grad(np.asarray(X, dtype=float)), dtype=float)


# ---------------------------------------------------------------------------
# spec with regularisation and extension
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CurvatureSpec:
    base: Constant | RadialPower | Separable | Tabulated
    r1: float
    r2: float
    epsilon: float = 0.0

    def __post_init__(self):
        if not 0 < self.r1 <= 1 <= self.r2 < np.inf:
            raise ValueError("radii must satisfy 0 < r1 <= 1 <= r2 < inf")
        if self.epsilon < 0:
            raise ValueError("epsilon must be nonnegative")

    # -- inside the band [r1, r2] -------------------------------------------
    def _band_value(self, rho, q):
        X = rho[..., None] * q
        return rho ** (-self.epsilon) * self.base.value(X)

    def _band_radial_derivative(self, rho, q):
        """d/drho [rho H_eps(rho q)] for rho in the band."""
        if isinstance(self.base, Tabulated):
            step = 1e-6 * rho
            up = (rho + step) * self._band_value(rho + step, q)
            down = (rho - step) * self._band_value(rho - step, q)
            return (up - down) / (2 * step)
        X = rho[..., None] * q
        Hb = self.base.value(X)
        dH = np.sum(self.base.gradient(X) * q, axis=-1)
        return rho ** (-self.epsilon) * ((1 - self.epsilon) * Hb + rho * dH)

    def h1(self, q):
        q = np.asarray(q, dtype=float)
        return self._band_radial_derivative(np.full(q.shape[:-1], self.r1), q)

    def h2(self, q):
        q = np.asarray(q, dtype=float)
        return self._band_radial_derivative(np.full(q.shape[:-1], self.r2), q)

    # -- extended function ------------------------------------------------
    def rho_H(self, rho, q):
        """``rho * H(rho q)`` for every ``rho > 0`` (extension included)."""
        rho, q = _broadcast(rho, q)
        if np.any(rho <= 0):
            raise ValueError("rho must be positive")
        out = np.empty(rho.shape)
        lo = rho < self.r1
        hi = rho > self.r2
        mid = ~(lo | hi)
        out[mid] = rho[mid] * self._band_value(rho[mid], q[mid])
        if lo.any():
            r1 = np.full(lo.sum(), self.r1)
            out[lo] = (self.r1 * self._band_value(r1, q[lo])
                       + (rho[lo] - self.r1) * self._band_radial_derivative(r1, q[lo]))
        if hi.any():
            r2 = np.full(hi.sum(), self.r2)
            out[hi] = (self.r2 * self._band_value(r2, q[hi])
                       + (rho[hi] - self.r2) * self._band_radial_derivative(r2, q[hi]))
        return out

    def H(self, X):
        """Extended, regularised H at points X (..., m) of the cone."""
        X, rho = _split(X)
        if np.any(rho <= 0):
            raise ValueError("H is defined for |X| > 0 only")
        q = X / rho[..., None]
        return self.rho_H(rho, q) / rho

    def radial_derivative(self, q, rho):
        """``d/drho [rho H(rho q)]`` including the extension."""
        rho, q = _broadcast(rho, q)
        out = np.empty(rho.shape)
        lo = rho < self.r1
        hi = rho > self.r2
        mid = ~(lo | hi)
        out[mid] = self._band_radial_derivative(rho[mid], q[mid])
        out[lo] = self.h1(q[lo])
        out[hi] = self.h2(q[hi])
        return out

    def gradient(self, X):
        """Ambient gradient of ``H_eps`` for X in the band."""
        X, rho = _split(X)
        Hb = self.base.value(X)
        return (rho ** (-self.epsilon))[..., None] * (
            self.base.gradient(X) - (self.epsilon * Hb / rho ** 2)[..., None] * X)

    def radial_profile(self, dimension: int = 2):
        """``f(rho)`` with ``H(rho q) = f(rho)``, or None for non-radial families."""
        if not getattr(self.base, "radial", False):
            return None
        if isinstance(self.base, (Constant, RadialPower)):
            c = float(self.base.c)
            gamma = float(getattr(self.base, "gamma", 0.0))
            k = 1.0 - self.epsilon - gamma  # rho H = c rho^k inside the band
            r1, r2 = self.r1, self.r2

            def f(rho):
                rho = np.asarray(rho, dtype=float)
                r = np.clip(rho, r1, r2)
                phi = c * r ** k + (rho - r) * c * k * r ** (k - 1)
                return phi / rho

            return f

        def f(rho):
            rho = np.asarray(rho, dtype=float)
            q = np.zeros(rho.shape + (dimension + 1,))
            q[..., -1] = 1.0
            return self.rho_H(rho, q) / rho

        return f


def evaluate_H(spec: CurvatureSpec, X) -> np.ndarray:
    return spec.H(X)


def radial_derivative(spec: CurvatureSpec, q, rho) -> np.ndarray:
    return spec.radial_derivative(q, rho)


def regularize(spec: CurvatureSpec, epsilon: float) -> CurvatureSpec:
    """Fold ``|X|^-epsilon`` into the spec (exponents add)."""
    if epsilon < 0:
        raise ValueError("epsilon must be nonnegative")
    if epsilon == 0:
        return spec
    return dataclasses.replace(spec, epsilon=spec.epsilon + epsilon)


# ---------------------------------------------------------------------------
# hypothesis validation
# ---------------------------------------------------------------------------

@dataclass
class HypothesisReport:
    mode: str
    lower_barrier_margin: float
    upper_barrier_margin: float
    monotonicity_margin: float
    positivity_min: float
    weak_pass: bool
    strict_pass: bool
    n_q: int
    n_rho: int
    notes: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.strict_pass if self.mode == STRICT else self.weak_pass

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["passed"] = self.passed
        return d


def check_hypotheses(spec: CurvatureSpec, domain, mode: str = WEAK,
                     n_q: int = 10_000, n_rho: int = 1000, seed: int = 0,
                     tol: float = 1e-12) -> HypothesisReport:
    """Sampled barrier, monotonicity and positivity margins.

    Margins are oriented so that nonnegative means satisfied:
    ``H(r1 q) - 1/r1``, ``1/r2 - H(r2 q)`` and ``-d/drho(rho H)``.
    """
    if mode not in (WEAK, STRICT):
        raise ValueError(f"unknown mode {mode!r}")
    q = domain.sample_sphere_points(n_q, seed=seed)
    ones = np.ones(len(q))
    lower = float(np.min(spec.H(spec.r1 * q) - 1 / spec.r1))
    upper = float(np.min(1 / spec.r2 - spec.H(spec.r2 * q)))
    rhos = np.linspace(spec.r1, spec.r2, n_rho) if spec.r2 > spec.r1 else np.array([spec.r1])
    mono = np.inf
    pos = np.inf
    per_chunk = max(1, 400_000 // len(q))
    for start in range(0, len(rhos), per_chunk):
        rr = np.repeat(rhos[start:start + per_chunk], len(q))
        qq = np.tile(q, (len(rr) // len(q), 1))
        if spec.r2 > spec.r1:
            mono = min(mono, float(np.min(-spec._band_radial_derivative(rr, qq))))
        pos = min(pos, float(np.min(spec._band_value(rr, qq))))
    notes = []
    if spec.r2 == spec.r1:
        notes.append("r1 == r2: monotonicity is vacuous")
    if isinstance(spec.base, Tabulated):
        notes.append("tabulated H: margins are sampled and assume C^1 data")
    scale = max(1.0, 1 / spec.r1)
    atol = tol * scale
    # centred differences at step 1e-6 rho carry ~1e-10 rounding error
    mono_tol = max(atol, 1e-8 * scale) if isinstance(spec.base, Tabulated) else atol
    weak = lower >= -atol and upper >= -atol and mono >= -mono_tol and pos > 0
    strict = weak and lower > atol and upper > atol
    return HypothesisReport(mode=mode, lower_barrier_margin=lower,
                            upper_barrier_margin=upper,
                            monotonicity_margin=float(mono) if np.isfinite(mono) else 0.0,
                            positivity_min=pos, weak_pass=bool(weak),
                            strict_pass=bool(strict), n_q=len(q), n_rho=len(rhos),
                            notes=notes)


def tw_constants(spec: CurvatureSpec, domain, n_q: int = 2000, n_rho: int = 200,
                 seed: int = 0) -> tuple[float, float, float]:
    """Sampled structure constants ``(C1, C2, C3)`` over A.

    ``C1 = max |X|^2 |grad H|``, ``C2 = 0``, ``C3 = max |X| H``.  Sample
    maxima are lower bounds on the true maxima.
    """
    q = domain.sample_sphere_points(n_q, seed=seed)
    rhos = np.linspace(spec.r1, spec.r2, n_rho) if spec.r2 > spec.r1 else np.array([spec.r1])
    X = rhos[:, None, None] * q[None, :, :]
    rho = rhos[:, None]
    if isinstance(spec.base, Tabulated) and spec.epsilon == 0:
        grad = spec.base.gradient(X)
    else:
        grad = spec.gradient(X)
    c1 = float(np.max(rho ** 2 * np.linalg.norm(grad, axis=-1)))
    c3 = float(np.max(rho * spec.H(X)))
    return c1, 0.0, c3
