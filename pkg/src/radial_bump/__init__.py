"""Radial graphs ``{e^u(q) q}`` over spherical domains with prescribed mean curvature."""

from .curvature import (STRICT, WEAK, Constant, CurvatureSpec, HypothesisReport, RadialPower,
                        Separable, Tabulated, check_hypotheses, evaluate_H, radial_derivative,
                        regularize, tw_constants)
from .elliptic import (DIRECT, KRYLOV, LinearSystem, assemble, ellipticity_check,
                       solve as solve_linear)
from .geometry import (INTERIOR, IRREGULAR, ChartedDomain, GeodesicCap, Grid, GridError,
                       LevelSet, build_grid, cap_domain, chart_to_sphere, conformal_factor,
                       frame_derivatives, geodesic_angle, sphere_to_chart)
from .nonlinear import (CONVERGED, DIVERGED, HYPOTHESIS_FAIL, MAX_ITER, NEWTON, PICARD,
                        PICARD_THEN_NEWTON, SolveReport, SolverConfig, check_c0_bounds,
                        newton_step, picard_step, residual, solve_bump, uniqueness_probe)
from .oracle import (SurfaceMesh, build_surface, chebyshev_reference, curvature_match,
                     export_mesh, mean_curvature, mean_curvature_at, radial_ode_reference,
                     reflected_cap_profile)

__version__ = "0.1.0"
