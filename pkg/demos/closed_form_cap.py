"""H = 1 on the 60 degree cap: recover the second sphere u = log(2 cos theta).

Newton is started from the closed-form profile plus a bump of height 0.05 and
the converged field is compared with the profile on a sequence of grids.
"""

import numpy as np

from radial_bump import CurvatureSpec, SolverConfig, build_grid, cap_domain, solve_bump
from radial_bump.curvature import Constant
from radial_bump.geometry import geodesic_angle
from radial_bump.oracle import curvature_match

theta0 = np.pi / 3
spec = CurvatureSpec(Constant(1.0), 1.0, 1.0)
config = SolverConfig(scheme="newton", t_schedule=(1.0,), eps_schedule=())

rows = []
for h in (0.1, 0.05, 0.025):
    domain = cap_domain(theta0, h)
    grid = build_grid(domain)
    exact = np.log(2 * np.cos(geodesic_angle(grid)))
    depth = 1 - np.sum(grid.points ** 2, axis=1) / np.tan(theta0 / 2) ** 2
    u, report = solve_bump(domain, spec, config, initial=exact + 0.05 * depth, grid=grid)
    err = np.max(np.abs(u - exact))
    match = curvature_match(u, spec, domain, grid)
    rows.append((h, grid.size, report.status, err, match.sup_mismatch))

print(f"{'h':>7} {'nodes':>6} {'status':>10} {'sup error':>11} {'H mismatch':>11}")
for h, size, status, err, mism in rows:
    print(f"{h:7.3f} {size:6d} {status:>10} {err:11.3e} {mism:11.3e}")
errs = np.array([r[3] for r in rows])
hs = np.array([r[0] for r in rows])
print("fitted order:", round(np.polyfit(np.log(hs), np.log(errs), 1)[0], 3))
