"""Two H = 1 graphs over the same cap, and why only one of them counts.

u = 0 (the cap itself) lies in the annulus r1 = r2 = 1; the second sphere
through the boundary circle bulges out to radius 2 at the centre and does not.
"""

import numpy as np

from radial_bump import CurvatureSpec, SolverConfig, build_grid, cap_domain, uniqueness_probe
from radial_bump.curvature import Constant, RadialPower
from radial_bump.geometry import geodesic_angle
from radial_bump.oracle import reflected_cap_profile

theta0 = np.pi / 3
domain = cap_domain(theta0, 0.05)
grid = build_grid(domain)
centre = int(np.argmin(np.sum(grid.points ** 2, axis=1)))
newton = SolverConfig(scheme="newton", t_schedule=(1.0,), eps_schedule=())

seed = reflected_cap_profile(theta0, geodesic_angle(grid))
res = uniqueness_probe(domain, CurvatureSpec(Constant(1.0), 1.0, 1.0), newton, n_starts=1,
                       grid=grid, extra_starts=[("second sphere", seed)])
print("H = 1, starts:", [s["label"] for s in res["starts"]])
for d in res["distinct_solutions"]:
    u = res["solutions"][d["representative"]]
    print(f"  solution from {res['starts'][d['representative']]['label']!r}: "
          f"u(centre) = {u[centre]:.5f}, max u = {u.max():.5f}, in A: {d['in_A']}")
print("  log 2 =", round(np.log(2), 5))

res = uniqueness_probe(domain, CurvatureSpec(RadialPower(1.5, 2), 0.5, 2.0), n_starts=7,
                       seed=1, grid=grid)
print("H = 1.5|X|^-2, 7 starts: converged", res["n_converged"],
      "max pairwise distance in A", f"{res['max_in_A_distance']:.1e}")
