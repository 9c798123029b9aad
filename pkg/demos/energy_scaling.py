"""Energy growth of the single defect as the core width shrinks.

A k=1 boundary loop on the unit disk cannot be filled by a projection-valued
map, so every minimizer carries one melted core.  Its energy grows like
``(pi/2) ln(1/eps)``.  This script runs a continuation sweep, fits the slope
and then looks at the circle quantities around the core of the sharpest run.

    python demos/energy_scaling.py [n]
"""
import sys

import numpy as np

from ldg_defect import defect as D
from ldg_defect import field as F
from ldg_defect import minimizer as M

n = int(sys.argv[1]) if len(sys.argv) > 1 else 96
eps_list = (0.25, 0.125, 0.0625, 0.03125)

_, mask = F.make_disk_domain(n)
mask = F.apply_boundary(mask, F.BoundaryData(k=1))
results = M.continuation_sweep(mask, None, M.SolveConfig(eps=eps_list[-1], continuation=eps_list))

print(f"{'eps':>8} {'iters':>6} {'energy':>10} {'pot. mass':>10}")
for r in results:
    print(f"{r.final_eps:8.5f} {r.iterations:6d} {r.energy:10.5f} "
          f"{F.potential_mass(r.field, r.final_eps):10.5f}")

fit = D.scaling_fit([(r.final_eps, r.energy) for r in results])
print(f"\nslope of E against ln(1/eps): {fit.slope:.4f}  (pi/2 = {np.pi / 2:.4f})")

# around the core the field winds through half a turn of the director, so the
# circulation has norm pi*sqrt(2) and the Pohozaev function settles at pi/2
fld = results[-1].field
rep = D.analyze_defect(fld, eps_list[-1])
print(f"core at ({rep.core[0]:+.4f}, {rep.core[1]:+.4f}), peak distance to P {rep.peak_dist_to_p:.3f}")
for (r, lam), xi in zip(rep.circulation_by_radius, rep.xi_values()):
    print(f"  r = {r:.2f}   |Lambda| = {lam.norm():.4f}   xi = {xi:.4f}")
