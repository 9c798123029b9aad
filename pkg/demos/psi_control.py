"""Where the regular part of the current lives.

Away from the core the current of a minimizer splits into the vortex term
``Lambda / (2 pi r)`` and a regular part ``curl psi``.  On the disk with planar
boundary data the limit map is the geodesic vortex itself, so ``psi`` is zero
up to roundoff.  Tilting the boundary loop out of the plane breaks that
symmetry and ``psi`` becomes visible; refining the grid leaves it unchanged.

    python demos/psi_control.py
"""
import numpy as np

from ldg_defect import field as F
from ldg_defect import minimizer as M
from ldg_defect import psi as P

EPS = 1 / 16


def tilted_trace(kappa):
    def fn(x, y):
        th = np.arctan2(y, x)
        d = np.stack([np.cos(th / 2), np.sin(th / 2), kappa * np.cos(th / 2) * np.sin(th)], axis=-1)
        d /= np.linalg.norm(d, axis=-1, keepdims=True)
        return d[..., :, None] * d[..., None, :]
    return fn


def run(n, kappa):
    _, mask = F.make_disk_domain(n)
    x, y = mask.grid.centers()
    mask = mask.with_boundary_values(tilted_trace(kappa)(x, y))
    res = M.solve(mask, None, M.SolveConfig(eps=EPS))
    return P.analyze_psi(res.field, EPS)


print(f"{'kappa':>6} {'n':>4} {'sup psi':>10} {'cmc L1':>10} {'div V':>10} {'|Lambda|':>9}")
for kappa in (0.0, 0.5):
    for n in (64, 128):
        rep = run(n, kappa)
        lam = np.sqrt((rep.lam**2).sum())
        print(f"{kappa:6.2f} {n:4d} {rep.sup_norm:10.3e} {rep.cmc_residual_l1:10.3e} "
              f"{rep.div_residual:10.3e} {lam:9.4f}")
