"""Post-processing of converged fields: core location, circulation, Pohozaev function."""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from scipy import ndimage

from . import field as F
from . import tensor_algebra as ta
from .errors import CircleOutside, DegenerateFit, NoDefect, MultipleDefects

CIRCLE_NODES = 256
RADIUS_FRACTIONS = (0.3, 0.4, 0.5, 0.6, 0.7)
DEFECT_CSV_HEADER = ["eps", "core_x", "core_y", "peak_dist", "r", "xi",
                     "lam_12", "lam_13", "lam_23", "lam_norm"]


def dist_to_p_field(fld: F.TensorField) -> np.ndarray:
    """``sqrt((1 - l1)^2 + l2^2 + l3^2)`` per active cell, NaN elsewhere."""
    out = np.full(fld.grid.shape, np.nan)
    act = fld.mask.active
    lam = ta.eigvals_desc(fld.u[act])
    out[act] = np.sqrt((1.0 - lam[:, 0]) ** 2 + lam[:, 1] ** 2 + lam[:, 2] ** 2)
    return out


def domain_radius(mask: F.DomainMask) -> float:
    """Inradius about the mask center, measured to the boundary ring."""
    r, _ = mask.polar()
    return float(r[mask.boundary].min() + 0.5 * mask.grid.h)


def _quadratic_peak(patch: np.ndarray) -> tuple[float, float]:
    """Stationary point of a least-squares quadratic through a 3x3 patch (cell units)."""
    oy, ox = np.mgrid[-1:2, -1:2]
    x, y = ox.ravel().astype(float), oy.ravel().astype(float)
    a = np.column_stack([np.ones(9), x, y, x * x, x * y, y * y])
    coef, *_ = np.linalg.lstsq(a, patch.ravel(), rcond=None)
    _, b, c, d, e, f = coef
    hess = np.array([[2 * d, e], [e, 2 * f]])
    if np.linalg.det(hess) <= 0 or hess[0, 0] >= 0:
        return 0.0, 0.0
    sx, sy = np.linalg.solve(hess, [-b, -c])
    return float(np.clip(sx, -1.0, 1.0)), float(np.clip(sy, -1.0, 1.0))


def locate_defect(fld: F.TensorField, threshold: float = 0.1, separation: float = 10.0,
                  dist: np.ndarray | None = None) -> np.ndarray:
    """Core position: argmax of distance-to-P refined by a 3x3 quadratic fit.

    Raises :class:`NoDefect` if the peak is below ``threshold`` and
    :class:`MultipleDefects` if another local maximum above half the peak sits
    more than ``separation`` cells away.
    """
    d = dist_to_p_field(fld) if dist is None else dist
    inn = fld.mask.interior
    dd = np.where(inn, d, -np.inf)
    iy, ix = np.unravel_index(int(np.argmax(dd)), dd.shape)
    peak = dd[iy, ix]
    if not peak >= threshold:
        raise NoDefect(f"max distance to P is {peak:.3g} < {threshold}")

    locmax = (dd == ndimage.maximum_filter(dd, size=3, mode="constant", cval=-np.inf)) & inn
    cy, cx = np.nonzero(locmax & (dd > 0.5 * peak))
    far = np.hypot(cy - iy, cx - ix) > separation
    if far.any():
        k = int(np.argmax(np.where(far, dd[cy, cx], -np.inf)))
        raise MultipleDefects(
            f"second peak {dd[cy[k], cx[k]]:.3g} at cell ({cy[k]}, {cx[k]}) "
            f"vs main peak {peak:.3g} at ({iy}, {ix})")

    grid = fld.grid
    x, y = grid.centers()
    sx = sy = 0.0
    if 0 < iy < grid.ny - 1 and 0 < ix < grid.nx - 1 and inn[iy - 1:iy + 2, ix - 1:ix + 2].all():
        sx, sy = _quadratic_peak(d[iy - 1:iy + 2, ix - 1:ix + 2])
    return np.array([x[iy, ix] + sx * grid.h, y[iy, ix] + sy * grid.h])


def vortex_center(fld: F.TensorField, guess, radius: float, current=None,
                  max_iter: int = 20) -> np.ndarray:
    """Vorticity centroid of the current within ``radius`` of the center itself.

    The vorticity ``curl j`` is projected on its total; at the centroid the
    dipole part of the far-field current vanishes, which makes this the
    natural point about which to split off the vortex.  The averaging disk is
    re-centred on each new estimate until the selection stops changing, so
    the result does not depend on where inside the core ``guess`` lies.
    """
    j1, j2 = F.current_field(fld) if current is None else current
    _, curl = F.div_and_curl((j1, j2), fld.grid.h, fld.mask.active)
    x, y = fld.grid.centers()
    ok = np.isfinite(curl).all(axis=(-2, -1))
    c = np.asarray(guess, dtype=float)
    prev = None
    for _ in range(max_iter):
        near = ok & (np.hypot(x - c[0], y - c[1]) < radius)
        if prev is not None and np.array_equal(near, prev):
            break
        tot = curl[near].sum(axis=0)
        if not ta.frobenius_norm(tot) > 0:
            break
        w = ta.frobenius_inner(curl[near], tot) / ta.frobenius_inner(tot, tot)
        c = np.array([np.dot(w, x[near]), np.dot(w, y[near])]) / w.sum()
        prev = near
    return c


# ---------------------------------------------------------------------------
# circle quadrature


def circle_nodes(center, r: float, nodes: int = CIRCLE_NODES):
    th = 2.0 * np.pi * np.arange(nodes) / nodes
    nrm = np.stack([np.cos(th), np.sin(th)], axis=-1)
    pts = np.asarray(center, dtype=float) + r * nrm
    tau = np.stack([-np.sin(th), np.cos(th)], axis=-1)
    return pts, nrm, tau


def sample_bilinear(values: np.ndarray, mask: F.DomainMask, pts: np.ndarray,
                    allowed: np.ndarray | None = None) -> np.ndarray:
    """Bilinear interpolation of cell-centered ``values`` at points ``pts[N, 2]``.

    Every stencil cell must be in ``allowed`` (default: interior).
    """
    grid = mask.grid
    allowed = mask.interior if allowed is None else allowed
    fx = (pts[:, 0] - grid.origin[0]) / grid.h - 0.5
    fy = (pts[:, 1] - grid.origin[1]) / grid.h - 0.5
    ix = np.floor(fx).astype(int)
    iy = np.floor(fy).astype(int)
    if (ix < 0).any() or (iy < 0).any() or (ix + 1 >= grid.nx).any() or (iy + 1 >= grid.ny).any():
        raise CircleOutside("circle leaves the grid")
    ok = allowed[iy, ix] & allowed[iy, ix + 1] & allowed[iy + 1, ix] & allowed[iy + 1, ix + 1]
    if not ok.all():
        raise CircleOutside("circle leaves the interior of the domain")
    tx = (fx - ix).reshape((-1,) + (1,) * (values.ndim - 2))
    ty = (fy - iy).reshape((-1,) + (1,) * (values.ndim - 2))
    return ((1 - tx) * (1 - ty) * values[iy, ix] + tx * (1 - ty) * values[iy, ix + 1]
            + (1 - tx) * ty * values[iy + 1, ix] + tx * ty * values[iy + 1, ix + 1])


def circulation(fld: F.TensorField, center, r: float, nodes: int = CIRCLE_NODES,
                current=None) -> ta.AntiSymTensor3:
    """Line integral of ``j . tau`` over the circle of radius ``r`` about ``center``."""
    j1, j2 = F.current_field(fld) if current is None else current
    pts, _, tau = circle_nodes(center, r, nodes)
    s1 = sample_bilinear(j1, fld.mask, pts)
    s2 = sample_bilinear(j2, fld.mask, pts)
    jt = s1 * tau[:, 0, None, None] + s2 * tau[:, 1, None, None]
    lam = jt.sum(axis=0) * (2.0 * np.pi * r / nodes)
    return ta.AntiSymTensor3.from_matrix(lam)


def pohozaev_xi(fld: F.TensorField, center, r: float, nodes: int = CIRCLE_NODES,
                grads=None) -> float:
    """``r * integral over the circle of (|grad u|^2 / 2 - |du/dnu|^2)``."""
    ux, uy = F.field_gradient(fld) if grads is None else grads
    pts, nrm, _ = circle_nodes(center, r, nodes)
    gx = sample_bilinear(ux, fld.mask, pts)
    gy = sample_bilinear(uy, fld.mask, pts)
    dn = gx * nrm[:, 0, None, None] + gy * nrm[:, 1, None, None]
    integrand = 0.5 * (ta.frobenius_inner(gx, gx) + ta.frobenius_inner(gy, gy)) - ta.frobenius_inner(dn, dn)
    return float(r * integrand.sum() * (2.0 * np.pi * r / nodes))


potential_mass = F.potential_mass


# ---------------------------------------------------------------------------
# energy scaling


class ScalingFit(NamedTuple):
    slope: float
    intercept: float
    residual: float


def scaling_fit(samples: Sequence[tuple[float, float]]) -> ScalingFit:
    """Least-squares fit ``E = slope * ln(1/eps) + intercept``; residual is the RMS misfit."""
    data = np.asarray(samples, dtype=float)
    if data.ndim != 2 or data.shape[0] < 3:
        raise DegenerateFit("need at least three (eps, energy) samples")
    eps, en = data[:, 0], data[:, 1]
    if np.any(eps <= 0):
        raise DegenerateFit("eps values must be positive")
    if np.unique(eps).size != eps.size:
        raise DegenerateFit("eps values must be distinct")
    x = np.log(1.0 / eps)
    a = np.column_stack([x, np.ones_like(x)])
    (slope, icpt), *_ = np.linalg.lstsq(a, en, rcond=None)
    res = en - (slope * x + icpt)
    return ScalingFit(float(slope), float(icpt), float(np.sqrt(np.mean(res**2))))


# ---------------------------------------------------------------------------
# report


@dataclass
class DefectReport:
    core: np.ndarray
    peak_dist_to_p: float
    peak_w: float
    circulation_by_radius: list[tuple[float, ta.AntiSymTensor3]]
    xi_by_radius: list[tuple[float, float]]
    energy: float
    eps: float
    potential_mass: float = float("nan")

    def rows(self) -> list[list[str]]:
        out = []
        for (r, lam), (_, xi) in zip(self.circulation_by_radius, self.xi_by_radius):
            vals = [self.eps, self.core[0], self.core[1], self.peak_dist_to_p, r, xi,
                    lam.a12, lam.a13, lam.a23, lam.norm()]
            out.append([f"{v:.17g}" for v in vals])
        return out

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(DEFECT_CSV_HEADER)
            w.writerows(self.rows())

    def circulation_norms(self) -> np.ndarray:
        return np.array([lam.norm() for _, lam in self.circulation_by_radius])

    def xi_values(self) -> np.ndarray:
        return np.array([xi for _, xi in self.xi_by_radius])


def analyze_defect(fld: F.TensorField, eps: float, radii: Sequence[float] | None = None,
                   energy: float | None = None, beta: float | None = None) -> DefectReport:
    """Locate the core and evaluate circulation and Pohozaev function on circles about it."""
    dist = dist_to_p_field(fld)
    core = locate_defect(fld, dist=dist)
    if radii is None:
        rad = domain_radius(fld.mask)
        radii = [f * rad for f in RADIUS_FRACTIONS]
    radii = [float(r) for r in radii]
    if any(b <= a for a, b in zip(radii, radii[1:])):
        raise ValueError("radii must be strictly increasing")
    current = F.current_field(fld)
    grads = F.field_gradient(fld)
    circ = [(r, circulation(fld, core, r, current=current)) for r in radii]
    xis = [(r, pohozaev_xi(fld, core, r, grads=grads)) for r in radii]
    inn = fld.mask.interior
    peak_w = float(ta.potential(fld.u[inn], beta).max())
    e = F.energy(fld, eps, beta) if energy is None else energy
    return DefectReport(core, float(np.nanmax(np.where(inn, dist, np.nan))), peak_w, circ, xis,
                        float(e), float(eps), F.potential_mass(fld, eps, beta))
