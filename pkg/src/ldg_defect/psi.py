"""Regular part of the current field of a converged defect solution.

The current ``j`` of a converged field splits into a singular vortex part
``theta_hat Lambda / (2 pi r)`` and a remainder ``V = (psi_y, -psi_x)``.

:func:`recover_psi` places ``psi`` on cell corners.  Each cell face carries
the increment of ``psi`` along it, which equals the flux of ``V`` through the
face: the edge current between the two cells it separates minus the exact
line integral of the vortex part.  A least-squares fit of ``psi`` to these
increments is a Neumann Poisson problem on the corner grid; it enforces
``div V = 0`` weakly and reproduces an exact vortex with ``psi = 0``.

:func:`solve_neumann_poisson` is the cell-centered 5-point solver for given
source and boundary flux data.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field as dfield

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as spla

from . import field as F
from . import tensor_algebra as ta
from .errors import SolverDiverged

# outward normals of the four cell faces, as (dx, dy)
DIRS = ((1, 0), (-1, 0), (0, 1), (0, -1))
ANTI_INDEX = ((0, 1), (0, 2), (1, 2))
GUARD_RADIUS = 0.1
ANNULUS_DELTAS = (0.1, 0.05, 0.025)
PSI_CSV_HEADER = ["eps", "h", "div_residual", "cmc_residual_l1", "sup_norm", "z_l2", "compat_mismatch"]
PSI_SNAPSHOT_HEADER = ["x", "y", "psi_12", "psi_13", "psi_23"]


def anti_components(m: np.ndarray) -> np.ndarray:
    """``(..., 3, 3) -> (..., 3)`` entries 12, 13, 23 of the antisymmetric part."""
    a = 0.5 * (m - np.swapaxes(m, -1, -2))
    return np.stack([a[..., i, j] for i, j in ANTI_INDEX], axis=-1)


def anti_matrices(c: np.ndarray) -> np.ndarray:
    out = np.zeros(c.shape[:-1] + (3, 3))
    for k, (i, j) in enumerate(ANTI_INDEX):
        out[..., i, j] = c[..., k]
        out[..., j, i] = -c[..., k]
    return out


@dataclass
class AntiSymField:
    """Per-cell antisymmetric tensors stored as components ``(ny, nx, 3)``; NaN off ``valid``."""
    grid: F.GridSpec
    comps: np.ndarray
    valid: np.ndarray

    def matrices(self) -> np.ndarray:
        return anti_matrices(self.comps)

    def cell_norm(self) -> np.ndarray:
        return np.sqrt(2.0 * (self.comps**2).sum(axis=-1))

    def write_csv(self, path) -> None:
        x, y = self.grid.centers()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(PSI_SNAPSHOT_HEADER)
            for iy, ix in zip(*np.nonzero(self.valid)):
                vals = (x[iy, ix], y[iy, ix], *(self.comps[iy, ix] + 0.0))
                w.writerow([f"{v:.17g}" for v in vals])


def _polar_about(grid: F.GridSpec, center, x=None, y=None):
    if x is None:
        x, y = grid.centers()
    dx, dy = x - center[0], y - center[1]
    r = np.hypot(dx, dy)
    with np.errstate(invalid="ignore", divide="ignore"):
        th = np.stack([-dy / r, dx / r], axis=-1)
    return r, th


def singular_cells(grid: F.GridSpec, center) -> np.ndarray:
    """Cells whose closed square contains ``center``."""
    x, y = grid.centers()
    tol = 0.5 * grid.h * (1 + 1e-12)
    return (np.abs(x - center[0]) <= tol) & (np.abs(y - center[1]) <= tol)


def vortex_current(grid: F.GridSpec, center, lam) -> tuple[np.ndarray, np.ndarray]:
    """``theta_hat Lambda / (2 pi r)`` at cell centers (zero at ``r = 0``)."""
    lam = np.asarray(lam, dtype=float)
    r, th = _polar_about(grid, center)
    with np.errstate(invalid="ignore", divide="ignore"):
        k = np.where(r > 0, 1.0 / (2.0 * np.pi * r), 0.0)
    th = np.nan_to_num(th)
    return ((k * th[..., 0])[..., None, None] * lam, (k * th[..., 1])[..., None, None] * lam)


def regular_part(j, center, lam, grid: F.GridSpec):
    """``V = j - theta_hat Lambda / (2 pi r)`` per cell."""
    s1, s2 = vortex_current(grid, center, lam)
    return j[0] - s1, j[1] - s2


# ---------------------------------------------------------------------------
# Neumann Poisson solve


@dataclass
class NeumannSolution:
    psi: np.ndarray
    mismatch: np.ndarray
    residual: float


def _neighbours(mask: F.DomainMask):
    inn = mask.interior
    idx = np.full(inn.shape, -1, dtype=np.int64)
    iy, ix = np.nonzero(inn)
    idx[iy, ix] = np.arange(iy.size)
    nb = []
    for dx, dy in DIRS:
        jy, jx = iy + dy, ix + dx
        nb.append(idx[jy, jx])
    return iy, ix, idx, np.stack(nb)


def graph_laplacian(n: int, i: np.ndarray, j: np.ndarray) -> sparse.csr_matrix:
    """Laplacian ``sum over neighbours of (x_n - x_c)`` of an undirected graph."""
    rows = np.concatenate([i, j])
    cols = np.concatenate([j, i])
    off = sparse.coo_matrix((np.ones(rows.size), (rows, cols)), shape=(n, n)).tocsr()
    deg = np.asarray(off.sum(axis=1)).ravel()
    return (off - sparse.diags(deg)).tocsr()


def _solve_pinned(lap: sparse.csr_matrix, b: np.ndarray, rtol: float) -> tuple[np.ndarray, float]:
    """Solve the singular system ``lap x = b`` (``b`` summing to zero); zero-mean ``x``."""
    n = lap.shape[0]
    sol = np.zeros_like(b)
    if n > 1:
        lu = spla.splu(lap[1:, 1:].tocsc())
        sol[1:] = lu.solve(b[1:])
    sol -= sol.mean(axis=0)
    res = float(np.abs(lap @ sol - b).max()) if n else 0.0
    scale = float(np.abs(b).max()) if n else 0.0
    if not np.isfinite(sol).all() or (res > rtol * scale and res > 1e-13):
        raise SolverDiverged(f"Neumann solve residual {res:.3g} exceeds {rtol:g} x {scale:.3g}")
    return sol, res


def neumann_matrix(mask: F.DomainMask) -> sparse.csr_matrix:
    """5-point graph Laplacian on the interior cells (no links to other cells)."""
    iy, _, _, nb = _neighbours(mask)
    i, j = [], []
    for k in (0, 2):
        ok = nb[k] >= 0
        i.append(np.nonzero(ok)[0])
        j.append(nb[k][ok])
    return graph_laplacian(iy.size, np.concatenate(i), np.concatenate(j))


def solve_neumann_poisson(rhs: np.ndarray, bc: np.ndarray, mask: F.DomainMask,
                          rtol: float = 1e-9) -> NeumannSolution:
    """Solve ``Laplace psi = rhs`` on the interior cells with ``-grad psi . n = bc`` on the boundary.

    ``rhs`` has shape ``(ny, nx)`` or ``(ny, nx, k)``.  ``bc`` has shape
    ``(4,) + rhs.shape`` and holds the outward flux data on the faces in
    :data:`DIRS` order; it is read only on faces towards non-interior cells.
    The data are made compatible by shifting ``rhs`` by a constant, and the
    solution is normalized to zero mean over the interior.  ``mismatch`` is
    the integral of ``rhs`` plus the boundary integral of ``bc``.
    """
    scalar = rhs.ndim == 2
    rhs = rhs[..., None] if scalar else rhs
    bc = bc[..., None] if scalar else bc
    h = mask.grid.h
    iy, ix, _, nb = _neighbours(mask)
    n = iy.size
    src = h * h * rhs[iy, ix]
    for k in range(4):
        bnd = nb[k] < 0
        src[bnd] += h * bc[k][iy[bnd], ix[bnd]]
    mismatch = src.sum(axis=0)
    b = src - mismatch / n
    sol, res = _solve_pinned(neumann_matrix(mask), b, rtol)
    psi = np.full(rhs.shape, np.nan)
    psi[iy, ix] = sol
    mm = mismatch
    if scalar:
        psi, mm = psi[..., 0], mm[0]
    return NeumannSolution(psi, np.asarray(mm), res)


# ---------------------------------------------------------------------------
# edge data for the corner-grid problem


@dataclass
class EdgeSet:
    """Links between neighbouring active cells with at least one interior end.

    ``c`` and ``n`` are ``(iy, ix)`` index pairs with ``n = c + (dy, dx)`` for
    ``(dx, dy)`` in ``(1, 0)`` or ``(0, 1)``.
    """
    cy: np.ndarray
    cx: np.ndarray
    ny_: np.ndarray
    nx_: np.ndarray
    dx: np.ndarray
    dy: np.ndarray


def cell_edges(mask: F.DomainMask) -> EdgeSet:
    act, inn = mask.active, mask.interior
    parts = []
    for dx, dy in ((1, 0), (0, 1)):
        a = act[: act.shape[0] - dy, : act.shape[1] - dx]
        b = act[dy:, dx:]
        ia = inn[: inn.shape[0] - dy, : inn.shape[1] - dx]
        ib = inn[dy:, dx:]
        cy, cx = np.nonzero(a & b & (ia | ib))
        parts.append((cy, cx, cy + dy, cx + dx, np.full(cy.size, dx), np.full(cy.size, dy)))
    return EdgeSet(*(np.concatenate(p) for p in zip(*parts)))


def _top_vectors(u: np.ndarray) -> np.ndarray:
    _, vecs = ta.eigh_desc(u)
    return vecs[..., :, 0]


def projected_field(fld: F.TensorField) -> F.TensorField:
    """Top-eigenvector projector ``Q(u)`` on active cells (no gap check)."""
    q = np.zeros_like(fld.u)
    act = fld.mask.active
    e1 = _top_vectors(fld.u[act])
    q[act] = e1[..., :, None] * e1[..., None, :]
    return F.TensorField(fld.mask, q)


def projected_current(fld: F.TensorField):
    """Cell-centered current of ``Q(u)``."""
    return F.current_field(projected_field(fld))


def edge_current(fld: F.TensorField, edges: EdgeSet, current: str = "projected") -> np.ndarray:
    """Integral of ``j`` along each edge, as antisymmetric components ``(m, 3)``.

    ``"raw"`` uses ``[u_c; u_n]``, the midpoint rule for ``[u; du]``.
    ``"projected"`` uses the top-eigenvector projectors ``Q`` and returns minus
    the generator of the minimal rotation carrying ``Q_c`` to ``Q_n``, which is
    exact when ``Q`` moves along a geodesic between the two cells.
    """
    uc = fld.u[edges.cy, edges.cx]
    un = fld.u[edges.ny_, edges.nx_]
    if current == "raw":
        return anti_components(ta.commutator(uc, un))
    if current != "projected":
        raise ValueError(f"unknown current {current!r}")
    ec, en = _top_vectors(uc), _top_vectors(un)
    cos = np.einsum("mi,mi->m", ec, en)
    en = en * np.where(cos < 0, -1.0, 1.0)[:, None]
    cos = np.abs(cos)
    sin = np.linalg.norm(en - cos[:, None] * ec, axis=-1)
    phi = np.arctan2(sin, cos)
    with np.errstate(invalid="ignore", divide="ignore"):
        fac = np.where(sin > 1e-300, phi / sin, 1.0)
    m = ec[:, :, None] * en[:, None, :] - en[:, :, None] * ec[:, None, :]
    return fac[:, None] * anti_components(m)


def edge_vortex(grid: F.GridSpec, edges: EdgeSet, center, lam) -> np.ndarray:
    """Exact line integral of ``theta_hat Lambda / (2 pi r)`` along each edge."""
    x, y = grid.centers()
    ta_ = np.arctan2(y[edges.cy, edges.cx] - center[1], x[edges.cy, edges.cx] - center[0])
    tb = np.arctan2(y[edges.ny_, edges.nx_] - center[1], x[edges.ny_, edges.nx_] - center[0])
    dth = np.angle(np.exp(1j * (tb - ta_)))
    if np.any(np.abs(dth) > np.pi - 1e-9):
        raise ValueError("defect center lies on a link between two cell centers")
    return dth[:, None] / (2.0 * np.pi) * anti_components(np.asarray(lam, dtype=float))[None, :]


def _corner_ends(grid: F.GridSpec, edges: EdgeSet):
    """Corner ids ``(a, b)`` of the face crossed by each edge, ``b - a`` along the ccw tangent."""
    w = grid.nx + 1
    fx = edges.dx == 1
    ay = np.where(fx, edges.cy, edges.cy + 1)
    ax = edges.cx + 1
    by = edges.cy + 1
    bx = np.where(fx, edges.cx + 1, edges.cx)
    return ay * w + ax, by * w + bx


def corner_charge(grid: F.GridSpec, edges: EdgeSet, incr: np.ndarray) -> np.ndarray:
    """Circulation of the edge data around the cell-center plaquette of each corner."""
    a, b = _corner_ends(grid, edges)
    out = np.zeros(((grid.ny + 1) * (grid.nx + 1), incr.shape[1]))
    np.add.at(out, b, incr)
    np.add.at(out, a, -incr)
    return out.reshape(grid.ny + 1, grid.nx + 1, -1)


def corner_coords(grid: F.GridSpec):
    x = grid.origin[0] + grid.h * np.arange(grid.nx + 1)
    y = grid.origin[1] + grid.h * np.arange(grid.ny + 1)
    return np.meshgrid(x, y)


def lattice_circulation(fld: F.TensorField, center, r: float, current: str = "projected",
                        edges: EdgeSet | None = None) -> ta.AntiSymTensor3:
    """Circulation of the edge current around the plaquettes whose centers lie within ``r``."""
    edges = cell_edges(fld.mask) if edges is None else edges
    q = corner_charge(fld.grid, edges, edge_current(fld, edges, current))
    cx, cy = corner_coords(fld.grid)
    sel = np.hypot(cx - center[0], cy - center[1]) < r
    return ta.AntiSymTensor3.from_matrix(anti_matrices(q[sel].sum(axis=0)))


def corner_psi(grid: F.GridSpec, edges: EdgeSet, incr: np.ndarray, rtol: float = 1e-9):
    """Least-squares corner values with ``psi_b - psi_a ~ incr`` on each face.

    Returns ``(values[(ny+1), (nx+1), k], residual)``, NaN at unused corners.
    """
    a, b = _corner_ends(grid, edges)
    used, inv = np.unique(np.concatenate([a, b]), return_inverse=True)
    ia, ib = inv[: a.size], inv[a.size:]
    lap = graph_laplacian(used.size, ia, ib)
    # normal equations of the fit: lap psi = -B^T incr
    rhs = np.zeros((used.size, incr.shape[1]))
    np.add.at(rhs, ib, -incr)
    np.add.at(rhs, ia, incr)
    sol, res = _solve_pinned(lap, rhs, rtol)
    out = np.full(((grid.ny + 1) * (grid.nx + 1), incr.shape[1]), np.nan)
    out[used] = sol
    return out.reshape(grid.ny + 1, grid.nx + 1, -1), res


# ---------------------------------------------------------------------------
# diagnostics


def _centered(psi: np.ndarray, ok: np.ndarray, h: float):
    px = np.full_like(psi, np.nan)
    py = np.full_like(psi, np.nan)
    lap = np.full_like(psi, np.nan)
    c = psi[1:-1, 1:-1]
    e, w, nn, s = psi[1:-1, 2:], psi[1:-1, :-2], psi[2:, 1:-1], psi[:-2, 1:-1]
    px[1:-1, 1:-1] = (e - w) / (2 * h)
    py[1:-1, 1:-1] = (nn - s) / (2 * h)
    lap[1:-1, 1:-1] = (e + w + nn + s - 4 * c) / (h * h)
    for a in (px, py, lap):
        a[~ok] = np.nan
    return px, py, lap


def _stencil_ok(valid: np.ndarray) -> np.ndarray:
    ok = np.zeros_like(valid)
    ok[1:-1, 1:-1] = (valid[1:-1, 1:-1] & valid[2:, 1:-1] & valid[:-2, 1:-1]
                      & valid[1:-1, 2:] & valid[1:-1, :-2])
    return ok


def cmc_residual(psi: AntiSymField, center, lam) -> np.ndarray:
    """``Lap psi - 2[psi_x; psi_y] - [grad psi . theta_hat; Lambda] / (pi r)`` per cell."""
    h = psi.grid.h
    ok = _stencil_ok(psi.valid)
    px, py, lap = _centered(psi.comps, ok, h)
    mx, my, ml = anti_matrices(px), anti_matrices(py), anti_matrices(lap)
    r, th = _polar_about(psi.grid, center)
    lam = np.asarray(lam, dtype=float)
    with np.errstate(invalid="ignore", divide="ignore"):
        dth = mx * th[..., 0, None, None] + my * th[..., 1, None, None]
        res = ml - 2.0 * ta.commutator(mx, my) - ta.commutator(dth, lam) / (np.pi * r)[..., None, None]
    res[~ok] = np.nan
    return res


def z_field(u: np.ndarray, grid: F.GridSpec, center, lam) -> np.ndarray:
    """``(Lambda - u Lambda - Lambda u) / (2 pi r)`` per cell."""
    lam = np.asarray(lam, dtype=float)
    r, _ = _polar_about(grid, center)
    with np.errstate(invalid="ignore", divide="ignore"):
        return (lam - u @ lam - lam @ u) / (2.0 * np.pi * r)[..., None, None]


@dataclass
class PsiReport:
    psi: AntiSymField
    div_residual: float
    cmc_residual_l1: float
    sup_norm: float
    z_l2: float
    compat_mismatch: float
    annulus_sup: dict = dfield(default_factory=dict)
    grad_psi_core: float = float("nan")
    eps: float = float("nan")
    h: float = float("nan")
    center: np.ndarray | None = None
    lam: np.ndarray | None = None

    def row(self) -> list[str]:
        vals = [self.eps, self.h, self.div_residual, self.cmc_residual_l1, self.sup_norm,
                self.z_l2, self.compat_mismatch]
        return [f"{v:.17g}" for v in vals]

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(PSI_CSV_HEADER)
            w.writerow(self.row())

    def annulus_growth(self) -> np.ndarray:
        """Ratios of successive annulus sups as the annulus shrinks."""
        s = np.array([self.annulus_sup[d] for d in sorted(self.annulus_sup, reverse=True)])
        return s[1:] / s[:-1]


def recover_psi(fld: F.TensorField, center, lam, eps: float = float("nan"),
                guard: float = GUARD_RADIUS, deltas=ANNULUS_DELTAS,
                current: str = "projected") -> PsiReport:
    """Recover ``psi`` from a converged field and evaluate the residual diagnostics.

    ``lam`` is the circulation about ``center`` (an :class:`AntiSymTensor3` or
    a 3x3 matrix).  Boundary values enter through the links to the boundary
    ring.  ``current="projected"`` builds the edge currents from the nearest
    projectors ``Q(u)``, which strips the smooth eps-core of ``u``; ``"raw"``
    uses ``u`` itself.

    ``compat_mismatch`` is the circulation of ``V`` around the guard disk,
    i.e. the vortex charge left in ``V``.  It vanishes when ``lam`` matches the
    circulation of the field near the core; a regular ``psi`` needs it to be
    zero, so a large value flags inconsistent or unconverged input.
    """
    mask, grid = fld.mask, fld.grid
    h = grid.h
    lam = np.asarray(lam, dtype=float)
    center = np.asarray(center, dtype=float)
    inn = mask.interior
    edges = cell_edges(mask)
    incr = edge_current(fld, edges, current) - edge_vortex(grid, edges, center, lam)
    corners, _ = corner_psi(grid, edges, incr)
    cells = 0.25 * (corners[:-1, :-1] + corners[:-1, 1:] + corners[1:, :-1] + corners[1:, 1:])
    cells[~inn] = np.nan
    cells -= cells[inn].mean(axis=0)
    psi = AntiSymField(grid, cells, inn.copy())

    # per-cell outward flux of V, and the vortex charge left in V near the core
    flux = np.zeros(grid.shape + (3,))
    np.add.at(flux, (edges.cy, edges.cx), incr)
    np.add.at(flux, (edges.ny_, edges.nx_), -incr)
    q = corner_charge(grid, edges, incr)
    kx, ky = corner_coords(grid)
    charge = q[np.hypot(kx - center[0], ky - center[1]) < guard].sum(axis=0)
    mismatch = float(np.sqrt(2.0 * (charge**2).sum()))

    r, _ = _polar_about(grid, center)
    sing = singular_cells(grid, center)
    far = (r >= guard) & ~sing & inn
    div = flux[far] / (h * h)
    div_res = float(np.sqrt(2.0 * (div**2).sum() * h * h))

    res = cmc_residual(psi, center, lam)
    cm = far & np.isfinite(res).all(axis=(-2, -1))
    cmc_l1 = float(ta.frobenius_norm(res[cm]).sum() * h * h)

    nrm = psi.cell_norm()
    sup = float(np.nanmax(nrm[inn]))
    z = z_field(fld.u, grid, center, lam)
    zm = inn & ~sing
    z_l2 = float(np.sqrt(ta.frobenius_inner(z[zm], z[zm]).sum() * h * h))

    ann = {}
    for d in deltas:
        sel = inn & (r >= d) & (r < 2 * d)
        ann[float(d)] = float(nrm[sel].max()) if sel.any() else float("nan")

    ok = _stencil_ok(inn)
    px, py, _ = _centered(psi.comps, ok, h)
    g = np.sqrt(2.0 * (px**2 + py**2).sum(axis=-1))
    core = ok & (r < 3 * h)
    gcore = float(g[core].mean()) if core.any() else float("nan")
    return PsiReport(psi, div_res, cmc_l1, sup, z_l2, mismatch, ann, gcore, float(eps), h,
                     center, lam)


def analyze_psi(fld: F.TensorField, eps: float = float("nan"), core=None, lam_radius: float = 0.5,
                current: str = "projected", **kwargs) -> PsiReport:
    """Core location, vortex center and circulation, then :func:`recover_psi`.

    The vortex is split off about the vorticity centroid of the raw current
    near the core, and ``Lambda`` is the lattice circulation of the same edge
    current used for ``psi``, taken at ``lam_radius``.
    """
    from . import defect as D

    if core is None:
        core = D.locate_defect(fld)
    a = D.vortex_center(fld, core, 0.3 * D.domain_radius(fld.mask))
    lam = lattice_circulation(fld, a, lam_radius, current)
    return recover_psi(fld, a, lam.matrix(), eps, current=current, **kwargs)
