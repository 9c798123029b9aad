"""Finite-difference tensor fields on a masked uniform grid.

Arrays are indexed ``[iy, ix]``; cell ``(iy, ix)`` has its center at
``origin + ((ix + 1/2) h, (iy + 1/2) h)``.  Every cell is tagged exterior,
interior or boundary.  Boundary cells carry the Dirichlet data and never
change; interior cells are the unknowns.  Tensor values live in arrays of
shape ``(ny, nx, 3, 3)``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy import ndimage

from . import tensor_algebra as ta
from .errors import EvenWinding, InvalidInput, SnapshotMismatch, TooCoarse

EXTERIOR, INTERIOR, BOUNDARY = 0, 1, 2
TAG_NAMES = {INTERIOR: "interior", BOUNDARY: "boundary", EXTERIOR: "exterior"}
TAG_CODES = {v: k for k, v in TAG_NAMES.items()}

SNAPSHOT_HEADER = ["x", "y", "tag", "u_xx", "u_xy", "u_xz", "u_yy", "u_yz", "u_zz"]
_SYM_INDEX = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)]

MIN_CELLS = 16


@dataclass(frozen=True)
class GridSpec:
    nx: int
    ny: int
    h: float
    origin: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        if self.nx < MIN_CELLS or self.ny < MIN_CELLS:
            raise TooCoarse(f"need at least {MIN_CELLS} cells per side, got {self.nx}x{self.ny}")
        if not self.h > 0:
            raise InvalidInput("grid spacing must be positive")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.ny, self.nx)

    def centers(self) -> tuple[np.ndarray, np.ndarray]:
        x = self.origin[0] + (np.arange(self.nx) + 0.5) * self.h
        y = self.origin[1] + (np.arange(self.ny) + 0.5) * self.h
        return np.meshgrid(x, y)


@dataclass(frozen=True)
class BoundaryData:
    """Boundary trace ``g(theta) = R gamma0(k theta + phase) R^T``."""

    k: int = 1
    frame: np.ndarray = field(default_factory=lambda: np.eye(3))
    phase: float = 0.0

    def trace_at(self, theta) -> np.ndarray:
        g = ta.geodesic_gamma0(self.k * np.asarray(theta, dtype=float) + self.phase)
        r = np.asarray(self.frame, dtype=float)
        return r @ g @ r.T


@dataclass(frozen=True)
class DomainMask:
    grid: GridSpec
    tags: np.ndarray
    center: tuple[float, float]
    boundary_values: np.ndarray | None = None
    bd: BoundaryData | None = None

    @property
    def interior(self) -> np.ndarray:
        return self.tags == INTERIOR

    @property
    def boundary(self) -> np.ndarray:
        return self.tags == BOUNDARY

    @property
    def active(self) -> np.ndarray:
        return self.tags != EXTERIOR

    def polar(self) -> tuple[np.ndarray, np.ndarray]:
        """Distance and angle of every cell center about the domain center."""
        x, y = self.grid.centers()
        dx, dy = x - self.center[0], y - self.center[1]
        return np.hypot(dx, dy), np.arctan2(dy, dx)

    def with_boundary_values(self, values) -> "DomainMask":
        values = np.broadcast_to(np.asarray(values, dtype=float), self.grid.shape + (3, 3))
        out = np.zeros(self.grid.shape + (3, 3))
        out[self.boundary] = values[self.boundary]
        return replace(self, boundary_values=out)


@dataclass
class TensorField:
    mask: DomainMask
    u: np.ndarray

    @property
    def grid(self) -> GridSpec:
        return self.mask.grid

    def copy(self) -> "TensorField":
        return TensorField(self.mask, self.u.copy())

    def conjugate(self, rot) -> "TensorField":
        """Field and boundary data conjugated by a fixed rotation."""
        rot = np.asarray(rot, dtype=float)
        u = rot @ self.u @ rot.T
        u[~self.mask.active] = 0.0
        mask = self.mask
        if mask.boundary_values is not None:
            mask = mask.with_boundary_values(rot @ mask.boundary_values @ rot.T)
        if mask.bd is not None:
            mask = replace(mask, bd=replace(mask.bd, frame=rot @ np.asarray(mask.bd.frame)))
        return TensorField(mask, u)


# ---------------------------------------------------------------------------
# domains


def mask_from_interior(grid: GridSpec, interior, center) -> DomainMask:
    """Tag the given interior cells, their exterior 4-neighbours as boundary."""
    interior = np.asarray(interior, dtype=bool)
    if interior.shape != grid.shape:
        raise InvalidInput("interior mask shape does not match grid")
    if not interior.any():
        raise TooCoarse("domain has no interior cells")
    edge = np.zeros_like(interior)
    edge[0, :] = edge[-1, :] = edge[:, 0] = edge[:, -1] = True
    if (interior & edge).any():
        raise TooCoarse("interior touches the grid edge; no room for boundary cells")
    grown = ndimage.binary_dilation(interior, structure=ndimage.generate_binary_structure(2, 1))
    tags = np.full(grid.shape, EXTERIOR, dtype=np.int8)
    tags[grown] = BOUNDARY
    tags[interior] = INTERIOR
    _, ncomp = ndimage.label(interior, structure=ndimage.generate_binary_structure(2, 1))
    if ncomp != 1:
        raise InvalidInput(f"interior must be connected, found {ncomp} components")
    return DomainMask(grid, tags, (float(center[0]), float(center[1])))


def make_disk_domain(n: int, radius: float = 1.0, half_width: float | None = None,
                     center=(0.0, 0.0)) -> tuple[GridSpec, DomainMask]:
    """Disk of ``radius`` on an ``n x n`` grid spanning ``[-half_width, half_width]^2``.

    Cells whose centers lie closer than ``radius - h/2`` to the center are
    interior; the surrounding ring is boundary.
    """
    if n < MIN_CELLS:
        raise TooCoarse(f"n must be >= {MIN_CELLS}")
    if half_width is None:
        half_width = radius
    if not radius > 0 or radius > half_width:
        raise TooCoarse(f"disk radius {radius} does not fit the box half-width {half_width}")
    h = 2.0 * half_width / n
    grid = GridSpec(n, n, h, (center[0] - half_width, center[1] - half_width))
    x, y = grid.centers()
    r = np.hypot(x - center[0], y - center[1])
    return grid, mask_from_interior(grid, r < radius - 0.5 * h, center)


def apply_boundary(mask: DomainMask, bd: BoundaryData) -> DomainMask:
    if bd.k % 2 == 0:
        raise EvenWinding(f"winding k={bd.k} is even; the boundary loop is contractible")
    _, theta = mask.polar()
    return replace(mask.with_boundary_values(bd.trace_at(theta)), bd=bd)


# ---------------------------------------------------------------------------
# fields


def _finish(mask: DomainMask, u: np.ndarray) -> TensorField:
    u = ta.sym(u)
    # trace one exactly: put the rounding residue on the diagonal evenly
    tr = np.trace(u, axis1=-2, axis2=-1)
    u = u + ((1.0 - tr) / 3.0)[..., None, None] * np.eye(3)
    u[mask.boundary] = mask.boundary_values[mask.boundary]
    u[~mask.active] = 0.0
    return TensorField(mask, u)


def radial_melt(mask: DomainMask, core_radius: float | None = None, core_center=None) -> np.ndarray:
    """Blend of the boundary trace with ``I/3`` that melts toward a core point."""
    if mask.boundary_values is None:
        raise InvalidInput("apply boundary data before building an initial field")
    grid = mask.grid
    x, y = grid.centers()
    cx, cy = mask.center if core_center is None else core_center
    r = np.hypot(x - cx, y - cy)
    theta = np.arctan2(y - cy, x - cx)
    if core_radius is None:
        core_radius = 0.25 * float(mask.polar()[0][mask.boundary].mean())

    if mask.bd is not None:
        g = mask.bd.trace_at(theta)
    else:
        g = _nearest_boundary_value(mask, theta)
    f = np.clip((r - grid.h) / core_radius, 0.0, 1.0)[..., None, None]
    return f * g + (1.0 - f) * (np.eye(3) / 3.0)


def _nearest_boundary_value(mask: DomainMask, theta: np.ndarray) -> np.ndarray:
    # boundary value whose polar angle is closest to theta
    _, btheta = mask.polar()
    bidx = np.flatnonzero(mask.boundary)
    order = np.argsort(btheta.ravel()[bidx])
    bang = btheta.ravel()[bidx][order]
    bval = mask.boundary_values.reshape(-1, 3, 3)[bidx][order]
    pos = np.searchsorted(bang, theta.ravel()) % bang.size
    prev = (pos - 1) % bang.size
    d_pos = np.abs(np.angle(np.exp(1j * (theta.ravel() - bang[pos]))))
    d_prev = np.abs(np.angle(np.exp(1j * (theta.ravel() - bang[prev]))))
    pick = np.where(d_pos <= d_prev, pos, prev)
    return bval[pick].reshape(theta.shape + (3, 3))


def initial_field(mask: DomainMask, mode: str = "radial-melt", *, core_radius: float | None = None,
                  core_center=None, seed: int = 0, amplitude: float = 0.05,
                  snapshot: str | Path | None = None) -> TensorField:
    """Initial guess for the solver.

    ``radial-melt`` interpolates between the boundary trace and the
    isotropic state ``I/3`` within ``core_radius`` of the core point;
    ``random`` adds a seeded traceless symmetric perturbation to it;
    ``snapshot`` loads a CSV written by :func:`write_snapshot`.
    """
    if mode == "snapshot":
        if snapshot is None:
            raise InvalidInput("snapshot mode needs a snapshot path")
        return load_snapshot(snapshot, mask)
    u = radial_melt(mask, core_radius, core_center)
    if mode == "random":
        rng = np.random.default_rng(seed)
        noise = ta.sym(rng.standard_normal(mask.grid.shape + (3, 3)))
        noise -= (np.trace(noise, axis1=-2, axis2=-1) / 3.0)[..., None, None] * np.eye(3)
        u = u + amplitude * noise * mask.interior[..., None, None]
    elif mode != "radial-melt":
        raise InvalidInput(f"unknown initial mode {mode!r}")
    return _finish(mask, u)


def constant_field(mask: DomainMask, value) -> TensorField:
    value = np.asarray(value, dtype=float)
    m = mask.with_boundary_values(value) if mask.boundary_values is None else mask
    return _finish(m, np.broadcast_to(value, mask.grid.shape + (3, 3)).copy())


def field_from_function(mask: DomainMask, fn) -> TensorField:
    """Sample ``fn(x, y) -> (..., 3, 3)`` at all active cells, boundary included."""
    x, y = mask.grid.centers()
    u = np.asarray(fn(x, y), dtype=float)
    m = mask.with_boundary_values(u)
    return _finish(m, u.copy())


# ---------------------------------------------------------------------------
# energy


def _edge_pairs(mask: DomainMask):
    """Slices of horizontal and vertical edges that enter the Dirichlet sum."""
    act, inn = mask.active, mask.interior
    ex = act[:, :-1] & act[:, 1:] & (inn[:, :-1] | inn[:, 1:])
    ey = act[:-1, :] & act[1:, :] & (inn[:-1, :] | inn[1:, :])
    return ex, ey


def dirichlet_energy(field: TensorField) -> float:
    """``(1/2) sum |u_a - u_b|^2`` over grid edges touching the interior."""
    u = field.u
    ex, ey = _edge_pairs(field.mask)
    dx = (u[:, 1:] - u[:, :-1])[ex]
    dy = (u[1:, :] - u[:-1, :])[ey]
    return 0.5 * (float(np.sum(dx * dx)) + float(np.sum(dy * dy)))


def potential_mass(field: TensorField, eps: float, beta: float | None = None) -> float:
    """``(1/eps^2) * h^2 * sum W`` over interior cells."""
    if not eps > 0:
        raise InvalidInput("eps must be positive")
    w = ta.potential(field.u[field.mask.interior], beta)
    return float(np.sum(w)) * field.grid.h**2 / eps**2


def energy(field: TensorField, eps: float, beta: float | None = None) -> float:
    return dirichlet_energy(field) + potential_mass(field, eps, beta)


def laplacian(field: TensorField) -> np.ndarray:
    """5-point Laplacian at interior cells (zero elsewhere)."""
    u, h = field.u, field.grid.h
    lap = np.zeros_like(u)
    c = u[1:-1, 1:-1]
    lap[1:-1, 1:-1] = (u[2:, 1:-1] + u[:-2, 1:-1] + u[1:-1, 2:] + u[1:-1, :-2] - 4.0 * c) / h**2
    lap[~field.mask.interior] = 0.0
    return lap


def traceless(a: np.ndarray) -> np.ndarray:
    return a - (np.trace(a, axis1=-2, axis2=-1) / 3.0)[..., None, None] * np.eye(3)


def energy_gradient(field: TensorField, eps: float, beta: float | None = None) -> np.ndarray:
    """Per-area gradient ``-lap u + grad W / eps^2`` projected onto trace zero.

    ``h^2 * <G, D>`` summed over cells is the derivative of :func:`energy`
    along any traceless perturbation ``D`` of the interior values.
    """
    if not eps > 0:
        raise InvalidInput("eps must be positive")
    g = -laplacian(field)
    inn = field.mask.interior
    g[inn] += ta.potential_grad(field.u[inn], beta) / eps**2
    g = traceless(ta.sym(g))
    g[~inn] = 0.0
    return g


# ---------------------------------------------------------------------------
# analysis operators


def gradient(values: np.ndarray, valid: np.ndarray, h: float):
    """Centered differences, one-sided at the edge of ``valid``, NaN where undefined."""
    out = []
    for axis in (1, 0):
        fwd = np.full_like(values, np.nan)
        bwd = np.full_like(values, np.nan)
        sl_hi = [slice(None)] * 2
        sl_lo = [slice(None)] * 2
        sl_hi[axis] = slice(1, None)
        sl_lo[axis] = slice(None, -1)
        sl_hi, sl_lo = tuple(sl_hi), tuple(sl_lo)
        diff = (values[sl_hi] - values[sl_lo]) / h
        ok = valid[sl_hi] & valid[sl_lo]
        d = np.where(ok[..., None, None] if values.ndim == 4 else ok, diff, np.nan)
        fwd[sl_lo] = d
        bwd[sl_hi] = d
        cen = 0.5 * (fwd + bwd)
        g = np.where(np.isnan(cen), np.where(np.isnan(fwd), bwd, fwd), cen)
        bad = ~valid
        g[bad] = np.nan
        out.append(g)
    return out[0], out[1]


def field_gradient(field: TensorField):
    """``(du/dx, du/dy)`` at every active cell."""
    return gradient(field.u, field.mask.active, field.grid.h)


def current_field(field: TensorField):
    """Current pair ``([u; u_x], [u; u_y])`` of antisymmetric matrices."""
    ux, uy = field_gradient(field)
    return ta.commutator(field.u, ux), ta.commutator(field.u, uy)


def div_and_curl(pair, h: float, valid: np.ndarray | None = None):
    """Centered divergence and curl ``dF2/dx - dF1/dy`` of a matrix-valued vector field.

    Defined where the cell and its four neighbours are valid (and finite);
    NaN elsewhere.
    """
    f1, f2 = pair
    fin = np.isfinite(f1).all(axis=(-2, -1)) & np.isfinite(f2).all(axis=(-2, -1))
    valid = fin if valid is None else (valid & fin)
    ok = np.zeros_like(valid)
    ok[1:-1, 1:-1] = (valid[1:-1, 1:-1] & valid[2:, 1:-1] & valid[:-2, 1:-1]
                      & valid[1:-1, 2:] & valid[1:-1, :-2])
    div = np.full_like(f1, np.nan)
    curl = np.full_like(f1, np.nan)

    def dx(f):
        return (f[1:-1, 2:] - f[1:-1, :-2]) / (2.0 * h)

    def dy(f):
        return (f[2:, 1:-1] - f[:-2, 1:-1]) / (2.0 * h)

    with np.errstate(invalid="ignore"):
        div[1:-1, 1:-1] = dx(f1) + dy(f2)
        curl[1:-1, 1:-1] = dx(f2) - dy(f1)
    div[~ok] = np.nan
    curl[~ok] = np.nan
    return div, curl



def current_identity_residuals(field: TensorField, r_min: float, r_max: float,
                               center=None) -> tuple[float, float]:
    """L2 norms over an annulus of ``|j|^2 - |grad u|^2`` and ``curl j + 2 [j1; j2]``.

    Both vanish identically for P-valued maps, so on sampled smooth maps they
    measure discretization error.
    """
    ux, uy = field_gradient(field)
    j1, j2 = current_field(field)
    r1 = (ta.frobenius_inner(j1, j1) + ta.frobenius_inner(j2, j2)
          - ta.frobenius_inner(ux, ux) - ta.frobenius_inner(uy, uy))
    _, curl = div_and_curl((j1, j2), field.grid.h, field.mask.active)
    r2 = ta.frobenius_norm(curl + 2.0 * ta.commutator(j1, j2))
    x, y = field.grid.centers()
    cx, cy = field.mask.center if center is None else center
    r = np.hypot(x - cx, y - cy)
    ann = (r > r_min) & (r < r_max) & np.isfinite(r1) & np.isfinite(r2)
    h = field.grid.h
    return float(np.sqrt(np.sum(r1[ann] ** 2)) * h), float(np.sqrt(np.sum(r2[ann] ** 2)) * h)

# ---------------------------------------------------------------------------
# snapshots


def write_snapshot(path, field: TensorField) -> None:
    grid, mask = field.grid, field.mask
    x, y = grid.centers()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SNAPSHOT_HEADER)
        for iy in range(grid.ny):
            for ix in range(grid.nx):
                tag = mask.tags[iy, ix]
                if tag == EXTERIOR:
                    continue
                m = field.u[iy, ix]
                w.writerow([f"{x[iy, ix]:.17g}", f"{y[iy, ix]:.17g}", TAG_NAMES[int(tag)]]
                           + [f"{m[i, j]:.17g}" for i, j in _SYM_INDEX])


def read_snapshot(path):
    """Parse a snapshot CSV into ``(xy[N, 2], tags[N], values[N, 3, 3])``."""
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise SnapshotMismatch(f"cannot read snapshot {path}: {exc}") from exc
    if not rows or rows[0] != SNAPSHOT_HEADER:
        raise SnapshotMismatch(f"{path}: bad or missing header")
    body = rows[1:]
    if not body:
        raise SnapshotMismatch(f"{path}: no data rows")
    xy = np.empty((len(body), 2))
    tags = np.empty(len(body), dtype=np.int8)
    vals = np.empty((len(body), 3, 3))
    for n, row in enumerate(body, start=2):
        if len(row) != len(SNAPSHOT_HEADER):
            raise SnapshotMismatch(f"{path}:{n}: expected {len(SNAPSHOT_HEADER)} fields, got {len(row)}")
        try:
            xy[n - 2] = float(row[0]), float(row[1])
            tags[n - 2] = TAG_CODES[row[2]]
            comps = [float(c) for c in row[3:]]
        except (ValueError, KeyError) as exc:
            raise SnapshotMismatch(f"{path}:{n}: {exc}") from exc
        for (i, j), c in zip(_SYM_INDEX, comps):
            vals[n - 2, i, j] = vals[n - 2, j, i] = c
    return xy, tags, vals


def load_snapshot(path, mask: DomainMask) -> TensorField:
    xy, tags, vals = read_snapshot(path)
    grid = mask.grid
    iy, ix = np.nonzero(mask.active)
    if len(iy) != len(tags):
        raise SnapshotMismatch(f"snapshot has {len(tags)} cells, mask has {len(iy)}")
    x, y = grid.centers()
    if not (np.allclose(xy[:, 0], x[iy, ix], atol=1e-9 * grid.h * grid.nx)
            and np.allclose(xy[:, 1], y[iy, ix], atol=1e-9 * grid.h * grid.ny)):
        raise SnapshotMismatch("snapshot cell centers do not match the grid")
    if not np.array_equal(tags, mask.tags[iy, ix]):
        raise SnapshotMismatch("snapshot tags do not match the mask")
    u = np.zeros(grid.shape + (3, 3))
    u[iy, ix] = vals
    m = mask.with_boundary_values(u)
    return TensorField(m, u)


def mask_from_snapshot(path) -> tuple[DomainMask, TensorField]:
    """Rebuild grid and mask from a snapshot alone (box = extent of active cells)."""
    xy, tags, vals = read_snapshot(path)
    xs, ys = np.unique(xy[:, 0]), np.unique(xy[:, 1])
    h = float(np.median(np.diff(xs))) if xs.size > 1 else 1.0
    nx = int(round((xs[-1] - xs[0]) / h)) + 1
    ny = int(round((ys[-1] - ys[0]) / h)) + 1
    try:
        grid = GridSpec(nx, ny, h, (xs[0] - 0.5 * h, ys[0] - 0.5 * h))
    except TooCoarse as exc:
        raise SnapshotMismatch(f"{path}: {exc}") from exc
    ix = np.rint((xy[:, 0] - xs[0]) / h).astype(int)
    iy = np.rint((xy[:, 1] - ys[0]) / h).astype(int)
    t = np.full(grid.shape, EXTERIOR, dtype=np.int8)
    t[iy, ix] = tags
    if np.count_nonzero(t != EXTERIOR) != len(tags):
        raise SnapshotMismatch(f"{path}: duplicate cell centers")
    # a complete snapshot encloses its interior in a boundary ring
    act = np.pad(t != EXTERIOR, 1)
    closed = act[:-2, 1:-1] & act[2:, 1:-1] & act[1:-1, :-2] & act[1:-1, 2:]
    if not closed[t == INTERIOR].all():
        raise SnapshotMismatch(f"{path}: interior cells touch the exterior (truncated file?)")
    u = np.zeros(grid.shape + (3, 3))
    u[iy, ix] = vals
    inn = t == INTERIOR
    x, y = grid.centers()
    center = (float(x[inn].mean()), float(y[inn].mean()))
    mask = DomainMask(grid, t, center).with_boundary_values(u)
    return mask, TensorField(mask, u)
