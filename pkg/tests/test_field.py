import numpy as np
import pytest
from scipy import integrate

from ldg_defect import field as F
from ldg_defect import tensor_algebra as ta
from ldg_defect.errors import EvenWinding, InvalidInput, SnapshotMismatch, TooCoarse

from conftest import gamma0_field


def disk(n, **bd):
    _, mask = F.make_disk_domain(n)
    return F.apply_boundary(mask, F.BoundaryData(**bd))


# ---------------------------------------------------------------------------
# domains


def test_disk_area_count():
    grid, mask = F.make_disk_domain(64)
    assert grid.shape == (64, 64)
    assert mask.interior.sum() == pytest.approx(np.pi / grid.h ** 2, rel=0.05)


@pytest.mark.parametrize("n", [16, 17, 40])
def test_disk_mask_invariants(n):
    from scipy import ndimage
    grid, mask = F.make_disk_domain(n)
    assert mask.interior.any()
    _, ncomp = ndimage.label(mask.interior)
    assert ncomp == 1
    act = np.pad(mask.active, 1)
    nb = act[:-2, 1:-1] & act[2:, 1:-1] & act[1:-1, :-2] & act[1:-1, 2:]
    assert nb[mask.interior].all()
    x, y = grid.centers()
    r = np.hypot(x, y)
    np.testing.assert_array_equal(mask.interior, r < 1 - grid.h / 2)


def test_disk_degenerate_inputs():
    with pytest.raises(TooCoarse):
        F.make_disk_domain(15)
    with pytest.raises(TooCoarse):
        F.make_disk_domain(32, radius=2.0, half_width=1.0)
    grid = F.GridSpec(16, 16, 0.1, (0.0, 0.0))
    with pytest.raises(TooCoarse):
        F.mask_from_interior(grid, np.zeros(grid.shape, bool), (0.8, 0.8))


def test_boundary_values():
    n = 65
    mask = disk(n)
    x, y = mask.grid.centers()
    b = mask.boundary & (np.abs(y) < 1e-12) & (x > 0)
    assert b.sum() == 1
    np.testing.assert_allclose(mask.boundary_values[b][0], np.diag([1.0, 0, 0]), atol=1e-15)
    bv = mask.boundary_values[mask.boundary]
    np.testing.assert_allclose(bv @ bv, bv, atol=1e-12)
    shifted = disk(n, phase=np.pi)
    np.testing.assert_allclose(shifted.boundary_values[b][0], 0.5 * (np.eye(3) + np.diag([-1.0, 1, -1])),
                               atol=1e-15)
    with pytest.raises(EvenWinding):
        disk(n, k=2)


def test_boundary_frame():
    rot = ta.rotation_from_euler(0.3, 0.9, -1.2)
    plain, framed = disk(32), disk(32, frame=rot)
    sel = plain.boundary
    np.testing.assert_allclose(framed.boundary_values[sel], rot @ plain.boundary_values[sel] @ rot.T,
                               atol=1e-14)


# ---------------------------------------------------------------------------
# initial fields


def test_radial_melt():
    mask = disk(65)
    fld = F.initial_field(mask)
    x, y = mask.grid.centers()
    c = (np.abs(x) < 1e-12) & (np.abs(y) < 1e-12)
    np.testing.assert_allclose(fld.u[c][0], np.eye(3) / 3, atol=1e-15)
    np.testing.assert_allclose(np.trace(fld.u[mask.active], axis1=1, axis2=2), 1.0, atol=1e-14)
    np.testing.assert_array_equal(fld.u[mask.boundary], mask.boundary_values[mask.boundary])
    # cells next to the boundary ring stay close to the nearest boundary value
    h = mask.grid.h
    act = np.pad(mask.boundary, 1)
    near = mask.interior & (act[:-2, 1:-1] | act[2:, 1:-1] | act[1:-1, :-2] | act[1:-1, 2:])
    iy, ix = np.nonzero(near)
    by, bx = np.nonzero(mask.boundary)
    for j, i in zip(iy, ix):
        k = np.argmin(np.hypot(bx - i, by - j))
        d = ta.frobenius_norm(fld.u[j, i] - fld.u[by[k], bx[k]])
        assert d <= 2 * h


def test_random_initial_is_seeded():
    mask = disk(32)
    a = F.initial_field(mask, "random", seed=3)
    b = F.initial_field(mask, "random", seed=3)
    c = F.initial_field(mask, "random", seed=4)
    np.testing.assert_array_equal(a.u, b.u)
    assert np.abs(a.u - c.u).max() > 0
    np.testing.assert_allclose(np.trace(a.u[mask.active], axis1=1, axis2=2), 1.0, atol=1e-14)
    np.testing.assert_allclose(a.u, np.swapaxes(a.u, -1, -2))
    with pytest.raises(InvalidInput):
        F.initial_field(mask, "bogus")


def test_snapshot_round_trip(tmp_path):
    mask = disk(24)
    fld = F.initial_field(mask, "random", seed=1)
    p = tmp_path / "s.csv"
    F.write_snapshot(p, fld)
    lines = p.read_text().splitlines()
    assert lines[0] == "x,y,tag,u_xx,u_xy,u_xz,u_yy,u_yz,u_zz"
    assert len(lines) - 1 == mask.active.sum()
    back = F.initial_field(mask, "snapshot", snapshot=p)
    np.testing.assert_array_equal(back.u, fld.u)
    mask2, fld2 = F.mask_from_snapshot(p)
    np.testing.assert_array_equal(mask2.tags[mask2.active], mask.tags[mask.active])
    np.testing.assert_array_equal(fld2.u[mask2.active], fld.u[mask.active])
    assert mask2.grid.h == pytest.approx(mask.grid.h)


def test_snapshot_mismatch(tmp_path):
    p = tmp_path / "s.csv"
    F.write_snapshot(p, F.initial_field(disk(24)))
    with pytest.raises(SnapshotMismatch):
        F.initial_field(disk(32), "snapshot", snapshot=p)
    lines = p.read_text().splitlines()
    bad = tmp_path / "bad.csv"
    bad.write_text("\n".join(lines[:5] + ["1,2,interior,0"]) + "\n")
    with pytest.raises(SnapshotMismatch):
        F.read_snapshot(bad)
    trunc = tmp_path / "trunc.csv"
    trunc.write_text("\n".join(lines[: len(lines) // 2]) + "\n")
    with pytest.raises(SnapshotMismatch):
        F.mask_from_snapshot(trunc)
    with pytest.raises(SnapshotMismatch):
        F.read_snapshot(tmp_path / "missing.csv")


# ---------------------------------------------------------------------------
# energy


def test_energy_of_constant_projection():
    _, mask = F.make_disk_domain(32)
    p = np.diag([0.0, 0.0, 1.0])
    assert F.energy(F.constant_field(mask, p), 0.1) == 0.0


def test_energy_of_vortex_on_annulus():
    n, r0 = 256, 0.2
    grid, _ = F.make_disk_domain(n)
    x, y = grid.centers()
    r = np.hypot(x, y)
    inner = (r > r0 + grid.h / 2) & (r < 1 - grid.h / 2)
    mask = F.mask_from_interior(grid, inner, (0.0, 0.0))
    fld = gamma0_field(mask)
    assert F.energy(fld, 0.1) == pytest.approx(np.pi / 2 * np.log(1 / r0), rel=0.05)


def test_projection_lowers_energy():
    mask = disk(32)
    for seed in range(3):
        fld = F.initial_field(mask, "random", seed=seed, amplitude=0.6)
        v = fld.u.copy()
        v[mask.interior] = ta.project_sigma(fld.u[mask.interior])
        proj = F.TensorField(mask, v)
        for beta in (None, 3.0):
            assert F.energy(proj, 0.2, beta) <= F.energy(fld, 0.2, beta)


def test_energy_conjugation_invariance():
    mask = disk(32)
    fld = F.initial_field(mask, "random", seed=5, amplitude=0.3)
    rot = ta.rotation_from_euler(0.4, 1.3, 2.2)
    e0, e1 = F.energy(fld, 0.15), F.energy(fld.conjugate(rot), 0.15)
    assert abs(e1 - e0) <= 1e-10 * e0


def _bump(R=0.5, a=1.2):
    def phi(r):
        s = np.clip(1 - (r / R) ** 2, 0, None)
        return a * s ** 3

    def dphi(r):
        s = np.clip(1 - (r / R) ** 2, 0, None)
        return a * 3 * s ** 2 * (-2 * r / R ** 2)
    return phi, dphi


def test_energy_quadrature_is_second_order():
    # u = gamma0(phi(r)) with a compactly supported phi: |grad u|^2 = |phi'|^2 / 2
    phi, dphi = _bump()
    exact = integrate.quad(lambda r: 0.25 * dphi(r) ** 2 * 2 * np.pi * r, 0, 0.5, epsabs=1e-14)[0]
    errs = []
    for n in (64, 128, 256):
        _, mask = F.make_disk_domain(n)
        fld = F.field_from_function(mask, lambda x, y: ta.geodesic_gamma0(phi(np.hypot(x, y))))
        errs.append(abs(F.dirichlet_energy(fld) - exact))
    ratios = np.array(errs[:-1]) / np.array(errs[1:])
    assert np.all(ratios > 3.5), ratios


def test_energy_gradient():
    mask = disk(24)
    p = F.constant_field(F.make_disk_domain(24)[1], np.diag([1.0, 0, 0]))
    np.testing.assert_allclose(F.energy_gradient(p, 0.1), 0.0, atol=1e-12)

    fld = F.initial_field(mask, "random", seed=2, amplitude=0.2)
    eps = 0.2
    g = F.energy_gradient(fld, eps)
    np.testing.assert_allclose(np.trace(g, axis1=-2, axis2=-1), 0.0, atol=1e-12)
    assert np.all(g[~mask.interior] == 0)
    h2 = mask.grid.h ** 2
    rng = np.random.default_rng(9)
    worst = 0.0
    for _ in range(20):
        d = F.traceless(ta.sym(rng.standard_normal(fld.u.shape)))
        d[~mask.interior] = 0.0
        s = 1e-6
        ep = F.energy(F.TensorField(mask, fld.u + s * d), eps)
        em = F.energy(F.TensorField(mask, fld.u - s * d), eps)
        fd = (ep - em) / (2 * s)
        exact = h2 * float(np.sum(g * d))
        worst = max(worst, abs(fd - exact) / abs(exact))
    assert worst <= 1e-5


def test_potential_mass_scaling():
    mask = disk(24)
    fld = F.initial_field(mask)
    assert F.potential_mass(fld, 0.05) == pytest.approx(4 * F.potential_mass(fld, 0.1))
    with pytest.raises(InvalidInput):
        F.potential_mass(fld, 0.0)


# ---------------------------------------------------------------------------
# analysis operators


def test_current_of_constant_field():
    _, mask = F.make_disk_domain(24)
    j1, j2 = F.current_field(F.constant_field(mask, np.diag([1.0, 0, 0])))
    assert np.nanmax(np.abs(j1)) == 0 and np.nanmax(np.abs(j2)) == 0
    d, c = F.div_and_curl((j1, j2), 0.1)
    assert np.nanmax(np.abs(d)) == 0 and np.nanmax(np.abs(c)) == 0


def test_current_identities_second_order():
    res = []
    for n in (64, 128, 256):
        _, mask = F.make_disk_domain(n)
        res.append(F.current_identity_residuals(gamma0_field(mask), 0.3, 0.7))
    res = np.array(res)
    ratios = res[:-1] / res[1:]
    assert np.all(ratios >= 3.5), ratios


def test_current_conjugation():
    _, mask = F.make_disk_domain(32)
    rot = ta.rotation_from_euler(1.0, 0.5, -0.3)
    j = F.current_field(gamma0_field(mask))
    jr = F.current_field(gamma0_field(mask, rot=rot))
    inn = mask.interior
    for a, b in zip(j, jr):
        np.testing.assert_allclose(b[inn], rot @ a[inn] @ rot.T, atol=1e-12)


def test_curl_of_gradient_pair():
    def grad(x, y):
        gx = np.zeros(x.shape + (3, 3))
        gy = np.zeros(x.shape + (3, 3))
        gx[..., 0, 1] = 2 * np.cos(2 * x) * np.cos(y)
        gy[..., 0, 1] = -np.sin(2 * x) * np.sin(y)
        gx[..., 1, 2] = 0.5 * y * np.exp(0.5 * x * y)
        gy[..., 1, 2] = 0.5 * x * np.exp(0.5 * x * y)
        return gx, gy

    errs = []
    for n in (32, 64, 128):
        grid, mask = F.make_disk_domain(n)
        x, y = grid.centers()
        _, curl = F.div_and_curl(grad(x, y), grid.h, mask.interior)
        errs.append(np.nanmax(np.abs(curl)))
    ratios = np.array(errs[:-1]) / np.array(errs[1:])
    assert np.all(ratios > 3.5), ratios
