import csv

import numpy as np
import pytest

from ldg_defect import checks
from ldg_defect import field as F
from ldg_defect import psi as P
from ldg_defect import tensor_algebra as ta

from conftest import gamma0_field

LAM = np.pi * (np.outer([1, 0, 0], [0, 1, 0]) - np.outer([0, 1, 0], [1, 0, 0]))


def disk(n):
    return F.make_disk_domain(n)


# ---------------------------------------------------------------------------
# components


def test_anti_components_round_trip():
    rng = np.random.default_rng(0)
    m = ta.skew(rng.standard_normal((5, 3, 3)))
    np.testing.assert_allclose(P.anti_matrices(P.anti_components(m)), m, atol=1e-15)
    fld = P.AntiSymField(disk(16)[0], rng.standard_normal((16, 16, 3)), np.ones((16, 16), bool))
    np.testing.assert_allclose(fld.cell_norm(), ta.frobenius_norm(fld.matrices()), atol=1e-14)


# ---------------------------------------------------------------------------
# Neumann Poisson


def test_neumann_zero_data():
    grid, mask = disk(32)
    sol = P.solve_neumann_poisson(np.zeros(grid.shape), np.zeros((4,) + grid.shape), mask)
    assert np.abs(sol.psi[mask.interior]).max() == 0.0
    assert np.isnan(sol.psi[~mask.interior]).all()


def test_neumann_affine_exact():
    grid, mask = disk(40)
    x, y = grid.centers()
    a, b = 0.7, -1.3
    bc = np.stack([-(a * dx + b * dy) * np.ones(grid.shape) for dx, dy in P.DIRS])
    sol = P.solve_neumann_poisson(np.zeros(grid.shape), bc, mask)
    inn = mask.interior
    ex = a * x + b * y
    ex -= ex[inn].mean()
    assert np.abs(sol.psi[inn] - ex[inn]).max() <= 1e-10
    assert abs(float(sol.mismatch)) <= 1e-12


def test_neumann_manufactured_second_order():
    ratios = checks.manufactured_ratios()
    assert np.all((ratios >= 3.5) & (ratios <= 4.5)), ratios


def test_neumann_correction_invariance():
    grid, mask = disk(32)
    rng = np.random.default_rng(1)
    rhs = rng.standard_normal(grid.shape)
    bc = rng.standard_normal((4,) + grid.shape)
    sol = P.solve_neumann_poisson(rhs, bc, mask)
    area = mask.interior.sum() * grid.h ** 2
    fixed = P.solve_neumann_poisson(rhs - sol.mismatch / area, bc, mask)
    assert abs(float(fixed.mismatch)) < 1e-10
    np.testing.assert_allclose(fixed.psi[mask.interior], sol.psi[mask.interior], atol=1e-12)
    assert abs(sol.psi[mask.interior].mean()) < 1e-14


def test_neumann_vector_rhs_matches_components():
    grid, mask = disk(24)
    rng = np.random.default_rng(2)
    rhs = rng.standard_normal(grid.shape + (3,))
    bc = rng.standard_normal((4,) + grid.shape + (3,))
    vec = P.solve_neumann_poisson(rhs, bc, mask)
    for k in range(3):
        one = P.solve_neumann_poisson(rhs[..., k], bc[..., k], mask)
        np.testing.assert_allclose(vec.psi[..., k][mask.interior], one.psi[mask.interior], atol=1e-12)


# ---------------------------------------------------------------------------
# regular part


def test_regular_part_examples():
    grid, mask = disk(32)
    c = (0.013, -0.021)
    j = P.vortex_current(grid, c, LAM)
    v1, v2 = P.regular_part(j, c, LAM, grid)
    assert np.abs(v1).max() == 0 and np.abs(v2).max() == 0
    w1, w2 = P.regular_part(j, c, np.zeros((3, 3)), grid)
    np.testing.assert_array_equal(w1, j[0])
    np.testing.assert_array_equal(w2, j[1])
    # the vortex current is tangential with magnitude |Lambda| / (2 pi r)
    x, y = grid.centers()
    r = np.hypot(x - c[0], y - c[1])
    mag = np.sqrt(ta.frobenius_inner(j[0], j[0]) + ta.frobenius_inner(j[1], j[1]))
    np.testing.assert_allclose(mag, np.pi * np.sqrt(2) / (2 * np.pi * r), rtol=1e-12)


def test_edge_vortex_is_exact_angle():
    grid, mask = disk(16)
    edges = P.cell_edges(mask)
    inc = P.edge_vortex(grid, edges, (0.01, 0.02), LAM)
    # each plaquette carries Lambda if it encloses the center and 0 otherwise;
    # the outer boundary corners hold the compensating -Lambda
    q = P.corner_charge(grid, edges, inc)
    cx, cy = P.corner_coords(grid)
    inner = np.hypot(cx, cy) < 0.5
    hot = np.abs(q).sum(axis=-1) > 1e-12
    assert np.sum(hot & inner) == 1
    np.testing.assert_allclose(P.anti_matrices(q[inner].sum(axis=0)), LAM, atol=1e-12)
    np.testing.assert_allclose(q.reshape(-1, 3).sum(axis=0), 0.0, atol=1e-12)
    with pytest.raises(ValueError):
        P.edge_vortex(grid, edges, (0.5 * grid.h, 0.0), LAM)


def test_lattice_circulation_of_vortex():
    grid, mask = disk(48)
    fld = gamma0_field(mask, center=(0.011, 0.007))
    lam = P.lattice_circulation(fld, (0.011, 0.007), 0.5)
    np.testing.assert_allclose(lam.matrix(), LAM, atol=1e-12)


# ---------------------------------------------------------------------------
# diagnostics


def test_cmc_residual_matches_analytic():
    grid, mask = disk(128)
    x, y = grid.centers()
    center = (0.05, -0.03)
    lam = ta.skew(np.array([[0, 1.0, 0.4], [0, 0, -0.7], [0, 0, 0]])) * 2

    a = np.sin(x + 2 * y)
    ax, ay, alap = np.cos(x + 2 * y), 2 * np.cos(x + 2 * y), -5 * np.sin(x + 2 * y)
    b = x * x * y
    bx, by, blap = 2 * x * y, x * x, 2 * y
    comps = np.stack([a, b, np.zeros_like(a)], axis=-1)
    psi = P.AntiSymField(grid, comps, mask.interior.copy())
    got = P.cmc_residual(psi, center, lam)

    def anti(p, q):
        return P.anti_matrices(np.stack([p, q, np.zeros_like(p)], axis=-1))
    px, py, pl = anti(ax, bx), anti(ay, by), anti(alap, blap)
    r = np.hypot(x - center[0], y - center[1])
    tx, ty = -(y - center[1]) / r, (x - center[0]) / r
    dth = px * tx[..., None, None] + py * ty[..., None, None]
    want = pl - 2 * ta.commutator(px, py) - ta.commutator(dth, lam) / (np.pi * r)[..., None, None]
    ok = np.isfinite(got).all(axis=(-2, -1)) & (r > 0.1)
    assert ok.sum() > 0.5 * mask.interior.sum()
    assert np.abs(got[ok] - want[ok]).max() < 2e-3


def test_z_field():
    grid, mask = disk(32)
    fld = gamma0_field(mask)
    z = P.z_field(fld.u, grid, (0.0, 0.0), LAM)
    assert np.abs(z[mask.interior]).max() < 1e-12
    iso = np.broadcast_to(np.eye(3) / 3, grid.shape + (3, 3))
    z = P.z_field(iso, grid, (0.0, 0.0), LAM)
    x, y = grid.centers()
    r = np.hypot(x, y)
    np.testing.assert_allclose(z, (LAM / 3) / (2 * np.pi * r)[..., None, None], rtol=1e-12)


@pytest.mark.parametrize("center", [(0.0, 0.0), (0.0123, -0.0311)])
def test_recover_psi_of_exact_vortex(center):
    grid, mask = disk(64)
    fld = gamma0_field(mask, center=center)
    rep = P.recover_psi(fld, center, LAM)
    assert rep.sup_norm < 1e-12
    assert rep.cmc_residual_l1 < 1e-10
    assert rep.compat_mismatch < 1e-12
    assert rep.z_l2 < 1e-10
    assert abs(rep.psi.comps[mask.interior].mean()) < 1e-15


def test_recover_psi_is_equivariant():
    grid, mask = disk(48)
    rot = ta.rotation_from_euler(0.4, 0.8, -0.6)
    fld = gamma0_field(mask, rot=rot)
    rep = P.recover_psi(fld, (0.0, 0.0), rot @ LAM @ rot.T)
    assert rep.sup_norm < 1e-12 and rep.compat_mismatch < 1e-12


def test_recover_psi_rejects_unknown_current():
    grid, mask = disk(24)
    with pytest.raises(ValueError):
        P.recover_psi(gamma0_field(mask), (0.0, 0.0), LAM, current="bogus")


def test_psi_of_converged_field(sweep96, tmp_path):
    fld = sweep96[-1].field
    rep = P.analyze_psi(fld, 1 / 32)
    assert rep.lam[0, 1] == pytest.approx(np.pi, rel=1e-6)
    assert rep.compat_mismatch < 1e-9
    for v in (rep.div_residual, rep.cmc_residual_l1, rep.sup_norm, rep.z_l2):
        assert np.isfinite(v) and v >= 0
    np.testing.assert_allclose(rep.psi.comps[fld.mask.interior].mean(axis=0), 0.0, atol=1e-15)
    rep.write_csv(tmp_path / "psi.csv")
    rep.psi.write_csv(tmp_path / "psi_field.csv")
    with open(tmp_path / "psi.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == P.PSI_CSV_HEADER and len(rows) == 2
    with open(tmp_path / "psi_field.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == P.PSI_SNAPSHOT_HEADER
    assert len(rows) - 1 == fld.mask.interior.sum()


def test_div_residual_decreases_with_h(small_solution, sweep96):
    coarse = P.analyze_psi(small_solution.field, 0.125)
    fine = P.analyze_psi(sweep96[1].field, 0.125)
    assert sweep96[1].final_eps == 0.125
    assert fine.div_residual < coarse.div_residual


def test_raw_current_keeps_the_core():
    # the raw current of an eps-core is not P-valued; its psi is far from zero
    _, mask = disk(48)
    from conftest import melt_field
    fld = melt_field(mask, (0.0, 0.0), width=0.2)
    proj = P.recover_psi(fld, (0.0, 0.0), LAM, current="projected")
    raw_lam = P.lattice_circulation(fld, (0.0, 0.0), 0.5, "raw").matrix()
    raw = P.recover_psi(fld, (0.0, 0.0), raw_lam, current="raw")
    assert proj.sup_norm < 1e-12
    assert raw.sup_norm > 1e-3
