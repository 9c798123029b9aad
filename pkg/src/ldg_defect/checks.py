"""Oracle suites shared by the ``selftest`` command and the test-suite.

Each check returns a :class:`Check` holding the measured error, the
tolerance it is compared with and a short description.  ``tol_scale``
multiplies every tolerance (a hook for exercising the failure path).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import optimize

from . import field as F
from . import psi as P
from . import tensor_algebra as ta

L0 = np.sqrt(2.0) * np.pi
A0_12 = 1.0 / (4.0 * np.pi)


@dataclass(frozen=True)
class Check:
    name: str
    value: float
    tol: float
    detail: str = ""

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.value) and self.value <= self.tol)

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status}  {self.name:<28} {self.value:11.3e} <= {self.tol:9.2e}  {self.detail}"


def random_f1(rng: np.random.Generator, n: int, low: float = -1.0, high: float = 2.0) -> np.ndarray:
    """Trace-one symmetric matrices with a random frame and eigenvalues in ``[low, high]``."""
    out = np.empty((n, 3, 3))
    for i in range(n):
        while True:
            a, b = rng.uniform(low, high, 2)
            c = 1.0 - a - b
            if low <= c <= high:
                break
        r = ta.random_rotation(rng)
        out[i] = r @ np.diag([a, b, c]) @ r.T
    return out


def random_projection(rng: np.random.Generator, n: int) -> np.ndarray:
    v = rng.standard_normal((n, 3))
    v /= np.linalg.norm(v, axis=-1, keepdims=True)
    return v[:, :, None] * v[:, None, :]


# ---------------------------------------------------------------------------


def check_simplex_oracle(n: int = 2000, seed: int = 1, tol_scale: float = 1.0) -> Check:
    """Closed-form simplex projection vs the sort-and-threshold projection."""
    rng = np.random.default_rng(seed)
    lam = ta.eigvals_desc(random_f1(rng, n))
    fast = ta.simplex_project(lam, check=False)
    ref = np.array([ta.simplex_project_sorted(v) for v in lam])
    return Check("simplex vs sorted oracle", float(np.abs(fast - ref).max()), 1e-8 * tol_scale,
                 f"{n} triples")


def check_simplex_qp(n: int = 25, seed: int = 2, tol_scale: float = 1.0) -> Check:
    """Closed-form simplex projection vs a generic constrained least-squares solve."""
    rng = np.random.default_rng(seed)
    lam = ta.eigvals_desc(random_f1(rng, n))
    err = 0.0
    for v in lam:
        res = optimize.minimize(lambda x: 0.5 * np.sum((x - v) ** 2), np.full(3, 1 / 3),
                                jac=lambda x: x - v, method="SLSQP", bounds=[(0, None)] * 3,
                                constraints=[{"type": "eq", "fun": lambda x: x.sum() - 1.0,
                                              "jac": lambda x: np.ones(3)}],
                                options={"ftol": 1e-14, "maxiter": 200})
        err = max(err, float(np.abs(res.x - ta.simplex_project(v)).max()))
    return Check("simplex vs QP solver", err, 1e-6 * tol_scale, f"{n} triples")


def check_eigen(n: int = 10_000, seed: int = 3, tol_scale: float = 1.0) -> Check:
    """Reconstruction error of the closed-form 3x3 eigen-decomposition."""
    rng = np.random.default_rng(seed)
    u = random_f1(rng, n)
    # a few exactly repeated spectra exercise the fallback path
    for i in range(n // 20):
        r = ta.random_rotation(rng)
        u[i] = r @ np.diag([0.5, 0.5, 0.0]) @ r.T
    err = 0.0
    for m in u:
        es = ta.eigen_sym3(m)
        err = max(err, float(np.abs(es.reconstruct() - m).max()))
    return Check("eigen reconstruction", err, 1e-10 * tol_scale, f"{n} matrices")


def check_grad_wbeta(n: int = 1000, seed: int = 4, betas=(2.0, 3.0, 5.5),
                     tol_scale: float = 1.0) -> Check:
    """Directional derivative of ``W_beta`` against central differences."""
    rng = np.random.default_rng(seed)
    u = random_f1(rng, n, -0.5, 1.5)
    d = ta.sym(rng.standard_normal((n, 3, 3)))
    d -= (np.trace(d, axis1=-2, axis2=-1) / 3.0)[:, None, None] * np.eye(3)
    d /= ta.frobenius_norm(d)[:, None, None]
    step = 1e-5
    worst = 0.0
    for beta in betas:
        exact = ta.frobenius_inner(ta.grad_wbeta(u, beta), d)
        fd = (ta.potential_wbeta(u + step * d, beta) - ta.potential_wbeta(u - step * d, beta)) / (2 * step)
        rel = np.abs(fd - exact) / np.maximum(np.abs(exact), 1e-3)
        worst = max(worst, float(rel.max()))
    return Check("grad W_beta vs differences", worst, 1e-6 * tol_scale,
                 f"{n} cases x beta in {tuple(betas)}")


def check_minimal_rotation(n: int = 1000, seed: int = 5, tol_scale: float = 1.0) -> Check:
    """``R a R^T = b`` for random non-perpendicular pairs of projections."""
    rng = np.random.default_rng(seed)
    err = 0.0
    done = 0
    while done < n:
        a, b = random_projection(rng, 2)
        if ta.frobenius_inner(a, b) <= 1e-3:
            continue
        r = ta.minimal_rotation(a, b)
        err = max(err, float(np.abs(r @ a @ r.T - b).max()))
        done += 1
    return Check("minimal rotation", err, 1e-8 * tol_scale, f"{n} pairs")


def geodesic_l0(samples: int = 1024) -> float:
    t = 2.0 * np.pi * np.arange(samples) / samples
    return ta.geodesic_length(t, ta.geodesic_gamma0(t))


def check_geodesic_length(tol_scale: float = 1.0) -> Check:
    est = geodesic_l0()
    return Check("geodesic length L0", abs(est - L0), 1e-3 * tol_scale,
                 f"L0 = {est:.6f} (sqrt(2) pi = {L0:.6f})")


def check_antisym_rep(tol_scale: float = 1.0) -> Check:
    t = 2.0 * np.pi * np.arange(256) / 256
    rep, _ = ta.antisym_rep(t, ta.geodesic_gamma0(t))
    m = rep.matrix()
    want = np.zeros((3, 3))
    want[0, 1], want[1, 0] = A0_12, -A0_12
    return Check("antisymmetric rep A0", float(np.abs(m - want).max()), 1e-3 * tol_scale,
                 f"A0_12 = {m[0, 1]:.6f} (1/4pi = {A0_12:.6f})")


# ---------------------------------------------------------------------------
# manufactured Poisson problem


def _mms_psi(x, y):
    return np.sin(2 * x + 1) * np.cos(3 * y) + x * y * y


def _mms_grad(x, y):
    return (2 * np.cos(2 * x + 1) * np.cos(3 * y) + y * y,
            -3 * np.sin(2 * x + 1) * np.sin(3 * y) + 2 * x * y)


def _mms_lap(x, y):
    return -13 * np.sin(2 * x + 1) * np.cos(3 * y) + 2 * x


def manufactured_error(n: int) -> float:
    """Max error of the Neumann solver on the unit disk for a smooth exact solution."""
    grid, mask = F.make_disk_domain(n, 1.0)
    x, y = grid.centers()
    h = grid.h
    bc = []
    for dx, dy in P.DIRS:
        gx, gy = _mms_grad(x + 0.5 * dx * h, y + 0.5 * dy * h)
        bc.append(-(gx * dx + gy * dy))
    sol = P.solve_neumann_poisson(_mms_lap(x, y), np.stack(bc), mask)
    inn = mask.interior
    ex = _mms_psi(x, y)
    ex = ex - ex[inn].mean()
    return float(np.abs(sol.psi[inn] - ex[inn]).max())


def manufactured_ratios(sizes=(32, 64, 128)) -> np.ndarray:
    err = np.array([manufactured_error(n) for n in sizes])
    return err[:-1] / err[1:]


def check_manufactured_poisson(tol_scale: float = 1.0) -> Check:
    ratios = manufactured_ratios()
    # distance of the worst ratio from the second-order value 4, allowed 0.5
    dev = float(np.abs(ratios - 4.0).max())
    return Check("manufactured Poisson order", dev, 0.5 * tol_scale,
                 "error ratios " + ", ".join(f"{r:.3f}" for r in ratios))


SUITES = (check_simplex_oracle, check_simplex_qp, check_eigen, check_grad_wbeta,
          check_minimal_rotation, check_geodesic_length, check_antisym_rep,
          check_manufactured_poisson)


def run_all(tol_scale: float = 1.0) -> list[Check]:
    return [fn(tol_scale=tol_scale) for fn in SUITES]
