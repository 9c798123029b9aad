"""Matrix geometry of symmetric trace-one 3x3 tensors.

Everything here works on plain ``numpy`` arrays of shape ``(..., 3, 3)``
unless noted; the small dataclasses below are storage helpers for
reports and CSV output.

Sets used throughout:

* ``F1``    symmetric 3x3 matrices with trace one,
* ``P``     rank-one orthogonal projections (``A @ A == A``, trace one),
* ``Sigma`` convex hull of ``P`` inside ``F1`` (eigenvalues in [0, 1]).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateTop, InvalidInput, PerpendicularPair

I3 = np.eye(3)

GAP_THRESHOLD = 1e-8
PERP_THRESHOLD = 1e-6


@dataclass(frozen=True)
class SymTensor3:
    xx: float
    xy: float
    xz: float
    yy: float
    yz: float
    zz: float

    @classmethod
    def from_matrix(cls, m) -> "SymTensor3":
        m = np.asarray(m, dtype=float)
        s = 0.5 * (m + m.T)
        return cls(s[0, 0], s[0, 1], s[0, 2], s[1, 1], s[1, 2], s[2, 2])

    def matrix(self) -> np.ndarray:
        return np.array([[self.xx, self.xy, self.xz],
                         [self.xy, self.yy, self.yz],
                         [self.xz, self.yz, self.zz]])

    def trace(self) -> float:
        return self.xx + self.yy + self.zz

    def __array__(self, dtype=None, copy=None):
        m = self.matrix()
        return m if dtype is None else m.astype(dtype)


@dataclass(frozen=True)
class AntiSymTensor3:
    a12: float
    a13: float
    a23: float

    @classmethod
    def from_matrix(cls, m) -> "AntiSymTensor3":
        m = np.asarray(m, dtype=float)
        a = 0.5 * (m - m.T)
        return cls(a[0, 1], a[0, 2], a[1, 2])

    def matrix(self) -> np.ndarray:
        return np.array([[0.0, self.a12, self.a13],
                         [-self.a12, 0.0, self.a23],
                         [-self.a13, -self.a23, 0.0]])

    def norm(self) -> float:
        """Frobenius norm of the full antisymmetric matrix."""
        return float(np.sqrt(2.0 * (self.a12**2 + self.a13**2 + self.a23**2)))

    def __array__(self, dtype=None, copy=None):
        m = self.matrix()
        return m if dtype is None else m.astype(dtype)


@dataclass(frozen=True)
class EigenSystem:
    """Descending spectral decomposition; ``vectors[:, i]`` pairs with ``values[i]``."""

    values: np.ndarray
    vectors: np.ndarray

    @property
    def lambda1(self) -> float:
        return float(self.values[0])

    @property
    def lambda2(self) -> float:
        return float(self.values[1])

    @property
    def lambda3(self) -> float:
        return float(self.values[2])

    def reconstruct(self) -> np.ndarray:
        return (self.vectors * self.values) @ self.vectors.T


# ---------------------------------------------------------------------------
# products


def frobenius_inner(a, b) -> np.ndarray:
    """``tr(a^T b)`` over the trailing 3x3 axes."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return np.einsum("...ij,...ij->...", a, b)


def frobenius_norm(a) -> np.ndarray:
    return np.sqrt(frobenius_inner(a, a))


def commutator(a, b) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return a @ b - b @ a


def sym(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    return 0.5 * (a + np.swapaxes(a, -1, -2))


def skew(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    return 0.5 * (a - np.swapaxes(a, -1, -2))


# ---------------------------------------------------------------------------
# eigen-decomposition


def _jacobi_eigh(a: np.ndarray, max_sweeps: int = 50):
    a = np.array(a, dtype=float)
    v = np.eye(3)
    scale = max(np.abs(a).max(), 1e-300)
    for _ in range(max_sweeps):
        off = a[0, 1] ** 2 + a[0, 2] ** 2 + a[1, 2] ** 2
        if off <= (1e-18 * scale) ** 2:
            break
        for p, q in ((0, 1), (0, 2), (1, 2)):
            # negligible entries would overflow theta and change nothing
            if abs(a[p, q]) <= 1e-18 * scale:
                continue
            theta = (a[q, q] - a[p, p]) / (2.0 * a[p, q])
            if theta == 0.0:
                t = 1.0
            elif abs(theta) > 1e150:
                t = 0.5 / theta
            else:
                t = np.sign(theta) / (abs(theta) + np.sqrt(theta * theta + 1.0))
            c = 1.0 / np.sqrt(t * t + 1.0)
            s = t * c
            rot = np.eye(3)
            rot[p, p] = rot[q, q] = c
            rot[p, q] = s
            rot[q, p] = -s
            a = rot.T @ a @ rot
            v = v @ rot
    return np.diag(a).copy(), v


def _null_vector(m: np.ndarray) -> np.ndarray:
    """Unit vector spanning the kernel of a rank-2 symmetric 3x3 matrix."""
    r0, r1, r2 = m
    cands = (np.cross(r0, r1), np.cross(r0, r2), np.cross(r1, r2))
    norms = [np.dot(c, c) for c in cands]
    best = cands[int(np.argmax(norms))]
    return best / np.sqrt(max(norms))


def _fix_sign(v: np.ndarray) -> np.ndarray:
    k = int(np.argmax(np.abs(v)))
    return v if v[k] >= 0 else -v


def eigen_sym3(u, rel_gap: float = 1e-5) -> EigenSystem:
    """Descending eigen-decomposition of one symmetric 3x3 matrix.

    Eigenvalues come from the trigonometric solution of the characteristic
    cubic and eigenvectors from cross products of rows of ``u - lambda I``.
    Near-repeated roots make both steps ill-conditioned, so whenever the
    smallest eigenvalue gap falls below ``rel_gap`` times the spectral scale
    the routine switches to cyclic Jacobi rotations.
    """
    a = sym(u)
    q = np.trace(a) / 3.0
    p1 = a[0, 1] ** 2 + a[0, 2] ** 2 + a[1, 2] ** 2
    d = np.diag(a) - q
    p2 = float(np.dot(d, d) + 2.0 * p1)
    p = np.sqrt(p2 / 6.0)
    scale = max(np.abs(a).max(), 1e-300)
    if p <= 1e-14 * scale:
        return EigenSystem(np.full(3, q), np.eye(3))

    b = (a - q * I3) / p
    det = (b[0, 0] * (b[1, 1] * b[2, 2] - b[1, 2] * b[2, 1])
           - b[0, 1] * (b[1, 0] * b[2, 2] - b[1, 2] * b[2, 0])
           + b[0, 2] * (b[1, 0] * b[2, 1] - b[1, 1] * b[2, 0]))
    r = np.clip(det / 2.0, -1.0, 1.0)
    phi = np.arccos(r) / 3.0
    l1 = q + 2.0 * p * np.cos(phi)
    l3 = q + 2.0 * p * np.cos(phi + 2.0 * np.pi / 3.0)
    l2 = 3.0 * q - l1 - l3

    if min(l1 - l2, l2 - l3) < rel_gap * p:
        vals, vecs = _jacobi_eigh(a)
        order = np.argsort(vals)[::-1]
        vals = vals[order]
        vecs = vecs[:, order]
        vecs = np.column_stack([_fix_sign(vecs[:, i]) for i in range(3)])
        return EigenSystem(vals, vecs)

    e1 = _fix_sign(_null_vector(a - l1 * I3))
    e3 = _fix_sign(_null_vector(a - l3 * I3))
    # re-orthogonalise e3 against e1 before completing the frame
    e3 = e3 - np.dot(e3, e1) * e1
    e3 /= np.linalg.norm(e3)
    e2 = _fix_sign(np.cross(e3, e1))
    vecs = np.column_stack([e1, e2, e3])
    vals = np.array([l1, l2, l3])
    # Rayleigh quotients are more accurate than the trig roots for the extremes
    vals = np.einsum("ji,jk,ki->i", vecs, a, vecs)
    return EigenSystem(vals, vecs)


def eigh_desc(u):
    """Batched descending eigen-decomposition (LAPACK) for ``(..., 3, 3)`` input.

    Returns ``(values[..., 3], vectors[..., 3, 3])`` with columns as vectors.
    """
    vals, vecs = np.linalg.eigh(sym(u))
    return vals[..., ::-1], vecs[..., ::-1]


def _eig(u):
    u = np.asarray(u, dtype=float)
    if u.shape == (3, 3):
        es = eigen_sym3(u)
        return es.values, es.vectors
    return eigh_desc(u)


def eigvals_desc(u) -> np.ndarray:
    return np.linalg.eigvalsh(sym(u))[..., ::-1]


# ---------------------------------------------------------------------------
# potentials


def invariant_i2(u) -> np.ndarray:
    """``(1 - tr u^2) / 2``; equals the second elementary invariant on F1."""
    return 0.5 * (1.0 - frobenius_inner(u, u))


def invariant_i3(u) -> np.ndarray:
    return np.linalg.det(np.asarray(u, dtype=float))


def potential_w(u) -> np.ndarray:
    """``W(u) = tr((u - u^2)^2) / 2``."""
    u = np.asarray(u, dtype=float)
    q = u - u @ u
    return 0.5 * frobenius_inner(q, q)


def grad_w(u) -> np.ndarray:
    """Unconstrained gradient of :func:`potential_w`: ``(I - 2u)(u - u^2)``."""
    u = np.asarray(u, dtype=float)
    q = u - u @ u
    return sym(q - 2.0 * (u @ q))


def potential_wbeta(u, beta: float) -> np.ndarray:
    """``W_beta(u) = 2 I2(u)^2 - beta I3(u)``.

    Evaluated through the trace polynomial
    ``(1 - |u|^2)^2 / 2 - beta (1 - 3|u|^2 + 2 tr u^3) / 6``, which agrees
    with the invariant form on F1 and whose unconstrained gradient is
    exactly :func:`grad_wbeta`.
    """
    u = np.asarray(u, dtype=float)
    n2 = frobenius_inner(u, u)
    tr3 = np.einsum("...ij,...jk,...ki->...", u, u, u)
    return 0.5 * (1.0 - n2) ** 2 - beta / 6.0 * (1.0 - 3.0 * n2 + 2.0 * tr3)


def grad_wbeta(u, beta: float) -> np.ndarray:
    """``2(|u|^2 - 1) u + beta (u - u^2)``."""
    u = np.asarray(u, dtype=float)
    n2 = frobenius_inner(u, u)[..., None, None]
    return sym(2.0 * (n2 - 1.0) * u + beta * (u - u @ u))


def potential(u, beta: float | None = None) -> np.ndarray:
    """Dispatch: ``W`` when ``beta is None``, ``W_beta`` otherwise."""
    return potential_w(u) if beta is None else potential_wbeta(u, beta)


def potential_grad(u, beta: float | None = None) -> np.ndarray:
    return grad_w(u) if beta is None else grad_wbeta(u, beta)


# ---------------------------------------------------------------------------
# projections


def simplex_project(lam, check: bool = True) -> np.ndarray:
    """Euclidean projection of sorted, unit-sum triples onto the simplex.

    Works on ``(..., 3)`` arrays.  With ``lam3 < 0`` there are two cases:
    ``lam2 + lam3/2 >= 0`` shifts the two largest entries by ``lam3/2`` and
    zeroes the last; otherwise all mass goes to the first entry.
    """
    lam = np.asarray(lam, dtype=float)
    if lam.shape[-1] != 3:
        raise InvalidInput("expected triples")
    l1, l2, l3 = lam[..., 0], lam[..., 1], lam[..., 2]
    if check:
        scale = np.maximum(1.0, np.abs(lam).max(axis=-1))
        if np.any(l1 < l2 - 1e-12 * scale) or np.any(l2 < l3 - 1e-12 * scale):
            raise InvalidInput("eigenvalues must be sorted in descending order")
        if np.any(np.abs(l1 + l2 + l3 - 1.0) > 1e-9 * scale):
            raise InvalidInput("eigenvalues must sum to one")

    shift = 0.5 * l3
    case1 = np.stack([l1 + shift, l2 + shift, np.zeros_like(l3)], axis=-1)
    case2 = np.zeros_like(lam)
    case2[..., 0] = 1.0
    out = np.where((l2 + shift >= 0.0)[..., None], case1, case2)
    return np.where((l3 >= 0.0)[..., None], lam, out)


def simplex_project_sorted(v) -> np.ndarray:
    """Generic sort-and-threshold projection of any vector onto the unit simplex."""
    v = np.asarray(v, dtype=float)
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    idx = np.arange(1, v.size + 1)
    rho = np.nonzero(u - css / idx > 0)[0][-1]
    tau = css[rho] / (rho + 1.0)
    return np.maximum(v - tau, 0.0)


def project_sigma(u) -> np.ndarray:
    """Nearest point of Sigma to trace-one symmetric ``u`` (batched)."""
    vals, vecs = _eig(u)
    mu = simplex_project(vals, check=False)
    out = np.einsum("...ik,...k,...jk->...ij", vecs, mu, vecs)
    return sym(out)


def nearest_projection_q(u, gap: float = GAP_THRESHOLD) -> np.ndarray:
    """Top-eigenvector projector ``e1 e1^T``; raises when ``lam1 - lam2 <= gap``."""
    vals, vecs = _eig(u)
    if np.any(vals[..., 0] - vals[..., 1] <= gap):
        raise DegenerateTop(f"top eigenvalue gap below {gap:g}")
    e1 = vecs[..., :, 0]
    return e1[..., :, None] * e1[..., None, :]


def dq_apply(u, a, gap: float = GAP_THRESHOLD) -> np.ndarray:
    """Derivative of :func:`nearest_projection_q` at ``u`` in direction ``a``.

    ``-(u - lam1 I)^+ a v - v a (u - lam1 I)^+`` with ``v = Q(u)`` and ``^+``
    the Moore-Penrose inverse.
    """
    u = np.asarray(u, dtype=float)
    a = np.asarray(a, dtype=float)
    vals, vecs = _eig(u)
    if np.any(vals[..., 0] - vals[..., 1] <= gap):
        raise DegenerateTop(f"top eigenvalue gap below {gap:g}")
    e = vecs
    v = e[..., :, 0, None] * e[..., None, :, 0]
    inv = np.zeros_like(vals)
    inv[..., 1:] = 1.0 / (vals[..., 1:] - vals[..., :1])
    pinv = np.einsum("...ik,...k,...jk->...ij", e, inv, e)
    return -(pinv @ a @ v) - (v @ a @ pinv)


def tangent_project(v, a) -> np.ndarray:
    """Orthogonal projection of symmetric ``a`` onto the tangent space of P at ``v``."""
    v = np.asarray(v, dtype=float)
    a = np.asarray(a, dtype=float)
    c = I3 - v
    return v @ a @ c + c @ a @ v


# ---------------------------------------------------------------------------
# rotations


def _hat(w) -> np.ndarray:
    return np.array([[0.0, -w[2], w[1]], [w[2], 0.0, -w[0]], [-w[1], w[0], 0.0]])


def _vee(m) -> np.ndarray:
    return np.array([m[2, 1], m[0, 2], m[1, 0]])


def rotation_exp(w) -> np.ndarray:
    """Rodrigues formula for ``exp(hat(w))``."""
    w = np.asarray(w, dtype=float)
    th = np.linalg.norm(w)
    k = _hat(w)
    if th < 1e-8:
        return I3 + k + 0.5 * k @ k
    return I3 + np.sin(th) / th * k + (1.0 - np.cos(th)) / th**2 * k @ k


def rotation_log(m) -> np.ndarray:
    """Axis-angle vector of the principal logarithm of a rotation matrix."""
    m = np.asarray(m, dtype=float)
    w = 0.5 * _vee(m - m.T)
    s = np.linalg.norm(w)
    c = 0.5 * (np.trace(m) - 1.0)
    th = np.arctan2(s, c)
    if s < 1e-12:
        if c > 0:
            return w
        # angle pi: axis from the symmetric part
        bb = 0.5 * (m + I3)
        k = int(np.argmax(np.diag(bb)))
        axis = bb[:, k] / np.sqrt(bb[k, k])
        return np.pi * axis
    return th / s * w


def minimal_rotation(a, b, threshold: float = PERP_THRESHOLD) -> np.ndarray:
    """Minimal rotation ``R`` with ``b = R a R^T`` for ``a, b`` in P.

    Uses the closed form ``R = exp(ln(I + 2 K^2/<a,b> - 2K) / 2)`` with
    ``K = [a; b]``.  The matrix inside the logarithm is a rotation by twice
    the angle between the two lines; halving its axis-angle vector gives R.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    ip = float(frobenius_inner(a, b))
    if ip <= threshold:
        raise PerpendicularPair(f"<a,b> = {ip:.3e} <= {threshold:g}")
    if np.array_equal(a, b):
        return I3.copy()
    k = commutator(a, b)
    m = I3 + (2.0 / ip) * (k @ k) - 2.0 * k
    return rotation_exp(0.5 * rotation_log(m))


def rotation_from_euler(alpha: float, beta: float, gamma: float) -> np.ndarray:
    """Intrinsic z-y-z Euler angles."""
    def rz(t):
        c, s = np.cos(t), np.sin(t)
        return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])

    c, s = np.cos(beta), np.sin(beta)
    ry = np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])
    return rz(alpha) @ ry @ rz(gamma)


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


# ---------------------------------------------------------------------------
# geodesics


def geodesic_gamma0(t) -> np.ndarray:
    """Canonical closed geodesic in P; ``t`` may be an array."""
    t = np.asarray(t, dtype=float)
    c, s = np.cos(t), np.sin(t)
    out = np.zeros(t.shape + (3, 3))
    out[..., 0, 0] = 0.5 * (1.0 + c)
    out[..., 1, 1] = 0.5 * (1.0 - c)
    out[..., 0, 1] = out[..., 1, 0] = 0.5 * s
    return out


def geodesic_gamma0_dt(t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    c, s = np.cos(t), np.sin(t)
    out = np.zeros(t.shape + (3, 3))
    out[..., 0, 0] = -0.5 * s
    out[..., 1, 1] = 0.5 * s
    out[..., 0, 1] = out[..., 1, 0] = 0.5 * c
    return out


def _closed_samples(t, curve, period):
    t = np.asarray(t, dtype=float)
    curve = np.asarray(curve, dtype=float)
    if t.ndim != 1 or curve.shape != t.shape + (3, 3):
        raise InvalidInput("expected t of shape (N,) and curve of shape (N, 3, 3)")
    if period is None:
        dt = np.diff(t)
        if t.size > 2 and not np.allclose(dt, dt[0], rtol=1e-9, atol=0.0):
            raise InvalidInput("non-uniform samples need an explicit period")
        period = t[-1] - t[0] + (t[1] - t[0])
    return t, curve, float(period)


def antisym_rep(t, curve, period: float | None = None):
    """Mean of ``[g; g'] / 2pi`` over a sampled closed curve in P.

    ``g'`` comes from periodic centered differences.  Returns the mean as an
    :class:`AntiSymTensor3` together with the largest Frobenius deviation of
    any sample from it (zero for an exact geodesic).
    """
    t, g, period = _closed_samples(t, curve, period)
    if t.size < 8:
        raise InvalidInput("need at least 8 samples")
    tp = np.concatenate([t[-1:] - period, t, t[:1] + period])
    gp = np.concatenate([g[-1:], g, g[:1]])
    h_f = tp[2:] - tp[1:-1]
    h_b = tp[1:-1] - tp[:-2]
    # three-point derivative, exact for quadratics on uneven spacing
    dg = ((h_b**2)[:, None, None] * gp[2:] - (h_f**2)[:, None, None] * gp[:-2]
          + ((h_f**2 - h_b**2))[:, None, None] * gp[1:-1]) / (h_f * h_b * (h_f + h_b))[:, None, None]
    reps = commutator(g, dg) / (2.0 * np.pi)
    mean = skew(reps.mean(axis=0))
    dev = float(frobenius_norm(reps - mean).max())
    return AntiSymTensor3.from_matrix(mean), dev


def geodesic_length(t, curve, period: float | None = None) -> float:
    """Length of a sampled closed curve.

    First differences give the velocity at interval midpoints; the
    composite rule on those midpoint speeds is second-order accurate.
    """
    t, g, period = _closed_samples(t, curve, period)
    tp = np.concatenate([t, t[:1] + period])
    gp = np.concatenate([g, g[:1]])
    dt = np.diff(tp)
    if np.any(dt <= 0):
        raise InvalidInput("sample times must be increasing")
    speed = frobenius_norm(np.diff(gp, axis=0)) / dt
    return float(np.sum(speed * dt))
