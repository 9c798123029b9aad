"""Fused numba loops for the gradient flow.

Fields are stored component-wise as ``c[k, iy, ix]`` with
``k = xx, xy, xz, yy, yz, zz``.  Loops run in a fixed order, so results are
bitwise reproducible.
"""
import numba
import numpy as np

SYM_INDEX = ((0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2))


def to_components(u: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(np.stack([u[..., i, j] for i, j in SYM_INDEX]))


def from_components(c: np.ndarray) -> np.ndarray:
    u = np.empty(c.shape[1:] + (3, 3))
    for k, (i, j) in enumerate(SYM_INDEX):
        u[..., i, j] = c[k]
        u[..., j, i] = c[k]
    return u


@numba.njit(cache=True, inline="always")
def _potential(a, b, c, d, e, f, beta, use_beta):
    # u^2
    s0 = a * a + b * b + c * c
    s1 = a * b + b * d + c * e
    s2 = a * c + b * e + c * f
    s3 = b * b + d * d + e * e
    s4 = b * c + d * e + e * f
    s5 = c * c + e * e + f * f
    if use_beta:
        n2 = a * a + d * d + f * f + 2.0 * (b * b + c * c + e * e)
        tr3 = a * s0 + d * s3 + f * s5 + 2.0 * (b * s1 + c * s2 + e * s4)
        w = 0.5 * (1.0 - n2) ** 2 - beta / 6.0 * (1.0 - 3.0 * n2 + 2.0 * tr3)
        k = 2.0 * (n2 - 1.0)
        return (w,
                k * a + beta * (a - s0), k * b + beta * (b - s1), k * c + beta * (c - s2),
                k * d + beta * (d - s3), k * e + beta * (e - s4), k * f + beta * (f - s5))
    q0 = a - s0
    q1 = b - s1
    q2 = c - s2
    q3 = d - s3
    q4 = e - s4
    q5 = f - s5
    w = 0.5 * (q0 * q0 + q3 * q3 + q5 * q5 + 2.0 * (q1 * q1 + q2 * q2 + q4 * q4))
    # m = u q (not symmetric in floating point); gradient q - m - m^T
    m00 = a * q0 + b * q1 + c * q2
    m01 = a * q1 + b * q3 + c * q4
    m02 = a * q2 + b * q4 + c * q5
    m10 = b * q0 + d * q1 + e * q2
    m11 = b * q1 + d * q3 + e * q4
    m12 = b * q2 + d * q4 + e * q5
    m20 = c * q0 + e * q1 + f * q2
    m21 = c * q1 + e * q3 + f * q4
    m22 = c * q2 + e * q4 + f * q5
    return (w,
            q0 - 2.0 * m00, q1 - m01 - m10, q2 - m02 - m20,
            q3 - 2.0 * m11, q4 - m12 - m21, q5 - 2.0 * m22)


@numba.njit(cache=True, inline="always")
def _sqdiff(c, y0, x0, y1, x1):
    d0 = c[0, y0, x0] - c[0, y1, x1]
    d1 = c[1, y0, x0] - c[1, y1, x1]
    d2 = c[2, y0, x0] - c[2, y1, x1]
    d3 = c[3, y0, x0] - c[3, y1, x1]
    d4 = c[4, y0, x0] - c[4, y1, x1]
    d5 = c[5, y0, x0] - c[5, y1, x1]
    return d0 * d0 + d3 * d3 + d5 * d5 + 2.0 * (d1 * d1 + d2 * d2 + d4 * d4)


@numba.njit(cache=True, inline="always")
def _lap(c, k, iy, ix, inv_h2):
    return (c[k, iy, ix + 1] + c[k, iy, ix - 1] + c[k, iy + 1, ix]
            + c[k, iy - 1, ix] - 4.0 * c[k, iy, ix]) * inv_h2


@numba.njit(cache=True)
def energy_and_gradient(c, tags, h, eps, beta, use_beta, g):
    """Fill ``g`` with the traceless per-area gradient; return (dirichlet, potential mass)."""
    ny, nx = tags.shape
    inv_h2 = 1.0 / (h * h)
    inv_e2 = 1.0 / (eps * eps)
    ed = 0.0
    ew = 0.0
    for iy in range(ny):
        for ix in range(nx):
            for k in range(6):
                g[k, iy, ix] = 0.0
            t = tags[iy, ix]
            if t == 0:
                continue
            if ix + 1 < nx:
                t2 = tags[iy, ix + 1]
                if t2 != 0 and (t == 1 or t2 == 1):
                    ed += 0.5 * _sqdiff(c, iy, ix, iy, ix + 1)
            if iy + 1 < ny:
                t2 = tags[iy + 1, ix]
                if t2 != 0 and (t == 1 or t2 == 1):
                    ed += 0.5 * _sqdiff(c, iy, ix, iy + 1, ix)
            if t != 1:
                continue
            w, g0, g1, g2, g3, g4, g5 = _potential(
                c[0, iy, ix], c[1, iy, ix], c[2, iy, ix],
                c[3, iy, ix], c[4, iy, ix], c[5, iy, ix], beta, use_beta)
            ew += w
            g0 = inv_e2 * g0 - _lap(c, 0, iy, ix, inv_h2)
            g1 = inv_e2 * g1 - _lap(c, 1, iy, ix, inv_h2)
            g2 = inv_e2 * g2 - _lap(c, 2, iy, ix, inv_h2)
            g3 = inv_e2 * g3 - _lap(c, 3, iy, ix, inv_h2)
            g4 = inv_e2 * g4 - _lap(c, 4, iy, ix, inv_h2)
            g5 = inv_e2 * g5 - _lap(c, 5, iy, ix, inv_h2)
            tr3 = (g0 + g3 + g5) / 3.0
            g[0, iy, ix] = g0 - tr3
            g[1, iy, ix] = g1
            g[2, iy, ix] = g2
            g[3, iy, ix] = g3 - tr3
            g[4, iy, ix] = g4
            g[5, iy, ix] = g5 - tr3
    return ed, ew * h * h * inv_e2


@numba.njit(cache=True)
def descend(c, g, dt, tags, out):
    """``out = c - dt g`` on interior cells with the trace reset to one."""
    ny, nx = tags.shape
    gmax = 0.0
    for iy in range(ny):
        for ix in range(nx):
            if tags[iy, ix] != 1:
                for k in range(6):
                    out[k, iy, ix] = c[k, iy, ix]
                continue
            for k in range(6):
                out[k, iy, ix] = c[k, iy, ix] - dt * g[k, iy, ix]
                a = abs(g[k, iy, ix])
                if a > gmax:
                    gmax = a
            out[5, iy, ix] = 1.0 - out[0, iy, ix] - out[3, iy, ix]
    return gmax
