"""Projected gradient flow for the discrete Landau-de Gennes energy.

The flow is explicit Euler on ``u_t = -G`` with ``G`` from
:func:`ldg_defect.field.energy_gradient`.  A step is kept only if the
energy does not increase; otherwise the step size is halved and the step
retried.  Convergence is judged on the energy decrease per unit flow time
over a sliding window of accepted steps.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import _kernels as K
from . import field as F
from . import tensor_algebra as ta
from .errors import InvalidInput, NonFinite, StalledStep

log = logging.getLogger(__name__)

DT_FLOOR = 1e-12


@dataclass(frozen=True)
class SolveConfig:
    eps: float
    dt: float | None = None
    max_iters: int = 200_000
    rel_tol: float = 1e-4
    sigma_projection: bool = False
    continuation: tuple[float, ...] = ()
    beta: float | None = None
    window: int = 50

    def __post_init__(self):
        if not self.eps > 0:
            raise InvalidInput("eps must be positive")
        if self.dt is not None and not self.dt > 0:
            raise InvalidInput("dt must be positive")
        if not 0 < self.rel_tol <= 1e-2:
            raise InvalidInput("rel_tol must lie in (0, 1e-2]")
        if self.max_iters < 1:
            raise InvalidInput("max_iters must be >= 1")
        if self.window < 1:
            raise InvalidInput("window must be >= 1")
        c = tuple(float(e) for e in self.continuation)
        if any(e <= 0 for e in c) or any(b >= a for a, b in zip(c, c[1:])):
            raise InvalidInput("continuation must be a strictly decreasing list of positive eps")
        object.__setattr__(self, "continuation", c)

    def initial_dt(self, h: float, eps: float | None = None) -> float:
        if self.dt is not None:
            return self.dt
        e2 = (self.eps if eps is None else eps) ** 2
        return 0.2 * h * h * e2 / (e2 + h * h)


@dataclass(frozen=True)
class TraceRow:
    iter: int
    eps: float
    dt: float
    energy: float
    potential_mass: float


@dataclass(frozen=True)
class SolveResult:
    field: F.TensorField
    trace: tuple[TraceRow, ...]
    iterations: int
    converged: bool
    final_eps: float
    initial_energy: float

    @property
    def energy_trace(self) -> list[tuple[int, float]]:
        return [(r.iter, r.energy) for r in self.trace]

    @property
    def energy(self) -> float:
        return self.trace[-1].energy if self.trace else self.initial_energy


class _Flow:
    """Component-array state shared by :func:`step` and :func:`solve`."""

    def __init__(self, fld: F.TensorField, eps: float, beta: float | None):
        self.mask = fld.mask
        self.tags = np.ascontiguousarray(fld.mask.tags)
        self.h = fld.grid.h
        self.eps = float(eps)
        self.beta = 0.0 if beta is None else float(beta)
        self.use_beta = beta is not None
        self.c = K.to_components(fld.u)
        self.g = np.empty_like(self.c)
        self.c_try = np.empty_like(self.c)
        self.g_try = np.empty_like(self.c)
        self.ed, self.ew = self._eval(self.c, self.g)

    def _eval(self, c, g):
        return K.energy_and_gradient(c, self.tags, self.h, self.eps, self.beta, self.use_beta, g)

    @property
    def energy(self) -> float:
        return self.ed + self.ew

    def field(self) -> F.TensorField:
        u = K.from_components(self.c)
        u[~self.mask.active] = 0.0
        return F.TensorField(self.mask, u)

    def try_step(self, dt: float, project: bool = False) -> bool:
        K.descend(self.c, self.g, dt, self.tags, self.c_try)
        if project:
            _project_interior(self.c_try, self.mask.interior)
        ed, ew = self._eval(self.c_try, self.g_try)
        e_new = ed + ew
        if not math.isfinite(e_new):
            raise NonFinite(f"energy became {e_new}")
        if e_new > self.energy:
            return False
        self.c, self.c_try = self.c_try, self.c
        self.g, self.g_try = self.g_try, self.g
        self.ed, self.ew = ed, ew
        return True

    def grad_max(self) -> float:
        return float(np.abs(self.g).max())


def _project_interior(c: np.ndarray, interior: np.ndarray) -> None:
    u = K.from_components(c[:, interior])
    c[:, interior] = K.to_components(ta.project_sigma(u))


def step(fld: F.TensorField, eps: float, dt: float, beta: float | None = None):
    """One explicit descent step.

    Returns ``(field, accepted, dt_next)``.  A rejected step leaves the field
    unchanged and halves ``dt``.
    """
    if not dt > 0:
        raise InvalidInput("dt must be positive")
    flow = _Flow(fld, eps, beta)
    if flow.try_step(dt):
        return flow.field(), True, dt
    dt *= 0.5
    if dt < DT_FLOOR:
        raise StalledStep(f"dt fell below {DT_FLOOR:g}")
    return fld, False, dt


def solve(mask: F.DomainMask, bd: F.BoundaryData | None, config: SolveConfig,
          init: F.TensorField | None = None, *, mode: str = "radial-melt", seed: int = 0,
          eps: float | None = None, iter_offset: int = 0) -> SolveResult:
    """Run the gradient flow from ``init`` (or a fresh initial field) to convergence."""
    eps = config.eps if eps is None else float(eps)
    if mask.boundary_values is None:
        if bd is None:
            raise InvalidInput("mask has no boundary values and no boundary data was given")
        mask = F.apply_boundary(mask, bd)
    if init is None:
        init = F.initial_field(mask, mode, seed=seed)

    flow = _Flow(init, eps, config.beta)
    e0 = flow.energy
    dt = config.initial_dt(mask.grid.h, eps)
    trace: list[TraceRow] = []
    times: list[float] = []
    converged = False
    m = config.window
    it = 0
    # tiny gradients mean we already sit at a critical point
    if flow.grad_max() <= 1e-14:
        converged = True
    while not converged and it < config.max_iters:
        it += 1
        if not flow.try_step(dt, config.sigma_projection):
            dt *= 0.5
            if dt < DT_FLOOR:
                raise StalledStep(f"dt fell below {DT_FLOOR:g} at iteration {it}")
            continue
        trace.append(TraceRow(it + iter_offset, eps, dt, flow.energy, flow.ew))
        times.append(dt)
        if flow.grad_max() <= 1e-14:
            converged = True
        elif len(trace) > m:
            de = trace[-m - 1].energy - trace[-1].energy
            span = math.fsum(times[-m:])
            rate = de / (span * max(trace[-1].energy, 1.0))
            converged = rate < config.rel_tol
        if it % 5000 == 0:
            log.info("eps=%g it=%d E=%.10g dt=%.3g", eps, it, flow.energy, dt)
    if not trace and converged:
        trace.append(TraceRow(iter_offset, eps, dt, flow.energy, flow.ew))
    return SolveResult(flow.field(), tuple(trace), it, converged, eps, e0)


def continuation_sweep(mask: F.DomainMask, bd: F.BoundaryData | None, config: SolveConfig,
                       init: F.TensorField | None = None, **kwargs) -> list[SolveResult]:
    """Solve for each eps in ``config.continuation``, warm-starting from the previous one."""
    eps_list: Sequence[float] = config.continuation or (config.eps,)
    results = []
    fld = init
    for eps in eps_list:
        res = solve(mask, bd, config, fld, eps=eps, **kwargs)
        results.append(res)
        fld = res.field
    return results
