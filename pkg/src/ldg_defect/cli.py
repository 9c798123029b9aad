"""Command-line driver: ``solve``, ``sweep``, ``analyze`` and ``selftest``.

Exit codes: 0 success, 1 usage/config/IO error or failed self-test, 2 solver
did not converge, 3 analysis anomaly (no or several defects, scaling slope
outside its band).
"""
from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import checks
from . import defect as D
from . import field as F
from . import minimizer as M
from . import psi as P
from . import tensor_algebra as ta
from .errors import (CircleOutside, LdgError, MultipleDefects, NoDefect, NonFinite,
                     SnapshotMismatch, StalledStep)

EXIT_OK, EXIT_USAGE, EXIT_NOCONV, EXIT_ANOMALY = 0, 1, 2, 3
SLOPE_BAND = (0.85, 1.15)
TRACE_HEADER = ["iter", "eps", "dt", "energy", "potential_mass"]
SCALING_HEADER = ["eps", "energy", "potential_mass", "slope_so_far"]

log = logging.getLogger("ldg_defect")


class ConfigError(Exception):
    pass


@dataclass(frozen=True)
class RunConfig:
    """Flat run configuration; every field is a ``key = value`` line in the config file."""
    # domain
    n: int = 128
    radius: float = 1.0
    # boundary data: winding, frame (z-y-z Euler angles), phase
    k: int = 1
    frame_alpha: float = 0.0
    frame_beta: float = 0.0
    frame_gamma: float = 0.0
    phase: float = 0.0
    # solver
    eps: float = 0.03125
    eps_list: tuple = ()
    dt: float | None = None
    max_iters: int = 200_000
    rel_tol: float = 1e-4
    sigma_projection: bool = False
    beta: float | None = None
    window: int = 50
    init: str = "radial-melt"
    core_radius: float | None = None
    seed: int = 0
    # analysis
    radii: tuple = ()
    current: str = "projected"
    lam_radius: float = 0.5
    guard: float = 0.1
    # output
    out: str = "out"

    def solve_config(self, continuation=()) -> M.SolveConfig:
        return M.SolveConfig(eps=self.eps, dt=self.dt, max_iters=self.max_iters,
                             rel_tol=self.rel_tol, sigma_projection=self.sigma_projection,
                             continuation=tuple(continuation), beta=self.beta, window=self.window)

    def boundary(self) -> F.BoundaryData:
        rot = ta.rotation_from_euler(self.frame_alpha, self.frame_beta, self.frame_gamma)
        return F.BoundaryData(self.k, rot, self.phase)

    def domain(self):
        grid, mask = F.make_disk_domain(self.n, self.radius)
        return F.apply_boundary(mask, self.boundary())


def _parse_bool(s: str) -> bool:
    low = s.lower()
    if low in ("true", "yes", "on", "1"):
        return True
    if low in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _parse_optional_float(s: str) -> float | None:
    return None if s.lower() in ("none", "auto", "") else float(s)


def _parse_floats(s: str) -> tuple:
    return tuple(float(v) for v in s.replace(",", " ").split())


_PARSERS = {
    "n": int, "radius": float, "k": int, "frame_alpha": float, "frame_beta": float,
    "frame_gamma": float, "phase": float, "eps": float, "eps_list": _parse_floats,
    "dt": _parse_optional_float, "max_iters": int, "rel_tol": float,
    "sigma_projection": _parse_bool, "beta": _parse_optional_float, "window": int,
    "init": str, "core_radius": _parse_optional_float, "seed": int, "radii": _parse_floats,
    "current": str, "lam_radius": float, "guard": float, "out": str,
}
assert set(_PARSERS) == {f.name for f in fields(RunConfig)}


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    values = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, val = (p.strip() for p in line.split("=", 1))
        if key not in _PARSERS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        try:
            values[key] = _PARSERS[key](val)
        except ValueError as exc:
            raise ConfigError(f"{source}:{lineno}: bad value for {key!r}: {exc}") from None
    return RunConfig(**values)


def load_config(path) -> RunConfig:
    if path is None:
        return RunConfig()
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config(text, str(path))


# ---------------------------------------------------------------------------
# output helpers


def _fmt(v) -> str:
    return f"{v:.17g}" if isinstance(v, float) else str(v)


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def write_trace(path: Path, results) -> None:
    rows = [(r.iter, r.eps, r.dt, r.energy, r.potential_mass) for res in results for r in res.trace]
    write_csv(path, TRACE_HEADER, rows)


def scaling_rows(results) -> list[tuple]:
    rows = []
    for i, res in enumerate(results):
        eps = np.array([r.final_eps for r in results[: i + 1]])
        en = np.array([r.energy for r in results[: i + 1]])
        slope = float(np.polyfit(np.log(1.0 / eps), en, 1)[0]) if i >= 1 else math.nan
        rows.append((res.final_eps, res.energy, res.trace[-1].potential_mass if res.trace else math.nan,
                     slope))
    return rows


def _eps_tag(eps: float) -> str:
    return f"{eps:.6g}".replace("-", "m")


# ---------------------------------------------------------------------------
# commands


def _initial(cfg: RunConfig, mask, snapshot):
    if snapshot is not None:
        return F.initial_field(mask, "snapshot", snapshot=snapshot)
    return F.initial_field(mask, cfg.init, core_radius=cfg.core_radius, seed=cfg.seed)


def cmd_solve(cfg: RunConfig, out: Path, snapshot=None) -> int:
    mask = cfg.domain()
    init = _initial(cfg, mask, snapshot)
    res = M.solve(mask, None, cfg.solve_config(), init)
    out.mkdir(parents=True, exist_ok=True)
    F.write_snapshot(out / "snapshot.csv", res.field)
    write_trace(out / "trace.csv", [res])
    log.info("eps=%g iterations=%d energy=%.10g converged=%s", res.final_eps, res.iterations,
             res.energy, res.converged)
    return EXIT_OK if res.converged else EXIT_NOCONV


def cmd_sweep(cfg: RunConfig, out: Path, snapshot=None) -> int:
    if len(cfg.eps_list) < 3:
        raise ConfigError(f"sweep needs at least three eps values in eps_list, got {len(cfg.eps_list)}")
    mask = cfg.domain()
    init = _initial(cfg, mask, snapshot)
    scfg = cfg.solve_config(cfg.eps_list)
    out.mkdir(parents=True, exist_ok=True)
    results = []
    fld = init
    for eps in scfg.continuation:
        offset = results[-1].trace[-1].iter if results and results[-1].trace else 0
        res = M.solve(mask, None, scfg, fld, eps=eps, iter_offset=offset)
        results.append(res)
        fld = res.field
        F.write_snapshot(out / f"snapshot_eps_{_eps_tag(eps)}.csv", res.field)
        log.info("eps=%g iterations=%d energy=%.10g converged=%s", eps, res.iterations,
                 res.energy, res.converged)
    write_trace(out / "trace.csv", results)
    rows = scaling_rows(results)
    write_csv(out / "scaling.csv", SCALING_HEADER, rows)
    if not all(r.converged for r in results):
        return EXIT_NOCONV
    fit = D.scaling_fit([(r.final_eps, r.energy) for r in results])
    expected = abs(cfg.k) * np.pi / 2.0
    lo, hi = (b * expected for b in SLOPE_BAND)
    log.info("slope %.6f, band [%.4f, %.4f]", fit.slope, lo, hi)
    return EXIT_OK if lo <= fit.slope <= hi else EXIT_ANOMALY


def cmd_analyze(cfg: RunConfig, out: Path, snapshot) -> int:
    if snapshot is None:
        raise ConfigError("analyze needs --snapshot")
    mask, fld = F.mask_from_snapshot(snapshot)
    out.mkdir(parents=True, exist_ok=True)
    radii = cfg.radii or None
    try:
        rep = D.analyze_defect(fld, cfg.eps, radii, beta=cfg.beta)
    except (NoDefect, MultipleDefects) as exc:
        write_csv(out / "defect.csv", D.DEFECT_CSV_HEADER, [])
        print(f"analysis anomaly: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ANOMALY
    rep.write_csv(out / "defect.csv")
    prep = P.analyze_psi(fld, cfg.eps, core=rep.core, lam_radius=cfg.lam_radius,
                         current=cfg.current, guard=cfg.guard)
    prep.write_csv(out / "psi.csv")
    prep.psi.write_csv(out / "psi_field.csv")
    log.info("core=(%.6f, %.6f) |Lambda|=%s xi=%s", *rep.core,
             np.array2string(rep.circulation_norms(), precision=4),
             np.array2string(rep.xi_values(), precision=4))
    log.info("psi sup=%.3e cmc_l1=%.3e z_l2=%.3e", prep.sup_norm, prep.cmc_residual_l1, prep.z_l2)
    return EXIT_OK


def cmd_selftest(tol_scale: float = 1.0) -> int:
    results = checks.run_all(tol_scale)
    for c in results:
        print(c.line())
    print(f"L0 estimate: {checks.geodesic_l0():.6f}")
    ok = all(c.passed for c in results)
    print("selftest: " + ("all passed" if ok else "FAILED"))
    return EXIT_OK if ok else EXIT_USAGE


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ldg-defect", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value config file")
    common.add_argument("--snapshot", help="snapshot CSV (initial field, or field to analyze)")
    common.add_argument("--out", help="output directory (overrides the config's out)")
    common.add_argument("--quiet", action="store_true", help="only report errors")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("solve", parents=[common], help="run the gradient flow at one eps")
    sub.add_parser("sweep", parents=[common], help="continuation sweep over eps_list")
    sub.add_parser("analyze", parents=[common], help="defect and psi analysis of a snapshot")
    st = sub.add_parser("selftest", parents=[common], help="run the oracle suites")
    st.add_argument("--tol-scale", type=float, default=1.0, help=argparse.SUPPRESS)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(message)s", stream=sys.stderr, force=True)
    try:
        if args.command == "selftest":
            return cmd_selftest(args.tol_scale)
        cfg = load_config(args.config)
        out = Path(args.out or cfg.out)
        if args.command == "solve":
            return cmd_solve(cfg, out, args.snapshot)
        if args.command == "sweep":
            return cmd_sweep(cfg, out, args.snapshot)
        return cmd_analyze(cfg, out, args.snapshot)
    except (StalledStep, NonFinite) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NOCONV
    except CircleOutside as exc:
        print(f"error: analysis radii do not fit the domain: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, SnapshotMismatch, LdgError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
