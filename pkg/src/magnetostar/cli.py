"""``magnetostar`` command line: solve, validate, probe, export.

Exit codes: 0 success, 1 usage or configuration error, 2 numerical
non-convergence, 3 invariant violation (including failed probes and checks).
"""

from __future__ import annotations

import argparse
import configparser
import os
import sys
import warnings
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from .energy import potentials
from .equilibrium import F_ROUNDING_SLACK, ConfigError, SmallBetaWarning, SolveConfig, baseline_radius, solve
from .fields import (DensityField, Grid, PolytropeEos, ScalarField, SupportConstraint, grid_from_text,
                     read_snapshot, write_snapshot)
from .magnetics import SolverError, reconstruct_B, solve_psi_fd

EXIT_OK, EXIT_CONFIG, EXIT_NONCONVERGED, EXIT_INVARIANT = 0, 1, 2, 3
THREADS_ENV = "MAGNETOSTAR_THREADS"
PROBE_KINDS = ("lower-bound", "negativity", "scaling", "beta-threshold", "ball-mode")
SNAPSHOT_FIELDS = ("rho", "gravity", "psi", "chi", "Br", "Bz")


@dataclass
class RunConfig:
    gamma: float = 2.5
    beta: float = 0.0
    mass: float = 1.0
    grid: str = "128x128"
    rmax: float | None = None
    zmax: float | None = None
    support: str = "cylinder:2.0"
    mixing: float = 0.5
    tol_density: float = 1e-8
    tol_el: float = 1e-3
    max_iter: int = 500
    seed: int = 0
    threads: int | None = None
    out: str = "out"
    samples: int = 50
    betas: str = "0,0.05,0.1,0.2,0.5,1"

    def support_constraint(self) -> SupportConstraint:
        return SupportConstraint.parse(self.support)

    def grid_obj(self) -> Grid:
        sup = self.support_constraint()
        rmax = self.rmax if self.rmax is not None else sup.radius
        zmax = self.zmax if self.zmax is not None else sup.radius
        return grid_from_text(self.grid, rmax, zmax)

    def solve_config(self) -> SolveConfig:
        return SolveConfig(M=self.mass, eos=PolytropeEos(self.gamma), beta=self.beta,
                           support=self.support_constraint(), grid=self.grid_obj(), mixing=self.mixing,
                           tol_density=self.tol_density, tol_el=self.tol_el, max_iter=self.max_iter)

    def beta_list(self) -> list[float]:
        return [float(b) for b in self.betas.split(",") if b.strip()]


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def _convert(key: str, text: str):
    t = _FIELD_TYPES[key]
    if "int" in t:
        return int(text)
    if "float" in t:
        return float(text)
    return text.strip()


def load_config(path: str | None) -> RunConfig:
    """Read a flat INI file; section names are free, keys must be ``RunConfig`` fields."""
    cfg = RunConfig()
    if path is None:
        return cfg
    parser = configparser.ConfigParser()
    if not parser.read(path):
        raise ConfigError(f"cannot read config file {path}")
    for section in parser.sections():
        for key, value in parser.items(section):
            name = key.replace("-", "_")
            if name not in _FIELD_TYPES:
                raise ConfigError(f"unknown config key {key!r} in [{section}]")
            try:
                setattr(cfg, name, _convert(name, value))
            except ValueError as exc:
                raise ConfigError(f"bad value for {key}: {value!r}") from exc
    return cfg


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="INI file with key = value entries")
    p.add_argument("--gamma", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--mass", type=float)
    p.add_argument("--grid", help="NRxNZ")
    p.add_argument("--rmax", type=float)
    p.add_argument("--zmax", type=float)
    p.add_argument("--support", help="cylinder:R or ball:R")
    p.add_argument("--mixing", type=float)
    p.add_argument("--tol-density", type=float)
    p.add_argument("--tol-el", type=float)
    p.add_argument("--max-iter", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--out", help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="magnetostar", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    _common(sub.add_parser("solve", help="compute an equilibrium"))
    v = sub.add_parser("validate", help="run the acceptance suite")
    v.add_argument("--only", action="append", help="check name (repeatable)")
    v.add_argument("--grid", default="128x128", help="square grid NxN")
    v.add_argument("--threads", type=int)
    pr = sub.add_parser("probe", help="run an empirical probe")
    pr.add_argument("kind", choices=PROBE_KINDS)
    _common(pr)
    pr.add_argument("--samples", type=int, help="random fields per set")
    pr.add_argument("--betas", help="comma-separated beta values (beta-threshold)")
    ex = sub.add_parser("export", help="merge snapshot CSVs into one plot-ready table")
    ex.add_argument("source", help="directory written by solve")
    ex.add_argument("--output", help="target CSV (default SOURCE/fields.csv)")
    return parser


def merge_args(args: argparse.Namespace) -> RunConfig:
    cfg = load_config(getattr(args, "config", None))
    for name in _FIELD_TYPES:
        val = getattr(args, name, None)
        if val is not None:
            setattr(cfg, name, val)
    return cfg


def resolve_threads(value: int | None) -> int | None:
    if value is None:
        env = os.environ.get(THREADS_ENV)
        if env:
            try:
                value = int(env)
            except ValueError as exc:
                raise ConfigError(f"{THREADS_ENV} must be an integer") from exc
    if value is not None and value < 1:
        raise ConfigError("--threads must be at least 1")
    return value


def _write(path: Path, text: str) -> None:
    path.write_text(text, encoding="ascii")


# --------------------------------------------------------------------------
# subcommands


def equatorial_asymmetry(rho: DensityField) -> float:
    """``||rho(r, z) - rho(r, -z)||_1 / (2 M)``."""
    g = rho.grid
    return float(np.sum(g.volume * np.abs(rho.values - rho.values[:, ::-1]))) / (2.0 * rho.mass)


def cmd_solve(run: RunConfig) -> int:
    cfg = run.solve_config()
    out = Path(run.out)
    out.mkdir(parents=True, exist_ok=True)
    rho, rep = solve(cfg)
    pots = potentials(rho, cfg.beta)
    mag = reconstruct_B(solve_psi_fd(rho, cfg.beta))
    g = cfg.grid
    snaps = {"rho": rho.values, "gravity": pots.gravity, "psi": mag.psi.values, "chi": mag.chi.values,
             "Br": mag.Br.values, "Bz": mag.Bz.values}
    for name, values in snaps.items():
        write_snapshot(out / f"{name}.csv", ScalarField(g, values), name)
    header = {"gamma": cfg.gamma, "beta": cfg.beta, "mass": cfg.M, "grid": f"{g.nr}x{g.nz}",
              "rmax": g.rmax, "zmax": g.zmax, "support": str(cfg.support),
              "baseline_radius": baseline_radius(cfg.M, cfg.eos),
              "equatorial_asymmetry": equatorial_asymmetry(rho),
              "status": "stationary point with negative energy" if rep.converged and rep.energy.total < 0
              else ("stationary point" if rep.converged else "not converged")}
    text = "".join(f"{k}={v!r}\n" if isinstance(v, float) else f"{k}={v}\n" for k, v in header.items())
    _write(out / "report.txt", text + rep.to_text())
    _write(out / "history.csv", rep.history_csv())
    sys.stdout.write(text + rep.to_text())
    F = np.asarray(rep.F_history)
    if np.any(np.diff(F) > F_ROUNDING_SLACK * np.abs(F[:-1])) or rep.mass_error > 1e-10:
        print("invariant violation: energy increase or mass drift", file=sys.stderr)
        return EXIT_INVARIANT
    return EXIT_OK if rep.converged else EXIT_NONCONVERGED


def cmd_validate(grid_text: str, only: list[str] | None) -> int:
    from .validation import CHECKS, run_all

    try:
        nr, nz = (int(t) for t in grid_text.lower().split("x"))
    except ValueError as exc:
        raise ConfigError(f"bad grid {grid_text!r}") from exc
    if nr != nz or nr < 16:
        raise ConfigError("validate needs a square grid of at least 16x16")
    if only:
        unknown = [k for k in only if k not in CHECKS]
        if unknown:
            raise ConfigError(f"unknown check(s) {', '.join(unknown)}; choose from {', '.join(CHECKS)}")
    results = run_all(nr, only)
    for r in results:
        print(r.line())
    passed = sum(r.passed for r in results)
    print(f"{passed}/{len(results)} checks passed")
    return EXIT_OK if passed == len(results) else EXIT_INVARIANT


def cmd_probe(kind: str, run: RunConfig) -> int:
    from . import probes

    out = Path(run.out)
    if kind == "beta-threshold":
        if run.gamma != 2.0:
            raise ConfigError("beta-threshold probe runs at gamma = 2")
        rep = probes.beta_threshold_sweep(run.mass, run.grid_obj(), run.support_constraint(),
                                          run.beta_list(), n_samples=run.samples, seed=run.seed)
    else:
        cfg = run.solve_config()
        if kind == "lower-bound":
            rep = probes.lower_bound_probe(cfg, run.samples, run.seed)
        elif kind == "negativity":
            rep = probes.negativity_report(cfg)
        elif kind == "scaling":
            rep = probes.scaling_exponents(cfg)
        else:
            rep = probes.ball_mode_probe(cfg.gamma, cfg, n_samples=run.samples, seed=run.seed)
    out.mkdir(parents=True, exist_ok=True)
    text = f"probe={kind}\n" + rep.to_text()
    _write(out / "probe_report.txt", text)
    _write(out / "probe_samples.csv", rep.rows_csv())
    sys.stdout.write(text)
    return EXIT_OK if rep.violations == 0 and rep.passed else EXIT_INVARIANT


def cmd_export(source: str, output: str | None) -> int:
    src = Path(source)
    snaps = {}
    for name in SNAPSHOT_FIELDS:
        p = src / f"{name}.csv"
        if p.exists():
            snaps[name] = read_snapshot(p)
    if not snaps:
        raise ConfigError(f"no snapshot files in {src}")
    grids = {s.grid for s in snaps.values()}
    if len(grids) != 1:
        raise ConfigError("snapshots live on different grids")
    g = grids.pop()
    cols = list(snaps)
    data = np.column_stack([g.rr.ravel(), g.zz.ravel()] + [snaps[c].values.ravel() for c in cols])
    target = Path(output) if output else src / "fields.csv"
    np.savetxt(target, data, delimiter=",", fmt="%.17g", header=",".join(["r", "z"] + cols), comments="")
    print(f"wrote {target} ({data.shape[0]} rows, columns r,z,{','.join(cols)})")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        threads = resolve_threads(getattr(args, "threads", None))
        with threadpool_limits(limits=threads), warnings.catch_warnings():
            warnings.simplefilter("always", SmallBetaWarning)
            if args.command == "validate":
                return cmd_validate(args.grid, args.only)
            if args.command == "export":
                return cmd_export(args.source, args.output)
            run = merge_args(args)
            if args.command == "solve":
                return cmd_solve(run)
            return cmd_probe(args.kind, run)
    except (ConfigError, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    except RuntimeError as exc:
        print(f"non-convergence: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED


if __name__ == "__main__":
    sys.exit(main())
