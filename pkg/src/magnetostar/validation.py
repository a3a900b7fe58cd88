"""Acceptance suite shared by ``magnetostar validate`` and the test-suite.

Each check returns a :class:`CheckResult`. Grids coarser than 128x128 use the
looser tolerance tier.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np

from .energy import potentials, positivity_check, q_identity_check
from .equilibrium import ConfigError, SolveConfig, el_residual, lane_emden, solve
from .fields import (DensityField, Grid, PolytropeEos, ScalarField, SupportConstraint,
                     gaussian_density, uniform_ball)
from .gravity import compute_gravity, gravitational_energy, gravity_at
from .magnetics import (MagneticSolution, Route, divergence_residual, radial_nonexistence_check,
                        reconstruct_B, solve_chi_fd, solve_psi_fd, solve_psi_green)
from .probes import (ball_mode_probe, lane_emden_mismatch, lower_bound_probe, magnetic_constant,
                     random_density, scaling_exponents)

FINE = {"gravity_centre": 0.01, "gravity_energy": 0.02, "route": 0.02, "q_identity": 0.01,
        "lane_emden": 0.02, "el_cv": 1e-3}
COARSE = {"gravity_centre": 0.02, "gravity_energy": 0.04, "route": 0.04, "q_identity": 0.02,
          "lane_emden": 0.04, "el_cv": 1e-3}


@dataclass
class CheckResult:
    name: str
    criterion: int
    passed: bool
    detail: str
    seconds: float = 0.0

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] {self.criterion:2d} {self.name}: {self.detail} ({self.seconds:.1f}s)"


def tier(n: int) -> dict:
    return FINE if n >= 128 else COARSE


def _cylinder_grid(n: int, L: float = 2.0) -> tuple[Grid, SupportConstraint]:
    return Grid(n, n, L, L), SupportConstraint.parse(f"cylinder:{L}")


# --------------------------------------------------------------------------
# 1. gravity


def uniform_sphere_errors(n: int, R: float = 1.0) -> tuple[float, float]:
    """Relative errors of ``G`` at the centre and of the self-energy for a unit-density sphere."""
    grid = Grid(n, n, 1.25 * R, 1.25 * R)
    M = 4.0 / 3.0 * np.pi * R ** 3
    rho = DensityField.from_values(grid, uniform_ball(grid, R), M,
                                   SupportConstraint.parse(f"cylinder:{1.25 * R}"))
    rho0 = float(rho.values.max())
    centre = gravity_at(rho, 0.0, 0.0)[0]
    e = gravitational_energy(rho, compute_gravity(rho))
    return centre / (2.0 * np.pi * rho0 * R ** 2) - 1.0, e / (0.6 * M ** 2 / R) - 1.0


def check_gravity(n: int) -> CheckResult:
    tol = tier(n)
    c1, e1 = uniform_sphere_errors(n)
    c2, e2 = uniform_sphere_errors(3 * n // 2)
    ok = (abs(c1) <= tol["gravity_centre"] and abs(e1) <= tol["gravity_energy"]
          and abs(c2) < abs(c1) and abs(e2) < abs(e1))
    return CheckResult("gravity", 1, ok,
                       f"centre {c1:.2e}->{c2:.2e}, self-energy {e1:.2e}->{e2:.2e} "
                       f"(n={n}->{3 * n // 2})")


# --------------------------------------------------------------------------
# 2. and 12. manufactured flux function psi* = r^2 exp(-r^2 - z^2)


def manufactured_chi(grid: Grid):
    chi = np.exp(-grid.rr ** 2 - grid.zz ** 2)
    lap5 = (4.0 * (grid.rr ** 2 + grid.zz ** 2) - 10.0) * chi
    return chi, lap5


def manufactured_psi_error(n: int, L: float = 4.0) -> float:
    """L2 error of the finite-volume ``psi`` against ``psi*`` with exact outer data."""
    grid = Grid(n, n, L, L)
    chi, lap5 = manufactured_chi(grid)
    ex = lambda r, z: np.exp(-r * r - z * z)  # noqa: E731
    num = solve_chi_fd(grid, lap5, ex(grid.rmax, grid.z), ex(grid.r, -grid.zmax), ex(grid.r, grid.zmax))
    return float(np.sqrt(grid.integrate((grid.rr ** 2 * (num - chi)) ** 2)))


def check_manufactured(n: int) -> CheckResult:
    e1, e2 = manufactured_psi_error(n // 2), manufactured_psi_error(n)
    ratio = e1 / e2
    return CheckResult("manufactured", 2, 3.4 <= ratio <= 4.6,
                       f"L2 error {e1:.3e} ({n // 2}) / {e2:.3e} ({n}) = {ratio:.3f}, want [3.4, 4.6]")


def manufactured_divergence(n: int, L: float = 4.0) -> float:
    grid = Grid(n, n, L, L)
    chi, _ = manufactured_chi(grid)
    sol = MagneticSolution(1.0, ScalarField(grid, grid.rr ** 2 * chi), ScalarField(grid, chi),
                           ScalarField(grid, np.zeros(grid.shape)), Route.FINITE_DIFFERENCE)
    return float(np.max(np.abs(divergence_residual(reconstruct_B(sol)))))


def check_divergence(n: int) -> CheckResult:
    d1, d2 = manufactured_divergence(n // 2), manufactured_divergence(n)
    ratio = d1 / d2
    return CheckResult("divergence", 12, 3.4 <= ratio <= 4.6,
                       f"max |div B| {d1:.3e} ({n // 2}) / {d2:.3e} ({n}) = {ratio:.3f}, want [3.4, 4.6]")


# --------------------------------------------------------------------------
# 3. and 4. two magnetic routes


def _gaussian(n: int) -> DensityField:
    grid, sup = _cylinder_grid(n)
    return gaussian_density(grid, 0.5, 1.0, sup)


def check_route_agreement(n: int) -> CheckResult:
    rho = _gaussian(n)
    a, b = solve_psi_fd(rho, 1.0), solve_psi_green(rho, 1.0)
    g = rho.grid
    d = np.sqrt(g.integrate((a.psi.values - b.psi.values) ** 2) / g.integrate(b.psi.values ** 2))
    tol = tier(n)["route"]
    return CheckResult("route-agreement", 3, d <= tol, f"relative L2 {d:.3e} <= {tol:g}")


def check_q_identity(n: int) -> CheckResult:
    q3, q5 = q_identity_check(_gaussian(n), 1.0)
    d = abs(q3 - q5) / abs(q5)
    tol = tier(n)["q_identity"]
    return CheckResult("q-identity", 4, d <= tol, f"Q3={q3:.6e} Q5={q5:.6e} rel {d:.3e} <= {tol:g} (K=1/pi)")


# --------------------------------------------------------------------------
# 5. positivity


def check_positivity(n: int, count: int = 20, seed: int = 5) -> CheckResult:
    grid, sup = _cylinder_grid(n)
    rng = np.random.default_rng(seed)
    bad, smallest = 0, np.inf
    for _ in range(count):
        rho = random_density(grid, sup, 1.0, rng)
        for beta in (1.0, -1.0, 0.1, -0.1):
            v = positivity_check(rho, beta)
            smallest = min(smallest, v / beta ** 2)
            bad += not v > 0
    return CheckResult("positivity", 5, bad == 0,
                       f"{bad} violations in {4 * count} cases, min betaQ/beta^2 = {smallest:.3e}")


# --------------------------------------------------------------------------
# 6.-8. equilibria


@lru_cache(maxsize=16)
def cached_solve(n: int, gamma: float, beta: float):
    grid, sup = _cylinder_grid(n)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        cfg = SolveConfig(1.0, PolytropeEos(gamma), beta, sup, grid)
    return solve(cfg)


def check_lane_emden(n: int) -> CheckResult:
    xi = {0.0: lane_emden(0.0).xi1, 1.0: lane_emden(1.0).xi1, 1.5: lane_emden(1.5).xi1}
    ode_ok = (abs(xi[0.0] - np.sqrt(6.0)) <= 1e-6 and abs(xi[1.0] - np.pi) <= 1e-6
              and abs(xi[1.5] - 3.6538) <= 1e-3)
    rho, rep = cached_solve(n, 2.0, 0.0)
    err = lane_emden_mismatch(rho, PolytropeEos(2.0))
    tol = tier(n)["lane_emden"]
    return CheckResult("lane-emden", 6, ode_ok and rep.converged and err <= tol,
                       f"xi1 = {xi[0.0]:.6f}, {xi[1.0]:.6f}, {xi[1.5]:.5f}; SCF profile rel L2 {err:.2e} <= {tol:g}")


def check_euler_lagrange(n: int) -> CheckResult:
    tol = tier(n)["el_cv"]
    parts, ok = [], True
    for gamma in (2.5, 3.0):
        for beta in (0.0, 0.5):
            rho, rep = cached_solve(n, gamma, beta)
            cfg = SolveConfig(1.0, PolytropeEos(gamma), beta, rho.support, rho.grid)
            # measured against the plain finite-volume psi, not the symmetrized one
            _, cv = el_residual(rho.values, potentials(rho, beta), cfg, raw=True)
            ok &= rep.converged and cv <= tol
            parts.append(f"g={gamma:g},b={beta:g}:{cv:.1e}")
    return CheckResult("euler-lagrange", 7, ok, "cv " + " ".join(parts) + f" <= {tol:g}")


def check_energy_descent(n: int) -> CheckResult:
    from .equilibrium import F_ROUNDING_SLACK

    _, rep = cached_solve(n, 2.5, 0.5)
    F = np.asarray(rep.F_history)
    rises = np.diff(F) > F_ROUNDING_SLACK * np.abs(F[:-1])
    ok = rep.converged and not np.any(rises) and F[-1] < 0
    return CheckResult("energy-descent", 8, ok,
                       f"{len(F)} accepted iterates, {int(rises.sum())} rises, F = {F[-1]:.6f} < 0")


# --------------------------------------------------------------------------
# 9. scaling


def check_scaling(n: int) -> CheckResult:
    grid, sup = _cylinder_grid(n)
    gamma = 2.5
    cfg = SolveConfig(1.0, PolytropeEos(gamma), 1.0, sup, grid)
    ex = scaling_exponents(cfg).exponents
    g, m, i = ex["gravity"][0], ex["magnetic"][0], ex["internal"][0]
    target = 3.0 * (gamma - 1.0)
    ok = abs(g - 1.0) <= 0.03 and abs(m + 1.0) <= 0.05 and abs(i / target - 1.0) <= 0.03
    return CheckResult("scaling", 9, ok, f"gravity {g:.4f}, magnetic {m:.4f}, internal {i:.4f} (target {target:g})")


# --------------------------------------------------------------------------
# 10. radial field


def check_radial_b(n: int | None = None) -> CheckResult:
    rep = radial_nonexistence_check(B0=4.0, r0=0.5, R=1.0, eps=0.1)
    ok = rep.max_deviation <= 1e-10 and abs(rep.energy_exponent + 1.0) <= 0.01 and abs(rep.energy - 4.5) <= 1e-6
    return CheckResult("radial-b", 10, ok,
                       f"max|r^2 B - c| {rep.max_deviation:.1e}, exponent {rep.energy_exponent:.6f}, "
                       f"E(0.1) = {rep.energy:.9f}")


# --------------------------------------------------------------------------
# 11. gates for gamma = 2 and ball support


def check_gates(n: int) -> CheckResult:
    grid, sup = _cylinder_grid(n)
    cfg0 = SolveConfig(1.0, PolytropeEos(2.0), 0.0, sup, grid)
    lb = lower_bound_probe(cfg0, 24, seed=0)
    C_hat = magnetic_constant(cfg0, 48, seed=1)
    beta_star = np.sqrt(2.0 * lb.empirical_C1 / (4.0 * np.pi * C_hat * sup.radius ** 2))
    beta = 0.25 * beta_star
    _, rep = cached_solve(n, 2.0, round(float(beta), 12))
    bounded = bool(np.isfinite(rep.energy.total) and rep.energy.total >= -lb.empirical_C2)
    bgrid = Grid(n, n, 2.5, 2.5)
    ball = SupportConstraint.parse("ball:2.5")
    bcfg = SolveConfig(1.0, PolytropeEos(1.7), 1.0, ball, bgrid)
    bp = ball_mode_probe(1.7, bcfg, n_samples=30, seed=0)
    try:
        SolveConfig(1.0, PolytropeEos(1.5), 0.0, ball, bgrid)
        rejected = False
    except ConfigError:
        rejected = True
    ok = rep.converged and bounded and bp.violations == 0 and bp.passed and rejected
    return CheckResult("gates", 11, ok,
                       f"gamma=2 beta={beta:.3g} (beta*~{beta_star:.3g}) converged={rep.converged} "
                       f"F={rep.energy.total:.5f}; ball gamma=1.7 violations={bp.violations}; "
                       f"gamma=1.5 rejected={rejected}")


CHECKS: dict[str, Callable[[int], CheckResult]] = {
    "gravity": check_gravity,
    "manufactured": check_manufactured,
    "route-agreement": check_route_agreement,
    "q-identity": check_q_identity,
    "positivity": check_positivity,
    "lane-emden": check_lane_emden,
    "euler-lagrange": check_euler_lagrange,
    "energy-descent": check_energy_descent,
    "scaling": check_scaling,
    "radial-b": check_radial_b,
    "gates": check_gates,
    "divergence": check_divergence,
}


def run_check(name: str, n: int = 128) -> CheckResult:
    t = time.perf_counter()
    try:
        res = CHECKS[name](n)
    except Exception as exc:  # a crashing check is a failing check
        res = CheckResult(name, list(CHECKS).index(name) + 1, False, f"error: {exc!r}")
    res.seconds = time.perf_counter() - t
    return res


def run_all(n: int = 128, only: list[str] | None = None) -> list[CheckResult]:
    names = list(CHECKS) if not only else only
    unknown = [k for k in names if k not in CHECKS]
    if unknown:
        raise KeyError(f"unknown checks: {', '.join(unknown)}")
    return [run_check(k, n) for k in names]
