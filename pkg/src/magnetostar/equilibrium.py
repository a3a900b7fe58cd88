"""Constrained minimizer of the energy by self-consistent-field iteration.

Each step evaluates ``u = G(rho) + beta P(rho)``, inverts the first integral
``i(rho) = u + lambda`` on its positive part with ``lambda`` tuned to hold the
mass, and mixes the result with the previous iterate. A mixing weight that
raises the energy is halved until the energy does not increase.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicHermiteSpline
from scipy.optimize import brentq

from .energy import EnergyBreakdown, Potentials, energy, potentials
from .fields import (DensityField, Grid, PolytropeEos, ScalarField, SupportConstraint,
                     SupportMode, discrete_mass, uniform_ball)

GAMMA_BALL_MIN = 8.0 / 5.0
GAMMA_CYLINDER_MIN = 2.0
# energies of accepted iterates may rise by this much (relative) from rounding alone
F_ROUNDING_SLACK = 1e-13


class ConfigError(ValueError):
    """Rejected solver configuration."""


class MultiplierError(RuntimeError):
    """No level ``lambda`` reproduces the prescribed mass."""


class SmallBetaWarning(UserWarning):
    """gamma = 2 is only covered for sufficiently small |beta|."""


# --------------------------------------------------------------------------
# Lane-Emden baseline


@dataclass(frozen=True, eq=False)
class LaneEmdenSolution:
    n: float
    xi1: float
    xi: np.ndarray = field(repr=False)
    theta: np.ndarray = field(repr=False)
    dtheta: np.ndarray = field(repr=False)

    @property
    def omega(self) -> float:
        """``-xi1^2 theta'(xi1)``, the dimensionless mass."""
        return -self.xi1 ** 2 * float(self.dtheta[-1])

    def __call__(self, x):
        """``theta`` at ``x``, zero beyond ``xi1``."""
        x = np.asarray(x, dtype=float)
        spline = CubicHermiteSpline(self.xi, self.theta, self.dtheta)
        out = np.where(x < self.xi1, spline(np.clip(x, 0.0, self.xi1)), 0.0)
        return np.maximum(out, 0.0)


def lane_emden(n: float, h: float = 1e-4) -> LaneEmdenSolution:
    """Integrate ``theta'' + (2/xi) theta' + theta^n = 0`` to the first zero.

    Classical RK4 with fixed step ``h``, started from the series
    ``theta = 1 - xi^2/6 + n xi^4/120`` at ``xi = h``. The zero is located by
    cubic Hermite interpolation on the last step.
    """
    if not 0.0 <= n < 5.0:
        raise ValueError(f"Lane-Emden index must satisfy 0 <= n < 5 (got {n}); n >= 5 has no finite zero")
    if not h > 0:
        raise ValueError("step must be positive")

    def rhs(x, t, dt):
        return dt, -np.maximum(t, 0.0) ** n - 2.0 * dt / x

    x = h
    t = 1.0 - x * x / 6.0 + n * x ** 4 / 120.0
    dt = -x / 3.0 + n * x ** 3 / 30.0
    xs, ts, dts = [0.0, x], [1.0, t], [0.0, dt]
    while True:
        k1 = rhs(x, t, dt)
        k2 = rhs(x + h / 2, t + h / 2 * k1[0], dt + h / 2 * k1[1])
        k3 = rhs(x + h / 2, t + h / 2 * k2[0], dt + h / 2 * k2[1])
        k4 = rhs(x + h, t + h * k3[0], dt + h * k3[1])
        t_new = t + h / 6 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        dt_new = dt + h / 6 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        if t_new <= 0.0:
            seg = CubicHermiteSpline([x, x + h], [t, t_new], [dt, dt_new])
            roots = [r for r in seg.roots(extrapolate=False) if x <= r <= x + h]
            xi1 = float(min(roots)) if roots else x + h * t / (t - t_new)
            xs.append(xi1), ts.append(0.0), dts.append(float(seg(xi1, 1)))
            break
        x, t, dt = x + h, t_new, dt_new
        xs.append(x), ts.append(t), dts.append(dt)
        if x > 1e3:
            raise ValueError(f"no zero of theta found for n={n}")
    return LaneEmdenSolution(n, xi1, np.array(xs), np.array(ts), np.array(dts))


@dataclass(frozen=True)
class PolytropeScales:
    """Lane-Emden scaling of the non-magnetic star: ``rho = rho_c theta^n(|x|/alpha)``."""

    rho_c: float
    alpha: float
    radius: float
    le: LaneEmdenSolution = field(repr=False)


def polytrope_scales(M: float, eos: PolytropeEos, h: float = 1e-4) -> PolytropeScales:
    g = eos.gamma
    if not g > 4.0 / 3.0:
        raise ValueError(f"the non-magnetic star needs gamma > 4/3 (got {g})")
    le = lane_emden(eos.index, h)
    c = eos.kappa * g / (4.0 * np.pi * (g - 1.0))
    rho_c = (M / (4.0 * np.pi * c ** 1.5 * le.omega)) ** (2.0 / (3.0 * g - 4.0))
    alpha = np.sqrt(c * rho_c ** (g - 2.0))
    return PolytropeScales(rho_c, alpha, alpha * le.xi1, le)


def baseline_radius(M: float, eos: PolytropeEos, grid: Grid | None = None) -> float:
    """Radius ``R_M`` of the non-magnetic minimizer.

    For ``p = rho^gamma``, ``R_M = alpha xi1`` with
    ``alpha^2 = kappa gamma rho_c^(gamma-2) / (4 pi (gamma-1))``; at ``gamma = 2``
    this is ``sqrt(pi/2)`` whatever the mass. If ``grid`` is given the star
    must fit inside it.
    """
    R = polytrope_scales(M, eos).radius
    if grid is not None and R >= min(grid.rmax, grid.zmax):
        raise ValueError(f"baseline radius {R:.4g} does not fit in the grid")
    return R


def lane_emden_density(grid: Grid, M: float, eos: PolytropeEos) -> np.ndarray:
    """Analytic non-magnetic profile sampled at cell centres (not renormalized)."""
    sc = polytrope_scales(M, eos)
    theta = sc.le(np.hypot(grid.rr, grid.zz) / sc.alpha)
    return sc.rho_c * theta ** eos.index


# --------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class SolveConfig:
    M: float
    eos: PolytropeEos
    beta: float
    support: SupportConstraint
    grid: Grid
    mixing: float = 0.5
    tol_density: float = 1e-8
    tol_el: float = 1e-3
    max_iter: int = 500

    def __post_init__(self):
        self.validate()

    @property
    def gamma(self) -> float:
        return self.eos.gamma

    def validate(self) -> None:
        g = self.gamma
        if not g > GAMMA_BALL_MIN:
            raise ConfigError(f"gamma = {g} rejected: gamma must exceed 8/5 (ball support) or 2 (cylinder)")
        if g < GAMMA_CYLINDER_MIN and self.support.mode is not SupportMode.BALL:
            raise ConfigError(f"gamma = {g} in (8/5, 2) requires ball support")
        if g == GAMMA_CYLINDER_MIN and self.beta != 0.0 and self.support.mode is SupportMode.CYLINDER:
            warnings.warn("gamma = 2 is only admissible for sufficiently small |beta|; "
                          "compare with the beta-threshold probe", SmallBetaWarning, stacklevel=3)
        if not self.M > 0:
            raise ConfigError("mass must be positive")
        if not np.isfinite(self.beta):
            raise ConfigError("beta must be finite")
        if not 0.0 < self.mixing <= 1.0:
            raise ConfigError("mixing must lie in (0, 1]")
        if not (self.tol_density > 0 and self.tol_el > 0):
            raise ConfigError("tolerances must be positive")
        if self.max_iter < 1:
            raise ConfigError("max_iter must be at least 1")
        try:
            self.support.check_grid(self.grid)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        R_M = baseline_radius(self.M, self.eos)
        if self.support.radius < R_M:
            raise ConfigError(f"support radius {self.support.radius} is below the baseline radius R_M = {R_M:.6g}")
        if R_M >= self.grid.zmax:
            raise ConfigError(f"zmax = {self.grid.zmax} cannot hold a star of radius {R_M:.6g}")


# --------------------------------------------------------------------------
# SCF iteration


@dataclass
class SolveReport:
    lam: float
    iterations: int
    F_history: list[float]
    el_residual_cv: float
    mass_error: float
    converged: bool
    density_change: float = np.nan
    history: list[dict] = field(default_factory=list, repr=False)
    energy: EnergyBreakdown | None = None
    stop_reason: str = ""

    def as_dict(self) -> dict:
        d = {
            "converged": self.converged,
            "iterations": self.iterations,
            "lambda": self.lam,
            "el_residual_cv": self.el_residual_cv,
            "mass_error": self.mass_error,
            "density_change": self.density_change,
            "stop_reason": self.stop_reason,
        }
        if self.energy is not None:
            names = {"total": "F", "Q": "Q", "K": "K", "nonmagnetic": "F_nonmagnetic"}
            d.update({names.get(k, f"energy_{k}"): v for k, v in self.energy.as_dict().items()})
        return d

    def to_text(self) -> str:
        return "".join(f"{k}={v!r}\n" if isinstance(v, float) else f"{k}={v}\n"
                       for k, v in self.as_dict().items())

    def history_csv(self) -> str:
        cols = ("iter", "F", "internal", "gravitational", "magnetic", "lambda", "el_cv", "mass_err")
        lines = [",".join(cols)]
        for row in self.history:
            lines.append(",".join(f"{row[c]:.17g}" if c != "iter" else str(row[c]) for c in cols))
        return "\n".join(lines) + "\n"


def el_potential(pots: Potentials, beta: float) -> np.ndarray:
    """``u = G(rho) + beta P(rho)``, with ``P`` in its discretely self-adjoint form."""
    return pots.gravity + beta * pots.psi_grad


def mass_of_level(lam: float, u: np.ndarray, eos: PolytropeEos, grid: Grid, mask: np.ndarray) -> float:
    return discrete_mass(grid, np.where(mask, eos.enthalpy_inverse(u + lam), 0.0))


def find_multiplier(u: np.ndarray, cfg: SolveConfig, rtol: float = 1e-12) -> tuple[float, np.ndarray]:
    """Level ``lambda`` with ``mass(i^-1((u + lambda)_+)) = M`` on the support mask."""
    grid, eos = cfg.grid, cfg.eos
    mask = cfg.support.mask(grid)
    if not np.all(np.isfinite(u[mask])):
        raise MultiplierError("EL potential is not finite on the support")
    lo = -float(np.max(u[mask]))
    step = max(abs(lo), 1.0)
    hi = lo + step
    while mass_of_level(hi, u, eos, grid, mask) < cfg.M:
        step *= 2.0
        hi = lo + step
        if step > 1e12:
            raise MultiplierError("multiplier bracket failure")

    def excess(lam):
        return mass_of_level(lam, u, eos, grid, mask) - cfg.M

    lam = brentq(excess, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
    values = np.where(mask, eos.enthalpy_inverse(u + lam), 0.0)
    if abs(discrete_mass(grid, values) - cfg.M) > rtol * cfg.M:
        raise MultiplierError("multiplier search did not reach the mass tolerance")
    return lam, values


def recentre(values: np.ndarray, grid: Grid) -> np.ndarray:
    """Shift along z so the mass centroid sits at ``z = 0`` (linear interpolation)."""
    m = discrete_mass(grid, values)
    zc = discrete_mass(grid, values * grid.zz) / m
    if abs(zc) <= 1e-12 * grid.zmax:
        return values
    src = grid.z + zc
    out = np.empty_like(values)
    for i in range(grid.nr):
        out[i] = np.interp(src, grid.z, values[i], left=0.0, right=0.0)
    return out


def interior_support(values: np.ndarray) -> np.ndarray:
    """Positive cells whose four neighbours are positive (the axis mirrors itself)."""
    pos = values > 0
    inner = pos.copy()
    inner[1:, :] &= pos[:-1, :]
    inner[:-1, :] &= pos[1:, :]
    inner[-1, :] = False
    inner[:, 1:] &= pos[:, :-1]
    inner[:, :-1] &= pos[:, 1:]
    inner[:, 0] = False
    inner[:, -1] = False
    return inner


def el_residual(values: np.ndarray, pots: Potentials, cfg: SolveConfig,
                support: np.ndarray | None = None, raw: bool = False) -> tuple[float, float]:
    """Mean and coefficient of variation of ``A'(rho) - u`` over interior support.

    ``support`` overrides the positive set of ``values`` (mixed iterates keep
    geometrically decaying tails outside the star). ``raw=True`` uses the plain
    finite-volume ``psi`` instead of its self-adjoint part.
    """
    inner = interior_support(values if support is None else support)
    if not np.any(inner):
        return np.nan, np.inf
    u = pots.gravity + cfg.beta * pots.psi if raw else el_potential(pots, cfg.beta)
    res = (cfg.eos.enthalpy(values) - u)[inner]
    w = cfg.grid.volume[inner]
    mean = np.average(res, weights=w)
    std = np.sqrt(np.average((res - mean) ** 2, weights=w))
    return float(mean), float(std / abs(mean))


def initial_density(cfg: SolveConfig) -> DensityField:
    """Uniform ball of radius ``min(support radius, R_M)`` and mass ``M``."""
    R = min(cfg.support.radius, baseline_radius(cfg.M, cfg.eos))
    return DensityField.from_values(cfg.grid, uniform_ball(cfg.grid, R), cfg.M, cfg.support)


def scf_step(rho: DensityField, cfg: SolveConfig, pots: Potentials | None = None,
             mixing: float | None = None) -> tuple[DensityField, float]:
    """One mixed SCF update; returns the new iterate and the multiplier."""
    if pots is None:
        pots = potentials(rho, cfg.beta)
    lam, full = find_multiplier(el_potential(pots, cfg.beta), cfg)
    a = cfg.mixing if mixing is None else mixing
    mixed = a * full + (1.0 - a) * rho.values
    return DensityField.from_values(cfg.grid, mixed, cfg.M, cfg.support), lam


def _history_row(it, e: EnergyBreakdown, lam, cv, mass_err):
    return {"iter": it, "F": e.total, "internal": e.internal, "gravitational": e.gravitational,
            "magnetic": e.magnetic, "lambda": lam, "el_cv": cv, "mass_err": mass_err}


def _preset(cfg: SolveConfig, name: str) -> DensityField:
    if name == "uniform-ball":
        return initial_density(cfg)
    if name == "lane-emden":
        return DensityField.from_values(cfg.grid, lane_emden_density(cfg.grid, cfg.M, cfg.eos),
                                        cfg.M, cfg.support)
    raise ValueError(f"unknown initial preset {name!r}")


def anderson_candidate(xs: list[np.ndarray], fs: list[np.ndarray], mixing: float,
                       weights: np.ndarray) -> np.ndarray:
    """Anderson extrapolation of the damped fixed-point map from stored iterates.

    ``xs[k]`` are past iterates and ``fs[k] = G(xs[k]) - xs[k]`` their SCF
    residuals; the least-squares mix minimizes the weighted residual norm.
    """
    x, f = xs[-1], fs[-1]
    dX = np.stack([(b - a).ravel() for a, b in zip(xs[:-1], xs[1:])], axis=1)
    dF = np.stack([(b - a).ravel() for a, b in zip(fs[:-1], fs[1:])], axis=1)
    w = np.sqrt(weights.ravel())[:, None]
    coef, *_ = np.linalg.lstsq(dF * w, f.ravel() * w[:, 0], rcond=None)
    step = mixing * f.ravel() - (dX + mixing * dF) @ coef
    return np.maximum(x + step.reshape(x.shape), 0.0)


def solve(cfg: SolveConfig, rho0: DensityField | str = "uniform-ball",
          min_mixing: float = 2.0 ** -12, anderson: int = 5) -> tuple[DensityField, SolveReport]:
    """Iterate the SCF map with energy backtracking until both tolerances hold.

    Each step first tries an Anderson extrapolation over the last ``anderson``
    iterates (0 disables it); if that raises the energy, the plain mixed update
    ``a rho_new + (1 - a) rho`` is used with ``a`` halved from ``cfg.mixing``
    until the energy does not increase. Non-convergence is reported
    (``converged=False``), not raised.
    """
    rho = _preset(cfg, rho0) if isinstance(rho0, str) else rho0
    if rho.grid != cfg.grid:
        raise ValueError("initial density lives on a different grid")
    grid, M = cfg.grid, cfg.M
    slack = F_ROUNDING_SLACK

    def attempt(values):
        trial = DensityField.from_values(grid, recentre(values, grid), M, cfg.support)
        pots_t = potentials(trial, cfg.beta)
        return trial, pots_t, energy(trial, cfg.eos, cfg.beta, pots_t)

    rho = DensityField.from_values(grid, recentre(rho.values, grid), M, cfg.support)
    pots = potentials(rho, cfg.beta)
    e = energy(rho, cfg.eos, cfg.beta, pots)
    lam, cv = el_residual(rho.values, pots, cfg)
    history = [_history_row(0, e, lam, cv, abs(discrete_mass(grid, rho.values) - M) / M)]
    F_hist = [e.total]
    xs: list[np.ndarray] = []
    fs: list[np.ndarray] = []
    converged, reason, change = False, "max_iter", np.inf
    it = 0
    for it in range(1, cfg.max_iter + 1):
        lam, full = find_multiplier(el_potential(pots, cfg.beta), cfg)
        change = float(np.sum(grid.volume * np.abs(full - rho.values))) / M
        _, cv = el_residual(rho.values, pots, cfg, support=full)
        if change < cfg.tol_density and cv < cfg.tol_el:
            converged, reason = True, "tolerances met"
            # finish on the unmixed update, which has the exact free boundary
            final, pots_f, e_f = attempt(full)
            if e_f.total <= e.total + slack * abs(e.total):
                rho, pots, e = final, pots_f, e_f
                F_hist.append(e.total)
                lam_f, cv_f = el_residual(rho.values, pots, cfg)
                history.append(_history_row(it, e, lam_f, cv_f, abs(discrete_mass(grid, rho.values) - M) / M))
            break
        xs.append(rho.values)
        fs.append(full - rho.values)
        del xs[:-(anderson + 1)], fs[:-(anderson + 1)]
        accepted = False
        if anderson > 0 and len(xs) > 1:
            trial, pots_t, e_t = attempt(anderson_candidate(xs, fs, cfg.mixing, grid.volume))
            accepted = e_t.total <= e.total + slack * abs(e.total)
            if not accepted:
                xs, fs = xs[-1:], fs[-1:]
        a = cfg.mixing
        while not accepted:
            trial, pots_t, e_t = attempt(a * full + (1.0 - a) * rho.values)
            accepted = e_t.total <= e.total + slack * abs(e.total)
            if not accepted:
                a *= 0.5
                if a < min_mixing:
                    break
        if not accepted:
            reason = "energy stagnation"
            converged = change < cfg.tol_density and cv < cfg.tol_el
            break
        rho, pots, e = trial, pots_t, e_t
        _, cv_new = el_residual(rho.values, pots, cfg, support=full)
        F_hist.append(e.total)
        history.append(_history_row(it, e, lam, cv_new, abs(discrete_mass(grid, rho.values) - M) / M))
    else:
        it = cfg.max_iter
    lam_final, cv_final = el_residual(rho.values, pots, cfg)
    report = SolveReport(
        lam=lam if converged else lam_final,
        iterations=it,
        F_history=F_hist,
        el_residual_cv=cv_final,
        mass_error=abs(discrete_mass(grid, rho.values) - M) / M,
        converged=converged,
        density_change=change,
        history=history,
        energy=e,
        stop_reason=reason,
    )
    return rho, report


def support_radius(rho: DensityField) -> float:
    """Equivalent-volume radius of the positive set, ``(3 V / 4 pi)^(1/3)``."""
    vol = float(np.sum(rho.grid.volume[rho.positive_set]))
    return (3.0 * vol / (4.0 * np.pi)) ** (1.0 / 3.0)
