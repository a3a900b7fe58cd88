"""Axisymmetric grid, scalar fields, polytropic EOS and admissible density classes.

The grid is cell-centred on ``r in [0, rmax]``, ``z in [-zmax, zmax]``; the
midpoint weight ``2 pi r_i dr dz`` is the exact volume of each annular cell.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.interpolate import RegularGridInterpolator

MASS_RTOL = 1e-10


@dataclass(frozen=True)
class Grid:
    nr: int
    nz: int
    rmax: float
    zmax: float

    def __post_init__(self):
        if self.nr < 4 or self.nz < 4:
            raise ValueError(f"grid needs nr, nz >= 4 (got {self.nr}x{self.nz})")
        if not (self.rmax > 0 and self.zmax > 0):
            raise ValueError("rmax and zmax must be positive")

    @property
    def dr(self) -> float:
        return self.rmax / self.nr

    @property
    def dz(self) -> float:
        return 2.0 * self.zmax / self.nz

    @property
    def shape(self) -> tuple[int, int]:
        return (self.nr, self.nz)

    @cached_property
    def r(self) -> np.ndarray:
        return (np.arange(self.nr) + 0.5) * self.dr

    @cached_property
    def z(self) -> np.ndarray:
        return -self.zmax + (np.arange(self.nz) + 0.5) * self.dz

    @cached_property
    def rr(self) -> np.ndarray:
        return np.broadcast_to(self.r[:, None], self.shape)

    @cached_property
    def zz(self) -> np.ndarray:
        return np.broadcast_to(self.z[None, :], self.shape)

    @cached_property
    def volume(self) -> np.ndarray:
        """Cell volumes ``2 pi r_i dr dz`` (shape ``(nr, nz)``)."""
        return np.broadcast_to((2.0 * np.pi * self.dr * self.dz) * self.r[:, None], self.shape)

    def integrate(self, values) -> float:
        """Midpoint quadrature of an axisymmetric integrand over R^3."""
        return float(np.sum(self.volume * values))

    def __hash__(self):
        return hash((self.nr, self.nz, self.rmax, self.zmax))


@dataclass(frozen=True, eq=False)
class ScalarField:
    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != self.grid.shape:
            raise ValueError(f"field shape {v.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        object.__setattr__(self, "values", v)


class SupportMode(enum.Enum):
    CYLINDER = "cylinder"
    BALL = "ball"


@dataclass(frozen=True)
class SupportConstraint:
    """Support confinement: ``r < radius`` (cylinder) or ``sqrt(r^2+z^2) < radius`` (ball)."""

    mode: SupportMode
    radius: float

    def __post_init__(self):
        if isinstance(self.mode, str):
            object.__setattr__(self, "mode", SupportMode(self.mode.lower()))
        if not self.radius > 0:
            raise ValueError("support radius must be positive")

    @classmethod
    def parse(cls, text: str) -> "SupportConstraint":
        """Parse ``cylinder:R`` or ``ball:R``."""
        try:
            mode, radius = text.split(":")
            return cls(SupportMode(mode.strip().lower()), float(radius))
        except ValueError as exc:
            raise ValueError(f"bad support {text!r}; expected cylinder:R or ball:R") from exc

    def __str__(self):
        return f"{self.mode.value}:{self.radius:g}"

    def check_grid(self, grid: Grid) -> None:
        if self.radius > grid.rmax * (1 + 1e-12):
            raise ValueError(f"support radius {self.radius} exceeds rmax {grid.rmax}")
        if self.mode is SupportMode.BALL and self.radius > grid.zmax * (1 + 1e-12):
            raise ValueError(f"ball radius {self.radius} exceeds zmax {grid.zmax}")

    def mask(self, grid: Grid) -> np.ndarray:
        """Boolean array, True where density may be nonzero."""
        if self.mode is SupportMode.CYLINDER:
            return np.broadcast_to(grid.r[:, None] < self.radius, grid.shape)
        return np.hypot(grid.rr, grid.zz) < self.radius


def discrete_mass(grid: Grid, values) -> float:
    return grid.integrate(values)


@dataclass(frozen=True, eq=False)
class DensityField:
    """Nonnegative, support-masked density of prescribed discrete mass."""

    field: ScalarField
    mass: float
    support: SupportConstraint

    def __post_init__(self):
        v = self.field.values
        if not self.mass > 0:
            raise ValueError("mass must be positive")
        if np.any(v < 0):
            raise ValueError("density must be nonnegative")
        if np.any(v[~self.support.mask(self.grid)] != 0.0):
            raise ValueError(f"density nonzero outside support {self.support}")
        m = discrete_mass(self.grid, v)
        if abs(m - self.mass) > MASS_RTOL * self.mass:
            raise ValueError(f"discrete mass {m!r} differs from M = {self.mass!r}")

    @property
    def grid(self) -> Grid:
        return self.field.grid

    @property
    def values(self) -> np.ndarray:
        return self.field.values

    @property
    def positive_set(self) -> np.ndarray:
        """Cells where the density is strictly positive."""
        return self.values > 0.0

    @classmethod
    def from_values(cls, grid: Grid, values, mass: float, support: SupportConstraint) -> "DensityField":
        """Mask ``values`` to ``support`` and rescale to discrete mass ``mass``."""
        support.check_grid(grid)
        v = np.where(support.mask(grid), np.asarray(values, dtype=float), 0.0)
        if np.any(v < 0):
            raise ValueError("density must be nonnegative")
        m = discrete_mass(grid, v)
        if not m > 0:
            raise ValueError("cannot normalize a density of zero mass")
        return cls(ScalarField(grid, v * (mass / m)), mass, support)


@dataclass(frozen=True)
class PolytropeEos:
    """Pressure ``p = kappa rho**gamma``; ``A = p/(gamma-1)`` and enthalpy ``i = A'``.

    ``kappa`` defaults to 1; other values are used to build shifted functionals
    ``F - c int rho^gamma``.
    """

    gamma: float
    kappa: float = 1.0

    def __post_init__(self):
        if not self.gamma > 1:
            raise ValueError("polytropic gamma must exceed 1")
        if not self.kappa > 0:
            raise ValueError("pressure scale must be positive")

    @property
    def index(self) -> float:
        """Polytropic index ``n = 1/(gamma - 1)``."""
        return 1.0 / (self.gamma - 1.0)

    def pressure(self, rho):
        return self.kappa * np.asarray(rho, dtype=float) ** self.gamma

    def internal_energy_density(self, rho):
        return self.pressure(rho) / (self.gamma - 1.0)

    def enthalpy(self, rho):
        rho = np.asarray(rho, dtype=float)
        if np.any(rho < 0):
            raise ValueError("enthalpy is defined for rho >= 0 only")
        g = self.gamma
        return self.kappa * g / (g - 1.0) * rho ** (g - 1.0)

    def enthalpy_inverse(self, u):
        """Inverse enthalpy on the positive part: zero wherever ``u <= 0``."""
        u = np.asarray(u, dtype=float)
        g = self.gamma
        return np.maximum((g - 1.0) / (g * self.kappa) * u, 0.0) ** (1.0 / (g - 1.0))


def eos_i(eos: PolytropeEos, rho):
    return eos.enthalpy(rho)


def eos_i_inverse(eos: PolytropeEos, u):
    return eos.enthalpy_inverse(u)


def normalize_mass(rho: DensityField, M: float) -> DensityField:
    """Rescale ``rho`` to discrete mass ``M``."""
    m = discrete_mass(rho.grid, rho.values)
    if not m > 0:
        raise ValueError("cannot normalize a density of zero mass")
    return DensityField(ScalarField(rho.grid, rho.values * (M / m)), M, rho.support)


def dilate(rho: DensityField, s: float) -> DensityField:
    """Mass-preserving concentration ``rho_s(r, z) = s**3 rho(s r, s z)``.

    Resampled by bilinear interpolation (axis handled by even reflection) and
    renormalized to the original mass.
    """
    if not s > 0:
        raise ValueError("dilation factor must be positive")
    if s == 1.0:
        return rho
    grid = rho.grid
    v = rho.values
    if s < 1.0:
        # expansion: the image of the occupied cells must stay inside support and grid
        occupied = v > 0
        r_img = (grid.rr[occupied] + 0.5 * grid.dr) / s
        z_img = (np.abs(grid.zz[occupied]) + 0.5 * grid.dz) / s
        if rho.support.mode is SupportMode.CYLINDER:
            inside = r_img <= rho.support.radius
        else:
            inside = np.hypot(r_img, z_img) <= rho.support.radius
        inside &= (r_img <= grid.rmax) & (z_img <= grid.zmax)
        if not np.all(inside):
            raise ValueError(f"dilation s={s} pushes mass outside the support {rho.support}")
    # even extension across the axis so interpolation at small r is symmetric
    r_ext = np.concatenate([-grid.r[::-1], grid.r])
    v_ext = np.concatenate([v[::-1], v], axis=0)
    interp = RegularGridInterpolator((r_ext, grid.z), v_ext, method="linear",
                                     bounds_error=False, fill_value=0.0)
    pts = np.stack([np.ravel(s * grid.rr), np.ravel(s * grid.zz)], axis=-1)
    out = (s ** 3) * interp(pts).reshape(grid.shape)
    out = np.maximum(out, 0.0)
    return DensityField.from_values(grid, out, rho.mass, rho.support)


def gaussian_density(grid: Grid, width: float, mass: float, support: SupportConstraint,
                     r0: float = 0.0, z0: float = 0.0) -> DensityField:
    """Gaussian ring/bump ``exp(-((r-r0)^2 + (z-z0)^2)/width^2)``, masked and normalized."""
    v = np.exp(-((grid.rr - r0) ** 2 + (grid.zz - z0) ** 2) / width ** 2)
    return DensityField.from_values(grid, v, mass, support)


def ball_fraction(grid: Grid, radius: float, nsub: int = 16) -> np.ndarray:
    """Volume fraction of each cell lying inside the ball of given radius."""
    off = (np.arange(nsub) + 0.5) / nsub - 0.5
    rs = grid.r[:, None, None, None] + off[None, None, :, None] * grid.dr
    zs = grid.z[None, :, None, None] + off[None, None, None, :] * grid.dz
    inside = (rs ** 2 + zs ** 2) < radius ** 2
    w = np.broadcast_to(rs, inside.shape)
    return np.sum(inside * w, axis=(2, 3)) / np.sum(w, axis=(2, 3))


def uniform_ball(grid: Grid, radius: float, rho0: float = 1.0) -> np.ndarray:
    """Values of a uniform ball of density ``rho0`` with fractional boundary cells."""
    return rho0 * ball_fraction(grid, radius)


@dataclass
class Snapshot:
    grid: Grid
    name: str
    values: np.ndarray = field(repr=False)


def write_snapshot(path, fld: ScalarField, name: str) -> None:
    """CSV snapshot: header ``# nr,nz,rmax,zmax,name`` then rows ``i,j,r,z,value``."""
    g = fld.grid
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"# {g.nr},{g.nz},{g.rmax!r},{g.zmax!r},{name}\n")
        for i in range(g.nr):
            ri = g.r[i]
            for j in range(g.nz):
                fh.write(f"{i},{j},{ri:.17g},{g.z[j]:.17g},{fld.values[i, j]:.17g}\n")


def read_snapshot(path) -> Snapshot:
    with open(path, encoding="ascii") as fh:
        header = fh.readline()
        if not header.startswith("#"):
            raise ValueError(f"{path}: missing snapshot header")
        nr, nz, rmax, zmax, name = (t.strip() for t in header[1:].split(",", 4))
        grid = Grid(int(nr), int(nz), float(rmax), float(zmax))
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    if data.shape[0] != grid.nr * grid.nz:
        raise ValueError(f"{path}: expected {grid.nr * grid.nz} rows, got {data.shape[0]}")
    values = np.zeros(grid.shape)
    values[data[:, 0].astype(int), data[:, 1].astype(int)] = data[:, 4]
    return Snapshot(grid, name, values)


def grid_from_text(text: str, rmax: float, zmax: float) -> Grid:
    """Build a grid from ``NRxNZ``."""
    try:
        nr, nz = (int(t) for t in text.lower().split("x"))
    except ValueError as exc:
        raise ValueError(f"bad grid {text!r}; expected NRxNZ") from exc
    return Grid(nr, nz, rmax, zmax)
