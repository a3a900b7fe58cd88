"""Energy functional ``F = int A(rho) - (1/2) rho G(rho) - (1/2) beta rho P(rho)``."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .fields import DensityField, PolytropeEos
from .gravity import gravity_of_values
from .magnetics import chi_fd_values, chi_green_values, psi_fd_symmetric_values

# area(S^1) / area(S^3)
K_SPHERE_RATIO = 2.0 * np.pi / (2.0 * np.pi ** 2)


@dataclass(frozen=True)
class EnergyBreakdown:
    internal: float
    gravitational: float  # -(1/2) int rho G
    magnetic: float  # I2 = -(1/2) beta Q
    Q: float  # int rho psi d^3x
    K: float = K_SPHERE_RATIO

    @property
    def total(self) -> float:
        return self.internal + self.gravitational + self.magnetic

    @property
    def nonmagnetic(self) -> float:
        """``F~ = F - I2``."""
        return self.internal + self.gravitational

    def as_dict(self) -> dict:
        d = asdict(self)
        d["total"] = self.total
        d["nonmagnetic"] = self.nonmagnetic
        return d

    def to_text(self) -> str:
        return "".join(f"{k}={v!r}\n" for k, v in self.as_dict().items())


@dataclass(frozen=True, eq=False)
class Potentials:
    """``G(rho)``, ``psi = P(rho)`` and the energy gradient ``psi_grad`` on the density grid.

    ``psi_grad = (P + P*) rho / 2`` is the exact derivative of the discrete
    ``(1/2) int rho psi``; it differs from ``psi`` by the O(h^2) asymmetry of
    the finite-volume map.
    """

    gravity: np.ndarray
    psi: np.ndarray
    chi: np.ndarray
    psi_grad: np.ndarray


def potentials(rho: DensityField, beta: float) -> Potentials:
    grid = rho.grid
    g = gravity_of_values(grid, rho.values)
    chi = chi_fd_values(grid, rho.values, beta)
    return Potentials(g, grid.rr ** 2 * chi, chi, psi_fd_symmetric_values(grid, rho.values, beta, chi))


def energy(rho: DensityField, eos: PolytropeEos, beta: float,
           pots: Potentials | None = None) -> EnergyBreakdown:
    """Energy breakdown with ``G`` by direct quadrature and ``psi`` from the FD route."""
    if pots is None:
        pots = potentials(rho, beta)
    grid = rho.grid
    v = rho.values
    internal = grid.integrate(eos.internal_energy_density(v))
    grav = -0.5 * grid.integrate(v * pots.gravity)
    Q = grid.integrate(v * pots.psi)
    return EnergyBreakdown(internal=internal, gravitational=grav, magnetic=-0.5 * beta * Q, Q=Q)


def q_identity_check(rho: DensityField, beta: float) -> tuple[float, float]:
    """``(Q3, Q5)``: the 3-D integral with FD ``psi`` and ``K`` times the 5-D one with Green ``chi``."""
    grid = rho.grid
    v = rho.values
    chi_fd = chi_fd_values(grid, v, beta)
    q3 = grid.integrate(v * grid.rr ** 2 * chi_fd)
    chi_g = chi_green_values(grid, v, beta)
    # int rho_e chi_e d^5x, d^5x = 2 pi^2 R^3 dR dz
    q5 = K_SPHERE_RATIO * 2.0 * np.pi ** 2 * float(np.sum(v * chi_g * grid.rr ** 3)) * grid.dr * grid.dz
    return q3, q5


def positivity_check(rho: DensityField, beta: float) -> float:
    """``beta * int rho psi``, strictly positive for nonzero rho and beta."""
    if beta == 0.0:
        raise ValueError("positivity_check needs beta != 0")
    if not np.any(rho.values):
        raise ValueError("positivity_check needs a nonzero density")
    grid = rho.grid
    chi = chi_fd_values(grid, rho.values, beta)
    return beta * grid.integrate(rho.values * grid.rr ** 2 * chi)


def power_integral(rho: DensityField, gamma: float) -> float:
    """``int rho^gamma d^3x``."""
    return rho.grid.integrate(rho.values ** gamma)


HISTORY_COLUMNS = ("iter", "F", "internal", "gravitational", "magnetic", "lambda", "el_cv", "mass_err")
