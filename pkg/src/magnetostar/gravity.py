"""Gravitational operator ``G(rho)(x) = int rho(y)/|x - y| dy`` for axisymmetric rho.

The azimuthal integral is done analytically (complete elliptic integral ring
kernel) and the remaining (r', z') integral by the midpoint product rule on
the density grid. The gravitational potential is ``Phi = -G(rho)``.
"""

from functools import lru_cache

import numpy as np

from ._toeplitz import ZToeplitzOperator, dz_offsets
from .ellip import ring_kernel_3d
from .fields import DensityField, Grid, ScalarField


def self_cell_kernel(r: np.ndarray, dr: float, dz: float) -> np.ndarray:
    """Ring kernel averaged over a disk of the same area as the (dr, dz) cell.

    Near coincidence ``4 K(m)/D ~ (2/r) ln(8 r / d)`` with ``d`` the distance
    in the meridional plane; the disk average of ``ln(1/d)`` is ``ln(1/a) + 1/2``.
    """
    a = np.sqrt(dr * dz / np.pi)
    return (2.0 / r) * (np.log(8.0 * r / a) + 0.5)


class GravityKernelTable:
    """Precomputed ring-kernel values ``K3(r_i, r_i', z_j - z_j')`` for one grid."""

    def __init__(self, grid: Grid):
        self.grid = grid
        r = grid.r
        dzs = dz_offsets(grid.nz, grid.dz)
        kern = np.empty((grid.nr, grid.nr, dzs.size))
        # row by row keeps the AGM temporaries small
        for i in range(grid.nr):
            kern[i] = _kernel_row(r[i], r, dzs)
        idx = np.arange(grid.nr)
        kern[idx, idx, grid.nz - 1] = self_cell_kernel(r, grid.dr, grid.dz)
        self.kernel = kern
        weights = (r * grid.dr * grid.dz)[None, :, None]
        self._op = ZToeplitzOperator(kern * weights)

    def apply(self, values: np.ndarray) -> np.ndarray:
        return self._op.apply(values)


def _kernel_row(ri, r, dzs):
    out = np.empty((r.size, dzs.size))
    skip = np.zeros(out.shape, dtype=bool)
    skip[r == ri, dzs.size // 2] = True  # singular self cell, filled separately
    rp = np.broadcast_to(r[:, None], out.shape)
    dz = np.broadcast_to(dzs[None, :], out.shape)
    out[~skip] = ring_kernel_3d(ri, rp[~skip], dz[~skip])
    out[skip] = 0.0
    return out


@lru_cache(maxsize=3)
def kernel_table(grid: Grid) -> GravityKernelTable:
    return GravityKernelTable(grid)


def compute_gravity(rho: DensityField) -> ScalarField:
    """``G(rho)`` at the cell centres (nonnegative)."""
    return ScalarField(rho.grid, gravity_of_values(rho.grid, rho.values))


def gravity_of_values(grid: Grid, values: np.ndarray) -> np.ndarray:
    """Linear map from raw cell values (any sign) to ``G`` at cell centres."""
    if not np.any(values):
        return np.zeros(grid.shape)
    return kernel_table(grid).apply(values)


def gravity_at(rho: DensityField, r, z, chunk: int = 64) -> np.ndarray:
    """``G(rho)`` at arbitrary points not coinciding with a cell centre."""
    grid = rho.grid
    r = np.atleast_1d(np.asarray(r, float))
    z = np.atleast_1d(np.asarray(z, float))
    r, z = np.broadcast_arrays(r, z)
    src = rho.values * grid.rr * grid.dr * grid.dz
    nz_mask = src != 0
    rs, zs, w = grid.rr[nz_mask], grid.zz[nz_mask], src[nz_mask]
    out = np.empty(r.shape)
    flat_r, flat_z, flat_out = r.ravel(), z.ravel(), out.reshape(-1)
    for start in range(0, flat_r.size, chunk):
        sl = slice(start, start + chunk)
        k = ring_kernel_3d(flat_r[sl, None], rs[None, :], flat_z[sl, None] - zs[None, :])
        flat_out[sl] = k @ w
    return out


def gravitational_energy(rho: DensityField, g: ScalarField) -> float:
    """``(1/2) int rho G(rho) d^3x`` (enters the energy with a minus sign)."""
    if g.grid != rho.grid:
        raise ValueError("gravity field and density live on different grids")
    return 0.5 * rho.grid.integrate(rho.values * g.values)
