"""Magnetic flux function ``psi = P(rho)`` and the fields it generates.

``psi`` solves ``psi_rr - psi_r/r + psi_zz = -4 pi beta r^2 rho``. With
``psi = r^2 chi`` this becomes the axisymmetric 5-D Poisson problem
``chi_rr + 3 chi_r/r + chi_zz = -4 pi beta rho``, which is solved two ways:

* ``solve_psi_fd``: conservative second-order finite volumes for ``chi``
  with far-field Dirichlet data taken from the Green route on the outer faces;
* ``solve_psi_green``: convolution with the 5-D fundamental solution
  ``-|x|^-3 / (8 pi^2)``, reduced to a 2-D quadrature by integrating over
  the unit 3-sphere analytically.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.optimize import curve_fit

from ._toeplitz import ZToeplitzOperator, dz_offsets
from .ellip import ring_kernel_5d
from .fields import DensityField, Grid, ScalarField

FD_RTOL = 1e-10
UNIT_5BALL_VOLUME = 8.0 * np.pi ** 2 / 15.0


class Route(enum.Enum):
    FINITE_DIFFERENCE = "fd"
    GREEN_5D = "green5d"


class SolverError(RuntimeError):
    """The linear solve missed its residual target."""


@dataclass(frozen=True, eq=False)
class MagneticSolution:
    beta: float
    psi: ScalarField
    chi: ScalarField
    f: ScalarField
    route: Route
    Br: ScalarField | None = None
    Bz: ScalarField | None = None
    Bz_axis: np.ndarray | None = None

    @property
    def grid(self) -> Grid:
        return self.psi.grid


def green5_constant() -> float:
    """``15 omega_5`` in ``G5(x) = -|x|^-3 / (15 omega_5)``; equals ``8 pi^2``."""
    return 15.0 * UNIT_5BALL_VOLUME


# --------------------------------------------------------------------------
# Green (5-D) route


def _subcell_self_kernel(grid: Grid, nsub: int = 4) -> np.ndarray:
    """Diagonal entries of the 5-D table, ``mean(a * R'^3)`` over nsub x nsub sub-cells."""
    off = (np.arange(nsub) + 0.5) / nsub - 0.5
    R = grid.r[:, None, None]
    Rp = R + off[None, :, None] * grid.dr
    dz = np.broadcast_to(off[None, None, :] * grid.dz, (grid.nr, nsub, nsub))
    vals = ring_kernel_5d(np.broadcast_to(R, dz.shape), np.broadcast_to(Rp, dz.shape), dz)
    return np.mean(vals * np.broadcast_to(Rp, dz.shape) ** 3, axis=(1, 2))


class GreenKernelTable:
    """Reduced 5-D kernel ``a(R_i, R_i', z_j - z_j') R_i'^3`` for one grid."""

    def __init__(self, grid: Grid):
        self.grid = grid
        r = grid.r
        dzs = dz_offsets(grid.nz, grid.dz)
        kern = np.empty((grid.nr, grid.nr, dzs.size))
        rp3 = r ** 3
        for i in range(grid.nr):
            row = np.empty((grid.nr, dzs.size))
            skip = np.zeros(row.shape, dtype=bool)
            skip[i, grid.nz - 1] = True
            rp = np.broadcast_to(r[:, None], row.shape)
            dz = np.broadcast_to(dzs[None, :], row.shape)
            row[~skip] = ring_kernel_5d(r[i], rp[~skip], dz[~skip])
            row *= rp3[:, None]
            kern[i] = row
        idx = np.arange(grid.nr)
        kern[idx, idx, grid.nz - 1] = _subcell_self_kernel(grid)
        self.kernel = kern
        self._op = ZToeplitzOperator(kern * (grid.dr * grid.dz))

    def apply(self, values: np.ndarray) -> np.ndarray:
        """``int rho(R', z') a R'^3 dR' dz'`` at cell centres."""
        return self._op.apply(values)


@lru_cache(maxsize=3)
def green_table(grid: Grid) -> GreenKernelTable:
    return GreenKernelTable(grid)


class BoundaryKernel:
    """Green-route chi on the outer faces r = rmax and z = +-zmax."""

    def __init__(self, grid: Grid):
        self.grid = grid
        r, z = grid.r, grid.z
        w = r ** 3 * grid.dr * grid.dz
        # r = rmax face: depends on (i', j - j') only
        dzs = dz_offsets(grid.nz, grid.dz)
        side = ring_kernel_5d(grid.rmax, r[:, None], dzs[None, :]) * w[:, None]
        self._side = ZToeplitzOperator(side[None, :, :])
        # z = +zmax face: target (r_i, zmax), source (r_i', z_j'); |dz| = zmax - z_j'
        top_dz = grid.zmax - z
        self._top = ring_kernel_5d(r[:, None, None], r[None, :, None], top_dz[None, None, :]) \
            * w[None, :, None]

        # the side kernel is even in z - z', so its transpose is again a Toeplitz map
        self._side_t = ZToeplitzOperator(side[:, None, :])

    def apply(self, values: np.ndarray):
        side = self._side.apply(values)[0]
        top = np.einsum("iak,ak->i", self._top, values)
        bottom = np.einsum("iak,ak->i", self._top, values[:, ::-1])
        return side, bottom, top

    def apply_transpose(self, side, bottom, top) -> np.ndarray:
        """Transpose of :meth:`apply`, mapping face vectors back to cell values."""
        out = self._side_t.apply(np.asarray(side)[None, :])
        out += np.einsum("iak,i->ak", self._top, top)
        out += np.einsum("iak,i->ak", self._top, bottom)[:, ::-1]
        return out


@lru_cache(maxsize=3)
def boundary_kernel(grid: Grid) -> BoundaryKernel:
    return BoundaryKernel(grid)


def chi_green_values(grid: Grid, values: np.ndarray, beta: float) -> np.ndarray:
    """``chi = (beta / 2 pi) int rho a R'^3 dR' dz'`` at cell centres."""
    if beta == 0.0 or not np.any(values):
        return np.zeros(grid.shape)
    return (beta / (2.0 * np.pi)) * green_table(grid).apply(values)


def chi_green_at(grid: Grid, values: np.ndarray, beta: float, R, z, chunk: int = 64) -> np.ndarray:
    """Green-route ``chi`` at arbitrary points (not at cell centres)."""
    R, z = np.broadcast_arrays(np.atleast_1d(np.asarray(R, float)), np.atleast_1d(np.asarray(z, float)))
    w = values * grid.rr ** 3 * grid.dr * grid.dz
    keep = w != 0
    rs, zs, ws = grid.rr[keep], grid.zz[keep], w[keep]
    out = np.empty(R.shape)
    fr, fz, fo = R.ravel(), z.ravel(), out.reshape(-1)
    for start in range(0, fr.size, chunk):
        sl = slice(start, start + chunk)
        fo[sl] = ring_kernel_5d(fr[sl, None], rs[None, :], fz[sl, None] - zs[None, :]) @ ws
    return (beta / (2.0 * np.pi)) * out


def solve_psi_green(rho: DensityField, beta: float) -> MagneticSolution:
    """Flux function by direct 5-D Green's-function quadrature."""
    grid = rho.grid
    chi = chi_green_values(grid, rho.values, beta)
    sol = _package(rho, beta, chi, Route.GREEN_5D)
    return reconstruct_B(sol)


# --------------------------------------------------------------------------
# finite-volume route


class FiveLaplacian:
    """Finite-volume ``Delta_5 = (1/R^3) d_R(R^3 d_R) + d_zz`` with Dirichlet outer faces.

    The axis needs no boundary condition: the face flux ``R^3 chi_R`` vanishes there.
    Rows are scaled by the 4-D shell volume ``(R_+^4 - R_-^4)/4``.
    """

    def __init__(self, grid: Grid):
        self.grid = grid
        nr, nz = grid.shape
        h, k = grid.dr, grid.dz
        faces = np.arange(nr + 1) * h
        self.shell = (faces[1:] ** 4 - faces[:-1] ** 4) / 4.0
        f3 = faces ** 3
        idx = np.arange(nr * nz).reshape(nr, nz)
        diag = np.zeros((nr, nz))
        rows, cols, vals = [], [], []

        def couple(a, b, c):
            rows.append(a.ravel()), cols.append(b.ravel()), vals.append(np.broadcast_to(c, a.shape).ravel())

        # radial fluxes through interior faces i+1/2
        cr = (f3[1:nr] / h)[:, None] / self.shell[:-1, None]
        cr_up = (f3[1:nr] / h)[:, None] / self.shell[1:, None]
        couple(idx[:-1], idx[1:], cr)
        couple(idx[1:], idx[:-1], cr_up)
        diag[:-1] -= cr
        diag[1:] -= cr_up
        # outer radial face: ghost = 2 g - chi  ->  flux 2 (g - chi)
        self.c_side = 2.0 * (f3[nr] / h) / self.shell[-1]
        diag[-1] -= self.c_side
        cz = 1.0 / k ** 2
        couple(idx[:, :-1], idx[:, 1:], cz)
        couple(idx[:, 1:], idx[:, :-1], cz)
        diag[:, :-1] -= cz
        diag[:, 1:] -= cz
        # z = -+zmax faces, same ghost treatment
        self.c_z = 2.0 * cz
        diag[:, 0] -= self.c_z
        diag[:, -1] -= self.c_z
        rows.append(idx.ravel()), cols.append(idx.ravel()), vals.append(diag.ravel())
        self.matrix = sp.csc_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(nr * nz, nr * nz))
        self._lu = spla.splu(self.matrix)

    def boundary_rhs(self, side, bottom, top) -> np.ndarray:
        """Contribution of Dirichlet face data moved to the right-hand side."""
        b = np.zeros(self.grid.shape)
        b[-1, :] -= self.c_side * side
        b[:, 0] -= self.c_z * bottom
        b[:, -1] -= self.c_z * top
        return b

    def solve(self, source: np.ndarray, side, bottom, top) -> np.ndarray:
        rhs = (source + self.boundary_rhs(side, bottom, top)).ravel()
        norm = np.linalg.norm(rhs)
        if norm == 0.0:
            return np.zeros(self.grid.shape)
        x = self._lu.solve(rhs)
        res = np.linalg.norm(self.matrix @ x - rhs) / norm
        if not res <= FD_RTOL:
            # one round of iterative refinement before giving up
            x = x + self._lu.solve(rhs - self.matrix @ x)
            res = np.linalg.norm(self.matrix @ x - rhs) / norm
            if not res <= FD_RTOL:
                raise SolverError(f"finite-volume solve residual {res:.3e} exceeds {FD_RTOL:g}")
        return x.reshape(self.grid.shape)

    def boundary_rhs_transpose(self, y: np.ndarray):
        return -self.c_side * y[-1, :], -self.c_z * y[:, 0], -self.c_z * y[:, -1]

    def solve_transpose(self, rhs: np.ndarray) -> np.ndarray:
        return self._lu.solve(rhs.ravel(), trans="T").reshape(self.grid.shape)

    def apply(self, chi: np.ndarray, side, bottom, top) -> np.ndarray:
        """Discrete operator applied to ``chi`` with the given face data."""
        return (self.matrix @ chi.ravel()).reshape(self.grid.shape) - self.boundary_rhs(side, bottom, top)


@lru_cache(maxsize=3)
def five_laplacian(grid: Grid) -> FiveLaplacian:
    return FiveLaplacian(grid)


def solve_chi_fd(grid: Grid, source: np.ndarray, side, bottom, top) -> np.ndarray:
    """Solve ``Delta_5 chi = source`` with Dirichlet data on the three outer faces."""
    return five_laplacian(grid).solve(source, side, bottom, top)


def far_field_chi(grid: Grid, values: np.ndarray, beta: float):
    """Green-route face values (side r = rmax, bottom z = -zmax, top z = +zmax)."""
    if beta == 0.0 or not np.any(values):
        return np.zeros(grid.nz), np.zeros(grid.nr), np.zeros(grid.nr)
    side, bottom, top = boundary_kernel(grid).apply(values)
    c = beta / (2.0 * np.pi)
    return c * side, c * bottom, c * top


def chi_fd_values(grid: Grid, values: np.ndarray, beta: float) -> np.ndarray:
    if beta == 0.0 or not np.any(values):
        return np.zeros(grid.shape)
    side, bottom, top = far_field_chi(grid, values, beta)
    return solve_chi_fd(grid, -4.0 * np.pi * beta * values, side, bottom, top)


def psi_fd_adjoint_values(grid: Grid, values: np.ndarray, beta: float) -> np.ndarray:
    """Adjoint of ``rho -> psi_FD`` in the volume-weighted inner product.

    The finite-volume map is not exactly self-adjoint (shell volumes differ from
    ``r^3 dr`` and the far-field data come from the Green route), so the
    gradient of ``(1/2) int rho psi`` is the symmetric part ``(P + P*)/2``.
    """
    if beta == 0.0 or not np.any(values):
        return np.zeros(grid.shape)
    lap = five_laplacian(grid)
    w = grid.volume
    y = lap.solve_transpose(grid.rr ** 2 * w * values)
    faces = lap.boundary_rhs_transpose(y)
    back = boundary_kernel(grid).apply_transpose(*faces)
    return (-4.0 * np.pi * beta * y + (beta / (2.0 * np.pi)) * back) / w


def psi_fd_symmetric_values(grid: Grid, values: np.ndarray, beta: float,
                            chi: np.ndarray | None = None) -> np.ndarray:
    """``(P + P*) rho / 2``: the gradient of ``(1/2) int rho psi_FD``."""
    if chi is None:
        chi = chi_fd_values(grid, values, beta)
    return 0.5 * (grid.rr ** 2 * chi + psi_fd_adjoint_values(grid, values, beta))


def solve_psi_fd(rho: DensityField, beta: float) -> MagneticSolution:
    """Flux function from the finite-volume solve of the 5-D form."""
    chi = chi_fd_values(rho.grid, rho.values, beta)
    return reconstruct_B(_package(rho, beta, chi, Route.FINITE_DIFFERENCE))


def _package(rho: DensityField, beta: float, chi: np.ndarray, route: Route) -> MagneticSolution:
    grid = rho.grid
    return MagneticSolution(
        beta=beta,
        psi=ScalarField(grid, grid.rr ** 2 * chi),
        chi=ScalarField(grid, chi),
        f=current_density(rho, beta),
        route=route,
    )


# --------------------------------------------------------------------------
# fields from psi


def d_dr(f: np.ndarray, dr: float, parity: int) -> np.ndarray:
    """Central r-derivative; the axis ghost is ``parity * f[0]`` (even: +1, odd: -1)."""
    ext = np.concatenate([parity * f[:1], f], axis=0)
    d = np.gradient(ext, dr, axis=0, edge_order=2)[1:]
    return d


def d_dz(f: np.ndarray, dz: float) -> np.ndarray:
    return np.gradient(f, dz, axis=1, edge_order=2)


def reconstruct_B(sol: MagneticSolution) -> MagneticSolution:
    """``B^r = psi_z / r`` and ``B^z = -psi_r / r`` by central differences.

    ``Bz_axis`` holds the on-axis limit ``-2 chi(0, z)``, extrapolated from the
    first two cells.
    """
    grid = sol.grid
    psi = sol.psi.values
    r = grid.rr
    Br = d_dz(psi, grid.dz) / r
    Bz = -d_dr(psi, grid.dr, parity=+1) / r
    chi = sol.chi.values
    chi_axis = (9.0 * chi[0] - chi[1]) / 8.0  # quadratic-in-r extrapolation to r = 0
    return replace(sol, Br=ScalarField(grid, Br), Bz=ScalarField(grid, Bz), Bz_axis=-2.0 * chi_axis)


def current_density(rho: DensityField, beta: float) -> ScalarField:
    """Azimuthal current profile ``f = beta rho`` (the current is ``r f`` along e_theta)."""
    return ScalarField(rho.grid, beta * rho.values)


def divergence_residual(sol: MagneticSolution, conservative: bool = False) -> np.ndarray:
    """Discrete ``div B`` at cell centres.

    ``conservative=True`` evaluates ``d_r(r B^r) + d_z(r B^z)``, which vanishes to
    rounding because the difference operators commute; the default evaluates
    the expanded form ``d_r B^r + B^r / r + d_z B^z``, whose residual is the
    O(h^2) truncation error.
    """
    grid = sol.grid
    Br, Bz = sol.Br.values, sol.Bz.values
    r = grid.rr
    if conservative:
        return d_dr(r * Br, grid.dr, parity=+1) + d_dz(r * Bz, grid.dz)
    return d_dr(Br, grid.dr, parity=-1) + Br / r + d_dz(Bz, grid.dz)


def faraday_residual(sol: MagneticSolution) -> np.ndarray:
    """``(1/r)(d_r B^z - d_z B^r) - 4 pi f`` at cell centres."""
    grid = sol.grid
    g = d_dr(sol.Bz.values, grid.dr, parity=+1) - d_dz(sol.Br.values, grid.dz)
    return g / grid.rr - 4.0 * np.pi * sol.f.values


# --------------------------------------------------------------------------
# spherically symmetric field


@dataclass(frozen=True)
class RadialReport:
    charge: float  # c = r0^2 B0
    max_deviation: float  # max |r^2 B(r) - c| over [eps, R]
    energy: float  # E(eps)
    energy_exponent: float  # p in E(e) ~ A e^p + C
    eps_ladder: np.ndarray
    energies: np.ndarray
    flux_conserved: bool  # r^2 B constant to 1e-8 (relative)
    r: np.ndarray
    B: np.ndarray


def _rk4_segment(y0, s0, s1, nsteps):
    """RK4 for ``(B, W)`` in ``s = ln r``: ``B' = -2B``, ``W' = B^2 e^{3s} / 2``."""
    def rhs(s, y):
        return np.array([-2.0 * y[0], 0.5 * y[0] ** 2 * np.exp(3.0 * s)])

    h = (s1 - s0) / nsteps
    ys = np.empty((nsteps + 1, 2))
    ys[0] = y0
    s = s0
    y = np.array(y0, dtype=float)
    for n in range(nsteps):
        k1 = rhs(s, y)
        k2 = rhs(s + h / 2, y + h / 2 * k1)
        k3 = rhs(s + h / 2, y + h / 2 * k2)
        k4 = rhs(s + h, y + h * k3)
        y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        s = s0 + (n + 1) * h
        ys[n + 1] = y
    return s0 + h * np.arange(nsteps + 1), ys


def radial_nonexistence_check(B0: float, r0: float, R: float, eps: float,
                              steps_per_segment: int = 2000, ladder: int = 6) -> RadialReport:
    """Radial field ``B(r) x/|x|`` forced by ``div B = 0`` to ``B = c/r^2``.

    Integrates ``dB/dr = -2B/r`` from ``B(r0) = B0`` with RK4 in ``ln r``,
    carrying the cumulative magnetic energy ``(1/8 pi) int B^2 4 pi r^2 dr``
    along. The truncated energy ``E(e)`` on ``[e, R]`` is sampled on the cutoff
    ladder ``e = eps / 2^k`` and fitted by ``A e^p + C``.
    """
    if not (0 < eps < r0 < R):
        raise ValueError("need 0 < eps < r0 < R")
    if not np.isfinite(B0):
        raise ValueError("B0 must be finite")
    eps_ladder = eps / 2.0 ** np.arange(ladder)
    s_r0 = np.log(r0)
    # upward from r0 to R
    s_up, y_up = _rk4_segment([B0, 0.0], s_r0, np.log(R), steps_per_segment)
    # downward from r0 through eps and each ladder cutoff
    knots = np.log(np.concatenate([[r0], eps_ladder]))
    s_down, y_down = [s_r0], [np.array([B0, 0.0])]
    y = np.array([B0, 0.0])
    for a, b in zip(knots[:-1], knots[1:]):
        seg_s, seg_y = _rk4_segment(y, a, b, steps_per_segment)
        s_down.extend(seg_s[1:])
        y_down.extend(seg_y[1:])
        y = seg_y[-1]
    s_down = np.array(s_down)
    y_down = np.array(y_down)
    s_all = np.concatenate([s_down[::-1], s_up[1:]])
    y_all = np.concatenate([y_down[::-1], y_up[1:]])
    r_all = np.exp(s_all)
    B_all = y_all[:, 0]
    c = r0 * r0 * B0
    inside = r_all >= eps * (1 - 1e-12)
    dev = float(np.max(np.abs(r_all[inside] ** 2 * B_all[inside] - c)))
    W_R = y_up[-1, 1]
    # W is cumulative from r0, so E(e) = W(R) - W(e); ladder cutoffs are knots
    W_at = {k: y_down[np.argmin(np.abs(s_down - k)), 1] for k in knots[1:]}
    energies = np.array([W_R - W_at[k] for k in knots[1:]])
    if c != 0.0:
        exponent = _fit_power_offset(eps_ladder, energies)
    else:
        exponent = float("nan")
    return RadialReport(
        charge=c,
        max_deviation=dev,
        energy=float(energies[0]),
        energy_exponent=exponent,
        eps_ladder=eps_ladder,
        energies=energies,
        flux_conserved=bool(dev <= 1e-8 * max(1.0, abs(c))),
        r=r_all[inside],
        B=B_all[inside],
    )


def _fit_power_offset(x, y):
    """Exponent ``p`` of a least-squares fit ``y = A x^p + C``."""
    scale = y[-1]

    def model(lx, logA, p, C):
        return np.exp(logA + p * lx) + C

    p0 = (np.log(abs(y[-1] * x[-1] / scale)), -1.5, 0.0)
    popt, _ = curve_fit(model, np.log(x), y / scale, p0=p0, maxfev=20000)
    return float(popt[1])
