import numpy as np
import pytest

from magnetostar.fields import DensityField, Grid, SupportConstraint, gaussian_density, uniform_ball
from magnetostar.gravity import compute_gravity, gravitational_energy, gravity_at, gravity_of_values, kernel_table
from magnetostar.validation import uniform_sphere_errors


@pytest.fixture(scope="module")
def grid():
    return Grid(48, 96, 2.0, 2.0)


def test_zero_source(grid):
    assert not np.any(gravity_of_values(grid, np.zeros(grid.shape)))


def test_uniform_sphere_centre():
    centre, energy_err = uniform_sphere_errors(128)
    assert abs(centre) <= 0.01
    assert abs(energy_err) <= 0.02


def test_uniform_sphere_refinement():
    coarse = uniform_sphere_errors(64)
    fine = uniform_sphere_errors(128)
    assert abs(fine[0]) < abs(coarse[0])
    assert abs(fine[1]) < abs(coarse[1])


def test_far_field(grid):
    rho = gaussian_density(grid, 0.3, 1.7, SupportConstraint.parse("cylinder:2.0"))
    R = 3.0 * 0.3
    pts = 4 * R * np.array([[1.0, 0.0], [0.0, 1.0], [0.6, 0.8]])
    g = gravity_at(rho, pts[:, 0], pts[:, 1])
    assert np.allclose(g, 1.7 / (4 * R), rtol=0.01)


def test_kernel_table_positive_and_symmetric(grid):
    k = kernel_table(grid).kernel
    assert np.all(np.isfinite(k)) and np.all(k > 0)
    # K3(r_i, r_i', dz) = K3(r_i', r_i, -dz)
    assert np.allclose(k, np.transpose(k, (1, 0, 2))[:, :, ::-1], rtol=1e-13)


def test_toeplitz_matches_direct_sum(rng):
    grid = Grid(6, 9, 1.0, 1.0)
    v = rng.random(grid.shape)
    k = kernel_table(grid).kernel
    w = grid.rr * grid.dr * grid.dz
    direct = np.zeros(grid.shape)
    for i in range(grid.nr):
        for j in range(grid.nz):
            for a in range(grid.nr):
                for b in range(grid.nz):
                    direct[i, j] += k[i, a, j - b + grid.nz - 1] * w[a, b] * v[a, b]
    assert np.allclose(gravity_of_values(grid, v), direct, rtol=1e-12)


def test_bilinear_symmetry_and_linearity(grid, rng):
    a = rng.random(grid.shape)
    b = rng.random(grid.shape)
    ab = grid.integrate(a * gravity_of_values(grid, b))
    ba = grid.integrate(b * gravity_of_values(grid, a))
    assert ab == pytest.approx(ba, rel=1e-10)
    lhs = gravity_of_values(grid, 2.0 * a - 3.0 * b)
    rhs = 2.0 * gravity_of_values(grid, a) - 3.0 * gravity_of_values(grid, b)
    assert np.allclose(lhs, rhs, rtol=1e-12, atol=1e-12 * np.abs(rhs).max())


def test_positivity(grid, rng):
    for _ in range(5):
        v = rng.random(grid.shape) * (rng.random(grid.shape) < 0.3)
        assert grid.integrate(v * gravity_of_values(grid, v)) > 0


def test_energy_translation_invariant(grid):
    sup = SupportConstraint.parse("cylinder:2.0")
    # shift by a whole number of cells so the discrete problem is exactly translated
    shift = 8 * grid.dz
    e = []
    for z0 in (0.0, shift):
        rho = gaussian_density(grid, 0.4, 1.0, sup, z0=z0)
        e.append(gravitational_energy(rho, compute_gravity(rho)))
    assert e[0] == pytest.approx(e[1], rel=1e-6)


def test_energy_grid_mismatch(grid):
    rho = DensityField.from_values(grid, uniform_ball(grid, 1.0), 1.0, SupportConstraint.parse("cylinder:2.0"))
    other = compute_gravity(DensityField.from_values(Grid(8, 8, 2.0, 2.0), np.ones((8, 8)), 1.0,
                                                     SupportConstraint.parse("cylinder:2.0")))
    with pytest.raises(ValueError):
        gravitational_energy(rho, other)
