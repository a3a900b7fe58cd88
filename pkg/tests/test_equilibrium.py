import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from magnetostar.energy import potentials
from magnetostar.equilibrium import (F_ROUNDING_SLACK, ConfigError, SmallBetaWarning, SolveConfig,
                                     baseline_radius, el_potential, find_multiplier, lane_emden,
                                     lane_emden_density, mass_of_level, polytrope_scales, recentre,
                                     scf_step, solve, support_radius)
from magnetostar.fields import (DensityField, Grid, PolytropeEos, SupportConstraint, discrete_mass,
                                gaussian_density)

GRID = Grid(64, 64, 2.0, 2.0)
CYL = SupportConstraint.parse("cylinder:2.0")


def config(gamma=2.5, beta=0.0, grid=GRID, support=CYL, **kw):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SmallBetaWarning)
        return SolveConfig(M=kw.pop("M", 1.0), eos=PolytropeEos(gamma), beta=beta, support=support,
                           grid=grid, **kw)


_cache = {}


def solved(gamma, beta, M=1.0):
    key = (gamma, beta, M)
    if key not in _cache:
        cfg = config(gamma, beta, M=M)
        _cache[key] = (cfg, *solve(cfg))
    return _cache[key]


@pytest.mark.parametrize("n, xi1, tol", [(0.0, np.sqrt(6.0), 1e-9), (1.0, np.pi, 1e-9), (1.5, 3.6538, 1e-3)])
def test_lane_emden_first_zero(n, xi1, tol):
    assert lane_emden(n).xi1 == pytest.approx(xi1, abs=tol)


def test_lane_emden_profile_n1():
    le = lane_emden(1.0)
    x = np.linspace(0.1, 3.0, 30)
    assert np.allclose(le(x), np.sin(x) / x, atol=1e-9)
    assert le.omega == pytest.approx(np.pi, rel=1e-8)
    assert le(4.0) == 0.0


@pytest.mark.parametrize("n", [5.0, 6.0, -0.5])
def test_lane_emden_rejects_index(n):
    with pytest.raises(ValueError):
        lane_emden(n)


@pytest.mark.parametrize("gamma", [1.2, 4 / 3])
def test_scales_need_gamma_above_four_thirds(gamma):
    with pytest.raises(ValueError):
        polytrope_scales(1.0, PolytropeEos(gamma))


@pytest.mark.parametrize("M", [0.1, 1.0, 7.0])
def test_gamma_two_radius_is_mass_independent(M):
    assert baseline_radius(M, PolytropeEos(2.0)) == pytest.approx(np.sqrt(np.pi / 2), rel=1e-8)


@pytest.mark.parametrize("gamma", [1.7, 2.0, 2.5, 3.0])
def test_lane_emden_density_mass(gamma):
    grid = Grid(128, 256, 2.5, 2.5)
    m = discrete_mass(grid, lane_emden_density(grid, 1.0, PolytropeEos(gamma)))
    assert m == pytest.approx(1.0, rel=0.01)


def test_lane_emden_baseline_at_gamma_two():
    cfg, rho, rep = solved(2.0, 0.0)
    assert rep.converged
    ref = lane_emden_density(GRID, 1.0, cfg.eos)
    assert np.sqrt(GRID.integrate((rho.values - ref) ** 2) / GRID.integrate(ref ** 2)) < 0.04


def test_multiplier_is_minus_mass_over_radius():
    cfg, rho, rep = solved(2.0, 0.0)
    R = support_radius(rho)
    assert R == pytest.approx(baseline_radius(1.0, cfg.eos), rel=0.02)
    assert rep.lam == pytest.approx(-1.0 / R, rel=0.02)


@pytest.mark.parametrize("gamma, beta", [(2.0, 0.0), (2.5, 0.5), (3.0, 0.5)])
def test_negative_energy_and_descent(gamma, beta):
    _, rho, rep = solved(gamma, beta)
    assert rep.converged and rep.energy.total < 0
    F = np.asarray(rep.F_history)
    assert np.all(np.diff(F) <= F_ROUNDING_SLACK * np.abs(F[:-1]))
    assert rep.mass_error < 1e-10


@pytest.mark.parametrize("gamma, beta", [(2.5, 0.0), (2.5, 0.5)])
def test_fixed_point(gamma, beta):
    cfg, rho, rep = solved(gamma, beta)
    new, lam = scf_step(rho, cfg, mixing=1.0)
    assert np.sum(GRID.volume * np.abs(new.values - rho.values)) < 1e-6
    assert lam == pytest.approx(rep.lam, rel=1e-6)


def test_complementarity():
    cfg, rho, rep = solved(2.5, 0.5)
    u = el_potential(potentials(rho, cfg.beta), cfg.beta)
    outside = (rho.values == 0) & cfg.support.mask(GRID)
    assert np.all(u[outside] + rep.lam <= 1e-6 * abs(rep.lam))


@given(l1=st.floats(-3.0, 1.0), dl=st.floats(0.0, 2.0))
def test_mass_monotone_in_multiplier(l1, dl):
    rho = gaussian_density(GRID, 0.6, 1.0, CYL)
    u = potentials(rho, 0.3).gravity
    mask = CYL.mask(GRID)
    eos = PolytropeEos(2.5)
    assert mass_of_level(l1, u, eos, GRID, mask) <= mass_of_level(l1 + dl, u, eos, GRID, mask)


def test_find_multiplier_hits_mass():
    cfg = config(3.0, 0.2)
    rho = gaussian_density(GRID, 0.6, 1.0, CYL)
    lam, values = find_multiplier(el_potential(potentials(rho, 0.2), 0.2), cfg)
    assert discrete_mass(GRID, values) == pytest.approx(1.0, rel=1e-12)


def test_small_beta_continuity():
    _, rho0, _ = solved(2.5, 0.0)
    diffs = []
    for beta in (0.1, 0.05, 0.01):
        _, rho, rep = solved(2.5, beta)
        assert rep.converged
        diffs.append(np.sum(GRID.volume * np.abs(rho.values - rho0.values)))
    assert diffs[0] > diffs[1] > diffs[2]
    assert diffs[2] < 0.02


def test_magnetic_field_flattens_star():
    # the toroidal current pushes mass off the axis: larger cylindrical than axial extent
    _, rho, _ = solved(2.5, 1.0)
    pos = rho.values > 0
    assert GRID.rr[pos].max() > np.abs(GRID.zz[pos]).max()


def test_recentre_removes_offset():
    rho = gaussian_density(GRID, 0.4, 1.0, CYL, z0=0.25)
    out = recentre(rho.values, GRID)
    zc = discrete_mass(GRID, out * GRID.zz) / discrete_mass(GRID, out)
    assert abs(zc) < 1e-3


def test_report_serialization():
    _, _, rep = solved(2.5, 0.5)
    d = rep.as_dict()
    assert d["F"] == rep.energy.total and d["converged"] is True
    text = rep.to_text()
    assert "lambda=" in text and "Q=" in text
    lines = rep.history_csv().splitlines()
    assert lines[0].startswith("iter,F") and len(lines) == len(rep.history) + 1


# --------------------------------------------------------------------------
# configuration gates


@pytest.mark.parametrize("gamma", [1.5, 1.6, 1.2])
def test_gamma_gate(gamma):
    with pytest.raises(ConfigError, match="8/5"):
        config(gamma, support=SupportConstraint.parse("ball:2.0"))


def test_intermediate_gamma_needs_ball():
    grid = Grid(32, 32, 2.5, 2.5)
    with pytest.raises(ConfigError, match="ball"):
        config(1.7, grid=grid, support=SupportConstraint.parse("cylinder:2.5"))
    config(1.7, grid=grid, support=SupportConstraint.parse("ball:2.5"))


def test_gamma_two_with_beta_warns():
    with pytest.warns(SmallBetaWarning):
        SolveConfig(1.0, PolytropeEos(2.0), 0.1, CYL, GRID)


@pytest.mark.parametrize("kw", [dict(M=-1.0), dict(mixing=0.0), dict(mixing=1.5), dict(tol_el=0.0),
                                dict(max_iter=0), dict(beta=np.inf)])
def test_bad_parameters(kw):
    with pytest.raises(ConfigError):
        config(**kw)


def test_support_below_baseline_radius():
    with pytest.raises(ConfigError, match="baseline radius"):
        config(2.0, support=SupportConstraint.parse("cylinder:1.0"))


def test_initial_density_grid_mismatch():
    cfg = config()
    other = DensityField.from_values(Grid(32, 32, 2.0, 2.0), np.ones((32, 32)), 1.0, CYL)
    with pytest.raises(ValueError):
        solve(cfg, other)
