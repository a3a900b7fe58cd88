import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from magnetostar.energy import energy
from magnetostar.equilibrium import SmallBetaWarning, SolveConfig, solve
from magnetostar.fields import Grid, PolytropeEos, SupportConstraint
from magnetostar.probes import (ProbeReport, ball_mode_probe, beta_threshold_sweep, lane_emden_mismatch,
                                lower_bound_probe, magnetic_constant, negativity_probe, negativity_report,
                                random_density, sample_set, scaling_exponents)

GRID = Grid(64, 64, 2.0, 2.0)
CYL = SupportConstraint.parse("cylinder:2.0")
BALL_GRID = Grid(64, 64, 2.5, 2.5)
BALL = SupportConstraint.parse("ball:2.5")


def config(gamma, beta, grid=GRID, support=CYL):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", SmallBetaWarning)
        return SolveConfig(1.0, PolytropeEos(gamma), beta, support, grid)


@given(seed=st.integers(0, 2 ** 32 - 1), ball=st.booleans())
def test_random_density_admissible(seed, ball):
    grid, sup = (BALL_GRID, BALL) if ball else (GRID, CYL)
    rho = random_density(grid, sup, 1.0, np.random.default_rng(seed))
    assert np.all(rho.values >= 0)
    assert not np.any(rho.values[~sup.mask(grid)])


def test_sample_set_kinds():
    out = sample_set(config(2.5, 1.0), 9, np.random.default_rng(0))
    assert [k for k, _, _ in out[:3]] == ["bump", "multi", "dilated"]
    assert all(s in (2.0, 4.0, 8.0) for k, s, _ in out if k == "dilated")


def test_lower_bound_reference_case():
    rep = lower_bound_probe(config(2.5, 1.0), n_samples=50, seed=7)
    assert rep.violations == 0 and rep.passed
    assert 0 < rep.empirical_C1 <= 0.5 / 1.5
    assert np.isfinite(rep.empirical_C2)
    assert rep.samples == 100


def test_lower_bound_reproducible():
    a = lower_bound_probe(config(3.0, 0.5), n_samples=9, seed=3)
    b = lower_bound_probe(config(3.0, 0.5), n_samples=9, seed=3)
    assert a.empirical_C1 == b.empirical_C1 and a.empirical_C2 == b.empirical_C2


def test_lower_bound_needs_samples():
    with pytest.raises(ValueError):
        lower_bound_probe(config(2.5, 1.0), n_samples=2)


@pytest.mark.parametrize("gamma", [2.5, 3.0])
def test_scaling_exponents(gamma):
    rep = scaling_exponents(config(gamma, 1.0))
    assert rep.violations == 0
    assert rep.exponents["internal"][0] == pytest.approx(3 * (gamma - 1), rel=0.03)
    assert rep.exponents["gravity"][0] == pytest.approx(1.0, abs=0.03)
    assert rep.exponents["magnetic"][0] == pytest.approx(-1.0, abs=0.05)


def test_scaling_beta_zero_uses_unit_beta():
    rep = scaling_exponents(config(2.5, 0.0))
    assert rep.extra["beta_for_Q"] == 1.0 and rep.passed


def test_negativity_gamma_two():
    cfg = config(2.0, 0.1)
    assert negativity_probe(cfg) < 0
    rep = negativity_report(cfg)
    assert rep.passed and rep.extra["I2"] < 0


def test_negativity_beta_zero():
    rep = negativity_report(config(2.0, 0.0))
    assert rep.extra["I2"] == 0.0
    assert rep.extra["F"] == rep.extra["F_nonmagnetic"] < 0


def test_q_linear_in_beta():
    rho = random_density(GRID, CYL, 1.0, np.random.default_rng(2))
    eos = PolytropeEos(2.0)
    base = energy(rho, eos, 1.0).Q
    for b in (0.05, 0.2, 1.0, 3.0):
        assert abs(energy(rho, eos, b).Q / (b * base) - 1.0) < 1e-6


def test_magnetic_constant_stable_across_seeds():
    cfg = config(2.0, 0.0)
    vals = np.array([magnetic_constant(cfg, 48, s) for s in (1, 2, 3)])
    assert np.all(vals > 0)
    assert np.all(np.abs(vals / vals.mean() - 1.0) <= 0.2)


@pytest.mark.slow
@pytest.mark.filterwarnings("ignore::magnetostar.equilibrium.SmallBetaWarning")
def test_beta_threshold_sweep():
    rep = beta_threshold_sweep(1.0, GRID, CYL, [0.0, 0.05, 0.1, 2.0], n_samples=12, seed=0)
    flags = rep.extra["flags"].split(";")
    assert flags[0] == "below" and flags[-1] == "above"
    assert rep.extra["flags_monotone"]
    assert np.isfinite(rep.beta_threshold_estimate) and rep.beta_threshold_estimate > 0


def test_ball_mode_probe():
    cfg = config(1.7, 1.0, BALL_GRID, BALL)
    rep = ball_mode_probe(1.7, cfg, n_samples=12, seed=0)
    assert rep.violations == 0 and rep.passed
    assert rep.extra["outside_mass_zero"]


def test_ball_mode_lane_emden():
    cfg = config(1.7, 0.0, BALL_GRID, BALL)
    rho, rep = solve(cfg)
    assert rep.converged
    assert lane_emden_mismatch(rho, cfg.eos) < 0.03
    assert not np.any(rho.values[np.hypot(BALL_GRID.rr, BALL_GRID.zz) >= 2.5])


@pytest.mark.parametrize("gamma, support", [(1.5, BALL), (2.5, BALL), (1.7, CYL)])
def test_ball_mode_rejects(gamma, support):
    cfg = config(2.0, 0.0, BALL_GRID, BALL)
    if support is CYL:
        cfg = config(2.0, 0.0)
    with pytest.raises(ValueError):
        ball_mode_probe(gamma, cfg)


def test_report_outputs():
    rep = ProbeReport(samples=1, exponents={"gravity": (1.0, 0.01)},
                      rows=[{"kind": "x", "s": 1.0, "F": -1.0, "power_integral": 2.0, "Q": 0.5, "rho_G": 3.0}])
    assert "exponent_gravity=1.0" in rep.to_text()
    csv = rep.rows_csv().splitlines()
    assert csv[0] == "kind,s,F,power_integral,Q,rho_G" and csv[1].startswith("x,1,-1,2")
