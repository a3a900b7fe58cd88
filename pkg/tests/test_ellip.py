import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import special

from magnetostar.ellip import (ellipke, ring_kernel_3d, ring_kernel_5d, ring_kernel_5d_quadrature,
                               ring_vector_factor)


def test_ellipke_matches_scipy():
    m = np.concatenate([np.linspace(0, 0.99, 100), 1 - np.logspace(-2, -12, 30)])
    K, E = ellipke(m)
    assert np.allclose(K, special.ellipk(m), rtol=1e-13)
    assert np.allclose(E, special.ellipe(m), rtol=1e-13)


def test_ellipke_at_zero():
    K, E = ellipke(0.0)
    assert K == pytest.approx(np.pi / 2, rel=1e-15) and E == pytest.approx(np.pi / 2, rel=1e-15)


@pytest.mark.parametrize("m", [-0.1, 1.0, 1.5])
def test_ellipke_domain(m):
    with pytest.raises(ValueError):
        ellipke(m)


def test_vector_factor_continuous_across_switch():
    lo, hi = ring_vector_factor(np.array([0.5 - 1e-12, 0.5 + 1e-12]))
    assert lo == pytest.approx(hi, rel=1e-10)
    m = np.array([1e-8, 1e-4, 0.1])
    assert np.allclose(ring_vector_factor(m), np.pi * m / 16, rtol=0.1)


@given(r=st.floats(0.05, 3.0), rp=st.floats(0.05, 3.0), dz=st.floats(-3.0, 3.0))
def test_ring_kernel_3d_direct_angle_sum(r, rp, dz):
    # int_0^{2 pi} dphi / sqrt(r^2 + rp^2 - 2 r rp cos phi + dz^2)
    if abs(r - rp) + abs(dz) < 1e-2:
        return
    phi = (np.arange(4000) + 0.5) * 2 * np.pi / 4000
    ref = np.mean(1 / np.sqrt(r * r + rp * rp - 2 * r * rp * np.cos(phi) + dz * dz)) * 2 * np.pi
    assert ring_kernel_3d(r, rp, dz) == pytest.approx(ref, rel=1e-8)


def test_ring_kernel_symmetry():
    r = np.linspace(0.1, 2, 7)
    assert np.allclose(ring_kernel_3d(r[:, None], r[None, :], 0.3), ring_kernel_3d(r[None, :], r[:, None], -0.3))


@given(R=st.floats(0.0, 3.0), Rp=st.floats(0.01, 3.0), dz=st.floats(0.05, 3.0))
def test_ring_kernel_5d_against_quadrature(R, Rp, dz):
    assert ring_kernel_5d(R, Rp, dz) == pytest.approx(ring_kernel_5d_quadrature(R, Rp, dz), rel=1e-7)


def test_ring_kernel_5d_far_field():
    # area(S^3) = 2 pi^2 times |x|^-3 for a distant source
    assert ring_kernel_5d(0.01, 0.01, 100.0) == pytest.approx(2 * np.pi ** 2 / 100.0 ** 3, rel=1e-6)
