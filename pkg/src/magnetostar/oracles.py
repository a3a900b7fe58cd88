"""Independent reference computations used to validate the production kernels.

None of these share code paths with the operators they check: the 5-D
Monte Carlo samples R^5 directly, and the double-integral oracle uses
Gauss-Legendre angular quadrature on a staggered grid instead of the
elliptic closed form on the cell-centred table.
"""

import numpy as np

from .ellip import ring_kernel_5d_quadrature

SPHERE4_AREA = 8.0 * np.pi ** 2 / 3.0


def chi_monte_carlo_gaussian(amplitude, width, beta, R, z, nsamples=10 ** 7, seed=0,
                             batch=10 ** 6):
    """``chi(x) = (beta/2pi) int rho_e(y) |x-y|^-3 d^5y`` for ``rho = A exp(-(r^2+z^2)/w^2)``.

    Importance sampling around the target: ``u = y - x`` is drawn with density
    proportional to ``|u|^-3 exp(-|u|^2 / 2 w^2)`` (Rayleigh radius, uniform
    direction on S^4), which absorbs the kernel singularity and leaves bounded
    weights. Returns ``(estimate, standard_error)``.
    """
    rng = np.random.default_rng(seed)
    x = np.array([R, 0.0, z, 0.0, 0.0])  # coordinates (x1, x2, x3=z, x4, x5)
    sigma = width
    norm = SPHERE4_AREA * sigma ** 2
    total = 0.0
    total_sq = 0.0
    done = 0
    while done < nsamples:
        n = min(batch, nsamples - done)
        d = rng.standard_normal((n, 5))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        rad = sigma * np.sqrt(-2.0 * np.log1p(-rng.random(n)))
        u = d * rad[:, None]
        y = x + u
        w = amplitude * np.exp(-np.sum(y * y, axis=1) / width ** 2 + rad ** 2 / (2 * sigma ** 2))
        total += w.sum()
        total_sq += (w * w).sum()
        done += n
    mean = total / done
    var = max(total_sq / done - mean * mean, 0.0)
    c = beta / (2.0 * np.pi) * norm
    return c * mean, c * np.sqrt(var / done)


def beta_q_double_integral(density, beta, n=48, extent=None):
    """``-4 pi beta^2 K int int G5(x-y) rho_e(x) rho_e(y)`` by staggered product quadrature.

    ``density(r, z)`` is an analytic axisymmetric profile. Targets sit on a
    grid offset by half a cell from the sources so the integrable singularity
    is never sampled; the angular kernel uses adaptive Gauss-Legendre in theta.
    ``K = 1/pi`` converts the 5-D integral back to the 3-D one.
    """
    if extent is None:
        raise ValueError("extent=(rmax, zmax) is required")
    rmax, zmax = extent
    h, k = rmax / n, 2 * zmax / n
    rs = (np.arange(n) + 0.5) * h
    zs = -zmax + (np.arange(n) + 0.5) * k
    rt = np.arange(1, n) * h
    zt = -zmax + np.arange(1, n) * k
    src = density(rs[:, None], zs[None, :]) * rs[:, None] ** 3 * h * k
    tgt = density(rt[:, None], zt[None, :]) * rt[:, None] ** 3 * h * k
    total = 0.0
    for a, Rt in enumerate(rt):
        kern = ring_kernel_5d_quadrature(Rt, rs[:, None, None], zt[None, None, :] - zs[None, :, None],
                                         npts=64, tol=1e-8, max_npts=4096)
        # kern[i', j', j] for target (Rt, zt[j])
        chi_row = np.einsum("ab,abj->j", src, kern)
        total += np.dot(tgt[a], chi_row)
    # int rho_e chi_e d^5x with d^5x = 2 pi^2 R^3 dR dz, chi = (beta/2pi) * conv
    five_d = 2.0 * np.pi ** 2 * (beta / (2.0 * np.pi)) * total
    return beta * five_d / np.pi
