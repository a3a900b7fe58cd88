"""Complete elliptic integrals and the two axisymmetric ring kernels.

Parameter convention throughout: ``m = k**2``.
"""

import numpy as np

_AGM_TOL = 1e-14
_AGM_MAXITER = 40


def ellipke(m):
    """Complete elliptic integrals K(m) and E(m) by the arithmetic-geometric mean.

    Valid for ``0 <= m < 1``; the iteration stops once every ``|a - b|`` is
    below ``1e-14`` relative to ``a``.
    """
    m = np.asarray(m, dtype=float)
    if np.any(m < 0.0) or np.any(m >= 1.0):
        raise ValueError("elliptic parameter must satisfy 0 <= m < 1")
    a = np.ones_like(m)
    b = np.sqrt(1.0 - m)
    c2_sum = 0.5 * m  # 2**(n-1) * c_n**2 summed, c_0**2 = m
    power = 0.5
    for _ in range(_AGM_MAXITER):
        if np.all(np.abs(a - b) <= _AGM_TOL * a):
            break
        c = 0.5 * (a - b)
        a, b = 0.5 * (a + b), np.sqrt(a * b)
        power *= 2.0
        c2_sum = c2_sum + power * c * c
    else:  # pragma: no cover - AGM converges quadratically
        raise RuntimeError("AGM iteration did not converge")
    K = np.pi / (2.0 * a)
    E = K * (1.0 - c2_sum)
    return K, E


def ellipk(m):
    return ellipke(m)[0]


def _hyp_series(m, nterms=80):
    # 2F1(3/2, 3/2; 3; m), used where the closed form cancels badly
    term = np.ones_like(m)
    total = np.ones_like(m)
    for k in range(nterms):
        term = term * (1.5 + k) * (1.5 + k) / ((3.0 + k) * (1.0 + k)) * m
        total = total + term
        if np.all(np.abs(term) < 1e-17 * total):
            break
    return total


def ring_vector_factor(m):
    """``((2 - m) K(m) - 2 E(m)) / m``, stable down to ``m = 0``.

    Below ``m = 0.5`` the hypergeometric form ``(pi m / 16) 2F1(3/2, 3/2; 3; m)``
    replaces the closed form, which loses digits to cancellation as ``m -> 0``.
    """
    m = np.asarray(m, dtype=float)
    out = np.empty_like(m)
    small = m < 0.5
    if np.any(small):
        ms = m[small]
        out[small] = np.pi * ms / 16.0 * _hyp_series(ms)
    if np.any(~small):
        ml = m[~small]
        K, E = ellipke(ml)
        out[~small] = ((2.0 - ml) * K - 2.0 * E) / ml
    return out


def ring_kernel_3d(r, rp, dz):
    """Azimuthal integral of ``1/|x - y|`` over a ring: ``4 K(m) / D``.

    ``D**2 = (r + rp)**2 + dz**2`` and ``m = 4 r rp / D**2``.
    """
    r, rp, dz = np.broadcast_arrays(np.asarray(r, float), np.asarray(rp, float),
                                    np.asarray(dz, float))
    d2 = (r + rp) ** 2 + dz * dz
    m = 4.0 * r * rp / d2
    return 4.0 * ellipk(m) / np.sqrt(d2)


def ring_kernel_5d(R, Rp, dz):
    """Angular integral over the unit 3-sphere of ``|x - y|**-3`` in R^5.

    Equals ``4 pi * int_0^pi sin(t)**2 (R**2 + Rp**2 + dz**2 - 2 R Rp cos t)**-1.5 dt``,
    evaluated in closed form as ``8 pi ((2-m)K - 2E) / (m R Rp D)``.
    """
    R, Rp, dz = np.broadcast_arrays(np.asarray(R, float), np.asarray(Rp, float),
                                    np.asarray(dz, float))
    d2 = (R + Rp) ** 2 + dz * dz
    D = np.sqrt(d2)
    m = 4.0 * R * Rp / d2
    # R*Rp = m*D**2/4, so with f = ((2-m)K - 2E)/m the kernel is 32 pi f/(m D**3)
    f = ring_vector_factor(m)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(m > 0.0, 32.0 * np.pi * f / (m * D ** 3), 2.0 * np.pi ** 2 / D ** 3)


def ring_kernel_5d_quadrature(R, Rp, dz, npts=64, tol=1e-8, max_npts=8192):
    """Gauss-Legendre evaluation of the 5-D angular kernel in theta.

    Starts at ``npts`` nodes and doubles, per entry, until successive
    estimates differ by less than ``tol`` (relative) or ``max_npts`` is reached.
    """
    R, Rp, dz = np.broadcast_arrays(np.asarray(R, float), np.asarray(Rp, float),
                                    np.asarray(dz, float))
    A = (R * R + Rp * Rp + dz * dz).ravel()
    B = (2.0 * R * Rp).ravel()

    def gl(n, a, b):
        x, w = np.polynomial.legendre.leggauss(n)
        theta = 0.5 * np.pi * (x + 1.0)
        wt = 0.5 * np.pi * w * np.sin(theta) ** 2
        return 4.0 * np.pi * ((a[:, None] - b[:, None] * np.cos(theta)) ** -1.5 @ wt)

    out = gl(npts, A, B)
    todo = np.arange(A.size)
    n = npts
    while todo.size and n < max_npts:
        n *= 2
        cur = gl(n, A[todo], B[todo])
        done = np.abs(cur - out[todo]) <= tol * np.abs(cur)
        out[todo] = cur
        todo = todo[~done]
    return out.reshape(R.shape)
