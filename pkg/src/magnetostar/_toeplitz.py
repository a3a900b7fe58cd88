"""Quadrature operators whose kernel depends on (i, i', j - j') only."""

import numpy as np


class ZToeplitzOperator:
    """``out[i, j] = sum_{i', j'} table[i, i', j - j' + nz - 1] * src[i', j']``.

    The sum is the plain product-rule quadrature; the z direction is evaluated
    as a zero-padded circular convolution of length ``2 nz``, which reproduces
    the direct double sum exactly up to rounding.
    """

    def __init__(self, table: np.ndarray):
        nr_t, nr_s, nk = table.shape
        nz = (nk + 1) // 2
        if nk != 2 * nz - 1:
            raise ValueError("kernel table must have 2*nz - 1 entries along z")
        self.nz = nz
        self.length = 2 * nz
        padded = np.zeros((nr_t, nr_s, self.length))
        padded[:, :, :nk] = table
        self._hat = np.ascontiguousarray(np.fft.rfft(padded, axis=-1).transpose(2, 0, 1))

    def apply(self, src: np.ndarray) -> np.ndarray:
        src_hat = np.fft.rfft(src, n=self.length, axis=-1).T[:, :, None]
        out_hat = np.matmul(self._hat, src_hat)[:, :, 0].T
        full = np.fft.irfft(out_hat, n=self.length, axis=-1)
        return full[:, self.nz - 1: 2 * self.nz - 1]


def dz_offsets(nz: int, dz: float) -> np.ndarray:
    """Separations ``z_j - z_j'`` indexed by ``k = j - j' + nz - 1``."""
    return (np.arange(2 * nz - 1) - (nz - 1)) * dz
