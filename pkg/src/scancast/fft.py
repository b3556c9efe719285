"""Radix-2 FFT for square or rectangular grids with power-of-two extents.

The forward transform is the plain unnormalized DFT; the inverse carries the
full 1/(H*W) factor, so `ifft2(fft2(x)) == x` and Parseval reads
``sum |F(x)|^2 == H*W * sum x^2``.  Extents must be powers of two; anything
else is rejected up front with the offending axis named.

The transforms are pure array functions (no autodiff); the spectral loss owns
its analytic gradient and calls these from both directions.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from .errors import DimensionError, DomainError

__all__ = ["ComplexGrid", "fft2", "ifft2"]


class ComplexGrid:
    """A complex-valued H x W grid stored as separate real/imag float64 planes."""

    __slots__ = ("real", "imag")

    def __init__(self, real, imag):
        r = np.ascontiguousarray(np.asarray(real, dtype=np.float64))
        i = np.ascontiguousarray(np.asarray(imag, dtype=np.float64))
        if r.ndim != 2 or i.ndim != 2:
            raise DimensionError("ComplexGrid planes must be 2-D")
        if r.shape != i.shape:
            raise DimensionError(f"real/imag shape mismatch: {r.shape} vs {i.shape}")
        if not (np.all(np.isfinite(r)) and np.all(np.isfinite(i))):
            raise DomainError("ComplexGrid requires finite values")
        self.real = r
        self.imag = i

    @property
    def shape(self) -> tuple[int, int]:
        return self.real.shape

    def to_complex(self) -> np.ndarray:
        return self.real + 1j * self.imag

    @staticmethod
    def from_complex(z: np.ndarray) -> "ComplexGrid":
        g = object.__new__(ComplexGrid)
        g.real = np.ascontiguousarray(z.real)
        g.imag = np.ascontiguousarray(z.imag)
        return g

    def power(self) -> np.ndarray:
        """Squared modulus per bin."""
        return self.real * self.real + self.imag * self.imag


def _check_pow2(shape: tuple[int, int]) -> None:
    for axis, n in enumerate(shape):
        if n < 1 or (n & (n - 1)) != 0:
            raise DimensionError(f"axis {axis} extent {n} is not a power of two")


@lru_cache(maxsize=32)
def _bit_reversal(n: int) -> np.ndarray:
    levels = n.bit_length() - 1
    rev = np.zeros(n, dtype=np.intp)
    for i in range(1, n):
        rev[i] = (rev[i >> 1] >> 1) | ((i & 1) << (levels - 1))
    return rev


@lru_cache(maxsize=32)
def _twiddles(n: int) -> tuple[np.ndarray, ...]:
    out = []
    m = 2
    while m <= n:
        k = np.arange(m // 2)
        out.append(np.exp(-2j * np.pi * k / m))
        m *= 2
    return tuple(out)


def _fft_last_axis(a: np.ndarray) -> np.ndarray:
    """Iterative radix-2 Cooley-Tukey along the last axis (complex128 in/out)."""
    n = a.shape[-1]
    if n == 1:
        return a.copy()
    y = np.ascontiguousarray(a[..., _bit_reversal(n)])
    lead = a.shape[:-1]
    for stage, tw in enumerate(_twiddles(n)):
        m = 2 << stage
        half = m >> 1
        blocks = y.reshape(lead + (n // m, m))
        even = blocks[..., :half]
        odd = blocks[..., half:] * tw
        y = np.concatenate((even + odd, even - odd), axis=-1).reshape(lead + (n,))
    return y


def fft2(grid) -> ComplexGrid:
    """Unnormalized 2-D DFT of a real array or a ComplexGrid.

    F[k, l] = sum_{m, n} x[m, n] * exp(-2*pi*i*(k*m/H + l*n/W))
    """
    if isinstance(grid, ComplexGrid):
        z = grid.to_complex()
    else:
        arr = np.asarray(grid, dtype=np.float64)
        if arr.ndim != 2:
            raise DimensionError(f"fft2 expects a 2-D grid, got {arr.ndim}-D")
        z = arr.astype(np.complex128)
    _check_pow2(z.shape)
    z = _fft_last_axis(z)
    z = _fft_last_axis(z.swapaxes(0, 1)).swapaxes(0, 1)
    return ComplexGrid.from_complex(z)


def ifft2(grid: ComplexGrid) -> ComplexGrid:
    """Inverse of `fft2`, including the 1/(H*W) normalization."""
    if not isinstance(grid, ComplexGrid):
        raise DimensionError("ifft2 expects a ComplexGrid")
    h, w = grid.shape
    _check_pow2((h, w))
    z = np.conj(grid.to_complex())
    z = _fft_last_axis(z)
    z = _fft_last_axis(z.swapaxes(0, 1)).swapaxes(0, 1)
    return ComplexGrid.from_complex(np.conj(z) / (h * w))
