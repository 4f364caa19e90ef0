"""Frequency-domain preprocessing: per-channel 2-D DFT, zero-frequency
recentering, log-magnitude compression, channel standardization.

The forward DFT uses the convention
    F(u,v) = sum_{x,y} f(x,y) * exp(-2*pi*i*(u*x/H + v*y/W)).

Power-of-two extents take an iterative radix-2 Cooley-Tukey path; any other
extent falls back to the direct-summation transform (documented: O(N^4), much
slower, kept correct for arbitrary sizes and doubling as the test oracle).
The whole pipeline is a fixed, non-differentiable transform applied before
the trainable network.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

STANDARDIZE_EPS = 1e-8


def _is_pow2(n):
    return n >= 1 and (n & (n - 1)) == 0


def _bit_reverse_indices(n):
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.intp)
    for _ in range(bits):
        rev = (rev << 1) | (idx & 1)
        idx >>= 1
    return rev


def _fft_pow2_last_axis(a):
    """Radix-2 decimation-in-time FFT along the last axis (length power of two)."""
    n = a.shape[-1]
    out = np.asarray(a, dtype=np.complex128)[..., _bit_reverse_indices(n)].copy()
    m = 2
    while m <= n:
        half = m // 2
        twiddle = np.exp(-2j * np.pi * np.arange(half) / m)
        v = out.reshape(*out.shape[:-1], n // m, m)
        even = v[..., :half].copy()
        odd = v[..., half:] * twiddle
        v[..., :half] = even + odd
        v[..., half:] = even - odd
        m *= 2
    return out


def naive_dft2d(channel):
    """Direct-summation 2-D DFT: the O(N^4) definition, used as oracle and as
    the fallback path for non-power-of-two extents."""
    f = np.asarray(channel, dtype=np.complex128)
    h, w = f.shape
    x = np.arange(h)
    y = np.arange(w)
    out = np.empty((h, w), dtype=np.complex128)
    for u in range(h):
        row_phase = np.exp(-2j * np.pi * u * x / h)
        for v in range(w):
            col_phase = np.exp(-2j * np.pi * v * y / w)
            out[u, v] = (f * np.outer(row_phase, col_phase)).sum()
    return out


def dft2d(channel):
    """2-D DFT of one real or complex H x W channel."""
    f = np.asarray(channel)
    if f.ndim != 2 or f.shape[0] < 1 or f.shape[1] < 1:
        raise ValidationError(f"dft2d expects a 2-D channel, got shape {f.shape}")
    h, w = f.shape
    if _is_pow2(h) and _is_pow2(w):
        rows = _fft_pow2_last_axis(np.asarray(f, dtype=np.complex128))
        return _fft_pow2_last_axis(rows.T).T
    return naive_dft2d(f)


@dataclass
class ComplexGrid:
    """Per-channel H x W complex DFT coefficients, stored (C, H, W)."""

    data: np.ndarray  # complex128, shape (C, H, W)

    @property
    def channels(self):
        return self.data.shape[0]

    @property
    def height(self):
        return self.data.shape[1]

    @property
    def width(self):
        return self.data.shape[2]


@dataclass
class SpectralMap:
    """H x W x C standardized log-magnitudes of the centered spectrum."""

    data: np.ndarray  # float64, shape (H, W, C)


def fft_shift(grid):
    """Move the zero-frequency coefficient to the grid center.

    Index (u, v) maps to ((u + floor(H/2)) mod H, (v + floor(W/2)) mod W);
    a pure index permutation.
    """
    h, w = grid.data.shape[-2:]
    return ComplexGrid(np.roll(grid.data, (h // 2, w // 2), axis=(-2, -1)))


def ifft_shift(grid):
    """Inverse permutation of fft_shift (differs from it on odd extents)."""
    h, w = grid.data.shape[-2:]
    return ComplexGrid(np.roll(grid.data, (-(h // 2), -(w // 2)), axis=(-2, -1)))


def log_magnitude(grid):
    """Elementwise log(1 + |F|), returned H x W x C."""
    return np.log1p(np.abs(grid.data)).transpose(1, 2, 0)


def channel_standardize(m):
    """Per channel over H x W: subtract mean, divide by population std + 1e-8.

    A constant channel maps to all zeros.
    """
    m = np.asarray(m, dtype=np.float64)
    mean = m.mean(axis=(0, 1), keepdims=True)
    std = m.std(axis=(0, 1), keepdims=True)
    return SpectralMap((m - mean) / (std + STANDARDIZE_EPS))


def spectral_preprocess(image):
    """Full pipeline for an H x W x 3 image in [0, 1]:
    dft2d -> fft_shift -> log_magnitude -> channel_standardize, per channel."""
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValidationError(f"expected an H x W x 3 image, got shape {img.shape}")
    if not np.all(np.isfinite(img)):
        raise ValidationError("image contains non-finite values")
    grid = ComplexGrid(np.stack([dft2d(img[:, :, c]) for c in range(3)]))
    return channel_standardize(log_magnitude(fft_shift(grid)))
