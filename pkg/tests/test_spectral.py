"""Spectral pipeline tests: FFT vs the direct-summation oracle, shift
permutations, log-magnitude standardization, analytic spectra."""

import numpy as np
import pytest

from rcdn.errors import ValidationError
from rcdn.spectral import (ComplexGrid, channel_standardize, dft2d, fft_shift,
                           ifft_shift, log_magnitude, naive_dft2d,
                           spectral_preprocess)

POW2_SIZES = (2, 4, 8, 16, 32)


class TestDftOracle:
    @pytest.mark.parametrize("n", POW2_SIZES)
    def test_fft_matches_naive(self, n, rng):
        img = rng.uniform(0, 1, (n, n))
        assert np.abs(dft2d(img) - naive_dft2d(img)).max() < 1e-9

    def test_naive_matches_numpy_reference(self, rng):
        # independent oracle for the oracle
        img = rng.uniform(0, 1, (8, 8))
        assert np.allclose(naive_dft2d(img), np.fft.fft2(img), atol=1e-9)

    @pytest.mark.parametrize("shape", [(3, 5), (6, 6), (7, 4)])
    def test_non_pow2_falls_back_to_direct_path(self, shape, rng):
        img = rng.uniform(0, 1, shape)
        assert np.allclose(dft2d(img), np.fft.fft2(img), atol=1e-9)

    @pytest.mark.parametrize("n", POW2_SIZES)
    def test_parseval(self, n, rng):
        img = rng.uniform(0, 1, (n, n))
        spatial = (np.abs(img) ** 2).sum()
        freq = (np.abs(dft2d(img)) ** 2).sum() / (n * n)
        assert abs(spatial - freq) / spatial < 1e-10

    def test_complex_input_supported(self, rng):
        img = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
        assert np.allclose(dft2d(img), np.fft.fft2(img), atol=1e-9)

    def test_rejects_non_2d(self):
        with pytest.raises(ValidationError):
            dft2d(np.zeros(8))
        with pytest.raises(ValidationError):
            dft2d(np.zeros((2, 2, 2)))


class TestAnalyticSpectra:
    def test_impulse_is_flat(self):
        img = np.zeros((8, 8))
        img[0, 0] = 1.0
        assert np.allclose(dft2d(img), np.ones((8, 8)))

    def test_constant_concentrates_at_dc(self):
        spec = dft2d(np.full((8, 8), 0.5))
        assert spec[0, 0] == pytest.approx(0.5 * 64)
        assert np.abs(spec.flatten()[1:]).max() < 1e-10

    def test_pure_cosine_gives_two_peaks(self):
        n, k = 16, 3
        x = np.arange(n)
        img = np.tile(np.cos(2 * np.pi * k * x / n), (n, 1))
        mag = np.abs(dft2d(img))
        peaks = {(u, v) for u in range(n) for v in range(n) if mag[u, v] > 1e-6}
        assert peaks == {(0, k), (0, n - k)}


class TestShifts:
    @pytest.mark.parametrize("n", (2, 4, 8, 16, 32))
    def test_involution_on_even_sizes(self, n, rng):
        grid = ComplexGrid(rng.normal(size=(1, n, n)) + 0j)
        twice = fft_shift(fft_shift(grid))
        assert np.array_equal(twice.data, grid.data)

    def test_moves_dc_to_center(self):
        spec = dft2d(np.full((8, 8), 1.0))  # DC-only spectrum
        shifted = fft_shift(ComplexGrid(spec[None]))
        assert abs(shifted.data[0, 4, 4]) == pytest.approx(64.0)

    @pytest.mark.parametrize("n", (3, 5, 7))
    def test_ifft_shift_inverts_on_odd_sizes(self, n, rng):
        grid = ComplexGrid(rng.normal(size=(2, n, n)) + 0j)
        assert np.array_equal(ifft_shift(fft_shift(grid)).data, grid.data)
        # on odd sizes fft_shift is NOT its own inverse
        assert not np.array_equal(fft_shift(fft_shift(grid)).data, grid.data)

    def test_shift_is_pure_permutation(self, rng):
        grid = ComplexGrid(rng.normal(size=(1, 6, 6)) + 0j)
        key = lambda z: (z.real, z.imag)
        assert sorted(fft_shift(grid).data.flatten(), key=key) == \
            sorted(grid.data.flatten(), key=key)


class TestStandardization:
    def test_log_magnitude_layout(self, rng):
        grid = ComplexGrid(rng.normal(size=(3, 4, 4)) + 0j)
        out = log_magnitude(grid)
        assert out.shape == (4, 4, 3)
        assert np.allclose(out[:, :, 0], np.log1p(np.abs(grid.data[0])))

    def test_channel_standardize_moments(self, rng):
        m = rng.uniform(0, 5, (8, 8, 3))
        sm = channel_standardize(m)
        assert np.allclose(sm.data.mean(axis=(0, 1)), 0.0, atol=1e-10)
        assert np.allclose(sm.data.std(axis=(0, 1)), 1.0, atol=1e-6)

    def test_constant_channel_maps_to_zero(self):
        m = np.ones((4, 4, 1))
        assert np.array_equal(channel_standardize(m).data, np.zeros((4, 4, 1)))


class TestPreprocessPipeline:
    def test_output_shape_and_statistics(self, rng):
        img = rng.uniform(0, 1, (16, 16, 3))
        sm = spectral_preprocess(img)
        assert sm.data.shape == (16, 16, 3)
        assert np.allclose(sm.data.mean(axis=(0, 1)), 0.0, atol=1e-9)

    def test_deterministic(self, rng):
        img = rng.uniform(0, 1, (8, 8, 3))
        a = spectral_preprocess(img).data
        b = spectral_preprocess(img).data
        assert np.array_equal(a, b)

    def test_validation(self):
        with pytest.raises(ValidationError):
            spectral_preprocess(np.zeros((8, 8)))
        with pytest.raises(ValidationError):
            spectral_preprocess(np.zeros((8, 8, 4)))
        bad = np.zeros((8, 8, 3))
        bad[0, 0, 0] = np.nan
        with pytest.raises(ValidationError):
            spectral_preprocess(bad)

    def test_non_pow2_image_works(self, rng):
        img = rng.uniform(0, 1, (6, 6, 3))
        assert spectral_preprocess(img).data.shape == (6, 6, 3)
