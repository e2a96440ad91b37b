"""Fourier transforms: normalization, super-evaluation, adjoints."""

import numpy as np
import pytest

from conftest import band_limited_field, max_rel_err
from fieldop.autodiff import Tensor, backward, finite_difference_gradient, mul, tensor_sum
from fieldop.errors import ShapeError, UnsupportedSizeError
from fieldop.spectral import (dft, idft, mode_crop, mode_numbers, reflect_modes,
                              spectral_derivative, spectral_resample,
                              spectral_resample_array)


def naive_dft(x):
    """Direct O(N^2) reference transform with the package normalization."""
    n = len(x)
    k = np.arange(n)
    twiddle = np.exp(-2j * np.pi * np.outer(k, k) / n)
    return twiddle @ np.asarray(x, dtype=complex) / n


def naive_eval(coeffs, n_out):
    """Direct trigonometric summation of a spectrum at n_out points."""
    m = len(coeffs)
    modes = mode_numbers(m)
    x = np.arange(n_out) / n_out
    return sum(c * np.exp(2j * np.pi * k * x) for c, k in zip(coeffs, modes))


class TestDft:
    def test_constant_maps_to_mode_zero(self):
        c = dft(Tensor(np.full(16, 3.25)), [0]).data
        assert abs(c[0] - 3.25) < 1e-12
        assert np.max(np.abs(c[1:])) < 1e-12

    def test_pure_mode_orthogonality(self):
        x = np.arange(16) / 16
        z = np.exp(2j * np.pi * 3 * x)
        c = dft(Tensor(z), [0]).data
        assert abs(c[3] - 1.0) < 1e-12
        assert np.max(np.abs(np.delete(c, 3))) < 1e-12

    def test_matches_naive_dft(self, rng):
        x = rng.standard_normal(32)
        c = dft(Tensor(x), [0]).data
        assert max_rel_err(c, naive_dft(x)) < 1e-12

    def test_parseval(self, rng):
        x = rng.standard_normal(64)
        c = dft(Tensor(x), [0]).data
        assert abs(np.mean(x * x) - np.sum(np.abs(c) ** 2)) < 1e-10 * np.mean(x * x)

    def test_linearity(self, rng):
        a, b = rng.standard_normal(16), rng.standard_normal(16)
        lhs = dft(Tensor(2.5 * a - 1.5 * b), [0]).data
        rhs = 2.5 * dft(Tensor(a), [0]).data - 1.5 * dft(Tensor(b), [0]).data
        assert np.max(np.abs(lhs - rhs)) < 1e-12

    def test_non_power_of_two_rejected(self):
        with pytest.raises(UnsupportedSizeError):
            dft(Tensor(np.zeros(12)), [0])

    def test_gradient_of_real_input(self, rng):
        t = Tensor(rng.standard_normal(8), requires_grad=True)
        w = rng.standard_normal(8) + 1j * rng.standard_normal(8)

        def f(x):
            return tensor_sum(idft(mul(dft(x, [0]), Tensor(w)), [0], [8]))

        grad = backward(f(t), leaves=[t])[t.node_id].data
        fd = finite_difference_gradient(f, t, 1e-6).data
        assert max_rel_err(grad, fd) < 1e-7


class TestIdft:
    def test_round_trip(self, rng):
        x = rng.standard_normal((3, 32))
        back = idft(dft(Tensor(x), [1]), [1], [32]).data
        assert max_rel_err(back, x) < 1e-10

    def test_band_limited_consistency_across_sizes(self):
        c = np.zeros(4, dtype=complex)
        c[1] = 0.7 - 0.2j
        c[-1] = np.conj(c[1])
        o8 = idft(Tensor(c), [0], [8]).data
        o16 = idft(Tensor(c), [0], [16]).data
        assert np.max(np.abs(o16[::2] - o8)) < 1e-12

    def test_matches_direct_summation(self, rng):
        coeffs = rng.standard_normal(8) + 1j * rng.standard_normal(8)
        out = idft(Tensor(coeffs), [0], [32]).data
        assert max_rel_err(out, naive_eval(coeffs, 32).real) < 1e-12

    def test_smaller_output_rejected(self):
        with pytest.raises(ShapeError):
            idft(Tensor(np.zeros(8, dtype=complex)), [0], [4])

    def test_gradient_through_superevaluation(self, rng):
        t = Tensor(rng.standard_normal(8) + 1j * rng.standard_normal(8),
                   requires_grad=True)
        w = rng.standard_normal(32)

        def f(c):
            return tensor_sum(mul(idft(c, [0], [32]), Tensor(w)))

        grad = backward(f(t), leaves=[t])[t.node_id].data
        fd = finite_difference_gradient(f, t, 1e-6).data
        assert max_rel_err(grad, fd) < 1e-7


class TestModeOps:
    def test_crop_then_embed_is_identity_on_retained_band(self, rng):
        x = band_limited_field((32,), 3, seed=0)
        c = dft(Tensor(x), [0])
        small = mode_crop(c, [0], [8])
        back = idft(small, [0], [32]).data
        assert max_rel_err(back, x) < 1e-12

    def test_even_crop_folds_nyquist_gradient(self, rng):
        t = Tensor(rng.standard_normal(16) + 1j * rng.standard_normal(16),
                   requires_grad=True)
        w = rng.standard_normal(8)

        def f(c):
            return tensor_sum(mul(idft(mode_crop(c, [0], [8]), [0], [8]), Tensor(w)))

        grad = backward(f(t), leaves=[t])[t.node_id].data
        fd = finite_difference_gradient(f, t, 1e-6).data
        assert max_rel_err(grad, fd) < 1e-7

    def test_reflect_modes_is_negation_involution(self, rng):
        c = rng.standard_normal(9) + 1j * rng.standard_normal(9)
        r = reflect_modes(Tensor(c), [0]).data
        modes = mode_numbers(9)
        for idx, k in enumerate(modes):
            src = np.where(modes == -k)[0][0]
            assert r[idx] == c[src]
        again = reflect_modes(reflect_modes(Tensor(c), [0]), [0]).data
        assert np.array_equal(again, c)

    def test_spectral_resample_band_limited_down_up(self):
        x = band_limited_field((64,), 5, seed=1)
        down = spectral_resample_array(x, [0], [16])
        up = spectral_resample_array(down, [0], [64])
        assert max_rel_err(up, x) < 1e-10


class TestSpectralDerivative:
    def test_sine_derivative(self):
        n = 64
        x = np.arange(n) / n
        s = Tensor(np.sin(2 * np.pi * x)[None])
        d = spectral_derivative(s, axis=1, order=1).data[0]
        assert np.max(np.abs(d - 2 * np.pi * np.cos(2 * np.pi * x))) < 1e-10

    def test_second_derivative(self):
        n = 32
        x = np.arange(n) / n
        s = Tensor(np.cos(2 * np.pi * 2 * x)[None])
        d = spectral_derivative(s, axis=1, order=2).data[0]
        expected = -(4 * np.pi) ** 2 * np.cos(2 * np.pi * 2 * x)
        assert max_rel_err(d, expected) < 1e-10

    def test_gradient(self, rng):
        t = Tensor(rng.standard_normal((1, 16)), requires_grad=True)
        w = rng.standard_normal((1, 16))

        def f(x):
            return tensor_sum(mul(spectral_derivative(x, axis=1), Tensor(w)))

        grad = backward(f(t), leaves=[t])[t.node_id].data
        fd = finite_difference_gradient(f, t, 1e-6).data
        assert max_rel_err(grad, fd) < 1e-7


class TestTapeResample:
    def test_matches_array_resample(self, rng):
        x = rng.standard_normal((2, 16))
        up = spectral_resample(Tensor(x), [1], [64]).data
        assert max_rel_err(up, spectral_resample_array(x, [1], [64])) < 1e-13

    def test_2d_mixed_axes(self, rng):
        x = rng.standard_normal((1, 16, 32))
        out = spectral_resample(Tensor(x), [1, 2], [32, 16]).data
        ref = spectral_resample_array(x, [1, 2], [32, 16])
        assert max_rel_err(out, ref) < 1e-13
