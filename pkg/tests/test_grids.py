"""Grid/cloud containers and resampling."""

import numpy as np
import pytest

from conftest import band_limited_field, max_rel_err
from fieldop.errors import DomainError, ShapeError
from fieldop.grids import (GridFunction, PointCloudFunction, cloud_from_grid,
                           grid_coordinates, grid_from_cloud_values, resample)


class TestGridFunction:
    def test_grid_conventions(self):
        periodic = grid_coordinates((4,), periodic=True)[0]
        assert np.allclose(periodic, [0.0, 0.25, 0.5, 0.75])
        inclusive = grid_coordinates((5,), periodic=False)[0]
        assert np.allclose(inclusive, [0.0, 0.25, 0.5, 0.75, 1.0])

    def test_shape_validation(self):
        with pytest.raises(ShapeError):
            GridFunction(np.zeros(8))

    def test_properties(self):
        u = GridFunction(np.zeros((3, 8, 16)))
        assert u.channels == 3 and u.resolution == (8, 16) and u.d == 2


class TestPointCloudFunction:
    def test_weight_sum_enforced(self):
        pts = np.random.default_rng(0).uniform(size=(10, 2))
        vals = np.zeros((10, 1))
        with pytest.raises(DomainError):
            PointCloudFunction(pts, vals, np.full(10, 0.2))

    def test_counts_must_agree(self):
        with pytest.raises(ShapeError):
            PointCloudFunction(np.zeros((5, 1)), np.zeros((4, 1)), np.full(5, 0.2))

    def test_cloud_from_grid_roundtrip(self, rng):
        u = GridFunction(rng.standard_normal((2, 4, 4)))
        cloud = cloud_from_grid(u)
        assert cloud.n_points == 16
        assert abs(cloud.weights.sum() - 1.0) < 1e-12
        back = grid_from_cloud_values(cloud.values, (4, 4))
        assert np.array_equal(back, u.values)


class TestResample:
    def test_identity_for_all_methods(self, rng):
        u = GridFunction(rng.standard_normal((1, 16, 16)))
        for method in ("spectral", "subsample", "bilinear"):
            out = resample(u, (16, 16), method)
            assert np.array_equal(out.values, u.values)

    def test_spectral_down_up_recovers_band_limited(self):
        u = GridFunction(band_limited_field((64,), 5, seed=3)[None])
        down = resample(u, (16,), "spectral")
        up = resample(down, (64,), "spectral")
        assert max_rel_err(up.values, u.values) < 1e-10

    def test_subsample_exactness(self, rng):
        u = GridFunction(rng.standard_normal((1, 32, 32)))
        out = resample(u, (8, 8), "subsample")
        assert np.array_equal(out.values, u.values[:, ::4, ::4])

    def test_subsample_upsampling_rejected(self):
        u = GridFunction(np.zeros((1, 8)))
        with pytest.raises(ShapeError):
            resample(u, (16,), "subsample")

    def test_spectral_requires_periodic(self):
        u = GridFunction(np.zeros((1, 8)), periodic=False)
        with pytest.raises(DomainError):
            resample(u, (16,), "spectral")

    def test_bilinear_upsampling_distorts_high_frequencies(self):
        # direct spectrum computation: piecewise-linear interpolation of a
        # single mode loses energy at that mode and leaks energy above it
        n, target, k0 = 16, 64, 6
        x = np.arange(n) / n
        u = GridFunction(np.sin(2 * np.pi * k0 * x)[None])
        up = resample(u, (target,), "bilinear")
        coeff = np.fft.fft(up.values[0], norm="forward")
        energy = np.abs(coeff) ** 2
        true_at_k0 = 0.25  # |c_{+-k0}|^2 = (1/2)^2 for a unit sine
        assert energy[k0] < true_at_k0
        spurious = sum(energy[k] for k in range(9, target // 2))
        assert spurious > 1e-6

    def test_bilinear_non_periodic_endpoints(self):
        u = GridFunction(np.linspace(0, 1, 9)[None], periodic=False)
        out = resample(u, (5,), "bilinear")
        assert np.allclose(out.values[0], np.linspace(0, 1, 5))
