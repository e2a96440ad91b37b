"""Experiment harnesses: spectra, baselines, super-resolution, inversion."""

import numpy as np
import pytest

from conftest import band_limited_field, max_rel_err
from fieldop.autodiff import Tensor, backward, finite_difference_gradient, tensor_sum
from fieldop.baselines import CnnConfig, FixedGridCnn, cnn_forward, init_fixed_grid_cnn
from fieldop.data import make_dataset
from fieldop.errors import ConfigError, ShapeError, UnsupportedSizeError
from fieldop.experiments import (energy_spectrum, interpolation_predictor, invert,
                                 invert_initial_condition, log_spectrum_discrepancy,
                                 operator_predictor, oracle_predictor, spectrum_experiment,
                                 superres_experiment)
from fieldop.grids import GridFunction, resample
from fieldop.model import ModelConfig, init_model, model_forward
from fieldop.solvers import BurgersSpec, DarcySpec, GrfSpec


class TestEnergySpectrum:
    def test_single_mode_energy(self):
        n = 32
        x = np.arange(n) / n
        u = GridFunction(np.broadcast_to(np.sin(2 * np.pi * 3 * x), (n, n))[None].copy())
        k, e = energy_spectrum(u)
        # a unit sine puts |c|^2 = 1/4 at each of +-k0: E(3) = 1/2
        assert abs(e[3] - 0.5) < 1e-12
        others = np.delete(e, 3)
        assert np.max(others) < 1e-20

    def test_constant_field(self):
        u = GridFunction(np.full((1, 16, 16), 1.75))
        k, e = energy_spectrum(u)
        assert abs(e[0] - 1.75 ** 2) < 1e-12
        assert np.max(e[1:]) < 1e-20

    def test_parseval(self, rng):
        u = GridFunction(rng.standard_normal((2, 32, 32)))
        _, e = energy_spectrum(u)
        assert abs(e.sum() - np.mean(np.sum(u.values ** 2, axis=0))) < 1e-10

    def test_non_square_rejected(self):
        with pytest.raises(UnsupportedSizeError):
            energy_spectrum(GridFunction(np.zeros((1, 16, 32))))


@pytest.fixture(scope="module")
def burgers_for_spectrum():
    return make_dataset("burgers", 6, 16, 16,
                        GrfSpec(alpha=2.5, tau=7.0, scale=150.0),
                        BurgersSpec(nu=0.05, t_final=1.0, dt=2e-3, n_solver=64),
                        seed=31, res_hr=64, train_fraction=0.5)


class TestSpectrumExperiment:
    def test_oracle_predictor_has_zero_discrepancy(self, burgers_for_spectrum):
        report = spectrum_experiment([("oracle", oracle_predictor())],
                                     burgers_for_spectrum, train_resolution=16)
        assert np.all(report.discrepancies["oracle"] == 0.0)

    def test_bilinear_distorts_above_training_nyquist(self, burgers_for_spectrum):
        # direct computation of the interpolation pathway: truth at the low
        # resolution, bilinearly upsampled
        def bilinear_of_truth(sample, res_high):
            low = resample(sample.output_hr, (16, 16), "subsample")
            return resample(low, res_high, "bilinear")

        report = spectrum_experiment(
            [("oracle", oracle_predictor()), ("interp", bilinear_of_truth)],
            burgers_for_spectrum, train_resolution=16)
        assert np.all(report.discrepancies["interp"] > 0.0)
        assert report.mean_discrepancy()["interp"] > report.mean_discrepancy()["oracle"]

    def test_discrepancy_counts_only_super_nyquist_bins(self):
        e_true = np.array([1.0, 1.0, 1.0, 0.5, 1e-15])
        e_model = np.array([5.0, 5.0, 1.0, 0.5, 1.0])
        # nyquist=1: bins 2, 3 count (bin 4 is under the floor)
        assert log_spectrum_discrepancy(e_model, e_true, nyquist=1) == 0.0
        e_model2 = np.array([1.0, 1.0, np.e, 0.5, 1.0])
        assert abs(log_spectrum_discrepancy(e_model2, e_true, nyquist=1) - 1.0) < 1e-12

    def test_missing_truth_rejected(self, burgers_for_spectrum):
        import dataclasses
        broken = dataclasses.replace(burgers_for_spectrum)
        for s in broken.samples:
            s.output_hr = None
        with pytest.raises(ConfigError):
            spectrum_experiment([("oracle", oracle_predictor())], broken, 16)


class TestFixedGridCnn:
    def test_zero_weights_zero_output(self, rng):
        model = init_fixed_grid_cnn(CnnConfig(width=4, depth=2), seed=0)
        for _, t in model.parameters():
            t.data = np.zeros_like(t.data)
        out = cnn_forward(model, GridFunction(rng.standard_normal((1, 8, 8))))
        assert np.array_equal(out.values, np.zeros((1, 8, 8)))

    def test_identity_projection_layer(self, rng):
        cfg = CnnConfig(in_channels=1, out_channels=1, width=1, depth=0, kernel_size=1)
        model = init_fixed_grid_cnn(cfg, seed=0)
        model.proj_kernel.data = np.ones((1, 1, 1, 1))
        model.proj_bias.data = np.zeros(1)
        u = rng.standard_normal((1, 6, 6))
        out = cnn_forward(model, GridFunction(u))
        assert np.array_equal(out.values, u)

    def test_gradient_check(self, rng):
        model = init_fixed_grid_cnn(CnnConfig(width=3, depth=1), seed=1)
        x = Tensor(rng.standard_normal((1, 6, 6)), requires_grad=True)

        def loss():
            return tensor_sum(model.apply_grid(x))

        params = [t for _, t in model.parameters()]
        grads = backward(loss(), leaves=params + [x])
        for t in params + [x]:
            def f(v, t=t):
                saved = t.data
                t.data = v.data
                out = loss()
                t.data = saved
                return out
            fd = finite_difference_gradient(f, Tensor(t.data.copy()), 1e-5).data
            assert max_rel_err(grads[t.node_id].data, fd, floor=1e-9) < 1e-4

    def test_periodic_padding_translation_equivariance(self, rng):
        model = init_fixed_grid_cnn(CnnConfig(width=4, depth=2, padding="periodic"),
                                    seed=2)
        u = rng.standard_normal((1, 16, 16))
        out = cnn_forward(model, GridFunction(u)).values
        shifted = cnn_forward(model, GridFunction(np.roll(u, 4, axis=1))).values
        assert max_rel_err(shifted, np.roll(out, 4, axis=1)) < 1e-8

    def test_resolution_change_rejected(self, rng):
        model = init_fixed_grid_cnn(CnnConfig(), seed=0)
        with pytest.raises(ShapeError):
            model.apply_grid(Tensor(rng.standard_normal((1, 8, 8))), out_resolution=(16, 16))


@pytest.fixture(scope="module")
def small_darcy_with_hr():
    return make_dataset("darcy", 8, 16, 16, GrfSpec(alpha=2.0, tau=3.0),
                        DarcySpec(n_solver=32), seed=41, res_hr=32, train_fraction=0.5)


class TestSuperres:
    def test_equal_resolutions_coincide(self, small_darcy_with_hr):
        cfg = ModelConfig(kind="fno", d=2, in_channels=1, out_channels=1,
                          width=4, depth=1, k_max=3, coord_features=True)
        model = init_model(cfg, 7)
        report = superres_experiment(model, small_darcy_with_hr, (16, 16))
        assert np.allclose(report.err_operator, report.err_baseline)

    def test_band_limited_truth_gives_matching_errors(self):
        # synthetic task: truth band-limited below the coarse Nyquist, so
        # interpolation loses nothing beyond quadrature-level differences
        from fieldop.data import Dataset, Sample
        rng = np.random.default_rng(0)
        samples = []
        for s in range(4):
            u16 = band_limited_field((16, 16), 3, seed=100 + s)
            u64 = band_limited_field((64, 64), 3, seed=100 + s)
            # evaluate the same trigonometric polynomial on both grids
            from conftest import upsample_band_limited
            u64 = upsample_band_limited(u16, 4)
            samples.append(Sample(input=GridFunction(u16[None]),
                                  output=GridFunction(u16[None]),
                                  output_hr=GridFunction(u64[None])))
        ds = Dataset(task="custom", samples=samples, train_idx=[0, 1], test_idx=[2, 3],
                     res_in=(16, 16), res_out=(16, 16), res_hr=(64, 64),
                     grf=None, solver=None, seed=0)
        cfg = ModelConfig(kind="fno", d=2, in_channels=1, out_channels=1,
                          width=4, depth=1, k_max=3, coord_features=False)
        model = init_model(cfg, 3)
        report = superres_experiment(model, ds, (64, 64))
        # both pathways see the same band-limited content; bilinear adds
        # its interpolation bias, so allow a modest gap but no blow-up
        assert np.all(np.abs(report.err_operator - report.err_baseline)
                      <= 0.2 * np.maximum(report.err_operator, report.err_baseline) + 5e-3)


class TestConvergenceHarness:
    def test_single_cell_report(self):
        from fieldop.experiments import ConvergenceConfig, convergence_experiment
        from fieldop.optim import AdamConfig, TrainConfig
        from fieldop.losses import LossSpec
        cfg = ConvergenceConfig(
            task="darcy", grf=GrfSpec(alpha=2.0, tau=3.0), solver=DarcySpec(n_solver=16),
            n_samples=8, train_fraction=0.75,
            train=TrainConfig(epochs=2, batch_size=4, seed=0,
                              adam=AdamConfig(lr=2e-3), loss=LossSpec()),
            fno=ModelConfig(kind="fno", d=2, in_channels=1, out_channels=1,
                            width=4, depth=1, k_max=3, coord_features=True),
            seed=0)
        report = convergence_experiment(["fno"], [16], cfg)
        assert report.resolutions == [16]
        assert len(report.errors["fno"]) == 1
        assert np.isfinite(report.errors["fno"][0])
        assert report.param_counts["fno"] > 0


class TestInvert:
    def test_zero_steps_returns_init(self, rng):
        cfg = ModelConfig(kind="fno", d=1, in_channels=1, out_channels=1,
                          width=4, depth=1, k_max=2, coord_features=False)
        model = init_model(cfg, 9)
        y = model_forward(model, GridFunction(rng.standard_normal((1, 16))))
        init = GridFunction(rng.standard_normal((1, 16)))
        result = invert(model, y, init, steps=0, lr=1e-2)
        assert np.array_equal(result.recovered.values, init.values)
        assert len(result.trajectory) == 1

    def test_fixed_point_stays_put(self, rng):
        cfg = ModelConfig(kind="fno", d=1, in_channels=1, out_channels=1,
                          width=4, depth=1, k_max=2, coord_features=False)
        model = init_model(cfg, 9)
        x0 = GridFunction(rng.standard_normal((1, 16)))
        y = model_forward(model, x0)
        result = invert(model, y, x0, steps=10, lr=1e-3, tikhonov_weight=0.0)
        assert result.best_loss < 1e-20
        assert max_rel_err(result.recovered.values, x0.values) < 1e-2

    def test_trajectory_finite_and_best_non_increasing(self, rng):
        cfg = ModelConfig(kind="fno", d=1, in_channels=1, out_channels=1,
                          width=4, depth=1, k_max=2, coord_features=False)
        model = init_model(cfg, 10)
        y = model_forward(model, GridFunction(rng.standard_normal((1, 16))))
        init = GridFunction(np.zeros((1, 16)))
        result = invert(model, y, init, steps=40, lr=5e-2, tikhonov_weight=1e-5)
        assert all(np.isfinite(v) for v in result.trajectory)
        running_best = np.minimum.accumulate(result.trajectory)
        assert result.best_loss <= running_best[-1] + 1e-15
