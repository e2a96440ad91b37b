"""Loss functions and PDE residuals."""

import numpy as np
import pytest

from conftest import max_rel_err
from fieldop.autodiff import Tensor, backward, finite_difference_gradient
from fieldop.data import make_dataset
from fieldop.errors import ConfigError, MetricError, ShapeError
from fieldop.grids import GridFunction, resample
from fieldop.losses import (LossSpec, burgers_residual, burgers_residual_tensor,
                            darcy_residual, darcy_residual_tensor, pino_loss,
                            pino_loss_batch, relative_l2)
from fieldop.model import ModelConfig, init_model
from fieldop.solvers import (BurgersSpec, DarcySpec, GrfSpec, sample_grf, solve_burgers,
                             solve_darcy, threshold_coefficient)


class TestRelativeL2:
    def test_exact_match_is_zero(self, rng):
        u = rng.standard_normal((1, 8, 8))
        assert relative_l2(u, u) == 0.0

    def test_zero_prediction_is_one(self, rng):
        u = rng.standard_normal((1, 16))
        assert abs(relative_l2(np.zeros_like(u), u) - 1.0) < 1e-12

    def test_scaling(self, rng):
        u = rng.standard_normal((2, 8))
        assert abs(relative_l2(1.1 * u, u) - 0.1) < 1e-12

    def test_zero_norm_reference_rejected(self):
        with pytest.raises(MetricError):
            relative_l2(np.ones((1, 4)), np.zeros((1, 4)))

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            relative_l2(np.ones((1, 4)), np.ones((1, 5)))

    def test_tape_value_matches_plain(self, rng):
        p = rng.standard_normal((1, 8))
        t = rng.standard_normal((1, 8))
        tape = relative_l2(Tensor(p), t)
        assert abs(tape.item() - relative_l2(p, t)) < 1e-14


class TestBurgersResidual:
    def test_constant_field_vanishes(self):
        u = GridFunction(np.full((1, 16, 32), 2.5))
        r = burgers_residual(u, nu=0.1)
        assert np.max(np.abs(r.values)) < 1e-12

    def test_heat_equation_analytic_in_linear_mode(self):
        # u = exp(-4 pi^2 nu t) sin(2 pi x) solves u_t = nu u_xx exactly;
        # the residual is then pure time-discretization error
        nu, n_t, n_x, t_final = 0.03, 128, 64, 1.0
        t = (np.arange(n_t) / n_t * t_final)[:, None]
        x = (np.arange(n_x) / n_x)[None, :]
        u = np.exp(-4 * np.pi ** 2 * nu * t) * np.sin(2 * np.pi * x)
        r = burgers_residual(GridFunction(u[None]), nu, t_final,
                             include_advection=False)
        assert np.max(np.abs(r.values[0, 1:-1])) < 1e-4

    def test_solver_output_has_small_residual(self):
        # oracle-solution residual: dominated by the time-difference
        # truncation, which shrinks ~4x per time-resolution doubling
        n = 128
        x = np.arange(n) / n
        a0 = GridFunction((np.sin(2 * np.pi * x) + 0.4 * np.cos(4 * np.pi * x))[None])
        interior_rms = {}
        scale = None
        for n_t in (64, 128):
            spec = BurgersSpec(nu=0.05, t_final=1.0, dt=5e-4, n_solver=n, n_t_out=n_t)
            u = solve_burgers(a0, spec)
            r = burgers_residual(u, spec.nu, spec.t_final).values[0]
            interior_rms[n_t] = float(np.sqrt(np.mean(r[1:-1] ** 2)))
            scale = float(np.sqrt(np.mean(u.values ** 2)))
        assert interior_rms[64] < 0.1 * scale
        ratio = interior_rms[64] / interior_rms[128]
        assert 2.5 <= ratio <= 6.0, ratio

    def test_too_few_slices_rejected(self):
        with pytest.raises(ShapeError):
            burgers_residual(GridFunction(np.zeros((1, 2, 16))), 0.1)

    def test_gradient(self, rng):
        u = Tensor(rng.standard_normal((1, 8, 16)), requires_grad=True)

        def f(t):
            from fieldop.autodiff import square, tensor_mean
            return tensor_mean(square(burgers_residual_tensor(t, 0.1, 1.0)))

        grad = backward(f(u), leaves=[u])[u.node_id].data
        fd = finite_difference_gradient(f, Tensor(u.data.copy()), 1e-5).data
        assert max_rel_err(grad, fd) < 1e-5


class TestDarcyResidual:
    def test_zero_everything_vanishes(self):
        u = GridFunction(np.zeros((1, 16, 16)))
        a = GridFunction(np.ones((1, 16, 16)))
        r = darcy_residual(u, a, f_const=0.0)
        assert np.array_equal(r.values, np.zeros((1, 16, 16)))

    def test_solver_output_has_residual_at_cg_tolerance(self):
        field = sample_grf(GrfSpec(alpha=2.0, tau=3.0), (32, 32), seed=3)
        a = threshold_coefficient(field, 12.0, 3.0)
        spec = DarcySpec(cg_tol=1e-10)
        u = solve_darcy(a, spec)
        r = darcy_residual(u, a, spec.f_const).values[0, 1:, 1:]
        # the CG residual bound is relative to ||f|| = f_const * (n-1)
        assert np.sqrt(np.mean(r ** 2)) < 1e-6

    def test_joint_scaling_preserves_zero_set(self):
        field = sample_grf(GrfSpec(alpha=2.0, tau=3.0), (16, 16), seed=4)
        a = threshold_coefficient(field, 12.0, 3.0)
        u = solve_darcy(a, DarcySpec(cg_tol=1e-12))
        r1 = darcy_residual(u, a, 1.0).values
        r2 = darcy_residual(u, GridFunction(2 * a.values), 2.0).values
        assert max_rel_err(r2, 2 * r1, floor=1e-10) < 1e-9

    def test_batched_matches_per_sample(self, rng):
        n = 8
        u = rng.standard_normal((3, 1, n, n))
        a = rng.uniform(1.0, 2.0, size=(3, n, n))
        batched = darcy_residual_tensor(Tensor(u), a, 1.0).data
        for i in range(3):
            single = darcy_residual_tensor(Tensor(u[i]), a[i], 1.0).data
            assert np.array_equal(batched[i], single)

    def test_gradient(self, rng):
        u = Tensor(rng.standard_normal((1, 8, 8)), requires_grad=True)
        a = rng.uniform(1.0, 3.0, size=(8, 8))

        def f(t):
            from fieldop.autodiff import square, tensor_mean
            return tensor_mean(square(darcy_residual_tensor(t, a, 1.0)))

        grad = backward(f(u), leaves=[u])[u.node_id].data
        fd = finite_difference_gradient(f, Tensor(u.data.copy()), 1e-5).data
        assert max_rel_err(grad, fd) < 1e-5


@pytest.fixture(scope="module")
def darcy_dataset():
    return make_dataset("darcy", 4, 16, 16, GrfSpec(alpha=2.0, tau=3.0),
                        DarcySpec(n_solver=32), seed=5, res_hr=32,
                        train_fraction=0.5)


@pytest.fixture(scope="module")
def tiny_model():
    cfg = ModelConfig(kind="fno", d=2, in_channels=1, out_channels=1,
                      width=4, depth=1, k_max=2, coord_features=True)
    return init_model(cfg, 0)


class TestPinoLoss:
    def test_zero_pde_weight_reduces_to_data_loss(self, darcy_dataset, tiny_model):
        s = darcy_dataset.samples[0]
        spec = LossSpec(w_data=1.0, w_pde=0.0)
        loss = pino_loss(tiny_model, s, spec).item()
        from fieldop.model import model_forward
        pred = model_forward(tiny_model, s.input, s.output.resolution)
        assert abs(loss - relative_l2(pred.values, s.output.values)) < 1e-12

    def test_zero_data_weight_is_pure_physics(self, darcy_dataset, tiny_model):
        s = darcy_dataset.samples[0]
        spec = LossSpec(w_data=0.0, w_pde=1.0, res_pde=(32, 32))
        loss = pino_loss(tiny_model, s, spec).item()
        assert np.isfinite(loss) and loss > 0

    def test_multiresolution_configuration_runs(self, darcy_dataset, tiny_model):
        # data at the native 16^2 with physics super-evaluated at 32^2
        s = darcy_dataset.samples[0]
        spec = LossSpec(w_data=1.0, w_pde=0.1, res_pde=(32, 32))
        loss = pino_loss(tiny_model, s, spec).item()
        assert np.isfinite(loss)

    def test_missing_physics_metadata_rejected(self, tiny_model, rng):
        from fieldop.data import Sample, NsMeta
        s = Sample(input=GridFunction(rng.standard_normal((1, 16, 16))),
                   output=GridFunction(rng.standard_normal((1, 16, 16))),
                   meta=NsMeta(nu=1e-3, forcing_wavenumber=4, forcing_amplitude=1.0,
                               t_final=1.0))
        with pytest.raises(ConfigError):
            pino_loss(tiny_model, s, LossSpec(w_data=0.0, w_pde=1.0, res_pde=(16, 16)))

    def test_batch_equals_mean_of_singles(self, darcy_dataset, tiny_model):
        spec = LossSpec(w_data=1.0, w_pde=0.05, res_pde=(32, 32))
        singles = [pino_loss(tiny_model, s, spec).item() for s in darcy_dataset.samples]
        batch = pino_loss_batch(tiny_model, darcy_dataset.samples, spec).item()
        assert abs(batch - np.mean(singles)) < 1e-12

    def test_gradient_matches_finite_differences(self, darcy_dataset, tiny_model):
        s = darcy_dataset.samples[0]
        spec = LossSpec(w_data=1.0, w_pde=0.1, res_pde=(32, 32))
        params = [t for _, t in tiny_model.parameters()]
        grads = backward(pino_loss(tiny_model, s, spec), leaves=params)
        for name, t in tiny_model.parameters():
            def f(v, t=t):
                saved = t.data
                t.data = v.data
                out = pino_loss(tiny_model, s, spec)
                t.data = saved
                return out
            fd = finite_difference_gradient(f, Tensor(t.data.copy()), 1e-5).data
            assert max_rel_err(grads[t.node_id].data, fd, floor=1e-8) < 1e-4, name

    def test_invalid_weights_rejected(self):
        with pytest.raises(ConfigError):
            LossSpec(w_data=0.0, w_pde=0.0).validate()
