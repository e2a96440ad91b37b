"""Reference solvers and random fields: oracle checks and invariants."""

import numpy as np
import pytest

from conftest import max_rel_err
from fieldop.errors import ConfigError, DomainError
from fieldop.grids import GridFunction, resample
from fieldop.solvers import (BurgersSpec, DarcySpec, GrfSpec, NsSpec, darcy_faces,
                             darcy_operator, sample_grf, solve_burgers, solve_darcy,
                             solve_ns_vorticity, threshold_coefficient)


class TestGrf:
    def test_zero_scale_gives_zero_field(self):
        u = sample_grf(GrfSpec(scale=0.0), (16,), seed=1)
        assert np.array_equal(u.values, np.zeros((1, 16)))

    def test_seed_determinism(self):
        a = sample_grf(GrfSpec(), (16, 16), seed=4)
        b = sample_grf(GrfSpec(), (16, 16), seed=4)
        c = sample_grf(GrfSpec(), (16, 16), seed=5)
        assert np.array_equal(a.values, b.values)
        assert not np.array_equal(a.values, c.values)

    def test_alpha_below_half_dimension_rejected(self):
        with pytest.raises(ConfigError):
            sample_grf(GrfSpec(alpha=1.0), (8, 8), seed=0)

    def test_empirical_spectrum_matches_density(self):
        # Monte-Carlo oracle: bin-averaged |dft|^2 over 512 draws vs the
        # target density summed over the same radial bins. The k=0 bin is
        # a single real mode (too noisy at this draw count) and is skipped.
        spec = GrfSpec(alpha=2.0, tau=3.0, scale=1.0)
        n, draws = 16, 512
        from fieldop.experiments import energy_spectrum
        acc = None
        for s in range(draws):
            u = sample_grf(spec, (n, n), seed=[77, s])
            _, e = energy_spectrum(u)
            acc = e if acc is None else acc + e
        emp = acc / draws

        k = np.rint(np.fft.fftfreq(n) * n).astype(int)
        k2 = (2 * np.pi * k[:, None]) ** 2 + (2 * np.pi * k[None, :]) ** 2
        density = (k2 + spec.tau ** 2) ** (-spec.alpha)
        kmag = np.rint(np.sqrt(k[:, None] ** 2 + k[None, :] ** 2)).astype(int)
        target = np.bincount(kmag.ravel(), weights=density.ravel())
        for kk in range(1, 6):
            assert abs(emp[kk] / target[kk] - 1.0) < 0.10, (kk, emp[kk], target[kk])


class TestBurgers:
    def test_zero_initial_condition_stays_zero(self):
        spec = BurgersSpec(nu=0.1, t_final=0.5, dt=1e-2, n_solver=64, n_t_out=8)
        out = solve_burgers(GridFunction(np.zeros((1, 64))), spec)
        assert np.array_equal(out.values, np.zeros((1, 8, 64)))

    def test_viscous_decay_is_monotone(self):
        n = 128
        x = np.arange(n) / n
        spec = BurgersSpec(nu=0.5, t_final=1.0, dt=1e-3, n_solver=n, n_t_out=16)
        out = solve_burgers(GridFunction(np.sin(2 * np.pi * x)[None]), spec)
        amps = np.max(np.abs(out.values[0]), axis=1)
        assert np.all(np.diff(amps) < 0)

    def test_self_convergence_at_high_resolution(self):
        a0 = sample_grf(GrfSpec(alpha=2.5, tau=5.0, scale=50.0), (128,), seed=3)
        sol = {}
        for n in (256, 512):
            spec = BurgersSpec(nu=0.1, t_final=1.0, dt=5e-4, n_solver=n, n_t_out=8)
            sol[n] = solve_burgers(a0, spec).values[0, -1]
        coarse, fine = sol[256], sol[512][::2]
        rel = np.linalg.norm(coarse - fine) / np.linalg.norm(fine)
        assert rel <= 1e-6

    def test_mean_is_conserved(self):
        a0 = sample_grf(GrfSpec(alpha=2.5, tau=5.0, scale=80.0), (128,), seed=9)
        spec = BurgersSpec(nu=0.05, t_final=1.0, dt=1e-3, n_solver=128, n_t_out=32)
        out = solve_burgers(a0, spec).values[0]
        means = out.mean(axis=1)
        assert np.max(np.abs(means - means[0])) < 1e-10

    def test_time_step_order(self):
        # halving dt should cut the time-discretization error ~16x (RK4)
        a0 = sample_grf(GrfSpec(alpha=2.5, tau=5.0, scale=120.0), (64,), seed=5)
        finals = {}
        for dt in (8e-3, 4e-3, 1e-4):
            spec = BurgersSpec(nu=0.03, t_final=0.512, dt=dt, n_solver=64, n_t_out=2)
            finals[dt] = solve_burgers(a0, spec).values[0, -1]
        e1 = np.linalg.norm(finals[8e-3] - finals[1e-4])
        e2 = np.linalg.norm(finals[4e-3] - finals[1e-4])
        assert 8.0 <= e1 / e2 <= 32.0, e1 / e2

    def test_finer_initial_condition_rejected(self):
        spec = BurgersSpec(n_solver=64)
        with pytest.raises(DomainError):
            solve_burgers(GridFunction(np.zeros((1, 128))), spec)

    def test_unstable_step_raises_divergence(self):
        from fieldop.errors import DivergenceError
        a0 = sample_grf(GrfSpec(alpha=2.5, tau=7.0, scale=3000.0), (64,), seed=2)
        spec = BurgersSpec(nu=1e-4, t_final=1.0, dt=0.05, n_solver=64, n_t_out=16)
        with pytest.raises(DivergenceError):
            solve_burgers(a0, spec)


class TestDarcy:
    def test_zero_forcing_gives_zero(self):
        u = solve_darcy(GridFunction(np.ones((1, 16, 16))), DarcySpec(f_const=0.0))
        assert np.array_equal(u.values, np.zeros((1, 16, 16)))

    def test_manufactured_solution_second_order(self):
        errs = {}
        for n in (32, 64):
            x = np.arange(n) / n
            xx, yy = np.meshgrid(x, x, indexing="ij")
            exact = np.sin(2 * np.pi * xx) * np.sin(2 * np.pi * yy)
            f = 8 * np.pi ** 2 * exact
            u = solve_darcy(GridFunction(np.ones((1, n, n))), DarcySpec(cg_tol=1e-12),
                            forcing=f)
            errs[n] = np.linalg.norm(u.values[0] - exact) / np.linalg.norm(exact)
        ratio = errs[32] / errs[64]
        assert 3.4 <= ratio <= 4.6, ratio

    def test_joint_scaling_invariance(self, rng):
        field = sample_grf(GrfSpec(alpha=2.0, tau=3.0), (16, 16), seed=2)
        a = threshold_coefficient(field, 12.0, 3.0)
        spec = DarcySpec(cg_tol=1e-12)
        u1 = solve_darcy(a, spec)
        a2 = GridFunction(5.0 * a.values)
        u2 = solve_darcy(a2, DarcySpec(cg_tol=1e-12, f_const=5.0))
        assert max_rel_err(u2.values, u1.values) < 1e-9

    def test_operator_is_symmetric(self, rng):
        n = 16
        field = sample_grf(GrfSpec(alpha=2.0, tau=3.0), (n, n), seed=7)
        a = threshold_coefficient(field, 12.0, 3.0)
        fx, fy = darcy_faces(a.values[0])
        op = darcy_operator(fx, fy, n)
        v = rng.standard_normal((n - 1, n - 1))
        w = rng.standard_normal((n - 1, n - 1))
        left = np.sum(op(v) * w)
        right = np.sum(v * op(w))
        assert abs(left - right) < 1e-10 * max(abs(left), 1.0)

    def test_non_positive_coefficient_rejected(self):
        a = GridFunction(np.zeros((1, 8, 8)))
        with pytest.raises(DomainError):
            solve_darcy(a, DarcySpec())

    def test_cg_iteration_cap_raises(self):
        from fieldop.errors import SolverError
        field = sample_grf(GrfSpec(alpha=2.0, tau=3.0), (32, 32), seed=1)
        a = threshold_coefficient(field, 12.0, 3.0)
        with pytest.raises(SolverError):
            solve_darcy(a, DarcySpec(cg_tol=1e-12, cg_max_iter=3))


class TestNs:
    def test_zero_state_zero_forcing_stays_zero(self):
        spec = NsSpec(forcing_amplitude=0.0, n_solver=32, dt=5e-3, n_t_out=4)
        out = solve_ns_vorticity(GridFunction(np.zeros((1, 32, 32))), spec)
        assert np.array_equal(out.values, np.zeros((1, 4, 32, 32)))

    def test_enstrophy_decays_without_forcing(self):
        w0 = sample_grf(GrfSpec(alpha=2.5, tau=7.0, scale=100.0), (64, 64), seed=7)
        spec = NsSpec(nu=1e-2, forcing_amplitude=0.0, t_final=1.0, dt=2e-3,
                      n_solver=64, n_t_out=8)
        out = solve_ns_vorticity(w0, spec)
        enstrophy = np.sum(out.values[0] ** 2, axis=(1, 2))
        assert np.all(np.diff(enstrophy) <= 1e-12)

    def test_self_convergence(self):
        w0 = sample_grf(GrfSpec(alpha=3.0, tau=7.0, scale=400.0), (64, 64), seed=11)
        finals = {}
        for n in (64, 128):
            spec = NsSpec(nu=1e-2, forcing_wavenumber=4, forcing_amplitude=1.0,
                          t_final=2.0, dt=1e-3, n_solver=n, n_t_out=2)
            finals[n] = solve_ns_vorticity(w0, spec).values[0, -1]
        coarse = finals[64]
        fine = finals[128][::2, ::2]
        rel = np.linalg.norm(coarse - fine) / np.linalg.norm(fine)
        assert rel <= 1e-3, rel

    def test_determinism(self):
        w0 = sample_grf(GrfSpec(scale=50.0), (32, 32), seed=0)
        spec = NsSpec(n_solver=32, dt=5e-3, n_t_out=3)
        a = solve_ns_vorticity(w0, spec)
        b = solve_ns_vorticity(w0, spec)
        assert np.array_equal(a.values, b.values)


class TestThreshold:
    def test_two_values_only(self):
        field = sample_grf(GrfSpec(), (32, 32), seed=12)
        a = threshold_coefficient(field, 12.0, 3.0)
        assert set(np.unique(a.values)) == {3.0, 12.0}
