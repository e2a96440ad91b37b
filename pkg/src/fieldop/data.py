"""Dataset construction: sampled inputs, solved outputs, multi-resolution copies.

Every sample is solved once at the solver resolution and stored at the
requested resolutions by stride subsampling, so the copies are exact
samples of one underlying function. The Burgers task maps an initial
condition (tiled across the time axis) to the space-time trajectory; the
Darcy task maps a two-level coefficient to the pressure field; the
Navier-Stokes task maps initial vorticity to the final-time vorticity.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError
from .grids import GridFunction, resample
from .solvers import (BurgersSpec, DarcySpec, GrfSpec, NsSpec, sample_grf, solve_burgers,
                      solve_darcy, solve_ns_vorticity, threshold_coefficient)
from .spectral import is_power_of_two

TASKS = ("burgers", "darcy", "ns")

_SPLIT_STREAM = 7919


@dataclass
class BurgersMeta:
    nu: float
    t_final: float
    task: str = "burgers"


@dataclass
class DarcyMeta:
    f_const: float
    input_hr: GridFunction = None
    task: str = "darcy"


@dataclass
class NsMeta:
    nu: float
    forcing_wavenumber: int
    forcing_amplitude: float
    t_final: float
    task: str = "ns"


@dataclass
class Sample:
    input: GridFunction
    output: GridFunction
    output_hr: GridFunction = None
    meta: object = None


@dataclass
class Dataset:
    task: str
    samples: list
    train_idx: list
    test_idx: list
    res_in: tuple
    res_out: tuple
    res_hr: tuple
    grf: GrfSpec
    solver: object
    seed: int

    @property
    def n_samples(self):
        return len(self.samples)

    @property
    def train_samples(self):
        return [self.samples[i] for i in self.train_idx]

    @property
    def test_samples(self):
        return [self.samples[i] for i in self.test_idx]


def tile_initial_condition(a0_values, n_t):
    """Repeat a 1d profile [1, n_x] across a time axis -> [1, n_t, n_x]."""
    from .autodiff import Tensor, add, reshape
    if isinstance(a0_values, Tensor):
        n_x = a0_values.shape[-1]
        return add(Tensor(np.zeros((1, n_t, n_x))), reshape(a0_values, (1, 1, n_x)))
    arr = np.asarray(a0_values)
    return np.broadcast_to(arr.reshape(1, 1, -1), (1, n_t, arr.shape[-1])).copy()


def _check_resolutions(task, res_in, res_out, res_hr, n_solver):
    for name, res in (("res_in", res_in), ("res_out", res_out), ("res_hr", res_hr)):
        for n in res:
            if not is_power_of_two(n):
                raise ConfigError(f"dataset.{name} must be powers of two, got {res}")
            if n > n_solver:
                raise ConfigError(f"dataset.{name} {res} exceeds solver resolution {n_solver}")
    for a, b in ((res_hr, res_out), (res_hr, res_in)):
        if any(x < y for x, y in zip(a, b)):
            raise ConfigError("res_hr must be at least res_in and res_out")


def _as_square(res, d):
    if np.isscalar(res):
        return (int(res),) * d
    return tuple(int(n) for n in res)


def _split(n_samples, train_fraction, seed):
    order = np.random.default_rng([seed, _SPLIT_STREAM]).permutation(n_samples)
    n_train = int(round(train_fraction * n_samples))
    return sorted(int(i) for i in order[:n_train]), sorted(int(i) for i in order[n_train:])


def make_dataset(task, n_samples, res_in, res_out, grf: GrfSpec, solver_spec, seed,
                 res_hr=None, train_fraction=0.8) -> Dataset:
    """Generate a paired dataset by sampling random fields and solving the PDE.

    Deterministic given the arguments; each sample uses an independent
    (seed, index) random stream so generation order is immaterial.
    """
    if task not in TASKS:
        raise ConfigError(f"unknown task {task!r}")
    if n_samples < 0:
        raise ConfigError("n_samples must be non-negative")
    d = 2  # all tasks produce 2d fields: space-time for burgers, the plane otherwise
    res_in = _as_square(res_in, d)
    res_out = _as_square(res_out, d)
    res_hr = _as_square(res_hr, d) if res_hr is not None else (solver_spec.n_solver,) * d
    if task == "burgers":
        # the time axis of the high-resolution copy sets the solver's slice count
        solver_spec.n_t_out = res_hr[0]
    _check_resolutions(task, res_in, res_out, res_hr, solver_spec.n_solver)
    solver_spec.validate()

    samples = []
    for i in range(n_samples):
        samples.append(_make_sample(task, grf, solver_spec, [seed, i], res_in, res_out, res_hr))
    train_idx, test_idx = _split(n_samples, train_fraction, seed)
    return Dataset(task=task, samples=samples, train_idx=train_idx, test_idx=test_idx,
                   res_in=res_in, res_out=res_out, res_hr=res_hr,
                   grf=grf, solver=solver_spec, seed=seed)


def _make_sample(task, grf, spec, sample_seed, res_in, res_out, res_hr):
    if task == "burgers":
        a0 = sample_grf(grf, (spec.n_solver,), sample_seed)
        traj = solve_burgers(a0, spec)  # [1, res_hr_t, n_solver]
        out_hr = resample(traj, res_hr, "subsample")
        output = resample(out_hr, res_out, "subsample")
        a0_in = resample(a0, (res_in[1],), "subsample")
        tiled = GridFunction(tile_initial_condition(a0_in.values, res_in[0]), periodic=True)
        return Sample(input=tiled, output=output, output_hr=out_hr,
                      meta=BurgersMeta(nu=spec.nu, t_final=spec.t_final))

    if task == "darcy":
        level = sample_grf(grf, (spec.n_solver,) * 2, sample_seed)
        a = threshold_coefficient(level, spec.a_plus, spec.a_minus)
        u = solve_darcy(a, spec)
        a_hr = resample(a, res_hr, "subsample")
        out_hr = resample(u, res_hr, "subsample")
        return Sample(input=resample(a, res_in, "subsample"),
                      output=resample(u, res_out, "subsample"),
                      output_hr=out_hr,
                      meta=DarcyMeta(f_const=spec.f_const, input_hr=a_hr))

    # navier-stokes: w0 -> w(T); slices land on {0, T} via a doubled window
    w0 = sample_grf(grf, (spec.n_solver,) * 2, sample_seed)
    run = NsSpec(nu=spec.nu, forcing_wavenumber=spec.forcing_wavenumber,
                 forcing_amplitude=spec.forcing_amplitude, t_final=2.0 * spec.t_final,
                 dt=spec.dt, n_solver=spec.n_solver, n_t_out=2)
    traj = solve_ns_vorticity(w0, run)
    w_final = GridFunction(traj.values[:, 1], periodic=True)
    return Sample(input=resample(w0, res_in, "subsample"),
                  output=resample(w_final, res_out, "subsample"),
                  output_hr=resample(w_final, res_hr, "subsample"),
                  meta=NsMeta(nu=spec.nu, forcing_wavenumber=spec.forcing_wavenumber,
                              forcing_amplitude=spec.forcing_amplitude, t_final=spec.t_final))
