"""Training losses: relative L2 data loss and PDE residual (physics) losses.

The physics losses evaluate the model output on the tape, so the same
code path serves training, test-time fine-tuning, and inversion. The
Darcy residual applies exactly the flux-form stencil of the reference
solver; the Burgers residual uses spectral space derivatives and finite
differences in time (central inside, one-sided at the ends).

Residuals accept an optional leading batch axis; the training loop
stacks whole minibatches into one graph.
"""

from dataclasses import dataclass, asdict

import numpy as np

from .autodiff import (Tensor, add, as_tensor, concat, mul, reshape, sqrt, square,
                       tensor_mean, tensor_sum)
from .errors import ConfigError, MetricError, ShapeError
from .grids import GridFunction, resample
from .solvers import darcy_faces
from .spectral import spectral_derivative


@dataclass
class LossSpec:
    """Weights and resolutions of the composite data + physics objective."""

    w_data: float = 1.0
    w_pde: float = 0.0
    res_data: tuple = None   # None: the sample's native output resolution
    res_pde: tuple = None    # None: 4x res_data per axis
    boundary_weight: float = 1.0

    def validate(self):
        if self.w_data < 0 or self.w_pde < 0:
            raise ConfigError("loss weights must be non-negative")
        if self.w_data + self.w_pde <= 0:
            raise ConfigError("at least one loss weight must be positive")
        if (self.w_data > 0 and self.w_pde > 0
                and self.res_data is not None and self.res_pde is not None):
            if any(p < d for p, d in zip(self.res_pde, self.res_data)):
                raise ConfigError("res_pde must be at least res_data on every axis")

    def to_dict(self):
        d = asdict(self)
        for key in ("res_data", "res_pde"):
            if d[key] is not None:
                d[key] = list(d[key])
        return d


def _values_of(x):
    if isinstance(x, GridFunction):
        return x.values
    if isinstance(x, Tensor):
        return x.data
    return np.asarray(x, dtype=np.float64)


def relative_l2(pred, truth):
    """|| pred - truth ||_2 / || truth ||_2 over all channels and points.

    Returns a tape scalar when ``pred`` is a tape tensor, otherwise a float.
    """
    truth_vals = _values_of(truth)
    pred_vals = _values_of(pred)
    if pred_vals.shape != truth_vals.shape:
        raise ShapeError(f"relative_l2: shape mismatch {pred_vals.shape} vs {truth_vals.shape}")
    denom = float(np.sqrt(np.sum(truth_vals * truth_vals)))
    if denom == 0.0:
        raise MetricError("relative_l2 is undefined for a zero-norm reference")
    if isinstance(pred, Tensor):
        diff = add(pred, Tensor(-truth_vals))
        return mul(sqrt(square(diff).sum()), 1.0 / denom)
    return float(np.sqrt(np.sum((pred_vals - truth_vals) ** 2)) / denom)


def relative_l2_batch(pred, truth_vals):
    """Per-sample relative L2 of a batched prediction [batch, ...] -> [batch]."""
    pred = as_tensor(pred)
    truth_vals = np.asarray(truth_vals, dtype=np.float64)
    if pred.shape != truth_vals.shape:
        raise ShapeError(f"relative_l2: shape mismatch {pred.shape} vs {truth_vals.shape}")
    axes = tuple(range(1, pred.ndim))
    denom = np.sqrt(np.sum(truth_vals * truth_vals, axis=axes))
    if np.any(denom == 0.0):
        raise MetricError("relative_l2 is undefined for a zero-norm reference")
    diff = add(pred, Tensor(-truth_vals))
    return mul(sqrt(tensor_sum(square(diff), axes=axes)), Tensor(1.0 / denom))


# -- Burgers residual ---------------------------------------------------------


def _time_derivative(u, dt):
    # central differences inside, one-sided at both ends; time is axis -2
    n_t = u.shape[-2]
    inner = mul(add(u[..., 2:, :], mul(u[..., :-2, :], -1.0)), 1.0 / (2.0 * dt))
    first = mul(add(u[..., 1:2, :], mul(u[..., 0:1, :], -1.0)), 1.0 / dt)
    last = mul(add(u[..., n_t - 1:n_t, :], mul(u[..., n_t - 2:n_t - 1, :], -1.0)), 1.0 / dt)
    return concat([first, inner, last], axis=-2)


def burgers_residual_tensor(u, nu, t_final=1.0, include_advection=True):
    """Residual u_t + u u_x - nu u_xx of a space-time tensor.

    ``u`` is [c, n_t, n_x] or batched [batch, c, n_t, n_x]; time slices
    sit at t_j = j t_final / n_t.
    """
    u = as_tensor(u)
    if u.ndim not in (3, 4):
        raise ShapeError(f"burgers residual expects [c, n_t, n_x] values, got {u.shape}")
    if u.shape[-2] < 3:
        raise ShapeError("burgers residual needs at least 3 time slices")
    dt = t_final / u.shape[-2]
    u_t = _time_derivative(u, dt)
    u_xx = spectral_derivative(u, axis=-1, order=2)
    r = add(u_t, mul(u_xx, -nu))
    if include_advection:
        u_x = spectral_derivative(u, axis=-1, order=1)
        r = add(r, mul(u, u_x))
    return r


def burgers_residual(u: GridFunction, nu, t_final=1.0, include_advection=True) -> GridFunction:
    if not u.periodic:
        raise ShapeError("burgers residual requires the periodic grid convention")
    r = burgers_residual_tensor(Tensor(u.values), nu, t_final, include_advection)
    return GridFunction(r.data, periodic=True)


# -- Darcy residual -----------------------------------------------------------


def darcy_residual_tensor(u, a_values, f_const):
    """Interior residual -div(a grad u) - f as a tape tensor.

    ``u`` is [1, n, n] or batched [batch, 1, n, n] on the j/n grid with
    the x=1 / y=1 edges implicitly zero; ``a_values`` is [n, n] or
    [batch, n, n]. Matches the reference solver's operator exactly; the
    result drops the channel axis ([..., n-1, n-1]).
    """
    u = as_tensor(u)
    a_values = np.asarray(a_values, dtype=np.float64)
    if u.ndim not in (3, 4) or u.shape[-3] != 1 or u.shape[-1] != u.shape[-2]:
        raise ShapeError(f"darcy residual expects [1, n, n] values, got {u.shape}")
    n = u.shape[-1]
    batched = u.ndim == 4
    if batched and a_values.ndim == 2:
        a_values = np.broadcast_to(a_values, (u.shape[0], n, n))
    if a_values.shape[-2:] != (n, n):
        raise ShapeError(f"coefficient shape {a_values.shape} does not match grid {n}")

    u2 = u[..., 0, :, :]
    lead = u2.shape[:-2]
    if batched:
        faces = [darcy_faces(a_values[b]) for b in range(a_values.shape[0])]
        fx = np.stack([f[0] for f in faces])
        fy = np.stack([f[1] for f in faces])
    else:
        fx, fy = darcy_faces(a_values)
    h2 = (1.0 / n) ** 2

    center = u2[..., 1:n, 1:n]
    zrow = Tensor(np.zeros(lead + (1, n - 1)))
    zcol = Tensor(np.zeros(lead + (n - 1, 1)))
    east = concat([u2[..., 2:n, 1:n], zrow], axis=-2)
    west = u2[..., 0:n - 1, 1:n]
    north = concat([u2[..., 1:n, 2:n], zcol], axis=-1)
    south = u2[..., 1:n, 0:n - 1]
    flux = add(
        add(mul(add(center, mul(east, -1.0)), Tensor(fx[..., 1:n, 1:n])),
            mul(add(center, mul(west, -1.0)), Tensor(fx[..., 0:n - 1, 1:n]))),
        add(mul(add(center, mul(north, -1.0)), Tensor(fy[..., 1:n, 1:n])),
            mul(add(center, mul(south, -1.0)), Tensor(fy[..., 1:n, 0:n - 1]))))
    return add(mul(flux, 1.0 / h2), Tensor(np.full(lead + (n - 1, n - 1), -float(f_const))))


def darcy_boundary_tensor(u):
    """Stored Dirichlet edge values (x=0 row and y=0 column) as a flat tensor."""
    u = as_tensor(u)
    n = u.shape[-1]
    row = reshape(u[..., 0:1, :], u.shape[:-3] + (n,))
    col = reshape(u[..., 1:n, 0:1], u.shape[:-3] + (n - 1,))
    return concat([row, col], axis=-1)


def darcy_residual(u: GridFunction, a: GridFunction, f_const) -> GridFunction:
    if u.resolution != a.resolution:
        raise ShapeError(f"resolution mismatch {u.resolution} vs {a.resolution}")
    r = darcy_residual_tensor(Tensor(u.values), a.values[0], f_const)
    n = u.resolution[0]
    full = np.zeros((1, n, n))
    full[0, 1:n, 1:n] = r.data
    return GridFunction(full, periodic=u.periodic)


# -- composite objective ------------------------------------------------------


def _resolved_resolutions(spec: LossSpec, sample):
    res_data = spec.res_data or sample.output.resolution
    res_data = tuple(int(n) for n in res_data)
    res_pde = spec.res_pde or tuple(4 * n for n in res_data)
    return res_data, tuple(int(n) for n in res_pde)


def _data_truth(sample, res_data):
    if tuple(sample.output.resolution) == res_data:
        return sample.output
    return resample(sample.output, res_data, "subsample")


def _physics_coefficient(sample, res_pde):
    meta = sample.meta
    if meta.input_hr is None:
        raise ConfigError("darcy physics loss needs a high-resolution coefficient copy")
    a_hr = meta.input_hr
    if tuple(a_hr.resolution) != res_pde:
        a_hr = resample(a_hr, res_pde, "subsample")
    return a_hr.values[0]


def _physics_term(pred, samples, spec, res_pde):
    """Mean-square PDE residual (batch mean when ``pred`` is batched)."""
    meta = samples[0].meta
    task = getattr(meta, "task", None)
    if task == "burgers":
        r = burgers_residual_tensor(pred, meta.nu, meta.t_final)
        return tensor_mean(square(r))
    if task == "darcy":
        if pred.ndim == 4:
            a = np.stack([_physics_coefficient(s, res_pde) for s in samples])
        else:
            a = _physics_coefficient(samples[0], res_pde)
        r = darcy_residual_tensor(pred, a, meta.f_const)
        term = tensor_mean(square(r))
        if spec.boundary_weight:
            term = add(term, mul(tensor_mean(square(darcy_boundary_tensor(pred))),
                                 spec.boundary_weight))
        return term
    raise ConfigError(f"no PDE residual is defined for task {task!r}")


def physics_loss_tensor(pred, sample, spec: LossSpec, res_pde):
    """Mean-square PDE residual of one model output at the physics resolution."""
    return _physics_term(pred, [sample], spec, res_pde)


def pino_loss(model, sample, spec: LossSpec):
    """w_data * relative_l2(model @ res_data) + w_pde * mean residual^2 (@ res_pde).

    One forward pass per active resolution; the physics pass queries the
    model at the finer grid directly (zero-shot super-evaluation).
    """
    spec.validate()
    res_data, res_pde = _resolved_resolutions(spec, sample)
    x = Tensor(sample.input.values)
    total = None
    if spec.w_data > 0:
        pred = model.apply_grid(x, out_resolution=res_data, periodic=sample.input.periodic)
        term = mul(relative_l2(pred, _data_truth(sample, res_data)), spec.w_data)
        total = term
    if spec.w_pde > 0:
        pred_hr = model.apply_grid(x, out_resolution=res_pde, periodic=sample.input.periodic)
        term = mul(physics_loss_tensor(pred_hr, sample, spec, res_pde), spec.w_pde)
        total = term if total is None else add(total, term)
    return total


def pino_loss_batch(model, samples, spec: LossSpec):
    """Batch-mean composite loss over samples sharing one resolution.

    Equals the mean of the per-sample ``pino_loss`` values, computed as
    one stacked forward pass per active resolution.
    """
    spec.validate()
    if not samples:
        raise ConfigError("empty batch")
    res_data, res_pde = _resolved_resolutions(spec, samples[0])
    x = Tensor(np.stack([s.input.values for s in samples]))
    periodic = samples[0].input.periodic
    total = None
    if spec.w_data > 0:
        pred = model.apply_grid_batch(x, out_resolution=res_data, periodic=periodic)
        truth = np.stack([_data_truth(s, res_data).values for s in samples])
        term = mul(tensor_mean(relative_l2_batch(pred, truth)), spec.w_data)
        total = term
    if spec.w_pde > 0:
        pred_hr = model.apply_grid_batch(x, out_resolution=res_pde, periodic=periodic)
        term = mul(_physics_term(pred_hr, samples, spec, res_pde), spec.w_pde)
        total = term if total is None else add(total, term)
    return total
