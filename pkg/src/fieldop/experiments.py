"""Experiment harnesses: spectra, discretization convergence, super-resolution,
and gradient-based inversion through a trained operator.

The spectrum experiment contrasts how differently-evaluated predictions
extrapolate beyond the training Nyquist wavenumber; the convergence
experiment trains fixed architectures across resolutions; the inversion
harness recovers an input function by Adam on the input with frozen
model parameters.
"""

import copy
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor, add, backward, mul, roll, square, tensor_mean
from .baselines import CnnConfig, init_fixed_grid_cnn
from .data import make_dataset
from .errors import ConfigError, ShapeError, UnsupportedSizeError
from .grids import GridFunction, resample
from .model import ModelConfig, init_model, model_forward
from .optim import AdamConfig, AdamState, TrainConfig, adam_step, init_adam_state, train_loop
from .spectral import mode_numbers, require_power_of_two

SPECTRUM_FLOOR = 1e-12


# -- energy spectra -----------------------------------------------------------


def energy_spectrum(u: GridFunction):
    """Energy per integer radial wavenumber bin of a square periodic field.

    E(k) sums |c|^2 of the 1/n-normalized transform over all modes with
    round(|k_vec|) = k (each mode counted once), so sum_k E(k) equals the
    grid mean of |u|^2 exactly.
    """
    if u.d != 2 or u.resolution[0] != u.resolution[1]:
        raise UnsupportedSizeError(f"energy spectrum needs a square 2d grid, "
                                   f"got {u.resolution}")
    n = u.resolution[0]
    require_power_of_two(n, "spectrum resolution")
    if not u.periodic:
        raise UnsupportedSizeError("energy spectrum requires a periodic grid")
    coeff = np.fft.fftn(u.values, axes=(1, 2), norm="forward")
    power = np.sum(np.abs(coeff) ** 2, axis=0)
    k = mode_numbers(n).astype(np.float64)
    kmag = np.rint(np.sqrt(k[:, None] ** 2 + k[None, :] ** 2)).astype(np.intp)
    energy = np.bincount(kmag.ravel(), weights=power.ravel())
    return np.arange(energy.size), energy


def log_spectrum_discrepancy(energy_model, energy_true, nyquist, floor=SPECTRUM_FLOOR):
    """Sum of squared log-energy gaps over bins above the training Nyquist."""
    k = np.arange(len(energy_true))
    mask = (k > nyquist) & (energy_true > floor)
    if len(energy_model) < len(energy_true):
        raise ShapeError("model spectrum has fewer bins than the reference")
    em = np.maximum(energy_model[:len(energy_true)][mask], floor)
    et = energy_true[mask]
    return float(np.sum((np.log(em) - np.log(et)) ** 2))


# -- spectrum experiment ------------------------------------------------------


@dataclass
class SpectrumReport:
    wavenumbers: np.ndarray
    energy_true: np.ndarray
    energy_models: dict
    discrepancies: dict          # name -> per-sample array
    train_nyquist: int

    def mean_discrepancy(self):
        return {name: float(np.mean(v)) for name, v in self.discrepancies.items()}


def operator_predictor(model):
    """Evaluate the operator directly at the high resolution (super-evaluation)."""
    def predict(sample, res_high):
        return model_forward(model, sample.input, res_high)
    return predict


def interpolation_predictor(model, native_resolution=None):
    """Predict at the native resolution, then bilinearly upsample."""
    def predict(sample, res_high):
        res = native_resolution or sample.output.resolution
        low = model_forward(model, sample.input, tuple(res))
        return resample(low, res_high, "bilinear")
    return predict


def oracle_predictor():
    def predict(sample, res_high):
        if tuple(sample.output_hr.resolution) == tuple(res_high):
            return sample.output_hr
        return resample(sample.output_hr, res_high, "subsample")
    return predict


def spectrum_experiment(models, dataset, train_resolution) -> SpectrumReport:
    """Average test-set spectra of each predictor against the true spectra.

    ``models`` is a list of (name, predict) pairs with
    ``predict(sample, res_high) -> GridFunction``. The report carries the
    per-sample super-Nyquist log-spectrum discrepancies.
    """
    test = dataset.test_samples
    if not test or test[0].output_hr is None:
        raise ConfigError("spectrum experiment needs test samples with a "
                          "high-resolution truth copy")
    res_high = tuple(test[0].output_hr.resolution)
    nyquist = int(train_resolution) // 2

    sum_true = None
    sums = {name: None for name, _ in models}
    disc = {name: [] for name, _ in models}
    wavenumbers = None
    for sample in test:
        wavenumbers, e_true = energy_spectrum(sample.output_hr)
        sum_true = e_true if sum_true is None else sum_true + e_true
        for name, predict in models:
            pred = predict(sample, res_high)
            _, e_model = energy_spectrum(pred)
            sums[name] = e_model if sums[name] is None else sums[name] + e_model
            disc[name].append(log_spectrum_discrepancy(e_model, e_true, nyquist))
    n = len(test)
    return SpectrumReport(
        wavenumbers=wavenumbers,
        energy_true=sum_true / n,
        energy_models={name: sums[name] / n for name, _ in models},
        discrepancies={name: np.asarray(v) for name, v in disc.items()},
        train_nyquist=nyquist,
    )


# -- convergence experiment ---------------------------------------------------


@dataclass
class ConvergenceConfig:
    task: str = "darcy"
    grf: object = None
    solver: object = None
    n_samples: int = 125
    train_fraction: float = 0.8
    train: TrainConfig = None
    fno: ModelConfig = None
    gno: ModelConfig = None
    cnn: CnnConfig = None
    seed: int = 0


@dataclass
class ConvergenceReport:
    resolutions: list
    errors: dict        # architecture -> per-resolution test relative-L2
    param_counts: dict  # architecture -> parameter count (fixed across resolutions)


def _build_architecture(arch, cfg: ConvergenceConfig, seed):
    if arch == "fno":
        return init_model(copy.deepcopy(cfg.fno), seed)
    if arch == "gno":
        return init_model(copy.deepcopy(cfg.gno), seed)
    if arch == "cnn":
        return init_fixed_grid_cnn(copy.deepcopy(cfg.cnn), seed)
    raise ConfigError(f"unknown architecture {arch!r}")


def convergence_experiment(architectures, resolutions, cfg: ConvergenceConfig,
                           log=None) -> ConvergenceReport:
    """Train each fixed architecture at each resolution, test at that resolution.

    All cells share the data-generating seed and solver resolution, so
    they see the same underlying functions sampled at different grids;
    parameter counts do not change across resolutions.
    """
    errors = {arch: [] for arch in architectures}
    params = {}
    for res in resolutions:
        dataset = make_dataset(cfg.task, cfg.n_samples, res, res, cfg.grf,
                               copy.deepcopy(cfg.solver), cfg.seed,
                               res_hr=res, train_fraction=cfg.train_fraction)
        for arch in architectures:
            model = _build_architecture(arch, cfg, cfg.seed)
            if params.setdefault(arch, model.parameter_count()) != model.parameter_count():
                raise ConfigError(f"{arch} parameter count changed across resolutions")
            if hasattr(model, "trained_at"):
                model.trained_at = int(res)
            result = train_loop(model, dataset, copy.deepcopy(cfg.train))
            err = result.history.best_test_loss
            errors[arch].append(float(err))
            if log is not None:
                log(f"convergence: {arch} @ {res}: test rel-L2 {err:.4f}")
    return ConvergenceReport(resolutions=[int(r) for r in resolutions],
                             errors=errors, param_counts=params)


# -- super-resolution ---------------------------------------------------------


@dataclass
class SuperresReport:
    res_low: tuple
    res_high: tuple
    err_operator: np.ndarray
    err_baseline: np.ndarray


def superres_experiment(model, dataset, res_high) -> SuperresReport:
    """Zero-shot super-evaluation vs bilinear upsampling of the coarse prediction."""
    from .losses import relative_l2
    res_low = tuple(dataset.res_out)
    res_high = tuple(int(n) for n in (res_high if not np.isscalar(res_high)
                                      else (res_high,) * len(res_low)))
    op_pred = operator_predictor(model)
    interp_pred = interpolation_predictor(model, res_low)
    errs_op, errs_base = [], []
    for sample in dataset.test_samples:
        if sample.output_hr is None:
            raise ConfigError("superres experiment needs high-resolution truth")
        truth = sample.output_hr
        if tuple(truth.resolution) != res_high:
            truth = resample(truth, res_high, "subsample")
        errs_op.append(relative_l2(op_pred(sample, res_high).values, truth.values))
        errs_base.append(relative_l2(interp_pred(sample, res_high).values, truth.values))
    return SuperresReport(res_low=res_low, res_high=res_high,
                          err_operator=np.asarray(errs_op),
                          err_baseline=np.asarray(errs_base))


# -- inversion ----------------------------------------------------------------


@dataclass
class InversionResult:
    recovered: GridFunction
    trajectory: list
    final_rel_l2: float = None
    diverged: bool = False
    best_loss: float = None


def first_difference_penalty(x, periodic=True):
    """Mean squared first-difference gradient over the spatial axes of [c, ...]."""
    total = None
    for ax in range(1, x.ndim):
        n = x.shape[ax]
        if periodic:
            diff = add(roll(x, -1, ax), mul(x, -1.0))
            scale = float(n)
        else:
            lo = [slice(None)] * x.ndim
            hi = [slice(None)] * x.ndim
            lo[ax] = slice(0, n - 1)
            hi[ax] = slice(1, n)
            diff = add(x[tuple(hi)], mul(x[tuple(lo)], -1.0))
            scale = float(n - 1)
        term = tensor_mean(square(mul(diff, scale)))
        total = term if total is None else add(total, term)
    return total


def invert_initial_condition(model, sample, steps, lr, tikhonov_weight=0.0,
                             init=None) -> InversionResult:
    """Recover a Burgers initial condition from the model's own trajectory.

    The unknown is the 1d profile; the forward map tiles it across the
    time axis before querying the model, and the observation is the
    (noiseless) model output on the true input.
    """
    from .data import tile_initial_condition
    n_t, n_x = sample.input.resolution
    x_true = GridFunction(sample.input.values[:, 0, :], periodic=True)
    y_obs = model_forward(model, sample.input)
    if init is None:
        init = GridFunction(np.zeros((1, n_x)), periodic=True)

    def forward(xt):
        return model.apply_grid(tile_initial_condition(xt, n_t),
                                out_resolution=y_obs.resolution, periodic=True)

    return invert(model, y_obs, init, steps, lr, tikhonov_weight,
                  forward=forward, x_true=x_true)


def invert(model, y_obs: GridFunction, init: GridFunction, steps, lr,
           tikhonov_weight=0.0, forward=None, x_true=None) -> InversionResult:
    """Recover an input function from an observed output by Adam on the input.

    Model parameters stay frozen; the objective is the mean squared
    output mismatch plus a first-difference Tikhonov penalty. Returns the
    best iterate; divergence returns the best-so-far with a flag.
    """
    x = Tensor(init.values, requires_grad=True)
    if forward is None:
        def forward(xt):
            return model.apply_grid(xt, out_resolution=y_obs.resolution,
                                    periodic=y_obs.periodic)
    y = y_obs.values

    def objective():
        pred = forward(x)
        loss = tensor_mean(square(add(pred, Tensor(-y))))
        if tikhonov_weight:
            loss = add(loss, mul(first_difference_penalty(x, init.periodic),
                                 tikhonov_weight))
        return loss

    state = init_adam_state([x])
    cfg = AdamConfig(lr=lr, weight_decay=0.0)
    trajectory = []
    best_loss = None
    best_x = x.data.copy()
    diverged = False
    for _ in range(steps):
        loss = objective()
        value = loss.item()
        if not np.isfinite(value):
            diverged = True
            break
        trajectory.append(value)
        if best_loss is None or value < best_loss:
            best_loss = value
            best_x = x.data.copy()
        grads = backward(loss, leaves=[x])
        new_data, state = adam_step([x.data], [grads[x.node_id].data], cfg, state)
        x.data = new_data[0]
    if steps and not diverged:
        final = objective().item()
        trajectory.append(final)
        if np.isfinite(final) and (best_loss is None or final < best_loss):
            best_loss = final
            best_x = x.data.copy()
    if not trajectory:
        trajectory = [objective().item()]
        best_loss = trajectory[0]
    recovered = GridFunction(best_x, periodic=init.periodic)
    final_rel = None
    if x_true is not None:
        from .losses import relative_l2
        final_rel = relative_l2(recovered.values, x_true.values)
    return InversionResult(recovered=recovered, trajectory=trajectory,
                           final_rel_l2=final_rel, diverged=diverged, best_loss=best_loss)
