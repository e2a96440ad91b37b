"""Adam optimization, the training loop, and test-time fine-tuning.

``adam_step`` is a pure function from (parameters, gradients, state) to
(updated parameters, state); complex parameters are updated coordinate-wise
on their real and imaginary planes. Single-worker runs are bitwise
reproducible: shuffling is seeded per (seed, epoch) and gradient
accumulation is an ordered sum over the batch.
"""

import time
from dataclasses import dataclass, field, asdict

import numpy as np

from .autodiff import Tensor, backward
from .errors import ConfigError, DivergenceError
from .losses import LossSpec, pino_loss, pino_loss_batch, relative_l2
from .model import model_forward


@dataclass
class AdamConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps_hat: float = 1e-8
    weight_decay: float = 1e-4

    def validate(self):
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigError("adam betas must lie in [0, 1)")
        if self.lr <= 0 or self.eps_hat <= 0 or self.weight_decay < 0:
            raise ConfigError("adam lr/eps must be positive, weight decay non-negative")


@dataclass
class AdamState:
    m: list
    v: list
    step: int = 0


def _real_view(arr):
    arr = np.ascontiguousarray(arr)
    return arr.view(np.float64) if np.iscomplexobj(arr) else arr


def init_adam_state(params):
    arrays = [_real_view(p.data if isinstance(p, Tensor) else p) for p in params]
    return AdamState(m=[np.zeros_like(a) for a in arrays],
                     v=[np.zeros_like(a) for a in arrays], step=0)


def adam_step(params, grads, config: AdamConfig, state: AdamState):
    """One bias-corrected Adam step with decoupled weight decay.

    ``params`` and ``grads`` are parallel lists of arrays (or tensors);
    returns new arrays and a new state without mutating the inputs.
    """
    config.validate()
    t = state.step + 1
    new_params, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, grads, state.m, state.v):
        p_arr = p.data if isinstance(p, Tensor) else np.asarray(p)
        g_arr = g.data if isinstance(g, Tensor) else np.asarray(g)
        if not np.all(np.isfinite(_real_view(g_arr))):
            raise DivergenceError("non-finite gradient in adam_step")
        pv = _real_view(p_arr)
        gv = _real_view(g_arr)
        m = config.beta1 * m + (1.0 - config.beta1) * gv
        v = config.beta2 * v + (1.0 - config.beta2) * gv * gv
        m_hat = m / (1.0 - config.beta1 ** t)
        v_hat = v / (1.0 - config.beta2 ** t)
        step = config.lr * (m_hat / (np.sqrt(v_hat) + config.eps_hat)
                            + config.weight_decay * pv)
        out = pv - step
        if np.iscomplexobj(p_arr):
            out = out.view(np.complex128)
        new_params.append(out.reshape(p_arr.shape))
        new_m.append(m)
        new_v.append(v)
    return new_params, AdamState(m=new_m, v=new_v, step=t)


@dataclass
class TrainConfig:
    epochs: int = 50
    batch_size: int = 8
    lr_halve_every: int = 50
    seed: int = 0
    normalize_input: bool = True
    normalize_output: bool = True
    adam: AdamConfig = field(default_factory=AdamConfig)
    loss: LossSpec = field(default_factory=LossSpec)

    def validate(self):
        if self.epochs < 0 or self.batch_size < 1 or self.lr_halve_every < 1:
            raise ConfigError("train counts must be positive (epochs may be zero)")
        self.adam.validate()
        self.loss.validate()

    def to_dict(self):
        d = asdict(self)
        d["loss"] = self.loss.to_dict()
        return d


@dataclass
class History:
    entries: list = field(default_factory=list)
    best_test_loss: float = None
    best_epoch: int = None
    wall_seconds: float = 0.0

    def to_dict(self):
        return {"entries": self.entries, "best_test_loss": self.best_test_loss,
                "best_epoch": self.best_epoch, "wall_seconds": self.wall_seconds}


@dataclass
class TrainResult:
    model: object
    best_model: object
    history: History


def input_statistics(samples, channels):
    """Per-channel mean and standard deviation of the training inputs."""
    total = np.zeros(channels)
    total_sq = np.zeros(channels)
    count = 0
    for s in samples:
        vals = s.input.values.reshape(channels, -1)
        total += vals.sum(axis=1)
        total_sq += (vals * vals).sum(axis=1)
        count += vals.shape[1]
    mean = total / max(count, 1)
    var = np.maximum(total_sq / max(count, 1) - mean * mean, 0.0)
    std = np.sqrt(var)
    std[std < 1e-12] = 1.0
    return mean, std


def output_rms(samples, channels):
    """Per-channel root-mean-square of the training targets."""
    total_sq = np.zeros(channels)
    count = 0
    for s in samples:
        vals = s.output.values.reshape(channels, -1)
        total_sq += (vals * vals).sum(axis=1)
        count += vals.shape[1]
    rms = np.sqrt(total_sq / max(count, 1))
    rms[rms < 1e-12] = 1.0
    return rms


def test_data_loss(model, samples, loss_spec: LossSpec):
    """Mean relative-L2 data error over a sample list (no physics term)."""
    if not samples:
        return float("nan")
    errs = []
    for s in samples:
        res = loss_spec.res_data or s.output.resolution
        pred = model_forward(model, s.input, res)
        errs.append(relative_l2(pred.values, s.output.values))
    return float(np.mean(errs))


def train_loop(model, dataset, config: TrainConfig, save_checkpoint=None, log=None):
    """Minibatch Adam training of a model on a dataset.

    Shuffles deterministically per (seed, epoch), halves the learning
    rate on the configured schedule, and records per-epoch train/test
    losses. ``save_checkpoint(tag, model, epoch, history)`` is invoked for
    the best and final states when provided. On divergence the best
    checkpoint so far is emitted before the error propagates.
    """
    config.validate()
    history = History()
    train_samples = dataset.train_samples
    test_samples = dataset.test_samples
    if not train_samples:
        raise ConfigError("training requires a non-empty train split")
    if config.normalize_input:
        mean, std = input_statistics(train_samples, model.config.in_channels)
        model.set_input_normalization(mean, std)
    if config.normalize_output:
        model.set_output_scale(output_rms(train_samples, model.config.out_channels))

    params = [t for _, t in model.parameters()]
    state = init_adam_state(params)
    best_state = None
    use_batched = getattr(model.config, "kind", "cnn") != "gno"
    t_start = time.perf_counter()

    def snapshot():
        return [p.data.copy() for p in params]

    def emit(tag, epoch):
        if save_checkpoint is not None:
            save_checkpoint(tag, model, epoch, history)

    def emit_best(epoch):
        if best_state is not None:
            current = snapshot()
            for p, arr in zip(params, best_state):
                p.data = arr.copy()
            emit("best", epoch)
            for p, arr in zip(params, current):
                p.data = arr

    try:
        for epoch in range(config.epochs):
            lr = config.adam.lr * 0.5 ** (epoch // config.lr_halve_every)
            adam_cfg = AdamConfig(lr=lr, beta1=config.adam.beta1, beta2=config.adam.beta2,
                                  eps_hat=config.adam.eps_hat,
                                  weight_decay=config.adam.weight_decay)
            order = np.random.default_rng([config.seed, epoch]).permutation(len(train_samples))
            loss_total, loss_count = 0.0, 0
            for start in range(0, len(order), config.batch_size):
                batch = [train_samples[int(i)] for i in order[start:start + config.batch_size]]
                if use_batched:
                    loss = pino_loss_batch(model, batch, config.loss)
                    value = loss.item()
                    if not np.isfinite(value):
                        raise DivergenceError(f"non-finite loss at epoch {epoch}")
                    grads = backward(loss, leaves=params)
                    mean_grads = [grads[p.node_id].data for p in params]
                else:
                    grad_sum = [np.zeros_like(p.data) for p in params]
                    value = 0.0
                    for sample in batch:
                        loss = pino_loss(model, sample, config.loss)
                        item = loss.item()
                        if not np.isfinite(item):
                            raise DivergenceError(f"non-finite loss at epoch {epoch}")
                        value += item / len(batch)
                        grads = backward(loss, leaves=params)
                        for i, p in enumerate(params):
                            grad_sum[i] = grad_sum[i] + grads[p.node_id].data
                    mean_grads = [g / len(batch) for g in grad_sum]
                loss_total += value * len(batch)
                loss_count += len(batch)
                new_data, state = adam_step([p.data for p in params], mean_grads,
                                            adam_cfg, state)
                for p, arr in zip(params, new_data):
                    p.data = arr
            train_loss = loss_total / loss_count
            test_loss = test_data_loss(model, test_samples, config.loss)
            history.entries.append({"epoch": epoch, "train_loss": train_loss,
                                    "test_loss": test_loss, "lr": lr})
            monitor = test_loss if np.isfinite(test_loss) else train_loss
            if history.best_test_loss is None or monitor < history.best_test_loss:
                history.best_test_loss = monitor
                history.best_epoch = epoch
                best_state = snapshot()
            if log is not None:
                log(f"epoch {epoch:4d}  train {train_loss:.6f}  test {test_loss:.6f}  lr {lr:.2e}")
    except DivergenceError:
        history.wall_seconds = time.perf_counter() - t_start
        emit_best(len(history.entries))
        raise

    history.wall_seconds = time.perf_counter() - t_start
    emit_best(config.epochs)
    emit("final", config.epochs)

    best_model = model.clone()
    if best_state is not None:
        for (_, dst), arr in zip(best_model.parameters(), best_state):
            dst.data = arr.copy()
    return TrainResult(model=model, best_model=best_model, history=history)


@dataclass
class FinetuneInfo:
    initial_loss: float
    best_loss: float
    steps_run: int
    diverged: bool


def finetune_instance(model, sample, steps, lr, loss_spec: LossSpec = None):
    """Physics-only fine-tuning of a model copy on a single instance.

    Minimizes the pure PDE loss (w_data = 0) for ``steps`` Adam steps and
    returns the best iterate; the input model is left untouched. On
    divergence the best parameters so far are returned with a flag.
    """
    if loss_spec is None:
        loss_spec = LossSpec(w_data=0.0, w_pde=1.0)
    if loss_spec.w_data != 0.0:
        loss_spec = LossSpec(w_data=0.0, w_pde=loss_spec.w_pde,
                             res_data=loss_spec.res_data, res_pde=loss_spec.res_pde,
                             boundary_weight=loss_spec.boundary_weight)
    clone = model.clone()
    params = [t for _, t in clone.parameters()]
    state = init_adam_state(params)
    cfg = AdamConfig(lr=lr, weight_decay=0.0)

    def current_loss():
        return pino_loss(clone, sample, loss_spec)

    initial = current_loss().item()
    best_loss = initial
    best_state = [p.data.copy() for p in params]
    diverged = False
    steps_run = 0
    for _ in range(steps):
        try:
            loss = current_loss()
            value = loss.item()
            if not np.isfinite(value):
                raise DivergenceError("non-finite fine-tuning loss")
            if value < best_loss:
                best_loss = value
                best_state = [p.data.copy() for p in params]
            grads = backward(loss, leaves=params)
            new_data, state = adam_step([p.data for p in params],
                                        [grads[p.node_id].data for p in params], cfg, state)
            for p, arr in zip(params, new_data):
                p.data = arr
            steps_run += 1
        except DivergenceError:
            diverged = True
            break
    if steps:
        final = current_loss().item() if not diverged else np.inf
        if np.isfinite(final) and final < best_loss:
            best_loss = final
        else:
            for p, arr in zip(params, best_state):
                p.data = arr.copy()
    return clone, FinetuneInfo(initial_loss=initial, best_loss=best_loss,
                               steps_run=steps_run, diverged=diverged)
