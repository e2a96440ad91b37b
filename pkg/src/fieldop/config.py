"""Run configuration: one JSON document drives data generation, training,
and evaluation.

Unknown keys are rejected (with the offending dotted path named) and all
defaults are materialized into the echoed effective configuration, so a
run is fully described by its effective config plus the seed.
"""

import copy
import json

from .baselines import CnnConfig
from .errors import ConfigError
from .losses import LossSpec
from .model import ModelConfig
from .optim import AdamConfig, TrainConfig
from .solvers import BurgersSpec, DarcySpec, GrfSpec, NsSpec

_SOLVER_DEFAULTS = {
    "burgers": {"nu": 0.1, "t_final": 1.0, "dt": 1e-3, "n_solver": 256, "n_t_out": 32},
    "darcy": {"n_solver": 64, "a_plus": 12.0, "a_minus": 3.0, "f_const": 1.0,
              "cg_tol": 1e-8, "cg_max_iter": 20000},
    "ns": {"nu": 1e-3, "forcing_wavenumber": 4, "forcing_amplitude": 1.0,
           "t_final": 1.0, "dt": 1e-3, "n_solver": 64, "n_t_out": 2},
}

# scales give O(1) sampled fields (the density normalization is per mode)
_GRF_DEFAULTS = {
    "burgers": {"alpha": 2.5, "tau": 7.0, "scale": 150.0},
    "darcy": {"alpha": 2.0, "tau": 3.0, "scale": 1.0},
    "ns": {"alpha": 2.5, "tau": 7.0, "scale": 100.0},
}

# coordinate channels: on where content is tied to absolute position — darcy
# (boundaries) and the burgers space-time field (the tiled initial condition is
# constant along the time axis, so a purely translation-equivariant model could
# only produce time-constant trajectories); off for ns (translation-equivariant)
_COORD_DEFAULTS = {"burgers": True, "darcy": True, "ns": False}

_MODEL_DEFAULTS = {
    "kind": "fno", "width": 24, "depth": 4, "k_max": 8, "radius": 0.25,
    "kernel_hidden": 16, "lift_hidden": 0, "proj_hidden": 0,
    "in_channels": 1, "out_channels": 1, "coord_features": None,
}

_TRAIN_DEFAULTS = {
    "epochs": 50, "batch_size": 8, "lr": 1e-3, "lr_halve_every": 50,
    "weight_decay": 1e-4, "normalize_input": True, "normalize_output": True,
    "w_data": 1.0, "w_pde": 0.0, "res_data": None, "res_pde": None,
    "boundary_weight": 1.0,
}

_DATASET_DEFAULTS = {
    "n_samples": 100, "res_in": 32, "res_out": 32, "res_hr": None,
    "train_fraction": 0.8,
}

_EXPERIMENT_DEFAULTS = {
    "res_high": None,
    "resolutions": [16, 32, 64],
    "architectures": ["fno", "cnn"],
    "cnn_width": 16, "cnn_depth": 3, "cnn_kernel_size": 3,
    "invert_steps": 500, "invert_lr": 0.05, "invert_tikhonov": 1e-4,
    "finetune_steps": 100, "finetune_lr": 1e-3, "finetune_sample": 0,
    "sample_index": 0,
}


def default_config(task="darcy"):
    if task not in _SOLVER_DEFAULTS:
        raise ConfigError(f"unknown task {task!r}")
    return {
        "task": task,
        "seed": 0,
        "out_dir": "runs/out",
        "grf": dict(_GRF_DEFAULTS[task]),
        "solver": dict(_SOLVER_DEFAULTS[task]),
        "dataset": dict(_DATASET_DEFAULTS),
        "model": dict(_MODEL_DEFAULTS),
        "train": dict(_TRAIN_DEFAULTS),
        "experiment": dict(_EXPERIMENT_DEFAULTS),
    }


def _merge(defaults, overrides, path):
    out = copy.deepcopy(defaults)
    for key, value in overrides.items():
        where = f"{path}.{key}" if path else key
        if key not in defaults:
            raise ConfigError(f"unknown configuration key {where!r}")
        if isinstance(defaults[key], dict) and not isinstance(value, dict):
            raise ConfigError(f"configuration key {where!r} must be a table")
        if isinstance(defaults[key], dict):
            out[key] = _merge(defaults[key], value, where)
        else:
            out[key] = copy.deepcopy(value)
    return out


def effective_config(raw):
    """Materialize all defaults; reject unknown keys by dotted name."""
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a JSON object")
    task = raw.get("task", "darcy")
    return _merge(default_config(task), raw, "")


def load_run_config(path):
    with open(path, "r", encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"configuration is not valid JSON: {exc}") from exc
    return effective_config(raw)


# -- builders ------------------------------------------------------------------


def build_grf(cfg) -> GrfSpec:
    return GrfSpec(**cfg["grf"])


def build_solver(cfg):
    task = cfg["task"]
    types = {"burgers": BurgersSpec, "darcy": DarcySpec, "ns": NsSpec}
    return types[task](**cfg["solver"])


def build_model_config(cfg):
    m = dict(cfg["model"])
    kind = m.pop("kind")
    coord = m.pop("coord_features")
    if coord is None:
        coord = _COORD_DEFAULTS[cfg["task"]]
    if kind == "cnn":
        return CnnConfig(in_channels=m["in_channels"], out_channels=m["out_channels"],
                         width=m["width"], depth=m["depth"])
    return ModelConfig(kind=kind, d=2, coord_features=bool(coord), **m)


def build_train_config(cfg) -> TrainConfig:
    t = cfg["train"]
    loss = LossSpec(
        w_data=t["w_data"], w_pde=t["w_pde"],
        res_data=tuple(t["res_data"]) if t["res_data"] else None,
        res_pde=tuple(t["res_pde"]) if t["res_pde"] else None,
        boundary_weight=t["boundary_weight"],
    )
    return TrainConfig(
        epochs=t["epochs"], batch_size=t["batch_size"],
        lr_halve_every=t["lr_halve_every"], seed=cfg["seed"],
        normalize_input=t["normalize_input"], normalize_output=t["normalize_output"],
        adam=AdamConfig(lr=t["lr"], weight_decay=t["weight_decay"]),
        loss=loss,
    )
