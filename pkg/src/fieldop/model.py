"""Neural operator models: lifting, operator blocks, projection.

A model is queried with an input function and an output discretization;
the blocks run at the input resolution and the final block emits at the
requested output discretization, so a trained model can be evaluated on
grids finer than anything seen in training.
"""

import copy
from dataclasses import dataclass, field, asdict

import numpy as np

from .autodiff import Tensor, add, as_tensor, concat, mul
from .blocks import (GraphBlock, SpectralBlock, graph_block_tensor, init_channel_map,
                     init_graph_block, init_spectral_block, spectral_block_tensor)
from .errors import ConfigError, ShapeError
from .grids import (GridFunction, PointCloudFunction, cloud_from_grid, grid_coordinates,
                    grid_from_cloud_values)

MODEL_KINDS = ("fno", "gno")


@dataclass
class ModelConfig:
    kind: str = "fno"
    d: int = 2
    in_channels: int = 1
    out_channels: int = 1
    width: int = 24
    depth: int = 4
    k_max: int = 8            # spectral blocks: modes |k| <= k_max per axis
    radius: float = 0.25      # graph blocks: neighbourhood radius
    kernel_hidden: int = 16   # graph blocks: kernel-network hidden width
    lift_hidden: int = 0      # 0 means "use width"
    proj_hidden: int = 0
    coord_features: bool = True

    def validate(self):
        if self.kind not in MODEL_KINDS:
            raise ConfigError(f"unknown model kind {self.kind!r}")
        for name in ("d", "in_channels", "out_channels", "width", "depth"):
            if getattr(self, name) < 1:
                raise ConfigError(f"model.{name} must be positive")
        if self.kind == "fno" and self.k_max < 1:
            raise ConfigError("model.k_max must be positive")
        if self.kind == "gno" and not 0 < self.radius <= 1:
            raise ConfigError("model.radius must be in (0, 1]")

    def to_dict(self):
        return asdict(self)


@dataclass
class NeuralOperatorModel:
    config: ModelConfig
    lifting: "ChannelMap"
    blocks: list
    projection: "ChannelMap"
    input_shift: np.ndarray = None
    input_scale: np.ndarray = None
    output_scale: np.ndarray = None

    def __post_init__(self):
        if self.input_shift is None:
            self.input_shift = np.zeros(self.config.in_channels)
        if self.input_scale is None:
            self.input_scale = np.ones(self.config.in_channels)
        if self.output_scale is None:
            self.output_scale = np.ones(self.config.out_channels)

    @property
    def coord_features(self):
        return self.config.coord_features

    def parameters(self):
        out = self.lifting.parameters("lifting.")
        for i, block in enumerate(self.blocks):
            out.extend(block.parameters(f"block{i}."))
        out.extend(self.projection.parameters("projection."))
        return out

    def parameter_count(self):
        """Real degrees of freedom (complex entries count twice)."""
        total = 0
        for _, t in self.parameters():
            total += t.size * (2 if t.is_complex else 1)
        return total

    def set_input_normalization(self, shift, scale):
        shift = np.asarray(shift, dtype=np.float64).reshape(self.config.in_channels)
        scale = np.asarray(scale, dtype=np.float64).reshape(self.config.in_channels)
        if np.any(scale <= 0):
            raise ConfigError("input scale must be positive")
        self.input_shift, self.input_scale = shift, scale

    def set_output_scale(self, scale):
        scale = np.asarray(scale, dtype=np.float64).reshape(self.config.out_channels)
        if np.any(scale <= 0):
            raise ConfigError("output scale must be positive")
        self.output_scale = scale

    def clone(self):
        """Deep copy with fresh parameter tensors (gradients not shared)."""
        return copy_model(self)

    # -- forward passes --------------------------------------------------

    def _normalize(self, x, channel_axis):
        if not self.input_shift.any() and np.all(self.input_scale == 1.0):
            return x
        c = self.config.in_channels
        if channel_axis == -1:
            shape = (1,) * (x.ndim - 1) + (c,)
        else:
            shape = (1,) * channel_axis + (c,) + (1,) * (x.ndim - 1 - channel_axis)
        x = add(x, Tensor(-self.input_shift.reshape(shape)))
        return mul(x, Tensor(1.0 / self.input_scale.reshape(shape)))

    def _rescale_output(self, y, channel_axis):
        if np.all(self.output_scale == 1.0):
            return y
        c = self.config.out_channels
        if channel_axis == -1:
            shape = (1,) * (y.ndim - 1) + (c,)
        else:
            shape = (1,) * channel_axis + (c,) + (1,) * (y.ndim - 1 - channel_axis)
        return mul(y, Tensor(self.output_scale.reshape(shape)))

    def apply_grid(self, x, out_resolution=None, periodic=True):
        """Tape-level forward pass on values [in_channels, n_1, ..., n_d]."""
        x = as_tensor(x)
        cfg = self.config
        if x.ndim != cfg.d + 1 or x.shape[0] != cfg.in_channels:
            raise ShapeError(f"model expects [{cfg.in_channels}, grid^{cfg.d}] input, "
                             f"got {x.shape}")
        in_res = x.shape[1:]
        out_res = in_res if out_resolution is None else tuple(int(n) for n in out_resolution)
        if cfg.kind == "gno":
            return self._apply_grid_via_cloud(x, in_res, out_res, periodic)

        h = self._normalize(x, channel_axis=0)
        if cfg.coord_features:
            h = concat([h, Tensor(grid_coordinates(in_res, periodic))], axis=0)
        h = self.lifting.apply(h, channel_axis=0)
        for block in self.blocks[:-1]:
            h = spectral_block_tensor(h, block, in_res)
        h = spectral_block_tensor(h, self.blocks[-1], out_res)
        return self._rescale_output(self.projection.apply(h, channel_axis=0), 0)

    def apply_grid_batch(self, x, out_resolution=None, periodic=True):
        """Batched forward pass on values [batch, in_channels, n_1, ..., n_d].

        Identical math to ``apply_grid`` but the per-forward weight
        preparation (spectral symmetrization) is shared across the batch.
        """
        x = as_tensor(x)
        cfg = self.config
        if cfg.kind != "fno":
            raise ConfigError("batched grid evaluation requires spectral blocks")
        if x.ndim != cfg.d + 2 or x.shape[1] != cfg.in_channels:
            raise ShapeError(f"model expects [batch, {cfg.in_channels}, grid^{cfg.d}] "
                             f"input, got {x.shape}")
        in_res = x.shape[2:]
        out_res = in_res if out_resolution is None else tuple(int(n) for n in out_resolution)
        h = self._normalize(x, channel_axis=1)
        if cfg.coord_features:
            coords = grid_coordinates(in_res, periodic)
            coords = np.broadcast_to(coords[None], (x.shape[0],) + coords.shape)
            h = concat([h, Tensor(coords.copy())], axis=1)
        h = self.lifting.apply(h, channel_axis=1)
        for block in self.blocks[:-1]:
            h = spectral_block_tensor(h, block, in_res, batched=True)
        h = spectral_block_tensor(h, self.blocks[-1], out_res, batched=True)
        return self._rescale_output(self.projection.apply(h, channel_axis=1), 1)

    def apply_cloud(self, values, points, weights, periodic, out_points=None):
        """Tape-level forward pass on cloud values [n_points, in_channels]."""
        cfg = self.config
        if cfg.kind != "gno":
            raise ConfigError("cloud inputs require a graph-kernel model")
        values = as_tensor(values)
        if values.ndim != 2 or values.shape[1] != cfg.in_channels:
            raise ShapeError(f"model expects [n, {cfg.in_channels}] cloud values, "
                             f"got {values.shape}")
        queries_final = points if out_points is None else np.asarray(out_points, np.float64)

        h = self._normalize(values, channel_axis=-1)
        if cfg.coord_features:
            h = concat([h, Tensor(points)], axis=1)
        h = self.lifting.apply(h, channel_axis=-1)
        for block in self.blocks[:-1]:
            h = graph_block_tensor(h, points, weights, periodic, block, points)
        h = graph_block_tensor(h, points, weights, periodic, self.blocks[-1], queries_final)
        return self._rescale_output(self.projection.apply(h, channel_axis=-1), -1)

    def _apply_grid_via_cloud(self, x, in_res, out_res, periodic):
        coords = grid_coordinates(in_res, periodic)
        points = coords.reshape(self.config.d, -1).T
        values = moveaxis_flatten(x)
        weights = np.full(points.shape[0], 1.0 / points.shape[0])
        out_points = grid_coordinates(out_res, periodic).reshape(self.config.d, -1).T
        out = self.apply_cloud(values, points, weights, periodic, out_points)
        return cloud_values_to_grid_tensor(out, out_res)


def moveaxis_flatten(x):
    """[c, n_1, ..., n_d] tensor -> [N, c] tensor (tape-aware)."""
    from .autodiff import moveaxis, reshape
    x = as_tensor(x)
    flat = reshape(x, (x.shape[0], -1))
    return moveaxis(flat, 0, -1)


def cloud_values_to_grid_tensor(values, resolution):
    """[N, c] tensor -> [c, n_1, ..., n_d] tensor (tape-aware)."""
    from .autodiff import moveaxis, reshape
    values = as_tensor(values)
    back = moveaxis(values, -1, 0)
    return reshape(back, (values.shape[1],) + tuple(resolution))


def init_model(config: ModelConfig, seed: int) -> NeuralOperatorModel:
    """Build a model with seed-deterministic parameters."""
    config.validate()
    rng = np.random.default_rng(seed)
    cfg = config
    in_ch = cfg.in_channels + (cfg.d if cfg.coord_features else 0)
    lift_hidden = cfg.lift_hidden or cfg.width
    proj_hidden = cfg.proj_hidden or cfg.width
    lifting = init_channel_map([in_ch, lift_hidden, cfg.width], rng)
    blocks = []
    for _ in range(cfg.depth):
        if cfg.kind == "fno":
            blocks.append(init_spectral_block(cfg.k_max, cfg.width, cfg.width, cfg.d, rng))
        else:
            blocks.append(init_graph_block(cfg.radius, cfg.width, cfg.width, cfg.d,
                                           cfg.kernel_hidden, rng))
    projection = init_channel_map([cfg.width, proj_hidden, cfg.out_channels], rng)
    return NeuralOperatorModel(config=copy.deepcopy(config), lifting=lifting,
                               blocks=blocks, projection=projection)


def copy_model(model: NeuralOperatorModel) -> NeuralOperatorModel:
    clone = init_model(copy.deepcopy(model.config), seed=0)
    for (_, src), (_, dst) in zip(model.parameters(), clone.parameters()):
        dst.data = src.data.copy()
    clone.set_input_normalization(model.input_shift.copy(), model.input_scale.copy())
    clone.set_output_scale(model.output_scale.copy())
    return clone


def model_forward(model, a, out_discretization=None):
    """Evaluate a model on a grid or cloud function (plain-array surface).

    Grid inputs take a per-axis output resolution; cloud inputs take an
    array of query points. Use the tape-level ``apply_*`` methods when
    gradients are needed.
    """
    if isinstance(a, GridFunction):
        out = model.apply_grid(Tensor(a.values), out_discretization, a.periodic)
        return GridFunction(out.data, periodic=a.periodic)
    if isinstance(a, PointCloudFunction):
        out = model.apply_cloud(Tensor(a.values), a.points, a.weights, a.periodic,
                                out_discretization)
        pts = a.points if out_discretization is None else np.asarray(out_discretization)
        weights = np.full(pts.shape[0], 1.0 / pts.shape[0])
        return PointCloudFunction(pts, out.data, weights, periodic=a.periodic)
    raise ShapeError(f"unsupported input type {type(a).__name__}")
