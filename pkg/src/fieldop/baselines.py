"""Fixed-grid CNN baseline.

The kernels have a fixed pixel footprint, so the physical receptive
field shrinks as the grid is refined; contrasting its resolution
behaviour with the operator models is the point of the convergence
experiment.
"""

import copy
from dataclasses import dataclass, asdict

import numpy as np

from .autodiff import Tensor, add, as_tensor, gelu, mul, reshape
from .convolution import conv2d
from .errors import ConfigError, ShapeError
from .grids import GridFunction


@dataclass
class CnnConfig:
    in_channels: int = 1
    out_channels: int = 1
    width: int = 16
    depth: int = 3
    kernel_size: int = 3
    padding: str = "zero"

    def validate(self):
        for name in ("in_channels", "out_channels", "width"):
            if getattr(self, name) < 1:
                raise ConfigError(f"cnn.{name} must be positive")
        if self.depth < 0:
            raise ConfigError("cnn.depth must be non-negative")
        if self.kernel_size % 2 == 0:
            raise ConfigError("cnn.kernel_size must be odd")

    def to_dict(self):
        return asdict(self)


@dataclass
class FixedGridCnn:
    config: CnnConfig
    kernels: list      # [width, c_in, k, k] tensors
    biases: list       # [width] tensors
    proj_kernel: Tensor
    proj_bias: Tensor
    input_shift: np.ndarray = None
    input_scale: np.ndarray = None
    output_scale: np.ndarray = None
    trained_at: int = None   # resolution tag, for reports

    def __post_init__(self):
        if self.input_shift is None:
            self.input_shift = np.zeros(self.config.in_channels)
        if self.input_scale is None:
            self.input_scale = np.ones(self.config.in_channels)
        if self.output_scale is None:
            self.output_scale = np.ones(self.config.out_channels)

    def parameters(self):
        out = []
        for i, (k, b) in enumerate(zip(self.kernels, self.biases)):
            out.append((f"conv{i}.kernel", k))
            out.append((f"conv{i}.bias", b))
        out.append(("proj.kernel", self.proj_kernel))
        out.append(("proj.bias", self.proj_bias))
        return out

    def parameter_count(self):
        return sum(t.size for _, t in self.parameters())

    def set_input_normalization(self, shift, scale):
        self.input_shift = np.asarray(shift, dtype=np.float64).reshape(self.config.in_channels)
        self.input_scale = np.asarray(scale, dtype=np.float64).reshape(self.config.in_channels)

    def set_output_scale(self, scale):
        self.output_scale = np.asarray(scale, dtype=np.float64).reshape(self.config.out_channels)

    def clone(self):
        out = init_fixed_grid_cnn(copy.deepcopy(self.config), seed=0)
        for (_, src), (_, dst) in zip(self.parameters(), out.parameters()):
            dst.data = src.data.copy()
        out.set_input_normalization(self.input_shift.copy(), self.input_scale.copy())
        out.set_output_scale(self.output_scale.copy())
        out.trained_at = self.trained_at
        return out

    def apply_grid(self, x, out_resolution=None, periodic=True):
        """Forward pass on values [c_in, H, W]; the grid cannot be changed."""
        return self._apply(x, out_resolution, batched=False)

    def apply_grid_batch(self, x, out_resolution=None, periodic=True):
        """Batched forward pass on values [batch, c_in, H, W]."""
        return self._apply(x, out_resolution, batched=True)

    def _apply(self, x, out_resolution, batched):
        x = as_tensor(x)
        cfg = self.config
        lead = 1 if batched else 0
        if x.ndim != 3 + lead or x.shape[lead] != cfg.in_channels:
            raise ShapeError(f"cnn expects [{cfg.in_channels}, H, W] values "
                             f"(batched={batched}), got {x.shape}")
        if out_resolution is not None and tuple(out_resolution) != x.shape[lead + 1:]:
            raise ShapeError("a fixed-grid cnn cannot change the output resolution")
        shape = (1,) * lead + (cfg.in_channels, 1, 1)
        if self.input_shift.any() or not np.all(self.input_scale == 1.0):
            x = add(x, Tensor(-self.input_shift.reshape(shape)))
            x = mul(x, Tensor(1.0 / self.input_scale.reshape(shape)))
        h = x
        for k, b in zip(self.kernels, self.biases):
            h = conv2d(h, k, padding=cfg.padding)
            h = gelu(add(h, reshape(b, (1,) * lead + (b.shape[0], 1, 1))))
        h = conv2d(h, self.proj_kernel, padding=cfg.padding)
        out = add(h, reshape(self.proj_bias, (1,) * lead + (self.proj_bias.shape[0], 1, 1)))
        if not np.all(self.output_scale == 1.0):
            out = mul(out, Tensor(self.output_scale.reshape(
                (1,) * lead + (cfg.out_channels, 1, 1))))
        return out


def init_fixed_grid_cnn(config: CnnConfig, seed) -> FixedGridCnn:
    config.validate()
    rng = np.random.default_rng(seed)
    k = config.kernel_size
    kernels, biases = [], []
    c_in = config.in_channels
    for _ in range(config.depth):
        s = 1.0 / np.sqrt(c_in * k * k)
        kernels.append(Tensor(rng.uniform(-s, s, size=(config.width, c_in, k, k)),
                              requires_grad=True))
        biases.append(Tensor(np.zeros(config.width), requires_grad=True))
        c_in = config.width
    s = 1.0 / np.sqrt(c_in)
    proj_kernel = Tensor(rng.uniform(-s, s, size=(config.out_channels, c_in, 1, 1)),
                         requires_grad=True)
    proj_bias = Tensor(np.zeros(config.out_channels), requires_grad=True)
    return FixedGridCnn(config=copy.deepcopy(config), kernels=kernels, biases=biases,
                        proj_kernel=proj_kernel, proj_bias=proj_bias)


def cnn_forward(model: FixedGridCnn, u: GridFunction) -> GridFunction:
    """Plain-array surface over ``FixedGridCnn.apply_grid``."""
    out = model.apply_grid(Tensor(u.values))
    return GridFunction(out.data, periodic=u.periodic)
