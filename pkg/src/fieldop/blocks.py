"""Operator blocks: pointwise channel maps, spectral kernels, graph kernels.

Each block realizes one linear integral operator

    (K a)(x) = integral kappa(x, y) a(y) dy ~ sum_i kappa(x, y_i) a(y_i) dy_i

followed by a pointwise skip connection, bias, and GeLU. The spectral
variant multiplies retained Fourier modes by learned complex matrices;
the graph variant sums the quadrature over neighbours inside a fixed
radius with a learned kernel network.
"""

from dataclasses import dataclass

import numpy as np

from .autodiff import (Tensor, _einsum_pair, add, as_tensor, conj, contract, gather,
                       gelu, make_node, mul, reshape, segment_sum, to_domain)
from .errors import DomainError, ShapeError, UndersampledError
from .grids import GridFunction, PointCloudFunction
from .spectral import dft, idft, mode_crop, reflect_modes, require_power_of_two, spectral_resample


# -- pointwise channel maps -------------------------------------------------


@dataclass
class ChannelMap:
    """A pointwise multi-layer map between channel spaces, GeLU between layers."""

    weights: list      # [c_out, c_in] tensors
    biases: list       # [c_out] tensors

    def __post_init__(self):
        for i in range(1, len(self.weights)):
            if self.weights[i].shape[1] != self.weights[i - 1].shape[0]:
                raise ShapeError(f"channel map layer {i} expects width "
                                 f"{self.weights[i - 1].shape[0]}, got {self.weights[i].shape[1]}")

    @property
    def widths(self):
        if not self.weights:
            return []
        return [self.weights[0].shape[1]] + [w.shape[0] for w in self.weights]

    def apply(self, x, channel_axis=0):
        """Apply the map pointwise.

        ``channel_axis`` 0: grid values [c, ...]; 1: batched grid values
        [batch, c, ...]; -1: cloud values [..., c].
        """
        h = as_tensor(x)
        last = len(self.weights) - 1
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if channel_axis == 0:
                h = contract(w, h, pairs=[(1, 0)])
                h = add(h, reshape(b, (b.shape[0],) + (1,) * (h.ndim - 1)))
            elif channel_axis == 1:
                spatial = _axis_letters(h.ndim - 2)
                h = _einsum_pair("oi", "bi" + spatial, "bo" + spatial, w, h, "channel_map")
                h = add(h, reshape(b, (1, b.shape[0]) + (1,) * (h.ndim - 2)))
            else:
                h = contract(h, w, pairs=[(-1, 1)])
                h = add(h, b)
            if i < last:
                h = gelu(h)
        return h

    def parameters(self, prefix=""):
        out = []
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            out.append((f"{prefix}w{i}", w))
            out.append((f"{prefix}b{i}", b))
        return out


def init_channel_map(widths, rng):
    """Weights uniform with scale 1/sqrt(fan_in), biases zero."""
    weights, biases = [], []
    for c_in, c_out in zip(widths[:-1], widths[1:]):
        s = 1.0 / np.sqrt(c_in)
        weights.append(Tensor(rng.uniform(-s, s, size=(c_out, c_in)), requires_grad=True))
        biases.append(Tensor(np.zeros(c_out), requires_grad=True))
    return ChannelMap(weights, biases)


def _axis_letters(d):
    return "uvwxyz"[:d]


# -- kernel quadrature (dense realization of the integral) ------------------


def kernel_quadrature(kappa, a: PointCloudFunction):
    """Riemann-sum integral sum_i kappa(x, y_i) a(y_i) dy_i.

    ``kappa`` is [n_out, n_in, c_out, c_in]; returns [n_out, c_out].
    """
    kappa = as_tensor(kappa)
    if kappa.ndim != 4:
        raise ShapeError(f"kappa must be [n_out, n_in, c_out, c_in], got {kappa.shape}")
    if kappa.shape[1] != a.n_points:
        raise ShapeError(f"kappa expects {kappa.shape[1]} input points, "
                         f"cloud has {a.n_points}")
    if kappa.shape[3] != a.channels:
        raise ShapeError(f"kappa expects {kappa.shape[3]} channels, cloud has {a.channels}")
    weighted = mul(as_tensor(a.values), Tensor(a.weights[:, None]))
    return contract(kappa, weighted, pairs=[(1, 0), (3, 1)])


# -- spectral block ---------------------------------------------------------


@dataclass
class SpectralBlock:
    """Fourier-space kernel: per-mode complex matrices on |k| <= k_max."""

    k_max: int
    w_spec: Tensor    # complex, [m_1, ..., m_d, c_out, c_in] with m = 2 k_max + 1
    w_skip: Tensor    # [c_out, c_in]
    bias: Tensor      # [c_out]

    @property
    def d(self):
        return self.w_spec.ndim - 2

    @property
    def c_in(self):
        return self.w_spec.shape[-1]

    @property
    def c_out(self):
        return self.w_spec.shape[-2]

    def symmetrized_weights(self):
        """Project onto W(-k) = conj(W(k)) so real fields map to real fields."""
        axes = tuple(range(self.d))
        return mul(add(self.w_spec, conj(reflect_modes(self.w_spec, axes))), 0.5)

    def parameters(self, prefix=""):
        return [(f"{prefix}w_spec", self.w_spec),
                (f"{prefix}w_skip", self.w_skip),
                (f"{prefix}bias", self.bias)]


def init_spectral_block(k_max, c_in, c_out, d, rng):
    """Spectral weights uniform with scale 1/(c_in c_out) on both planes."""
    m = 2 * k_max + 1
    s = 1.0 / (c_in * c_out)
    shape = (m,) * d + (c_out, c_in)
    w = rng.uniform(-s, s, size=shape) + 1j * rng.uniform(-s, s, size=shape)
    skip = rng.uniform(-1.0 / np.sqrt(c_in), 1.0 / np.sqrt(c_in), size=(c_out, c_in))
    return SpectralBlock(
        k_max=int(k_max),
        w_spec=Tensor(w, requires_grad=True),
        w_skip=Tensor(skip, requires_grad=True),
        bias=Tensor(np.zeros(c_out), requires_grad=True),
    )


def _mode_contract(w, c, d, batched):
    """Per-mode channel mixing out[.., o, k] = sum_i W[k, o, i] c[.., i, k].

    Runs as one stacked complex matmul over the flattened mode axes,
    which is much faster than the equivalent einsum at large k_max.
    """
    w, c = as_tensor(w), as_tensor(c)
    mode_shape = w.shape[:d]
    n_modes = int(np.prod(mode_shape))
    c_out, c_in = w.shape[-2:]
    batch = c.shape[0] if batched else 1

    wr = w.data.reshape(n_modes, c_out, c_in)
    c_data = c.data if batched else c.data[None]
    # [b, i, modes...] -> [modes..., i, b] -> [n_modes, i, b]
    cr = np.moveaxis(c_data, (0, 1), (-1, -2)).reshape(n_modes, c_in, batch)
    out = wr @ cr                                      # [n_modes, o, b]
    out_full = np.moveaxis(out.reshape(mode_shape + (c_out, batch)), (-1, -2), (0, 1))
    data = out_full if batched else out_full[0]

    def back(g):
        g_data = g if batched else g[None]
        gr = np.moveaxis(g_data, (0, 1), (-1, -2)).reshape(n_modes, c_out, batch)
        gw = gr @ np.conj(cr).transpose(0, 2, 1)
        gc = np.conj(wr).transpose(0, 2, 1) @ gr
        gw_full = gw.reshape(mode_shape + (c_out, c_in))
        gc_full = np.moveaxis(gc.reshape(mode_shape + (c_in, batch)), (-1, -2), (0, 1))
        return (to_domain(gw_full, w.data),
                to_domain(gc_full if batched else gc_full[0], c.data))

    return make_node(data, (w, c), back, "mode_contract")


def _check_spectral_resolution(res, k_max, what):
    need = 2 * k_max + 1
    for n in res:
        require_power_of_two(n, f"{what} extent")
        if n < need:
            raise UndersampledError(
                f"{what} {tuple(res)} cannot carry modes |k| <= {k_max} "
                f"(needs extent >= {need})")


def spectral_block_tensor(x, block: SpectralBlock, out_resolution, batched=False):
    """Apply a spectral block to values [c_in, n_1, ..., n_d] on the tape.

    With ``batched`` the values carry a leading sample axis; the
    symmetrized weights are then shared across the batch.
    """
    x = as_tensor(x)
    d = block.d
    lead = 1 if batched else 0
    if x.ndim != d + 1 + lead or x.shape[lead] != block.c_in:
        raise ShapeError(f"spectral block expects [{block.c_in}, grid^{d}] values "
                         f"(batched={batched}), got {x.shape}")
    in_res = x.shape[lead + 1:]
    out_res = tuple(int(n) for n in out_resolution)
    _check_spectral_resolution(in_res, block.k_max, "resolution")
    _check_spectral_resolution(out_res, block.k_max, "output resolution")

    axes = tuple(range(-d, 0))
    m = 2 * block.k_max + 1
    coeff = mode_crop(dft(x, axes), axes, (m,) * d)
    w = block.symmetrized_weights()
    modes = _mode_contract(w, coeff, d, batched)
    y = idft(modes, axes, out_res)

    skip_in = spectral_resample(x, axes, out_res)
    spatial = _axis_letters(d)
    if batched:
        skip = _einsum_pair("oi", "bi" + spatial, "bo" + spatial,
                            block.w_skip, skip_in, "skip")
    else:
        skip = contract(block.w_skip, skip_in, pairs=[(1, 0)])
    bias = reshape(block.bias, (1,) * lead + (block.c_out,) + (1,) * d)
    return gelu(add(add(y, skip), bias))


def spectral_block_apply(u: GridFunction, block: SpectralBlock, out_resolution) -> GridFunction:
    """Grid-function surface over ``spectral_block_tensor``."""
    if not u.periodic:
        raise DomainError("spectral blocks require a periodic grid")
    out = spectral_block_tensor(Tensor(u.values), block, out_resolution)
    return GridFunction(out.data, periodic=True)


# -- graph block ------------------------------------------------------------


@dataclass
class GraphBlock:
    """Ball-kernel quadrature: learned kernel network on point pairs."""

    radius: float
    kernel_net: ChannelMap   # maps (x, y) in R^{2d} to c_out * c_in entries
    w_skip: Tensor           # [c_out, c_in]
    bias: Tensor             # [c_out]

    def __post_init__(self):
        if not 0 < self.radius <= 1:
            raise DomainError(f"radius must be in (0, 1], got {self.radius}")

    @property
    def c_in(self):
        return self.w_skip.shape[1]

    @property
    def c_out(self):
        return self.w_skip.shape[0]

    def parameters(self, prefix=""):
        out = self.kernel_net.parameters(prefix=f"{prefix}kernel.")
        out.append((f"{prefix}w_skip", self.w_skip))
        out.append((f"{prefix}bias", self.bias))
        return out


def init_graph_block(radius, c_in, c_out, d, hidden, rng):
    kernel_net = init_channel_map([2 * d, hidden, c_out * c_in], rng)
    s = 1.0 / np.sqrt(c_in)
    return GraphBlock(
        radius=float(radius),
        kernel_net=kernel_net,
        w_skip=Tensor(rng.uniform(-s, s, size=(c_out, c_in)), requires_grad=True),
        bias=Tensor(np.zeros(c_out), requires_grad=True),
    )


def pairwise_distances(queries, points, periodic):
    diff = np.abs(queries[:, None, :] - points[None, :, :])
    if periodic:
        diff = np.minimum(diff, 1.0 - diff)
    return np.sqrt(np.sum(diff * diff, axis=-1))


def graph_block_tensor(values, points, weights, periodic, block: GraphBlock, queries):
    """Apply a graph block; ``values`` is a tape tensor [n_points, c_in].

    Neighbour search is exact brute force. The skip term reads the input
    at the nearest cloud point to each query; empty neighbourhoods simply
    contribute a zero integral.
    """
    values = as_tensor(values)
    queries = np.asarray(queries, dtype=np.float64)
    if queries.ndim != 2 or queries.shape[1] != points.shape[1]:
        raise ShapeError(f"queries must be [n_q, {points.shape[1]}], got {queries.shape}")
    if np.any(queries < 0) or np.any(queries > 1):
        raise DomainError("queries must lie in the unit box")
    if values.shape != (points.shape[0], block.c_in):
        raise ShapeError(f"values must be [{points.shape[0]}, {block.c_in}], "
                         f"got {values.shape}")

    n_q = queries.shape[0]
    dist = pairwise_distances(queries, points, periodic)
    pair_q, pair_p = np.nonzero(dist <= block.radius)
    nearest = np.argmin(dist, axis=1)

    if pair_q.size:
        feats = np.concatenate([queries[pair_q], points[pair_p]], axis=1)
        kappa = block.kernel_net.apply(Tensor(feats), channel_axis=-1)
        kappa = reshape(kappa, (pair_q.size, block.c_out, block.c_in))
        a_nb = mul(gather(values, pair_p, axis=0), Tensor(weights[pair_p, None]))
        contrib = contract(kappa, a_nb, pairs=[(2, 1)], batch=1)
        integral = segment_sum(contrib, pair_q, n_q)
    else:
        integral = Tensor(np.zeros((n_q, block.c_out)))

    a_q = gather(values, nearest, axis=0)
    skip = contract(a_q, block.w_skip, pairs=[(1, 1)])
    return gelu(add(add(integral, skip), block.bias))


def graph_block_apply(u: PointCloudFunction, block: GraphBlock, queries):
    """Point-cloud surface over ``graph_block_tensor``; returns [n_q, c_out]."""
    out = graph_block_tensor(Tensor(u.values), u.points, u.weights, u.periodic,
                             block, np.asarray(queries, dtype=np.float64))
    return Tensor(out.data)
