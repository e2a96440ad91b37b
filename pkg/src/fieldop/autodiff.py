"""Reverse-mode automatic differentiation over dense numpy arrays.

All real data is float64 and all complex data is complex128. The gradient
of a real-valued loss with respect to a complex tensor is packed as a
complex array g with g.real = dL/d(Re x) and g.imag = dL/d(Im x); with this
convention the adjoint of any complex-linear map is its conjugate transpose
and the adjoint of an elementwise product is multiplication by the
conjugate of the other factor.

Graphs are built eagerly: every operation records its parents and a
backward closure on the output tensor. ``backward`` walks the nodes in
reverse creation order (a valid reverse topological order, since parents
always predate children), accumulating adjoints by addition, so repeated
runs over the same graph are bitwise identical.
"""

import itertools
import math
import string

import numpy as np

from .errors import DomainError, ShapeError

_node_counter = itertools.count()

_GELU_C = math.sqrt(2.0 / math.pi)
_GELU_A = 0.044715


class Tensor:
    """A dense real or complex array participating in a differentiation graph."""

    __slots__ = ("data", "requires_grad", "grad", "node_id", "_parents", "_backward", "_op")

    def __init__(self, data, requires_grad=False):
        arr = np.asarray(data)
        if np.iscomplexobj(arr):
            arr = arr.astype(np.complex128, copy=False)
        else:
            arr = arr.astype(np.float64, copy=False)
        self.data = arr
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self.node_id = next(_node_counter)
        self._parents = ()
        self._backward = None
        self._op = "leaf"

    # -- introspection -------------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def is_complex(self):
        return np.iscomplexobj(self.data)

    def item(self):
        return self.data.reshape(-1)[0].item()

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self._op!r}, grad={self.requires_grad})"

    # -- operator sugar ------------------------------------------------

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(as_tensor(other), self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(as_tensor(other), self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(as_tensor(other), self)

    def __neg__(self):
        return mul(self, -1.0)

    def __getitem__(self, key):
        return take_slice(self, key)

    def sum(self, axes=None, keepdims=False):
        return tensor_sum(self, axes, keepdims)

    def mean(self, axes=None, keepdims=False):
        return tensor_mean(self, axes, keepdims)

    def reshape(self, shape):
        return reshape(self, shape)

    def backward(self):
        return backward(self)


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def make_node(data, parents, backward_fn, op):
    """Create a graph node; ``backward_fn(grad)`` returns one adjoint per parent."""
    out = Tensor(data)
    out.requires_grad = any(p.requires_grad for p in parents)
    if out.requires_grad:
        out._parents = tuple(parents)
        out._backward = backward_fn
    out._op = op
    return out


def to_domain(grad, like):
    """Project an adjoint onto the dtype domain of the tensor it belongs to."""
    if np.iscomplexobj(grad) and not np.iscomplexobj(like):
        return grad.real
    return grad


def _unbroadcast(grad, shape):
    """Sum a broadcast adjoint back down to the original operand shape."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and grad.shape[ax] != 1:
            grad = grad.sum(axis=ax, keepdims=True)
    return grad


# -- pointwise binary ----------------------------------------------------


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    try:
        data = a.data + b.data
    except ValueError as exc:
        raise ShapeError(f"add: incompatible shapes {a.shape} and {b.shape}") from exc

    def back(g):
        return (to_domain(_unbroadcast(g, a.shape), a.data),
                to_domain(_unbroadcast(g, b.shape), b.data))

    return make_node(data, (a, b), back, "add")


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    try:
        data = a.data - b.data
    except ValueError as exc:
        raise ShapeError(f"sub: incompatible shapes {a.shape} and {b.shape}") from exc

    def back(g):
        return (to_domain(_unbroadcast(g, a.shape), a.data),
                to_domain(_unbroadcast(-g, b.shape), b.data))

    return make_node(data, (a, b), back, "sub")


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    try:
        data = a.data * b.data
    except ValueError as exc:
        raise ShapeError(f"mul: incompatible shapes {a.shape} and {b.shape}") from exc

    def back(g):
        ga = _unbroadcast(np.conj(b.data) * g, a.shape)
        gb = _unbroadcast(np.conj(a.data) * g, b.shape)
        return to_domain(ga, a.data), to_domain(gb, b.data)

    return make_node(data, (a, b), back, "mul")


def pointwise_binary(a, b, kind):
    """Spec surface for the elementwise binary operations."""
    ops = {"add": add, "sub": sub, "mul": mul}
    if kind not in ops:
        raise DomainError(f"unknown binary kind {kind!r}")
    return ops[kind](a, b)


# -- pointwise unary -----------------------------------------------------


def _require_real(t, op):
    if t.is_complex:
        raise DomainError(f"{op}: complex input is outside the operation domain")


def gelu(t):
    """GeLU via the tanh approximation 0.5 x (1 + tanh(sqrt(2/pi)(x + 0.044715 x^3)))."""
    t = as_tensor(t)
    _require_real(t, "gelu")
    x = t.data
    inner = _GELU_C * (x + _GELU_A * x * x * x)
    th = np.tanh(inner)
    data = 0.5 * x * (1.0 + th)

    def back(g):
        dinner = _GELU_C * (1.0 + 3.0 * _GELU_A * x * x)
        local = 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * dinner
        return (g.real * local if np.iscomplexobj(g) else g * local,)

    return make_node(data, (t,), back, "gelu")


def square(t):
    t = as_tensor(t)
    _require_real(t, "square")
    x = t.data

    def back(g):
        return (to_domain(g, x) * (2.0 * x),)

    return make_node(x * x, (t,), back, "square")


def negate(t):
    t = as_tensor(t)
    _require_real(t, "negate")

    def back(g):
        return (-to_domain(g, t.data),)

    return make_node(-t.data, (t,), back, "negate")


def pointwise_unary(t, kind):
    """Spec surface for the elementwise unary operations."""
    ops = {"gelu": gelu, "square": square, "negate": negate}
    if kind not in ops:
        raise DomainError(f"unknown unary kind {kind!r}")
    return ops[kind](t)


def sqrt(t):
    t = as_tensor(t)
    _require_real(t, "sqrt")
    if np.any(t.data < 0):
        raise DomainError("sqrt: negative input")
    data = np.sqrt(t.data)

    def back(g):
        return (to_domain(g, t.data) * (0.5 / data),)

    return make_node(data, (t,), back, "sqrt")


def conj(t):
    t = as_tensor(t)

    def back(g):
        return (np.conj(g),)

    return make_node(np.conj(t.data), (t,), back, "conj")


def real_part(t):
    t = as_tensor(t)

    def back(g):
        return (np.asarray(g).real.astype(t.data.dtype),)

    return make_node(t.data.real.copy(), (t,), back, "real")


# -- contractions --------------------------------------------------------


def _einsum_pair(sub_a, sub_b, sub_o, a, b, op):
    data = np.einsum(f"{sub_a},{sub_b}->{sub_o}", a.data, b.data, optimize=True)

    def back(g):
        ga = np.einsum(f"{sub_o},{sub_b}->{sub_a}", g, np.conj(b.data), optimize=True)
        gb = np.einsum(f"{sub_o},{sub_a}->{sub_b}", g, np.conj(a.data), optimize=True)
        return to_domain(ga, a.data), to_domain(gb, b.data)

    return make_node(data, (a, b), back, op)


def contract(a, b, pairs, batch=0):
    """Generalized tensor product summing over paired axes.

    ``pairs`` lists (axis_of_a, axis_of_b) pairs to contract; the first
    ``batch`` axes of both operands are shared (elementwise) batch axes.
    Output axes are ordered batch axes, then the free axes of ``a``, then
    the free axes of ``b``.
    """
    a, b = as_tensor(a), as_tensor(b)
    pairs = [(pa % a.ndim, pb % b.ndim) for pa, pb in pairs]
    letters = iter(string.ascii_letters)
    sub_a = [None] * a.ndim
    sub_b = [None] * b.ndim
    for ax in range(batch):
        if ax >= a.ndim or ax >= b.ndim or a.shape[ax] != b.shape[ax]:
            raise ShapeError(f"contract: batch axis {ax} mismatch for {a.shape} vs {b.shape}")
        sub_a[ax] = sub_b[ax] = next(letters)
    for pa, pb in pairs:
        if pa < batch or pb < batch or sub_a[pa] is not None or sub_b[pb] is not None:
            raise ShapeError("contract: axis paired twice or overlapping a batch axis")
        if a.shape[pa] != b.shape[pb]:
            raise ShapeError(
                f"contract: paired extents differ ({a.shape[pa]} vs {b.shape[pb]}) "
                f"for axes ({pa}, {pb})")
        sub_a[pa] = sub_b[pb] = next(letters)
    out = [sub_a[ax] for ax in range(batch)]
    for ax in range(batch, a.ndim):
        if sub_a[ax] is None:
            sub_a[ax] = next(letters)
            out.append(sub_a[ax])
    for ax in range(batch, b.ndim):
        if sub_b[ax] is None:
            sub_b[ax] = next(letters)
            out.append(sub_b[ax])
    return _einsum_pair("".join(sub_a), "".join(sub_b), "".join(out), a, b, "contract")


# -- shape manipulation --------------------------------------------------


def reshape(t, shape):
    t = as_tensor(t)
    old = t.shape
    data = t.data.reshape(shape)

    def back(g):
        return (g.reshape(old),)

    return make_node(data, (t,), back, "reshape")


def moveaxis(t, src, dst):
    t = as_tensor(t)
    data = np.moveaxis(t.data, src, dst)

    def back(g):
        return (np.moveaxis(g, dst, src),)

    return make_node(data, (t,), back, "moveaxis")


def take_slice(t, key):
    t = as_tensor(t)
    data = t.data[key]

    def back(g):
        full = np.zeros_like(t.data)
        full[key] = g if not np.iscomplexobj(g) or np.iscomplexobj(full) else g.real
        return (to_domain(full, t.data),)

    return make_node(data, (t,), back, "slice")


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def back(g):
        pieces = []
        for i, t in enumerate(tensors):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(offsets[i], offsets[i + 1])
            pieces.append(to_domain(g[tuple(sl)], t.data))
        return tuple(pieces)

    return make_node(data, tuple(tensors), back, "concat")


def roll(t, shift, axis):
    t = as_tensor(t)

    def back(g):
        return (np.roll(g, -shift, axis=axis),)

    return make_node(np.roll(t.data, shift, axis=axis), (t,), back, "roll")


# -- reductions ----------------------------------------------------------


def tensor_sum(t, axes=None, keepdims=False):
    t = as_tensor(t)
    data = np.sum(t.data, axis=axes if axes is None else tuple(np.atleast_1d(axes)),
                  keepdims=keepdims)
    axes_t = None if axes is None else tuple(ax % t.ndim for ax in np.atleast_1d(axes))

    def back(g):
        g = np.asarray(g)
        if axes_t is not None and not keepdims:
            g = np.expand_dims(g, axes_t)
        return (np.broadcast_to(g, t.shape),)

    return make_node(data, (t,), back, "sum")


def tensor_mean(t, axes=None, keepdims=False):
    t = as_tensor(t)
    s = tensor_sum(t, axes, keepdims)
    return mul(s, float(s.size) / float(t.size))


# -- gather / scatter ----------------------------------------------------


def gather(t, indices, axis=0):
    """Select rows ``indices`` along ``axis``; adjoint scatter-adds them back."""
    t = as_tensor(t)
    idx = np.asarray(indices, dtype=np.intp)
    data = np.take(t.data, idx, axis=axis)

    def back(g):
        full = np.zeros_like(t.data)
        moved = np.moveaxis(full, axis, 0)
        np.add.at(moved, idx, np.moveaxis(to_domain(g, t.data), axis, 0))
        return (full,)

    return make_node(data, (t,), back, "gather")


def segment_sum(t, segment_ids, num_segments):
    """Sum rows of ``t`` (axis 0) into ``num_segments`` buckets; empty buckets are zero."""
    t = as_tensor(t)
    seg = np.asarray(segment_ids, dtype=np.intp)
    if seg.shape[0] != t.shape[0]:
        raise ShapeError("segment_sum: one segment id per leading row required")
    data = np.zeros((num_segments,) + t.shape[1:], dtype=t.data.dtype)
    np.add.at(data, seg, t.data)

    def back(g):
        return (to_domain(np.take(g, seg, axis=0), t.data),)

    return make_node(data, (t,), back, "segment_sum")


# -- backward pass -------------------------------------------------------


def backward(loss, leaves=None):
    """Run reverse-mode differentiation from a real scalar loss.

    Returns a map ``{node_id: Tensor}`` with one adjoint per grad-flagged
    leaf reachable from ``loss``; when ``leaves`` is given, unreachable
    entries are filled with zeros so the map always covers them. Each
    leaf's ``.grad`` attribute is set to its adjoint array.
    """
    if loss.size != 1:
        raise ShapeError(f"backward: loss must be scalar, got shape {loss.shape}")
    if loss.is_complex:
        raise ShapeError("backward: loss must be real")

    nodes = {}
    stack = [loss]
    while stack:
        t = stack.pop()
        if t.node_id in nodes or not t.requires_grad:
            continue
        nodes[t.node_id] = t
        stack.extend(t._parents)

    grads = {loss.node_id: np.ones_like(loss.data)}
    result = {}
    for nid in sorted(nodes, reverse=True):
        t = nodes[nid]
        g = grads.pop(nid, None)
        if g is None:
            continue
        if t._backward is None:
            if t.requires_grad:
                arr = np.array(to_domain(g, t.data))
                t.grad = arr
                result[nid] = Tensor(arr)
            continue
        for parent, pg in zip(t._parents, t._backward(g)):
            if not parent.requires_grad or pg is None:
                continue
            if parent.node_id in grads:
                grads[parent.node_id] = grads[parent.node_id] + pg
            else:
                grads[parent.node_id] = pg

    if leaves is not None:
        for leaf in leaves:
            if leaf.node_id not in result:
                arr = np.zeros_like(leaf.data)
                leaf.grad = arr
                result[leaf.node_id] = Tensor(arr)
    return result


# -- finite differences ----------------------------------------------------


def _scalar_value(y):
    if isinstance(y, Tensor):
        return float(y.data.reshape(-1)[0].real)
    return float(y)


def finite_difference_gradient(f, t, eps=1e-5):
    """Central-difference gradient of a scalar function of one tensor.

    For complex tensors the real and imaginary planes are perturbed
    independently and the result is packed with the same convention as
    ``backward``.
    """
    if eps <= 0:
        raise DomainError("finite_difference_gradient: eps must be positive")
    t = as_tensor(t)
    base = np.array(t.data)
    grad = np.zeros_like(base)
    planes = (1.0, 1.0j) if np.iscomplexobj(base) else (1.0,)
    flat = base.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        for unit in planes:
            step = np.zeros_like(flat)
            step[i] = unit * eps
            up = _scalar_value(f(Tensor((flat + step).reshape(base.shape))))
            dn = _scalar_value(f(Tensor((flat - step).reshape(base.shape))))
            gflat[i] += unit * (up - dn) / (2.0 * eps)
    return Tensor(grad)
