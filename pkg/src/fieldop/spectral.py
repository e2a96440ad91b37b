"""Discrete Fourier transforms and spectral resampling on the tape.

Conventions, used everywhere in the package:

* grids are equispaced on [0, 1) with points x_j = j/n per axis;
* the forward transform carries the 1/n normalization per axis, so
  coefficients of band-limited signals are independent of the sampling
  resolution (this is what makes spectral weights transfer across
  resolutions);
* the inverse evaluates sum_k c_k exp(+2 pi i k x_j) with no
  normalization factor;
* spectra are stored in standard FFT index order (frequencies
  0 .. ceil(m/2)-1 followed by -floor(m/2) .. -1) at any extent m.

Enlarging a spectrum pads the missing high modes with zeros, which is the
super-evaluation mechanism; shrinking truncates them. When an even-extent
axis is resized, the shared +-m/2 coefficient is split (on the way up) or
folded (on the way down) so real signals stay real.
"""

import numpy as np
import scipy.fft as _fft

from .autodiff import Tensor, as_tensor, make_node, mul, to_domain
from .errors import ShapeError, UnsupportedSizeError


def is_power_of_two(n):
    return n > 0 and (n & (n - 1)) == 0


def require_power_of_two(n, what="extent"):
    if not is_power_of_two(int(n)):
        raise UnsupportedSizeError(f"{what} {n} is not a power of two")


def mode_numbers(m):
    """Integer mode numbers of an extent-m axis in FFT index order."""
    return np.rint(np.fft.fftfreq(m) * m).astype(np.int64)


def _norm_axes(axes, ndim):
    return tuple(ax % ndim for ax in axes)


# -- numpy-level resizing (shared by tape ops and offline resampling) ------


def _embed_axis(c, axis, m_out):
    # each mode keeps its full coefficient at its own frequency; an
    # even-extent tail starts with the -m/2 entry, which stays at -m/2
    m = c.shape[axis]
    if m == m_out:
        return c
    if m > m_out:
        raise ShapeError(f"cannot embed extent {m} into smaller extent {m_out}")
    shape = list(c.shape)
    shape[axis] = m_out
    out = np.zeros(shape, dtype=c.dtype)
    src = np.moveaxis(c, axis, 0)
    dst = np.moveaxis(out, axis, 0)
    head = (m + 1) // 2
    tail = m - head
    dst[:head] = src[:head]
    if tail:
        dst[m_out - tail:] = src[head:]
    return out


def _embed_adjoint_axis(g, axis, m_in):
    m_out = g.shape[axis]
    if m_in == m_out:
        return g
    shape = list(g.shape)
    shape[axis] = m_in
    out = np.zeros(shape, dtype=g.dtype)
    src = np.moveaxis(g, axis, 0)
    dst = np.moveaxis(out, axis, 0)
    head = (m_in + 1) // 2
    tail = m_in - head
    dst[:head] = src[:head]
    if tail:
        dst[head:] = src[m_out - tail:]
    return out


def _crop_axis(c, axis, m_out):
    m = c.shape[axis]
    if m == m_out:
        return c
    if m < m_out:
        raise ShapeError(f"cannot crop extent {m} to larger extent {m_out}")
    shape = list(c.shape)
    shape[axis] = m_out
    out = np.zeros(shape, dtype=c.dtype)
    src = np.moveaxis(c, axis, 0)
    dst = np.moveaxis(out, axis, 0)
    head = (m_out + 1) // 2
    tail = m_out - head
    dst[:head] = src[:head]
    if tail:
        if m_out % 2 == 0:
            dst[head] = src[m - m_out // 2] + src[m_out // 2]
            if tail > 1:
                dst[head + 1:] = src[m - tail + 1:]
        else:
            dst[head:] = src[m - tail:]
    return out


def _crop_adjoint_axis(g, axis, m_in):
    m_out = g.shape[axis]
    if m_in == m_out:
        return g
    shape = list(g.shape)
    shape[axis] = m_in
    out = np.zeros(shape, dtype=g.dtype)
    src = np.moveaxis(g, axis, 0)
    dst = np.moveaxis(out, axis, 0)
    head = (m_out + 1) // 2
    tail = m_out - head
    dst[:head] = src[:head]
    if tail:
        if m_out % 2 == 0:
            dst[m_in - m_out // 2] += src[head]
            dst[m_out // 2] += src[head]
            if tail > 1:
                dst[m_in - tail + 1:] = src[head + 1:]
        else:
            dst[m_in - tail:] = src[head:]
    return out


def embed_spectrum_array(c, axes, out_sizes):
    for ax, m in zip(axes, out_sizes):
        c = _embed_axis(c, ax, m)
    return c


def crop_spectrum_array(c, axes, out_sizes):
    for ax, m in zip(axes, out_sizes):
        c = _crop_axis(c, ax, m)
    return c


def spectral_resample_array(values, axes, out_sizes):
    """Trigonometric (Fourier pad/truncate) resampling of a real array."""
    axes = _norm_axes(axes, values.ndim)
    for ax, m in zip(axes, out_sizes):
        require_power_of_two(values.shape[ax], "input extent")
        require_power_of_two(m, "output extent")
    c = _fft.fftn(values, axes=axes, norm="forward")
    down = [min(m, c.shape[ax]) for ax, m in zip(axes, out_sizes)]
    c = crop_spectrum_array(c, axes, down)
    c = embed_spectrum_array(c, axes, out_sizes)
    return _fft.ifftn(c, axes=axes, norm="forward").real


# -- tape operations -------------------------------------------------------


def dft(t, axes):
    """Forward transform with 1/n normalization per transformed axis."""
    t = as_tensor(t)
    axes = _norm_axes(axes, t.ndim)
    for ax in axes:
        require_power_of_two(t.shape[ax], "transform extent")
    data = _fft.fftn(t.data, axes=axes, norm="forward")

    def back(g):
        # adjoint of the 1/n-normalized forward transform is the
        # 1/n-normalized conjugate (inverse) transform
        return (to_domain(_fft.ifftn(g, axes=axes, norm="backward"), t.data),)

    return make_node(data, (t,), back, "dft")


def idft(c, axes, out_sizes):
    """Evaluate a spectrum at out_sizes equispaced points per axis.

    Missing high modes are implicitly zero when out_sizes exceed the
    spectral extents, so a trained spectrum can be rendered on a finer
    grid directly. Returns the real part; pair with ``dft`` for an exact
    round trip on real signals.
    """
    c = as_tensor(c)
    axes = _norm_axes(axes, c.ndim)
    out_sizes = tuple(int(m) for m in out_sizes)
    if len(out_sizes) != len(axes):
        raise ShapeError("idft: one output size per transformed axis required")
    for ax, m in zip(axes, out_sizes):
        if m < c.shape[ax]:
            raise ShapeError(
                f"idft: output size {m} below spectral extent {c.shape[ax]} on axis {ax}")
        require_power_of_two(m, "output extent")
    in_sizes = [c.shape[ax] for ax in axes]
    emb = embed_spectrum_array(np.asarray(c.data, dtype=np.complex128), axes, out_sizes)
    data = _fft.ifftn(emb, axes=axes, norm="forward").real

    def back(g):
        g = np.asarray(g).real
        gc = _fft.fftn(g.astype(np.float64), axes=axes, norm="backward")
        for ax, m in zip(axes, in_sizes):
            gc = _embed_adjoint_axis(gc, ax, m)
        return (to_domain(gc, c.data),)

    return make_node(data, (c,), back, "idft")


def mode_crop(c, axes, out_sizes):
    """Truncate a spectrum to the given extents per axis (FFT index order)."""
    c = as_tensor(c)
    axes = _norm_axes(axes, c.ndim)
    out_sizes = tuple(int(m) for m in out_sizes)
    for ax, m in zip(axes, out_sizes):
        if m > c.shape[ax]:
            raise ShapeError(
                f"mode_crop: size {m} exceeds spectral extent {c.shape[ax]} on axis {ax}")
    in_sizes = [c.shape[ax] for ax in axes]
    data = crop_spectrum_array(c.data, axes, out_sizes)

    def back(g):
        for ax, m in zip(axes, in_sizes):
            g = _crop_adjoint_axis(g, ax, m)
        return (to_domain(g, c.data),)

    return make_node(data, (c,), back, "mode_crop")


def reflect_modes(c, axes):
    """Reindex k -> -k along the given spectral axes (an involution)."""
    c = as_tensor(c)
    axes = _norm_axes(axes, c.ndim)

    def _reflect(arr):
        for ax in axes:
            arr = np.roll(np.flip(arr, axis=ax), 1, axis=ax)
        return arr

    def back(g):
        return (_reflect(g),)

    return make_node(_reflect(c.data), (c,), back, "reflect_modes")


def spectral_resample(t, axes, out_sizes):
    """Tape-level trigonometric resampling (dft -> crop -> idft)."""
    t = as_tensor(t)
    axes = _norm_axes(axes, t.ndim)
    out_sizes = tuple(int(m) for m in out_sizes)
    if all(t.shape[ax] == m for ax, m in zip(axes, out_sizes)):
        return t
    c = dft(t, axes)
    down = [min(m, t.shape[ax]) for ax, m in zip(axes, out_sizes)]
    if any(dm != t.shape[ax] for ax, dm in zip(axes, down)):
        c = mode_crop(c, axes, down)
    return idft(c, axes, out_sizes)


def spectral_derivative(t, axis, order=1):
    """Differentiate along a periodic axis by multiplication with (2 pi i k)^order."""
    t = as_tensor(t)
    axis = axis % t.ndim
    n = t.shape[axis]
    k = mode_numbers(n).astype(np.float64)
    if order % 2 == 1 and n % 2 == 0:
        k[n // 2] = 0.0  # the unpaired Nyquist mode has no well-defined odd derivative
    factor = (2.0j * np.pi * k) ** order
    shape = [1] * t.ndim
    shape[axis] = n
    c = dft(t, [axis])
    return idft(mul(c, Tensor(factor.reshape(shape))), [axis], [n])
