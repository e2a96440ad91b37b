"""Fixed-grid 2D cross-correlation with same-size output.

This is the building block of the interpolation-baseline CNN: the kernel
footprint is fixed in pixels, so the physical receptive field shrinks as
the grid is refined.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .autodiff import as_tensor, make_node, to_domain
from .errors import DomainError, ShapeError, UnsupportedSizeError

_PAD_MODES = ("zero", "periodic")


def conv2d(t, kernel, padding="zero"):
    """Cross-correlate ``t`` with ``kernel`` [c_out, c_in, kh, kw].

    ``t`` is [c_in, H, W] or batched [batch, c_in, H, W]; output extents
    equal the input extents. ``padding`` selects zero or periodic (test
    mode) boundary handling. Kernel extents must be odd.
    """
    t, kernel = as_tensor(t), as_tensor(kernel)
    if t.is_complex or kernel.is_complex:
        raise DomainError("conv2d: complex inputs are not supported")
    if t.ndim not in (3, 4) or kernel.ndim != 4:
        raise ShapeError(f"conv2d: need [c,H,W] or [b,c,H,W] input and [o,c,kh,kw] "
                         f"kernel, got {t.shape} and {kernel.shape}")
    batched = t.ndim == 4
    c_out, c_in, kh, kw = kernel.shape
    if kh % 2 == 0 or kw % 2 == 0:
        raise UnsupportedSizeError(f"conv2d: kernel extents must be odd, got {kh}x{kw}")
    c_axis = 1 if batched else 0
    if t.shape[c_axis] != c_in:
        raise ShapeError(f"conv2d: input has {t.shape[c_axis]} channels, "
                         f"kernel expects {c_in}")
    if padding not in _PAD_MODES:
        raise DomainError(f"conv2d: unknown padding {padding!r}")

    height, width = t.shape[-2:]
    ph, pw = (kh - 1) // 2, (kw - 1) // 2
    mode = "constant" if padding == "zero" else "wrap"
    pad = ((0, 0),) * (t.ndim - 2) + ((ph, ph), (pw, pw))
    xp = np.pad(t.data, pad, mode=mode)
    win = sliding_window_view(xp, (kh, kw), axis=(-2, -1))
    if batched:
        data = np.einsum("ockl,bchwkl->bohw", kernel.data, win, optimize=True)
    else:
        data = np.einsum("ockl,chwkl->ohw", kernel.data, win, optimize=True)

    def back(g):
        g = to_domain(np.asarray(g), t.data)
        if batched:
            gk = np.einsum("bohw,bchwkl->ockl", g, win, optimize=True)
        else:
            gk = np.einsum("ohw,chwkl->ockl", g, win, optimize=True)
        gpad = ((0, 0),) * (t.ndim - 2) + ((kh - 1, kh - 1), (kw - 1, kw - 1))
        gp = np.pad(g, gpad)
        gwin = sliding_window_view(gp, (kh, kw), axis=(-2, -1))
        kflip = kernel.data[:, :, ::-1, ::-1]
        if batched:
            gxp = np.einsum("ockl,bohwkl->bchw", kflip, gwin, optimize=True)
        else:
            gxp = np.einsum("ockl,ohwkl->chw", kflip, gwin, optimize=True)
        if padding == "zero":
            gx = gxp[..., ph:ph + height, pw:pw + width]
        else:
            gx = np.zeros_like(t.data)
            rows = (np.arange(gxp.shape[-2]) - ph) % height
            cols = (np.arange(gxp.shape[-1]) - pw) % width
            lead = (slice(None),) * (t.ndim - 2)
            np.add.at(gx, lead + (rows[:, None], cols[None, :]), gxp)
        return gx, gk

    return make_node(data, (t, kernel), back, "conv2d")
