import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def max_rel_err(a, b, floor=1e-12):
    """Max absolute deviation over the max magnitude of the reference."""
    a, b = np.asarray(a), np.asarray(b)
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), floor))


def band_limited_field(resolution, k_max, seed, amplitude=1.0):
    """A real random field with spectral content only in |k| <= k_max per axis."""
    res = tuple(resolution)
    r = np.random.default_rng(seed)
    c = np.zeros(res, dtype=complex)
    grids = np.meshgrid(*[np.rint(np.fft.fftfreq(n) * n).astype(int) for n in res],
                        indexing="ij")
    mask = np.ones(res, dtype=bool)
    for g in grids:
        mask &= np.abs(g) <= k_max
    c[mask] = r.standard_normal(mask.sum()) + 1j * r.standard_normal(mask.sum())
    # enforce conjugate symmetry so the field is real
    refl = c.copy()
    for ax, n in enumerate(res):
        refl = np.take(refl, (-np.arange(n)) % n, axis=ax)
    c = 0.5 * (c + np.conj(refl))
    field = np.fft.ifftn(c, norm="forward").real
    return amplitude * field / max(np.abs(field).max(), 1e-12)


def upsample_band_limited(values, factor):
    """Exact samples of the same trigonometric polynomial on a finer grid."""
    axes = tuple(range(values.ndim))
    c = np.fft.fftn(values, norm="forward")
    out_shape = tuple(n * factor for n in values.shape)
    emb = np.zeros(out_shape, dtype=complex)
    src = [np.rint(np.fft.fftfreq(n) * n).astype(int) for n in values.shape]
    idx_in = np.meshgrid(*[np.arange(n) for n in values.shape], indexing="ij")
    idx_out = tuple(s[i] % o for s, i, o in zip(src, idx_in, out_shape))
    emb[idx_out] = c
    return np.fft.ifftn(emb, norm="forward").real
