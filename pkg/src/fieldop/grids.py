"""Function containers: channel-valued fields on grids and point clouds.

All grids live on the unit box [0, 1]^d. Periodic grids sample x_j = j/n
(endpoint excluded); non-periodic grids sample x_j = j/(n-1) (endpoints
included). Values are stored channels-first for grids, [channels, n_1,
..., n_d], and channels-last for point clouds, [n_points, channels].
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, ShapeError
from .spectral import require_power_of_two, spectral_resample_array

WEIGHT_SUM_TOL = 1e-8


@dataclass
class GridFunction:
    """A function sampled on an equispaced grid over [0, 1]^d."""

    values: np.ndarray
    periodic: bool = True

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim < 2:
            raise ShapeError("GridFunction values must be [channels, n_1, ..., n_d]")
        if any(n < 1 for n in self.values.shape):
            raise ShapeError(f"GridFunction extents must be positive, got {self.values.shape}")

    @property
    def channels(self):
        return self.values.shape[0]

    @property
    def resolution(self):
        return self.values.shape[1:]

    @property
    def d(self):
        return self.values.ndim - 1

    def coordinates(self):
        return grid_coordinates(self.resolution, self.periodic)

    def copy(self):
        return GridFunction(self.values.copy(), self.periodic)


def grid_coordinates(resolution, periodic=True):
    """Coordinates of the grid points, stacked as [d, n_1, ..., n_d]."""
    axes = []
    for n in resolution:
        if periodic:
            axes.append(np.arange(n) / n)
        else:
            axes.append(np.arange(n) / max(n - 1, 1))
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack(mesh, axis=0)


@dataclass
class PointCloudFunction:
    """Function samples at arbitrary points with quadrature weights."""

    points: np.ndarray    # [n_points, d]
    values: np.ndarray    # [n_points, channels]
    weights: np.ndarray   # [n_points]
    periodic: bool = False

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64)
        self.values = np.asarray(self.values, dtype=np.float64)
        self.weights = np.asarray(self.weights, dtype=np.float64)
        n = self.points.shape[0]
        if self.points.ndim != 2:
            raise ShapeError("points must be [n_points, d]")
        if self.values.ndim != 2 or self.values.shape[0] != n or self.weights.shape != (n,):
            raise ShapeError("point, value and weight counts must agree")
        if n:
            if np.any(self.weights <= 0):
                raise DomainError("quadrature weights must be positive")
            if abs(self.weights.sum() - 1.0) > WEIGHT_SUM_TOL:
                raise DomainError(
                    f"quadrature weights sum to {self.weights.sum():.12g}, expected the "
                    f"domain volume 1 within {WEIGHT_SUM_TOL}")
            if np.any(self.points < 0) or np.any(self.points > 1):
                raise DomainError("points must lie in the unit box")

    @property
    def n_points(self):
        return self.points.shape[0]

    @property
    def channels(self):
        return self.values.shape[1]

    @property
    def d(self):
        return self.points.shape[1]


def cloud_from_grid(u: GridFunction) -> PointCloudFunction:
    """Flatten a grid function to a uniform point cloud with weights 1/N."""
    coords = u.coordinates()
    d = u.d
    points = coords.reshape(d, -1).T
    values = u.values.reshape(u.channels, -1).T
    n = points.shape[0]
    return PointCloudFunction(points, values, np.full(n, 1.0 / n), periodic=u.periodic)


def grid_from_cloud_values(values, resolution):
    """Reshape channels-last cloud values back onto a grid, channels-first."""
    values = np.asarray(values)
    n = int(np.prod(resolution))
    if values.shape[0] != n:
        raise ShapeError(f"expected {n} rows for resolution {tuple(resolution)}, "
                         f"got {values.shape[0]}")
    return np.moveaxis(values.reshape(tuple(resolution) + (values.shape[1],)), -1, 0)


def _as_resolution(new_resolution, d):
    if np.isscalar(new_resolution):
        return (int(new_resolution),) * d
    res = tuple(int(n) for n in new_resolution)
    if len(res) != d:
        raise ShapeError(f"expected {d} extents, got {len(res)}")
    return res


def _interp_axis(arr, axis, n_new, periodic):
    n_old = arr.shape[axis]
    if periodic:
        pos = np.arange(n_new) / n_new * n_old
        i0 = np.floor(pos).astype(np.intp) % n_old
        frac = pos - np.floor(pos)
        i1 = (i0 + 1) % n_old
    else:
        pos = np.arange(n_new) / max(n_new - 1, 1) * (n_old - 1)
        i0 = np.clip(np.floor(pos).astype(np.intp), 0, max(n_old - 2, 0))
        frac = pos - i0
        i1 = np.minimum(i0 + 1, n_old - 1)
    shape = [1] * arr.ndim
    shape[axis] = n_new
    w = frac.reshape(shape)
    return (1.0 - w) * np.take(arr, i0, axis=axis) + w * np.take(arr, i1, axis=axis)


def resample(u: GridFunction, new_resolution, method) -> GridFunction:
    """Change the grid resolution of a function.

    ``spectral`` pads or truncates Fourier modes (periodic, power-of-two
    grids only); ``subsample`` picks every stride-th point (downsampling
    only, exact); ``bilinear`` interpolates linearly along each axis.
    """
    new_res = _as_resolution(new_resolution, u.d)
    old_res = u.resolution
    if new_res == tuple(old_res):
        return u.copy()
    spatial = tuple(range(1, u.d + 1))

    if method == "spectral":
        if not u.periodic:
            raise DomainError("spectral resampling requires a periodic grid")
        out = spectral_resample_array(u.values, spatial, new_res)
        return GridFunction(out, periodic=True)

    if method == "subsample":
        out = u.values
        for ax, (n_old, n_new) in enumerate(zip(old_res, new_res)):
            if n_new > n_old:
                raise ShapeError(f"subsample cannot upsample axis {ax} "
                                 f"({n_old} -> {n_new})")
            if u.periodic:
                if n_old % n_new:
                    raise ShapeError(f"subsample stride on axis {ax} is not integral "
                                     f"({n_old} -> {n_new})")
                stride = n_old // n_new
            else:
                if (n_old - 1) % max(n_new - 1, 1):
                    raise ShapeError(f"subsample stride on axis {ax} is not integral "
                                     f"({n_old} -> {n_new})")
                stride = (n_old - 1) // max(n_new - 1, 1)
            out = np.take(out, np.arange(n_new) * stride, axis=ax + 1)
        return GridFunction(np.ascontiguousarray(out), periodic=u.periodic)

    if method == "bilinear":
        out = u.values
        for ax, n_new in enumerate(new_res):
            if out.shape[ax + 1] != n_new:
                out = _interp_axis(out, ax + 1, n_new, u.periodic)
        return GridFunction(np.ascontiguousarray(out), periodic=u.periodic)

    raise DomainError(f"unknown resampling method {method!r}")
