"""Scikit-learn style estimators over the operator models.

These wrap model construction and the training loop behind the familiar
``fit(X, y)`` / ``predict(X)`` surface so the operators compose with
pipelines and model selection. X and y are arrays of sampled functions,
``[n_samples, channels, n_1, ..., n_d]``; ``predict`` accepts an output
resolution for zero-shot super-evaluation.
"""

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin

from .baselines import CnnConfig, init_fixed_grid_cnn
from .data import Dataset, Sample
from .errors import ShapeError
from .grids import GridFunction
from .losses import LossSpec, relative_l2
from .model import ModelConfig, init_model, model_forward
from .optim import AdamConfig, TrainConfig, train_loop


def check_function_array(X, name="X", d=None):
    """Validate an array of sampled functions [n, channels, grid...]."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim < 3:
        raise ShapeError(f"{name} must be [n_samples, channels, n_1, ..., n_d], "
                         f"got shape {X.shape}")
    if d is not None and X.ndim - 2 != d:
        raise ShapeError(f"{name} must hold {d}-dimensional fields, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ShapeError(f"{name} contains non-finite values")
    return X


def check_paired_functions(X, y, d=None):
    X = check_function_array(X, "X", d)
    y = check_function_array(y, "y", d)
    if X.shape[0] != y.shape[0]:
        raise ShapeError(f"X and y disagree on sample count: {X.shape[0]} vs {y.shape[0]}")
    return X, y


def _as_dataset(X, y, holdout_fraction, periodic):
    samples = [Sample(input=GridFunction(xi, periodic=periodic),
                      output=GridFunction(yi, periodic=periodic))
               for xi, yi in zip(X, y)]
    n = len(samples)
    n_test = int(round(holdout_fraction * n))
    train_idx = list(range(n - n_test))
    test_idx = list(range(n - n_test, n))
    if not train_idx:
        raise ShapeError("not enough samples for the requested holdout fraction")
    res = tuple(X.shape[2:])
    res_out = tuple(y.shape[2:])
    return Dataset(task="custom", samples=samples, train_idx=train_idx, test_idx=test_idx,
                   res_in=res, res_out=res_out, res_hr=res_out, grf=None, solver=None, seed=0)


class _OperatorRegressor(BaseEstimator, RegressorMixin):
    """Shared fit/predict machinery; subclasses build the underlying model."""

    def fit(self, X, y):
        X, y = check_paired_functions(X, y)
        dataset = _as_dataset(X, y, self.holdout_fraction, self.periodic)
        model = self._build(X, y)
        config = TrainConfig(
            epochs=self.epochs, batch_size=self.batch_size,
            lr_halve_every=self.lr_halve_every, seed=self.seed,
            normalize_input=self.normalize_input,
            adam=AdamConfig(lr=self.lr, weight_decay=self.weight_decay),
            loss=LossSpec(w_data=1.0, w_pde=0.0),
        )
        result = train_loop(model, dataset, config)
        self.model_ = result.best_model
        self.history_ = result.history
        self.n_params_ = result.best_model.parameter_count()
        return self

    def predict(self, X, out_resolution=None):
        if not hasattr(self, "model_"):
            raise ShapeError("estimator is not fitted; call fit first")
        X = check_function_array(X, "X", d=self.model_.config.d
                                 if hasattr(self.model_.config, "d") else None)
        outs = []
        for xi in X:
            gf = GridFunction(xi, periodic=self.periodic)
            outs.append(model_forward(self.model_, gf, out_resolution).values)
        return np.stack(outs, axis=0)

    def score(self, X, y):
        """1 - mean relative L2 error (1 is perfect, 0 matches predicting zero)."""
        X, y = check_paired_functions(X, y)
        preds = self.predict(X, out_resolution=tuple(y.shape[2:]))
        errs = [relative_l2(p, t) for p, t in zip(preds, y)]
        return 1.0 - float(np.mean(errs))


class FourierOperatorRegressor(_OperatorRegressor):
    """Operator regression with spectral kernel blocks."""

    def __init__(self, modes=8, width=24, depth=4, coord_features=True,
                 epochs=50, batch_size=8, lr=1e-3, lr_halve_every=50,
                 weight_decay=1e-4, normalize_input=True, holdout_fraction=0.0,
                 periodic=True, seed=0):
        self.modes = modes
        self.width = width
        self.depth = depth
        self.coord_features = coord_features
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.lr_halve_every = lr_halve_every
        self.weight_decay = weight_decay
        self.normalize_input = normalize_input
        self.holdout_fraction = holdout_fraction
        self.periodic = periodic
        self.seed = seed

    def _build(self, X, y):
        config = ModelConfig(kind="fno", d=X.ndim - 2, in_channels=X.shape[1],
                             out_channels=y.shape[1], width=self.width, depth=self.depth,
                             k_max=self.modes, coord_features=self.coord_features)
        return init_model(config, self.seed)


class GraphOperatorRegressor(_OperatorRegressor):
    """Operator regression with fixed-radius graph kernel blocks."""

    def __init__(self, radius=0.25, width=8, depth=2, kernel_hidden=16,
                 coord_features=True, epochs=20, batch_size=4, lr=1e-3,
                 lr_halve_every=50, weight_decay=1e-4, normalize_input=True,
                 holdout_fraction=0.0, periodic=True, seed=0):
        self.radius = radius
        self.width = width
        self.depth = depth
        self.kernel_hidden = kernel_hidden
        self.coord_features = coord_features
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.lr_halve_every = lr_halve_every
        self.weight_decay = weight_decay
        self.normalize_input = normalize_input
        self.holdout_fraction = holdout_fraction
        self.periodic = periodic
        self.seed = seed

    def _build(self, X, y):
        config = ModelConfig(kind="gno", d=X.ndim - 2, in_channels=X.shape[1],
                             out_channels=y.shape[1], width=self.width, depth=self.depth,
                             radius=self.radius, kernel_hidden=self.kernel_hidden,
                             coord_features=self.coord_features)
        return init_model(config, self.seed)


class GridCnnRegressor(_OperatorRegressor):
    """Fixed-grid CNN baseline behind the same estimator surface."""

    def __init__(self, width=16, depth=3, kernel_size=3, epochs=50, batch_size=8,
                 lr=1e-3, lr_halve_every=50, weight_decay=1e-4, normalize_input=True,
                 holdout_fraction=0.0, periodic=True, seed=0):
        self.width = width
        self.depth = depth
        self.kernel_size = kernel_size
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.lr_halve_every = lr_halve_every
        self.weight_decay = weight_decay
        self.normalize_input = normalize_input
        self.holdout_fraction = holdout_fraction
        self.periodic = periodic
        self.seed = seed

    def _build(self, X, y):
        if X.ndim - 2 != 2:
            raise ShapeError("the cnn baseline requires 2d fields")
        config = CnnConfig(in_channels=X.shape[1], out_channels=y.shape[1],
                           width=self.width, depth=self.depth, kernel_size=self.kernel_size)
        return init_fixed_grid_cnn(config, self.seed)

    def predict(self, X, out_resolution=None):
        if out_resolution is not None:
            X = check_function_array(X, "X", d=2)
            if tuple(out_resolution) != tuple(X.shape[2:]):
                raise ShapeError("a fixed-grid cnn cannot change the output resolution")
        return super().predict(X, out_resolution=None)
