"""fieldop: operator learning on function data.

Fourier and graph neural operators with a self-contained reverse-mode
differentiation engine, physics-informed training, reference PDE solvers
for data generation and verification, experiment harnesses, and a batch
CLI. Scikit-learn style estimators are available in
``fieldop.estimators``.
"""

from .autodiff import (Tensor, backward, contract, finite_difference_gradient, gelu,
                       pointwise_binary, pointwise_unary)
from .baselines import CnnConfig, FixedGridCnn, cnn_forward, init_fixed_grid_cnn
from .blocks import (ChannelMap, GraphBlock, SpectralBlock, graph_block_apply,
                     kernel_quadrature, spectral_block_apply)
from .convolution import conv2d
from .data import Dataset, Sample, make_dataset
from .errors import (ConfigError, DivergenceError, DomainError, FieldOpError, MetricError,
                     ShapeError, SolverError, UndersampledError, UnsupportedSizeError)
from .experiments import (ConvergenceReport, InversionResult, SpectrumReport, SuperresReport,
                          convergence_experiment, energy_spectrum, invert,
                          spectrum_experiment, superres_experiment)
from .grids import GridFunction, PointCloudFunction, cloud_from_grid, resample
from .losses import (LossSpec, burgers_residual, darcy_residual, pino_loss, relative_l2)
from .model import ModelConfig, NeuralOperatorModel, init_model, model_forward
from .optim import (AdamConfig, AdamState, History, TrainConfig, adam_step,
                    finetune_instance, train_loop)
from .solvers import (BurgersSpec, DarcySpec, GrfSpec, NsSpec, sample_grf, solve_burgers,
                      solve_darcy, solve_ns_vorticity)
from .spectral import dft, idft

__version__ = "0.1.0"
