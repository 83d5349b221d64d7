"""Frequency-enhanced spatio-temporal loss, transforms and forecasting harness."""

from .analysis import (CorrelationReport, GaussianFactorization, ar1_covariance,
                       decorrelation_table, estimate_df_bias, expected_df_bias,
                       gaussian_factorize, mean_offdiag_abs_correlation)
from .exceptions import (ConvergenceError, DecompositionError, FrestError,
                         InsufficientSamplesError, InvalidInputError, InvalidParameterError,
                         ParseError, TrainingError, TransformStateError)
from .graph import (Graph, GraphSpectrum, build_gaussian_kernel_graph, eigendecompose,
                    haversine_distance, laplacian, random_geometric_graph)
from .loss import LossConfig, LossEvaluation, frest_loss, l_time, spectral_l1
from .model import (LinearForecaster, OptimizerConfig, TrainReport, ablation_table,
                    alpha_sweep, split_windows, train)
from .rng import make_rng
from .synth import SynthSpec, diffusion_benchmark, generate
from .transforms import (SpectralSignal, SpectralTransformer, fft_time, gft_space, ifft_time,
                         igft_space, ijft, jft)

__version__ = "0.1.0"
