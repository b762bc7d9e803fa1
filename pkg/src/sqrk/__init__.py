"""Quantile-screened randomized Kaczmarz solvers for sparsely corrupted systems."""

from .errors import (EmptyAcceptedSetError, EmptySampleError, NonConvergenceError, NumericalError,
                     QuantileConditionViolated, QuantileIndexZeroError, SamplingConditionViolated,
                     SqrkError, ZeroRowError)
from .linalg import (make_rng, residual, row_normalize, sample_without_replacement, sigma_max,
                     sigma_min_rows)
from .problems import CorruptedSystem, GenSpec, corrupt, gen_gaussian_system, load_system, save_system
from .quantile import q_quantile, threshold_set
from .solvers import (IterateTrace, SolverConfig, classify_event, project, rk_step, solve,
                      sqrk_step, ssqrk_step)
from .theory import (RateParams, RateReport, estimate_sigma_aqb_min, estimate_sigma_from_trace,
                     hypothesis_heatmap, rate_r, rate_rC, rate_rC_tilde, rate_rG)

__version__ = "0.1.0"
