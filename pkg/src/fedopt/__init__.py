"""Federated optimization simulator for L2-regularized linear predictors.

Data lives in :class:`Dataset` (CSR rows, labels, loss, lambda), is split
over simulated nodes by a :class:`Partition`, and is optimized round by
round with GD, SVRG, DANE, naive FSVRG, FSVRG or the ridge primal/dual
methods. :func:`run_experiment` drives a run and records a :class:`Trace`.
"""
from .algorithms import (CostModel, CostVariant, DaneConfig, ExactQuadratic, FsvrgConfig,
                         RoundState, Sampling, SvrgConfig, SvrgInner, cost_model_time, dane_round,
                         fsvrg_round, gd_round, naive_fsvrg_round, smoothness_estimate, svrg_run)
from .duality import (DualConfig, DualState, PrimalMethodState, check_equivalence, dual_method_round,
                      dual_objective, duality_gap, estimate_sigma, primal_from_dual,
                      primal_method_init, primal_method_round)
from .errors import DomainError, NumericalError, SearchError, SvmlightParseError, UnsupportedOperation
from .harness import (ExperimentConfig, SyntheticSpec, Trace, TraceRecord, benchmark_spec,
                      default_grid, generate_synthetic, grid_search_stepsize, oracle_solve, planted_weights,
                      run_experiment, small_benchmark_spec)
from .io import load_svmlight, parse_svmlight, write_svmlight, write_trace, write_traces
from .kernels import BACKEND
from .model import (Dataset, LossKind, ProblemView, SparseVector, classification_error,
                    full_gradient, hessian_vector, loss_conjugate, loss_derivative, loss_value,
                    objective, point_gradient)
from .partition import (Partition, PartitionKind, PartitionSpec, SparsityStats, compute_stats,
                        make_partition, partition_reshuffled, power_law_sizes, read_partition,
                        write_partition)

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
