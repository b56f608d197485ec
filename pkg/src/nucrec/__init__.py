"""Nuclear-norm regularized estimation of low-rank matrices.

Modules: matcore (matrix primitives and the singular-value shrinkage
prox), models (ground truths, observation operators, samplers), solver
(accelerated proximal gradient), regsel (regularization-weight rules),
analysis (error decomposition, bounds, Monte-Carlo checks), harness
(experiment sweeps, CSV/plot emission, CLI).
"""

from .analysis import (ErrorDecomposition, RestrictedSetParams, RscReport,
                       check_gaussian_lower_bound, check_gaussian_norm_concentration,
                       check_var_spectrum, check_wishart_spectrum, decompose_error,
                       empirical_vs_bound, in_restricted_set, near_lowrank_error_bound,
                       recovery_error_bound)
from .harness import (ExperimentConfig, TrialRecord, collapse_metric, derive_seed,
                      emit_csv, emit_plot, load_config, read_csv, run_experiment)
from .matcore import (SVDFactors, SubspacePair, composed_operator_norm,
                      frobenius_norm, nuclear_norm, operator_norm,
                      singular_values, svd, svt, svt_with_values)
from .models import (GroundTruth, LinearMatrixOperator, ObservationSet, VarParams,
                     generate_exact_lowrank, generate_near_lowrank, identity_operator,
                     load_observations, make_var_params, multivar_operator,
                     sample_compressed, sample_multivar, sample_var,
                     save_observations, solve_lyapunov)
from .regsel import (LambdaChoice, lambda_compressed, lambda_generic, lambda_manual,
                     lambda_multivar, lambda_var)
from .solver import (SolveResult, SolverConfig, SolverDivergenceError, solve,
                     solve_noiseless)

__version__ = "0.1.0"
