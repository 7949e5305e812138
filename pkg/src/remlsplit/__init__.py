"""REML variance-parameter estimation for linear mixed models.

Newton-type solvers built on observed, Fisher or average information, with
the splitting ``(observed + fisher)/2 = average + remainder`` exposed and
checkable.
"""

__version__ = "0.1.0"

from ._kernels import BACKEND
from .information import (
    InfoMatrix,
    all_information,
    average_information,
    check_splitting,
    fisher_information,
    observed_information,
    splitting_remainder,
)
from .likelihood import fd_hessian, fd_score, profile_sigma2, reml_loglik, score
from .model import (
    CovarianceModel,
    Dataset,
    ThetaVector,
    ar1_residual,
    composite,
    cov_grad,
    cov_hess,
    cov_matrix,
    indicator_matrix,
    validate_params,
    variance_components,
)
from .projection import (
    apply_P,
    apply_P_via_mme,
    build_projection,
    solve_mme,
    trace_P_times,
    trace_PA_PB,
)
from .simulate import SimSpec, monte_carlo_information, sample_dataset
from .solver import FitResult, SolverConfig, default_theta0, fit, newton_step, standard_errors
