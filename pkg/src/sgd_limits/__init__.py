"""Online SGD for single-index models and its effective ODE/SDE scaling limits."""

from .activation import (
    Activation,
    HermiteCoefficients,
    hermite_coeffs,
    hermite_poly,
    information_exponent,
    make_activation,
    purify,
    scalar_functionals,
)
from .analysis import (
    DeviationReport,
    ScalingTable,
    empirical_moments,
    ks_test,
    localizability_diagnostics,
    sup_deviation,
)
from .dynamics import (
    FixedPoint,
    ModelFunctions,
    OUParams,
    SummaryPoint,
    corrector,
    effective_drift,
    fixed_point,
    ode_rhs_m0,
    ou_params,
    population_drift,
    population_grad_coeffs,
    rescaled_drift_mtilde,
    volatility_sigma11,
)
from .integrators import Trajectory, euler_maruyama, euler_maruyama_ensemble, ou_moments, rk4
from .quadrature import QuadratureRule, RandomStream, default_rule, expect_1d, expect_2d, gh_rule, grid_rule, mc_expect
from .sgd import (
    EnsembleResult,
    SimConfig,
    SummaryTrajectory,
    coupled_check,
    grad_loss,
    reduced_step,
    run_ensemble,
    run_full,
    run_reduced,
    sgd_step_full,
)

__version__ = "0.1.0"
