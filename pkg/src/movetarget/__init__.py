"""Open-loop equilibrium portfolio controls with a moving wealth target.

Library layout:
  market  — coefficient curves, market model, quadrature
  coeffs  — coefficient systems, multiplier search, gains, adjoints
  sim     — seeded Monte Carlo of the wealth SDE, Girsanov weights
  verify  — spike-variation and adjoint-limit equilibrium tests
  cli     — `movetarget` command line front end
"""

from .coeffs import (
    AdjointEvaluator,
    CoefficientCurves,
    EquilibriumResidual,
    FeedbackControl,
    Utility,
    equilibrium_residual,
    feedback_control,
    find_lambda_star,
    necessary_condition_cubic,
    particular_solution_cubic,
    solve_cubic_coeffs,
    solve_quadratic_coeffs,
    solve_quartic_coeffs,
)
from .market import Curve, MarketModel, build_market, integrate
from .sim import (
    Measure,
    PathEnsemble,
    Scheme,
    SimulationConfig,
    conditional_target_error,
    girsanov_weights,
    simulate_wealth,
)
from .verify import (
    EquilibriumReport,
    PerturbationSpec,
    adjoint_limit_test,
    negative_part_condition,
    run_verification,
    second_order_sign_test,
    spike_perturbation_test,
)

__version__ = "0.1.0"

__all__ = [
    "AdjointEvaluator",
    "CoefficientCurves",
    "Curve",
    "EquilibriumReport",
    "EquilibriumResidual",
    "FeedbackControl",
    "MarketModel",
    "Measure",
    "PathEnsemble",
    "PerturbationSpec",
    "Scheme",
    "SimulationConfig",
    "Utility",
    "adjoint_limit_test",
    "build_market",
    "conditional_target_error",
    "equilibrium_residual",
    "feedback_control",
    "find_lambda_star",
    "girsanov_weights",
    "integrate",
    "necessary_condition_cubic",
    "negative_part_condition",
    "particular_solution_cubic",
    "run_verification",
    "second_order_sign_test",
    "simulate_wealth",
    "solve_cubic_coeffs",
    "solve_quadratic_coeffs",
    "solve_quartic_coeffs",
    "spike_perturbation_test",
]
