"""Dynamic Lagrange multipliers for non-concave, discontinuous utility maximisation.

The package builds the conjugate package of a piecewise utility, evaluates the
budget map and value function by kernel quadrature, and simulates the optimal
wealth and feedback portfolio in a complete Black-Scholes market.
"""

from .duality import DomainSpec, DualField, IdentityReport, verify_identities
from .errors import (ConsistencyError, ConsistencyWarning, DomainError, EnvelopeError,
                     MarketError, QuadratureAccuracyError, RangeError, UtilityError)
from .market import KernelPath, MarketModel, sample_kernel_paths
from .portfolio import (EulerReport, PathBatch, PathGrid, budget_martingale,
                        euler_replication_check, feedback_policy, feedback_policy_batch,
                        homogeneity_error, optimal_wealth, simulate, simulate_batch,
                        terminal_wealth)
from .quadrature import ExpectationRequest, expect, expect_batch, expect_with_info, set_rel_tol
from .utility import (EnvelopeBundle, PiecewiseUtility, Segment, build_envelope, eval_utility,
                      example_utility, from_segments, log_utility, reward_jump_utility,
                      validate_assumptions)

__all__ = [
    "ConsistencyError", "ConsistencyWarning", "DomainError", "DomainSpec", "DualField",
    "EnvelopeBundle", "EnvelopeError", "EulerReport", "ExpectationRequest", "IdentityReport",
    "KernelPath", "MarketError", "MarketModel", "PathBatch", "PathGrid", "PiecewiseUtility",
    "QuadratureAccuracyError", "RangeError", "Segment", "UtilityError", "budget_martingale",
    "build_envelope", "eval_utility", "euler_replication_check", "example_utility", "expect",
    "expect_batch", "expect_with_info", "feedback_policy", "feedback_policy_batch",
    "from_segments", "homogeneity_error", "log_utility", "optimal_wealth",
    "reward_jump_utility", "sample_kernel_paths", "set_rel_tol", "simulate", "simulate_batch",
    "terminal_wealth", "validate_assumptions", "verify_identities",
]
