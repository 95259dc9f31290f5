"""Finite-state mean field games in weak formulation: value equations, equilibria,
likelihood ratios against the reference chain, and finite-player diagnostics."""

__version__ = "0.1.0"

from .markov import (PathBatch, PathRecord, RateMatrix, RateTable, SimplexFlow, TimeGrid,
                     build_reference_generator, forward_flow, matexp_marginal, psi_matrix,
                     psi_pinv_apply, seminorm_sq, simulate_batch, simulate_path, validate_generator)
from .measures import ControlFlow, DiscreteMeasure, pushforward_policy, w1
from .model import (ProblemSpec, check_monotonicity, hamiltonian, minimize_hamiltonian,
                    minimized_hamiltonian, spec_from_config, validate_spec)
from .hjb import PolicySurface, ValueSurface, evaluate_policy_cost, martingale_residual, solve_value
from .girsanov import importance_cost, log_likelihood, measure_consistency
from .equilibrium import (EquilibriumSolution, best_response_gap, consistency_residual,
                          picard_solve)
from .nplayer import (chaos_error, deviation_gain, kron_generator, kron_psi_identity,
                      simulate_nplayer)

__all__ = [
    "PathBatch", "PathRecord", "RateMatrix", "RateTable", "SimplexFlow", "TimeGrid",
    "build_reference_generator", "forward_flow", "matexp_marginal", "psi_matrix",
    "psi_pinv_apply", "seminorm_sq", "simulate_batch", "simulate_path", "validate_generator",
    "ControlFlow", "DiscreteMeasure", "pushforward_policy", "w1",
    "ProblemSpec", "check_monotonicity", "hamiltonian", "minimize_hamiltonian",
    "minimized_hamiltonian", "spec_from_config", "validate_spec",
    "PolicySurface", "ValueSurface", "evaluate_policy_cost", "martingale_residual", "solve_value",
    "importance_cost", "log_likelihood", "measure_consistency",
    "EquilibriumSolution", "best_response_gap", "consistency_residual", "picard_solve",
    "chaos_error", "deviation_gain", "kron_generator", "kron_psi_identity", "simulate_nplayer",
]
