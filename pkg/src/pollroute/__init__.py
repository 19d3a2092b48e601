"""Customer routing in a two-queue exhaustive polling system.

Static (no / partial information) policies in closed form, individually and
socially optimal complete-information policies on a truncated grid, the
optimal fluid policy, and a regenerative simulator to check them all.
"""
__version__ = "0.1.0"

from .model import (Action, DecisionTable, GridExhausted, InvalidState, ModelError, ModelParams,
                    NotConverged, NotThreshold, ParameterError, SplitProbability, State,
                    SwitchingCurve, curve_from_table)
from .static import (classify_no_info_nash, classify_no_info_social, classify_partial_nash,
                     classify_partial_social, no_info_cost, no_info_means, partial_info_costs,
                     partial_info_means)
from .equilibrium import solve_equilibrium, tau_policy_eval, verify_structure
from .social import alpha_coefficient, average_cost_of_policy, social_solve, value_iteration
from .fluid import fluid_policy_simulate, lqr_trajectory, normalize_initial_state, optimal_coefficients
from .simulator import (Curve, NoInfoSplit, PartialSplit, SimConfig, Table, compare_policies,
                        simulate)
