"""Double-layer fixed point methods for convex feasibility problems.

Outer block controls offer subsets of constraints, inner controls choose
among them by proximity, and the iterate moves to a relaxed weighted
average of cutter images.
"""
from .controls import (FlagState, InnerStrategy, OuterSchedule, inner_select, next_block_lopping,
                       outer_block, verify_argmax_condition, verify_intermittent)
from .errors import (ControlInvariantError, FeasibilityError, InsufficientDataError, InvalidControlError,
                     InvalidParameterError, InvalidProblemError, InvalidSetError, InvalidWitnessError,
                     OracleContractError, OracleFailureError)
from .rates import (RegularityConstants, RateReport, error_bound, estimate_kappa, fit_empirical_rate,
                    linear_report, q_general, q_method, rate_report)
from .sets import (Ball, CutterFamily, CutterSpec, HalfSpace, Hyperplane, LinearFamily, StackedFamily,
                   SublevelSet, cutter, cutter_from_averaged, distance_oracle, generic_cutter, nearest_point,
                   project_ball, project_halfspace, project_hyperplane, proximity, quadratic_sublevel, relax,
                   subgradient_project)
from .solver import IterateTrace, SolverConfig, fejer_check, run, run_lopping, step

__version__ = "0.1.0"
