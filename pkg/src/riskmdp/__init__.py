"""Risk-sensitive (exponential utility) CTMDP / PDMDP solvers."""

from .extreal import INF, ExtReal, no_jump_term, xdiv, xmul
from .model import (CtmdpModel, ModelDoc, TerminalCost, TimeVaryingModel, augment_discounted,
                    augment_finite_horizon, validate_model)
from .embedded import ValueTable, bellman_apply, bellman_apply_policy, sojourn_value
from .stationary import (IterationTrace, StationaryPolicy, classify_states, evaluate_policy,
                         extract_policy, residual, value_iteration)

__version__ = "0.1.0"

__all__ = [
    "INF", "ExtReal", "no_jump_term", "xdiv", "xmul",
    "CtmdpModel", "ModelDoc", "TerminalCost", "TimeVaryingModel", "augment_discounted",
    "augment_finite_horizon", "validate_model",
    "ValueTable", "bellman_apply", "bellman_apply_policy", "sojourn_value",
    "IterationTrace", "StationaryPolicy", "classify_states", "evaluate_policy",
    "extract_policy", "residual", "value_iteration",
]
