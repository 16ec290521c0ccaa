"""Minimum-cost decomposition of 3-D rotations about two fixed axes."""

from .config import AxisConfig, Control, Regime, Tag, control_cost, make_config, segment_rotation
from .oracle import OracleBudgetError, OracleResult, graph_search, word_descent
from .patterns import Orbit, Pattern, Slot, SubwordShape, SymmetryElement, apply_symmetry, catalog, enumerate_subwords
from .pmp import AdjointState, CheckReport, SwitchEvent, adjoint_flow, check_plan, region_control, switch_time_relation
from .rotations import Quat, ad_matrix, flip_word, is_pi_rotation, quat_distance, quat_exp, quat_mul, rot_axis_angle, su2_to_so3
from .solver import Plan, PlannerError, PlanSegment, SolveReport, plan, plan_cost_curve, solve_all, solve_shape, word_quat

__all__ = [
    "AxisConfig", "Control", "Regime", "Tag", "control_cost", "make_config",
    "segment_rotation", "OracleBudgetError", "OracleResult", "graph_search",
    "word_descent", "Orbit", "Pattern", "Slot", "SubwordShape",
    "SymmetryElement", "apply_symmetry", "catalog", "enumerate_subwords",
    "AdjointState", "CheckReport", "SwitchEvent", "adjoint_flow", "check_plan",
    "region_control", "switch_time_relation", "Quat", "ad_matrix", "flip_word",
    "is_pi_rotation", "quat_distance", "quat_exp", "quat_mul",
    "rot_axis_angle", "su2_to_so3", "Plan", "PlannerError", "PlanSegment",
    "SolveReport", "plan", "plan_cost_curve", "solve_all", "solve_shape",
    "word_quat",
]

__version__ = "0.1.0"
