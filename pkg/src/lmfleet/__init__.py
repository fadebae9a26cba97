"""Fleet sizing and trip scheduling for last-mile feeder services under demand uncertainty."""

from .domain import (
    CostBreakdown,
    CostParams,
    DemandScenario,
    FirstStageSolution,
    Instance,
    RegionSpec,
    RouteSpec,
    SecondStagePlan,
    first_stage_from_trips,
    second_stage_cost,
    validate_instance,
    vehicle_availability,
)
from .dr import AmbiguityInfo, AmbiguityWarning, DrOptions, DrResult, RhoMode, solve_dr
from .errors import SolveFailed
from .estimators import AmbiguityEstimator, DrFleetPlanner, SaaFleetPlanner, check_demand_matrix
from .harness import EvaluationReport, McoReport, PlanConfig, SweepGrid, evaluate, mco_gap, sensitivity_sweep
from .instances import InstanceSpec, generate_instance, preset_instance, tiny_instance
from .recourse import (
    DynamicRecourseEvaluator,
    FixedRecourseEvaluator,
    dual_certificate,
    solve_recourse_dynamic,
    solve_recourse_fixed,
)
from .scenarios import DemandSpec, calibrate_costs, draw_means, estimate_ambiguity, gen_scenarios, misspecified_set
from .sp import SaaOptions, SpResult, solve_sp

__version__ = "0.1.0"

__all__ = [
    "AmbiguityEstimator",
    "AmbiguityInfo",
    "AmbiguityWarning",
    "CostBreakdown",
    "CostParams",
    "DemandScenario",
    "DemandSpec",
    "DrFleetPlanner",
    "DrOptions",
    "DrResult",
    "DynamicRecourseEvaluator",
    "EvaluationReport",
    "FirstStageSolution",
    "FixedRecourseEvaluator",
    "Instance",
    "InstanceSpec",
    "McoReport",
    "PlanConfig",
    "RegionSpec",
    "RhoMode",
    "RouteSpec",
    "SaaFleetPlanner",
    "SaaOptions",
    "SecondStagePlan",
    "SolveFailed",
    "SpResult",
    "SweepGrid",
    "calibrate_costs",
    "check_demand_matrix",
    "draw_means",
    "dual_certificate",
    "estimate_ambiguity",
    "evaluate",
    "first_stage_from_trips",
    "gen_scenarios",
    "generate_instance",
    "mco_gap",
    "misspecified_set",
    "preset_instance",
    "second_stage_cost",
    "sensitivity_sweep",
    "solve_dr",
    "solve_recourse_dynamic",
    "solve_recourse_fixed",
    "solve_sp",
    "tiny_instance",
    "validate_instance",
    "vehicle_availability",
]
