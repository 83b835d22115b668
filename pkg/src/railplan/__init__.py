"""Freight rail electrification planning.

Expands a physical rail network into diesel/electric twin arcs joined by yard
switching, prices traction from train physics, solves the congestion
equilibrium, and searches corridor electrification designs under a capital
budget.
"""

from .corridors import Corridor, candidate_corridors, corridor_cost
from .costmodel import (
    ElectrificationRates,
    LinkCostProfile,
    LinkImpassableError,
    RateTable,
    ThrottleTable,
    TractionProfile,
    TrainConsist,
    build_link_profile,
    build_profiles,
    build_throttles,
    electrification_cost,
    electrification_costs,
    solve_power_speed,
    switching_cost_per_ton,
    yard_switch_costs,
)
from .design import (
    DesignProblem,
    DesignVector,
    EvaluatedDesign,
    GAConfig,
    brute_force,
    evolve,
    fitness,
    repair,
    seed_population,
)
from .equilibrium import (
    BushSolver,
    FlowState,
    GapMetrics,
    InfeasibleAssignmentError,
    ODMatrix,
    jacobian,
    msa_reference,
    relative_gap,
    solve_equilibrium,
)
from .network import (
    ArcKind,
    ExpandedArc,
    ExpandedNetwork,
    Node,
    PhysicalLink,
    RailNetwork,
    SignalClass,
    apply_design,
    compute_alpha,
    expand,
    haversine_km,
)
from .scenario_io import (
    RunReport,
    Scenario,
    ValidationError,
    assemble,
    emit_geojson,
    load_scenario,
    optimize_run,
    sweep,
    validate_geojson,
)

__version__ = "0.1.0"

__all__ = [
    "ArcKind",
    "BushSolver",
    "Corridor",
    "DesignProblem",
    "DesignVector",
    "ElectrificationRates",
    "EvaluatedDesign",
    "ExpandedArc",
    "ExpandedNetwork",
    "FlowState",
    "GAConfig",
    "GapMetrics",
    "InfeasibleAssignmentError",
    "LinkCostProfile",
    "LinkImpassableError",
    "Node",
    "ODMatrix",
    "PhysicalLink",
    "RailNetwork",
    "RateTable",
    "RunReport",
    "Scenario",
    "SignalClass",
    "ThrottleTable",
    "TractionProfile",
    "TrainConsist",
    "ValidationError",
    "apply_design",
    "assemble",
    "brute_force",
    "build_link_profile",
    "build_profiles",
    "build_throttles",
    "candidate_corridors",
    "compute_alpha",
    "corridor_cost",
    "electrification_cost",
    "electrification_costs",
    "emit_geojson",
    "evolve",
    "expand",
    "fitness",
    "haversine_km",
    "jacobian",
    "load_scenario",
    "msa_reference",
    "optimize_run",
    "relative_gap",
    "repair",
    "seed_population",
    "solve_equilibrium",
    "solve_power_speed",
    "sweep",
    "switching_cost_per_ton",
    "validate_geojson",
    "yard_switch_costs",
]
