"""Capacitated clustering of terminals to base stations with power diagrams."""
from ._backend import BACKEND
from .geom import (
    Edge,
    PowerDiagram,
    SimilarityTransform,
    build_power_diagram,
    cell_area,
    clip_convex_polygon,
    normalize_to_unit_domain,
    regular_polygon,
)
from .kinetic import Scenario, SnapshotResult, Trajectory, count_changes, kinetic_solve, snapshot_at
from .oracle import brute_force_enumerate, exact_assignment
from .transport import (
    Assignment,
    SolverConfig,
    SolveResult,
    SolveTrace,
    assign,
    solve,
    transport_cost,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "Scenario",
    "SnapshotResult",
    "Trajectory",
    "brute_force_enumerate",
    "count_changes",
    "exact_assignment",
    "kinetic_solve",
    "snapshot_at",
    "Assignment",
    "Edge",
    "PowerDiagram",
    "SimilarityTransform",
    "SolveResult",
    "SolveTrace",
    "SolverConfig",
    "assign",
    "build_power_diagram",
    "cell_area",
    "clip_convex_polygon",
    "normalize_to_unit_domain",
    "regular_polygon",
    "solve",
    "transport_cost",
]
