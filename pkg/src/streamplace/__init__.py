"""Quality-aware latency model and placement search for streaming operator DAGs."""

from .graph import (
    CriticalPath,
    CycleError,
    DagPath,
    PathExplosionError,
    critical_path,
    enumerate_paths,
    total_latency,
    validate_graph,
)
from .model import (
    DeviceTopology,
    EdgeLatencyBreakdown,
    EdgeNotFoundError,
    LinkCountMode,
    ModelError,
    ModelParams,
    Operator,
    OperatorGraph,
    Placement,
    ShapeError,
    ValidationReport,
    edge_latency,
    enabled_links,
    network_volume,
    objective_f,
    validate_placement,
    validate_topology,
)
from .optimizer import (
    Cap,
    DqLevel,
    DqScenario,
    Method,
    OptimizationResult,
    OptimizerConfig,
    SearchSpaceError,
    brute_force_optimize,
    evaluate_candidate,
    local_search_optimize,
    optimize_with_dq,
)

__version__ = "0.1.0"
