"""Trace-driven simulator and placement optimizer for cooperative
hierarchical caching in Cloud-RAN.

The package models a radio access network with one cloud cache at the
BBU pool and one edge cache per cell, computes delay-optimal content
placements by greedy submodular maximization, replays request traces
under online replacement policies, and reports hit ratio, average
latency, and backhaul traffic.
"""

from .model import (
    Architecture,
    CacheId,
    CachePlacement,
    CapacityError,
    Catalog,
    CostModel,
    Model,
    ModelValidationError,
    Request,
    Topology,
    validate_model,
)
from .objective import (
    PlacementEvaluator,
    ServingDecision,
    delay_saving,
    expected_cell_delay,
    marginal_gain,
    serving_cost,
    total_expected_delay,
)
from .placement import (
    InstanceTooLargeError,
    brute_force_optimal,
    cloud_only_placement,
    edge_only_placement,
    femto_x_placement,
    most_popular_placement,
    mpc_ex_placement,
    pcd_greedy,
)
from .replacement import (
    LruPolicy,
    PolicyEvent,
    RcrPolicy,
    ReplacementAction,
    StaticPolicy,
    make_policy,
)
from .sim import Metrics, SimulationResult, route_request, run_simulation
from .trace import (
    RequestTrace,
    TraceFormatError,
    estimate_popularity,
    generate_zipf_trace,
    parse_trace,
    save_trace,
    trace_from_counts,
    zipf_popularity,
)

__version__ = "0.1.0"
