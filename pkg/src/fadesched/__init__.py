"""Energy-optimal transmission scheduling with hard per-frame deadlines over
fading links, plus multihop routing, TDMA cycle planning and verification
oracles."""

from .stochastics import (
    ChannelModel,
    DiscreteDistribution,
    ModelValidationError,
    arrival_exp_moment,
    convolve,
    gain_product,
    iid_sum,
    inv_gain_moment,
    sample,
)
from .policy import (
    ArrivalMode,
    FRAME_START,
    PER_SLOT,
    FrameState,
    expected_power_frame_start,
    expected_power_frame_start_random,
    expected_power_per_slot,
    optimal_rate_frame_start,
    optimal_rate_per_slot,
    power_for_rate,
)
from .dp_oracle import (
    BACKLOG,
    INTERIOR,
    DpGrid,
    DpSolution,
    GridRangeError,
    dp_policy_at,
    dp_value_at,
    solve_frame_start,
    solve_per_slot,
)
from .simulator import (
    NetworkSimReport,
    SimConfig,
    SimReport,
    simulate_network,
    simulate_single_hop,
)
from .multihop import (
    CycleSchedule,
    Flow,
    InfeasibleDeadlineError,
    NetworkGraph,
    RoutePlan,
    UnreachableError,
    assign_deadlines,
    build_cycle_schedule,
    compare_one_hop_vs_path,
    k_shortest_paths,
    link_cost,
    partition_independent_sets,
    path_links,
    predicted_link_power,
    route_flows_sequential,
    shortest_path,
    worst_case_delay,
)

__version__ = "0.1.0"
