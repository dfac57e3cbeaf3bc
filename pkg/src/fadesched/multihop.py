"""Network model, routing, TDMA scheduling and per-link energy prediction
for multihop flows with end-to-end hard deadlines.

Planning pipeline: route each flow by Dijkstra on E[1/H] link costs (with
incremental energy pricing once links carry traffic), partition the routed
links into conflict-free independent sets, allocate consecutive slots per
set into a cycle, and check every flow's worst-case store-and-forward delay
against its deadline, falling back to successive shortest paths when a
deadline binds.
"""

from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

from .stochastics import (
    ChannelModel,
    DiscreteDistribution,
    ModelValidationError,
    convolve,
    iid_sum,
    inv_gain_moment,
)
from .policy import (
    expected_power_frame_start_random,
    expected_power_per_slot,
)

__all__ = [
    "Link",
    "NetworkGraph",
    "Flow",
    "CycleSchedule",
    "RoutePlan",
    "UnreachableError",
    "InfeasibleDeadlineError",
    "ONE_HOP",
    "MULTIPATH",
    "SOURCE",
    "RELAY",
    "WINDOW_CYCLE",
    "WINDOW_GAP",
    "link_cost",
    "shortest_path",
    "k_shortest_paths",
    "path_links",
    "partition_independent_sets",
    "build_cycle_schedule",
    "worst_case_delay",
    "predicted_link_power",
    "compare_one_hop_vs_path",
    "assign_deadlines",
    "route_flows_sequential",
]

Link = tuple[int, int]

ONE_HOP = "one_hop"
MULTIPATH = "multipath"
SOURCE = "source"
RELAY = "relay"
WINDOW_CYCLE = "cycle"
WINDOW_GAP = "gap"
SOURCE_PER_SLOT = "per_slot"
SOURCE_FRAME_START = "frame_start"


class UnreachableError(ValueError):
    """No path exists between the requested endpoints."""


class InfeasibleDeadlineError(ValueError):
    """No deadline assignment / path choice satisfies the constraint."""


@dataclass(frozen=True)
class NetworkGraph:
    """Directed graph with one fading channel per link. No self-loops."""

    links: tuple[tuple[Link, ChannelModel], ...]

    def __post_init__(self):
        seen = set()
        for (src, dst), _ch in self.links:
            if src == dst:
                raise ModelValidationError(f"self-loop on node {src}")
            if (src, dst) in seen:
                raise ModelValidationError(f"duplicate link {(src, dst)}")
            seen.add((src, dst))

    @classmethod
    def from_dict(cls, channels: dict[Link, ChannelModel]) -> "NetworkGraph":
        return cls(tuple(sorted(channels.items())))

    @property
    def channels(self) -> dict[Link, ChannelModel]:
        return dict(self.links)

    @property
    def nodes(self) -> tuple[int, ...]:
        out = set()
        for (src, dst), _ch in self.links:
            out.add(src)
            out.add(dst)
        return tuple(sorted(out))

    def neighbors(self, node: int) -> list[int]:
        return sorted(dst for (src, dst), _ in self.links if src == node)

    def channel(self, link: Link) -> ChannelModel:
        for l, ch in self.links:
            if l == link:
                return ch
        raise ModelValidationError(f"link {link} not in graph")


@dataclass(frozen=True)
class Flow:
    """One source-destination stream with its own end-to-end hard deadline."""

    id: str
    src: int
    dst: int
    arrivals: DiscreteDistribution
    deadline: int

    def __post_init__(self):
        if self.src == self.dst:
            raise ModelValidationError("flow source equals destination")
        if self.deadline < 1:
            raise ModelValidationError("flow deadline must be >= 1 slot")


@dataclass(frozen=True)
class CycleSchedule:
    """Ordered independent sets with consecutive slot blocks forming a TDMA
    cycle. Within a set no node may appear twice (half-duplex exclusivity)."""

    blocks: tuple[tuple[frozenset, int], ...]

    def __post_init__(self):
        if not self.blocks:
            raise ModelValidationError("schedule needs at least one set")
        seen_links: set[Link] = set()
        for links, count in self.blocks:
            if count < 1:
                raise ModelValidationError("every set needs at least one slot")
            _check_set_exclusive(links)
            for l in links:
                if l in seen_links:
                    raise ModelValidationError(f"link {l} scheduled in two sets")
                seen_links.add(l)

    @property
    def cycle_length(self) -> int:
        return sum(count for _links, count in self.blocks)

    @property
    def link_to_set(self) -> dict[Link, int]:
        return {
            l: i for i, (links, _count) in enumerate(self.blocks) for l in links
        }

    def block_bounds(self, set_idx: int) -> tuple[int, int]:
        """(first, last) slot offsets of the set's block within the cycle,
        0-based."""
        start = sum(c for _ls, c in self.blocks[:set_idx])
        return start, start + self.blocks[set_idx][1] - 1

    def set_at(self, offset: int) -> int:
        """Index of the set active at a 0-based slot offset in the cycle."""
        pos = offset % self.cycle_length
        for i in range(len(self.blocks)):
            lo, hi = self.block_bounds(i)
            if lo <= pos <= hi:
                return i
        raise AssertionError("unreachable")


def _check_set_exclusive(links: Iterable[Link]) -> None:
    nodes: set[int] = set()
    for src, dst in links:
        for n in (src, dst):
            if n in nodes:
                raise ModelValidationError(
                    f"node {n} appears twice in one independent set"
                )
            nodes.add(n)


@dataclass
class RoutePlan:
    """Routing/scheduling output for a set of flows."""

    paths: dict[str, tuple[int, ...]]
    link_deadlines: dict[Link, int]
    link_flows: dict[Link, tuple[str, ...]]
    predicted_power: dict[Link, float]
    worst_case: dict[str, int]
    schedule: CycleSchedule
    total_power: float
    deadline_validation: str = "worst_case"  # or "sum" for explicit overrides


def link_cost(ch: ChannelModel) -> float:
    """Routing weight of a link: E[1/H] of its effective gain."""
    return inv_gain_moment(ch, 1)


def path_links(path: Sequence[int]) -> tuple[Link, ...]:
    return tuple((path[i], path[i + 1]) for i in range(len(path) - 1))


def _dijkstra(
    g: NetworkGraph,
    src: int,
    dst: int,
    weights: dict[Link, float],
    banned_nodes: frozenset = frozenset(),
    banned_links: frozenset = frozenset(),
) -> Optional[tuple[float, tuple[int, ...]]]:
    """Deterministic Dijkstra; ties broken by fewer hops, then lexicographic
    node sequence (heap entries carry the full path tuple)."""
    if src in banned_nodes:
        return None
    adj: dict[int, list[tuple[int, float]]] = {}
    for (a, b), _ch in g.links:
        if (a, b) in banned_links or a in banned_nodes or b in banned_nodes:
            continue
        adj.setdefault(a, []).append((b, weights[(a, b)]))
    heap = [(0.0, 0, (src,))]
    best: dict[int, tuple[float, int, tuple[int, ...]]] = {}
    while heap:
        cost, hops, path = heapq.heappop(heap)
        node = path[-1]
        if node == dst:
            return cost, path
        if node in best and best[node] <= (cost, hops, path):
            continue
        best[node] = (cost, hops, path)
        for nxt, w in adj.get(node, ()):
            if nxt in path:
                continue
            heapq.heappush(heap, (cost + w, hops + 1, path + (nxt,)))
    return None


def shortest_path(
    g: NetworkGraph,
    src: int,
    dst: int,
    weights: Optional[dict[Link, float]] = None,
) -> tuple[int, ...]:
    """Min-total-cost directed path under E[1/H] costs (or explicit weights)."""
    if weights is None:
        weights = {l: link_cost(ch) for l, ch in g.links}
    if src == dst:
        return (src,)
    found = _dijkstra(g, src, dst, weights)
    if found is None:
        raise UnreachableError(f"no path from {src} to {dst}")
    return found[1]


def k_shortest_paths(
    g: NetworkGraph,
    src: int,
    dst: int,
    k: int,
    weights: Optional[dict[Link, float]] = None,
) -> list[tuple[int, ...]]:
    """First k loopless paths in nondecreasing cost order (Yen's algorithm),
    deterministic ties as in shortest_path. Returns fewer if fewer exist."""
    if k < 1:
        raise ModelValidationError("k must be >= 1")
    if weights is None:
        weights = {l: link_cost(ch) for l, ch in g.links}
    try:
        first = shortest_path(g, src, dst, weights)
    except UnreachableError:
        return []

    def cost_of(path: tuple[int, ...]) -> float:
        return math.fsum(weights[l] for l in path_links(path))

    accepted: list[tuple[int, ...]] = [first]
    candidates: list[tuple[float, int, tuple[int, ...]]] = []
    seen = {first}
    while len(accepted) < k:
        prev = accepted[-1]
        for i in range(len(prev) - 1):
            root = prev[: i + 1]
            root_cost = cost_of(root)
            banned_links = {
                path_links(p)[i]
                for p in accepted
                if len(p) > i + 1 and p[: i + 1] == root
            }
            banned_nodes = frozenset(root[:-1])
            spur = _dijkstra(
                g, root[-1], dst, weights,
                banned_nodes=banned_nodes,
                banned_links=frozenset(banned_links),
            )
            if spur is None:
                continue
            cand = root[:-1] + spur[1]
            if cand in seen:
                continue
            seen.add(cand)
            heapq.heappush(
                candidates, (root_cost + spur[0], len(cand) - 1, cand)
            )
        if not candidates:
            break
        _cost, _hops, path = heapq.heappop(candidates)
        accepted.append(path)
    return accepted


def partition_independent_sets(
    g: NetworkGraph, active_links: Sequence[Link]
) -> list[frozenset]:
    """Greedy sequential coloring of the link conflict graph (links conflict
    iff they share a node). active_links order is the coloring order; pass
    links in path position order for path-like instances, where greedy is
    exact (alternate links land in two sets)."""
    ordered: list[Link] = []
    for l in active_links:
        if l not in g.channels:
            raise ModelValidationError(f"active link {l} not in graph")
        if l not in ordered:
            ordered.append(l)
    colors: dict[Link, int] = {}
    for l in ordered:
        used = {
            colors[o]
            for o in ordered
            if o in colors and set(l) & set(o)
        }
        colors[l] = min(c for c in range(len(ordered) + 1) if c not in used)
    n_sets = max(colors.values()) + 1 if colors else 0
    return [
        frozenset(l for l in ordered if colors[l] == c) for c in range(n_sets)
    ]


def build_cycle_schedule(
    sets: Sequence[Iterable[Link]], counts: Sequence[int]
) -> CycleSchedule:
    """Cycle with counts[i] consecutive slots for sets[i], in order."""
    if len(sets) != len(counts):
        raise ModelValidationError("one slot count per set required")
    return CycleSchedule(
        tuple((frozenset(s), int(c)) for s, c in zip(sets, counts))
    )


def worst_case_delay(
    schedule: CycleSchedule, path: Sequence[Link]
) -> int:
    """Worst-case end-to-end delay of a path under the schedule, in slots,
    inclusive of the arrival slot.

    Maximizes over the arrival phase within the cycle. Data present at a
    block's first slot is forwarded by the block's last slot (store-and-
    forward frames; for single-slot blocks this is "forward everything in
    the next assigned slot"); data arriving at slot start may be served in
    the same slot.
    """
    link_set = schedule.link_to_set
    for l in path:
        if l not in link_set:
            raise ModelValidationError(f"path link {l} is not scheduled")
    cycle = schedule.cycle_length
    worst = 0
    for phase in range(1, cycle + 1):
        available = phase
        for l in path:
            lo, hi = schedule.block_bounds(link_set[l])
            # first block occurrence starting at or after `available`
            # (1-based absolute slots; block starts at lo+1 within a cycle)
            first_start = lo + 1
            if available <= first_start:
                start = first_start
            else:
                cycles_ahead = math.ceil((available - first_start) / cycle)
                start = first_start + cycles_ahead * cycle
            completion = start + (hi - lo)
            available = completion + 1
        worst = max(worst, available - phase)  # == completion - phase + 1
    return worst


def _frame_data_dist(
    flows: Sequence[Flow], window: int
) -> DiscreteDistribution:
    dist = iid_sum(flows[0].arrivals, window)
    for f in flows[1:]:
        dist = convolve(dist, iid_sum(f.arrivals, window))
    return dist


def predicted_link_power(
    role: str,
    d_i: int,
    cycle_len: int,
    flows: Sequence[Flow],
    ch: ChannelModel,
    source_mode: str = SOURCE_PER_SLOT,
    relay_window: str = WINDOW_CYCLE,
) -> float:
    """Predicted per-frame energy of one link in a TDMA cycle of length
    cycle_len, where the link owns d_i consecutive slots.

    relay: all data arrives at frame start; the batched window is one full
    cycle of arrivals per flow ("cycle", the flow-conserving default) or
    only the inter-frame gap plus the first frame slot ("gap",
    cycle_len - d_i + 1 slots).

    source with per-slot accounting (default): the frame opens with the
    gap window of arrivals and one more arrival lands in each later frame
    slot. With frame-start accounting the source batches exactly like a
    relay (arrivals during its own frame wait for the next frame).

    The value is the energy of the transmitting node per cycle; divide by
    cycle_len for the per-slot average.
    """
    if not flows:
        raise ModelValidationError("flows_on_link must be nonempty")
    if not (1 <= d_i <= cycle_len):
        raise ModelValidationError(
            f"need 1 <= D_i <= cycle length, got D_i={d_i}, L={cycle_len}"
        )
    if role == RELAY:
        window = cycle_len if relay_window == WINDOW_CYCLE else cycle_len - d_i + 1
        return expected_power_frame_start_random(
            _frame_data_dist(flows, window), d_i, ch
        )
    if role != SOURCE:
        raise ModelValidationError(f"unknown role {role!r}")
    if len(flows) != 1:
        raise ModelValidationError("a source link carries exactly one flow")
    if source_mode == SOURCE_FRAME_START:
        return expected_power_frame_start_random(
            _frame_data_dist(flows, cycle_len), d_i, ch
        )
    abar = iid_sum(flows[0].arrivals, cycle_len - d_i + 1)
    return expected_power_per_slot(abar, flows[0].arrivals, d_i, ch)


def compare_one_hop_vs_path(
    direct_ch: ChannelModel,
    path_channels: Sequence[ChannelModel],
    a_dist: DiscreteDistribution,
) -> tuple[str, float, float]:
    """Single direct hop versus a multihop path under unit deadlines on an
    alternating two-set cycle.

    Compares per-cycle energies (E[e^A] - 1) E[1/H_direct] against
    (E[e^A]^2 - 1) sum_i E[1/H_i]; returns (decision, one_hop, path) with
    the lower-energy choice, ties going to the multihop path.
    """
    from .stochastics import arrival_exp_moment

    e_a = arrival_exp_moment(a_dist, 1)
    one_hop = (e_a - 1.0) * inv_gain_moment(direct_ch, 1)
    path_val = (e_a**2 - 1.0) * math.fsum(
        inv_gain_moment(c, 1) for c in path_channels
    )
    decision = ONE_HOP if one_hop < path_val else MULTIPATH
    return decision, one_hop, path_val


def assign_deadlines(
    path: Sequence[Link],
    deadline: int,
    override: Optional[Sequence[int]] = None,
) -> dict[Link, int]:
    """Per-link deadlines for a lone path.

    Default: one slot per link (cheapest total power on paths longer than
    two hops), validated against the end-to-end deadline via the true
    worst-case delay of the alternating schedule. An explicit override is
    accepted for sweep-style analyses and validated only by sum(D_i) <= D
    and D_i >= 1; links sharing an independent set must agree on D_i.
    """
    links = list(path)
    if not links:
        raise ModelValidationError("path must be nonempty")
    if override is not None:
        if len(override) != len(links):
            raise ModelValidationError("override length must match path length")
        if any(d < 1 for d in override):
            raise ModelValidationError("every link deadline must be >= 1")
        if sum(override) > deadline:
            raise InfeasibleDeadlineError(
                f"sum of link deadlines {sum(override)} exceeds deadline {deadline}"
            )
        assignment = dict(zip(links, (int(d) for d in override)))
        # alternating sets on a path: links at even/odd positions share a block
        for parity in (0, 1):
            ds = {assignment[l] for i, l in enumerate(links) if i % 2 == parity}
            if len(ds) > 1:
                raise ModelValidationError(
                    "links sharing an independent set need equal deadlines"
                )
        return assignment
    assignment = {l: 1 for l in links}
    sets = [
        frozenset(l for i, l in enumerate(links) if i % 2 == p)
        for p in (0, 1)
        if any(i % 2 == p for i in range(len(links)))
    ]
    schedule = build_cycle_schedule(sets, [1] * len(sets))
    wc = worst_case_delay(schedule, links)
    if wc > deadline:
        raise InfeasibleDeadlineError(
            f"worst-case delay {wc} exceeds deadline {deadline}; "
            "try alternate routes via k_shortest_paths"
        )
    return assignment


def _schedule_for_paths(
    g: NetworkGraph, ordered_paths: Sequence[tuple[str, tuple[int, ...]]]
) -> CycleSchedule:
    ordered_links: list[Link] = []
    for _fid, path in ordered_paths:
        for l in path_links(path):
            if l not in ordered_links:
                ordered_links.append(l)
    sets = partition_independent_sets(g, ordered_links)
    return build_cycle_schedule(sets, [1] * len(sets))


def _incremental_weights(
    g: NetworkGraph,
    carrying: dict[Link, list[Flow]],
    new_flow: Flow,
    cycle_len: int,
) -> dict[Link, float]:
    weights = {}
    for l, ch in g.links:
        existing = carrying.get(l)
        if not existing:
            weights[l] = link_cost(ch)
        else:
            with_new = predicted_link_power(
                RELAY, 1, cycle_len, existing + [new_flow], ch
            )
            without = predicted_link_power(RELAY, 1, cycle_len, existing, ch)
            weights[l] = with_new - without
    return weights


def route_flows_sequential(
    g: NetworkGraph,
    flows: Sequence[Flow],
    k_max: int = 8,
    source_mode: str = SOURCE_PER_SLOT,
) -> RoutePlan:
    """Route multiple flows one at a time with incremental link pricing,
    schedule one slot per independent set, and enforce per-flow worst-case
    delays, advancing a violating flow through its successive shortest
    paths. All flow orderings are tried for up to 4 flows (tightest
    deadline first beyond that); the cheapest total predicted power wins.
    """
    if not flows:
        raise ModelValidationError("flows must be nonempty")
    if len(flows) <= 4:
        orderings = list(itertools.permutations(flows))
    else:
        orderings = [tuple(sorted(flows, key=lambda f: (f.deadline, f.id)))]

    best: Optional[RoutePlan] = None
    failures: list[str] = []
    for order in orderings:
        plan = _route_ordering(g, order, k_max, source_mode)
        if isinstance(plan, str):
            failures.append(plan)
            continue
        if best is None or plan.total_power < best.total_power:
            best = plan
    if best is None:
        raise InfeasibleDeadlineError(
            "no feasible plan for any flow ordering: " + "; ".join(failures)
        )
    return best


def _route_ordering(
    g: NetworkGraph,
    order: Sequence[Flow],
    k_max: int,
    source_mode: str,
):
    """One ordering: returns a RoutePlan or a failure description string."""
    path_idx = {f.id: 0 for f in order}
    for _attempt in range(k_max * len(order) + 1):
        carrying: dict[Link, list[Flow]] = {}
        chosen: list[tuple[str, tuple[int, ...]]] = []
        flow_paths: dict[str, tuple[int, ...]] = {}
        ok = True
        for f in order:
            cycle_hint = max(
                1, len(_schedule_for_paths(g, chosen).blocks) if chosen else 1
            )
            weights = _incremental_weights(g, carrying, f, cycle_hint)
            klist = k_shortest_paths(g, f.src, f.dst, k_max, weights)
            if path_idx[f.id] >= len(klist):
                return (
                    f"flow {f.id}: exhausted {len(klist)} candidate paths "
                    f"without meeting deadline {f.deadline}"
                )
            path = klist[path_idx[f.id]]
            flow_paths[f.id] = path
            chosen.append((f.id, path))
            for l in path_links(path):
                carrying.setdefault(l, []).append(f)
        schedule = _schedule_for_paths(g, chosen)
        violator = None
        worst: dict[str, int] = {}
        for f in order:
            wc = worst_case_delay(schedule, path_links(flow_paths[f.id]))
            worst[f.id] = wc
            if wc > f.deadline and violator is None:
                violator = f
        if violator is not None:
            path_idx[violator.id] += 1
            continue
        return _finalize_plan(
            g, order, flow_paths, carrying, schedule, worst, source_mode
        )
    return "path advancement did not converge"


def _finalize_plan(
    g: NetworkGraph,
    order: Sequence[Flow],
    flow_paths: dict[str, tuple[int, ...]],
    carrying: dict[Link, list[Flow]],
    schedule: CycleSchedule,
    worst: dict[str, int],
    source_mode: str,
) -> RoutePlan:
    cycle_len = schedule.cycle_length
    predicted: dict[Link, float] = {}
    link_flows: dict[Link, tuple[str, ...]] = {}
    source_links = {path_links(flow_paths[f.id])[0]: f for f in order}
    for l, fl in carrying.items():
        link_flows[l] = tuple(f.id for f in fl)
        if l in source_links and len(fl) == 1:
            predicted[l] = predicted_link_power(
                SOURCE, 1, cycle_len, fl, g.channel(l), source_mode=source_mode
            )
        else:
            predicted[l] = predicted_link_power(
                RELAY, 1, cycle_len, fl, g.channel(l)
            )
    return RoutePlan(
        paths=dict(flow_paths),
        link_deadlines={l: 1 for l in carrying},
        link_flows=link_flows,
        predicted_power=predicted,
        worst_case=worst,
        schedule=schedule,
        total_power=math.fsum(predicted.values()),
    )
