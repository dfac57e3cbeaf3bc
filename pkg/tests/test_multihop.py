"""Routing, scheduling, deadline and link-power prediction tests."""

import math

import numpy as np
import pytest

from fadesched import (
    ChannelModel,
    DiscreteDistribution,
    Flow,
    InfeasibleDeadlineError,
    ModelValidationError,
    NetworkGraph,
    UnreachableError,
    assign_deadlines,
    build_cycle_schedule,
    compare_one_hop_vs_path,
    iid_sum,
    k_shortest_paths,
    link_cost,
    partition_independent_sets,
    path_links,
    predicted_link_power,
    route_flows_sequential,
    shortest_path,
    worst_case_delay,
)
from fadesched.multihop import MULTIPATH, ONE_HOP, RELAY, SOURCE, WINDOW_GAP
from fadesched import reproduce as rp

A123 = DiscreteDistribution.uniform([1.0, 2.0, 3.0])


def ch(*gains):
    return ChannelModel(DiscreteDistribution.uniform(list(gains)))


def test_link_cost_values():
    assert link_cost(ch(1.0)) == pytest.approx(1.0)
    assert link_cost(ch(2, 3, 4, 5)) == pytest.approx(77 / 240, rel=1e-14)
    assert link_cost(ch(0.2, 0.5, 0.8, 1.0)) == pytest.approx(2.3125, rel=1e-14)


def test_shortest_path_prefers_cheap_direct_link():
    g = NetworkGraph.from_dict({
        (1, 2): ch(10.0),          # cost 0.1
        (1, 3): ch(1.0),
        (3, 2): ch(1.0),           # detour cost 2.0
    })
    assert shortest_path(g, 1, 2) == (1, 2)


def test_shortest_path_on_reference_instances():
    g, _flow = rp.chain_instance()
    assert shortest_path(g, 1, 9) == (1, 5, 7, 9)
    g2, _flows = rp.two_flow_instance()
    assert shortest_path(g2, 1, 8) == (1, 4, 5, 7, 8)
    assert shortest_path(g2, 2, 6) == (2, 4, 5, 6)


def test_shortest_path_unreachable():
    g = NetworkGraph.from_dict({(1, 2): ch(1.0)})
    with pytest.raises(UnreachableError):
        shortest_path(g, 2, 1)


def test_k_shortest_first_equals_shortest():
    g, _ = rp.chain_instance()
    assert k_shortest_paths(g, 1, 9, 1) == [shortest_path(g, 1, 9)]


def test_k_shortest_triangle_ordering():
    g = NetworkGraph.from_dict({
        (1, 3): ch(1.0),                    # direct, cost 1
        (1, 2): ch(2.5), (2, 3): ch(2.5),   # two hops, cost 0.8
    })
    paths = k_shortest_paths(g, 1, 3, 5)
    assert paths == [(1, 2, 3), (1, 3)]


def _random_graph(rng, n_nodes):
    channels = {}
    for a in range(n_nodes):
        for b in range(n_nodes):
            if a != b and rng.random() < 0.4:
                channels[(a, b)] = ChannelModel(
                    DiscreteDistribution.point_mass(float(rng.uniform(0.2, 5.0)))
                )
    if not channels:
        channels[(0, 1)] = ChannelModel(DiscreteDistribution.point_mass(1.0))
    return NetworkGraph.from_dict(channels)


def _brute_force_paths(g, src, dst, weights):
    out = []

    def walk(path, cost):
        node = path[-1]
        if node == dst:
            out.append((cost, len(path) - 1, tuple(path)))
            return
        for (a, b), _c in g.links:
            if a == node and b not in path:
                walk(path + [b], cost + weights[(a, b)])

    walk([src], 0.0)
    return [p for _c, _h, p in sorted(out)]


def test_k_shortest_matches_brute_force_on_random_graphs():
    rng = np.random.default_rng(7)
    for _ in range(60):
        n = int(rng.integers(3, 8))
        g = _random_graph(rng, n)
        weights = {l: link_cost(c) for l, c in g.links}
        src, dst = 0, n - 1
        brute = _brute_force_paths(g, src, dst, weights)
        k = min(len(brute), 10) or 1
        assert k_shortest_paths(g, src, dst, k) == brute[:k]


def test_partition_path_alternates():
    g, _ = rp.chain_instance()
    sets = partition_independent_sets(g, [(1, 5), (5, 7), (7, 9)])
    assert sets == [frozenset({(1, 5), (7, 9)}), frozenset({(5, 7)})]


def test_partition_single_link():
    g, _ = rp.chain_instance()
    assert partition_independent_sets(g, [(1, 5)]) == [frozenset({(1, 5)})]


def test_partition_two_flow_links_three_valid_sets():
    g, _flows = rp.two_flow_instance()
    links = [(1, 4), (4, 5), (5, 7), (7, 8), (2, 4), (5, 6)]
    sets = partition_independent_sets(g, links)
    assert len(sets) == 3
    assert frozenset().union(*sets) == frozenset(links)
    for s in sets:
        nodes = [n for l in s for n in l]
        assert len(nodes) == len(set(nodes))


def test_build_cycle_schedule_shapes_and_validation():
    s = build_cycle_schedule([[(1, 2)], [(2, 3)]], [1, 1])
    assert s.cycle_length == 2
    s2 = build_cycle_schedule([[(1, 2)], [(2, 3)]], [3, 4])
    assert s2.cycle_length == 7
    assert s2.block_bounds(0) == (0, 2)
    assert s2.block_bounds(1) == (3, 6)
    assert [s2.set_at(i) for i in range(7)] == [0, 0, 0, 1, 1, 1, 1]
    with pytest.raises(ModelValidationError):
        build_cycle_schedule([[(1, 2), (2, 3)]], [1])  # node 2 twice
    with pytest.raises(ModelValidationError):
        build_cycle_schedule([[(1, 2)]], [0])


def test_worst_case_delay_reference_values():
    delays = rp.two_flow_worst_case_delays()
    assert delays == {"f1": 8, "f2": 5}
    single = build_cycle_schedule([[(1, 2)]], [1])
    assert worst_case_delay(single, [(1, 2)]) == 1
    chain = build_cycle_schedule([[(1, 5), (7, 9)], [(5, 7)]], [1, 1])
    assert worst_case_delay(chain, [(1, 5), (5, 7), (7, 9)]) == 4
    with pytest.raises(ModelValidationError):
        worst_case_delay(single, [(9, 10)])


def test_predicted_link_power_reference_cells():
    flow = Flow("f", 1, 9, A123, 10)
    low = ch(0.2, 0.5, 0.8, 1.0)
    e_a = (math.e + math.e**2 + math.e**3) / 3
    relay = predicted_link_power(RELAY, 1, 2, [flow], low)
    assert relay == pytest.approx((e_a**2 - 1) * 2.3125, rel=1e-12)
    assert relay == pytest.approx(231.9, rel=0.001)

    shared = ch(0.6, 1.2, 1.8, 2.4, 3.0)
    f2 = Flow("g", 2, 6, A123, 10)
    both = predicted_link_power(RELAY, 1, 3, [flow, f2], shared)
    assert both == pytest.approx(7.91e5, rel=0.001)

    src = predicted_link_power(SOURCE, 2, 3, [flow], ch(2, 3, 4, 5))
    assert src == pytest.approx(16.80, abs=0.01)

    with pytest.raises(ModelValidationError):
        predicted_link_power(RELAY, 4, 3, [flow], low)
    with pytest.raises(ModelValidationError):
        predicted_link_power(SOURCE, 1, 2, [], low)


def test_predicted_link_power_gap_window():
    flow = Flow("f", 1, 9, A123, 10)
    low = ch(0.2, 0.5, 0.8, 1.0)
    v = predicted_link_power(RELAY, 3, 4, [flow], low, relay_window=WINDOW_GAP)
    want = 3 * sum(
        p * math.exp(x / 3)
        for x, p in zip(iid_sum(A123, 2).support, iid_sum(A123, 2).probs)
    )
    # direct evaluation of the batched two-slot window
    from fadesched import gain_product, inv_gain_moment
    want = want * gain_product(low, 3) - 3 * inv_gain_moment(low, 1)
    assert v == pytest.approx(want, rel=1e-12)
    assert v == pytest.approx(19.1, rel=0.005)


def test_compare_one_hop_vs_path():
    # identical channels: one hop beats paying the two-set batching penalty
    # on every hop of a longer path
    c = ch(1.0)
    decision, one_hop, path_val = compare_one_hop_vs_path(c, [c, c, c], A123)
    assert decision == ONE_HOP
    assert one_hop < path_val
    # terrible direct link vs an excellent path
    good = ch(20.0)
    decision2, one2, path2 = compare_one_hop_vs_path(c, [good], A123)
    e_a = (math.e + math.e**2 + math.e**3) / 3
    assert one2 == pytest.approx((e_a - 1) * 1.0, rel=1e-12)
    assert path2 == pytest.approx((e_a**2 - 1) * 0.05, rel=1e-12)
    assert decision2 == MULTIPATH
    # exact tie goes to the path
    direct = ch(1.0)
    tie_gain = (e_a**2 - 1) / (e_a - 1)
    tie_path = [ChannelModel(DiscreteDistribution.point_mass(tie_gain))]
    decision3, a, b = compare_one_hop_vs_path(direct, tie_path, A123)
    assert a == pytest.approx(b, rel=1e-12)
    assert decision3 == MULTIPATH


def test_assign_deadlines_default_and_override():
    path = ((1, 5), (5, 7), (7, 9))
    assert assign_deadlines(path, 10) == {l: 1 for l in path}
    got = assign_deadlines(path, 10, override=(3, 4, 3))
    assert got == {(1, 5): 3, (5, 7): 4, (7, 9): 3}
    with pytest.raises(InfeasibleDeadlineError):
        assign_deadlines(path, 10, override=(4, 4, 4))  # sums to 12
    with pytest.raises(ModelValidationError):
        assign_deadlines(path, 10, override=(3, 4, 2))  # shared set disagrees
    four_hop = ((1, 2), (2, 3), (3, 4), (4, 5))
    with pytest.raises(InfeasibleDeadlineError):
        assign_deadlines(four_hop, 3)


def test_route_single_flow_reduces_to_shortest_path():
    g, flow = rp.chain_instance()
    plan = route_flows_sequential(g, [flow])
    assert plan.paths == {"f1": (1, 5, 7, 9)}
    assert plan.link_deadlines == {l: 1 for l in path_links((1, 5, 7, 9))}
    assert plan.worst_case["f1"] == 4
    assert plan.schedule.cycle_length == 2


def test_route_two_flows_reference_instance():
    g, flows = rp.two_flow_instance()
    plan = route_flows_sequential(g, list(flows))
    assert plan.paths["f1"] == (1, 4, 5, 7, 8)
    assert plan.paths["f2"] == (2, 4, 5, 6)
    assert all(plan.worst_case[f.id] <= f.deadline for f in flows)
    # all unit deadlines on a three-set cycle: the published energies apply
    for r, _ in [rp.multiuser_rows(n_cycles=0)]:
        for row in r:
            assert plan.predicted_power[row.link] == pytest.approx(
                row.published, rel=0.02
            )
    # every slot of the cycle is conflict-free
    for links, _count in plan.schedule.blocks:
        nodes = [n for l in links for n in l]
        assert len(nodes) == len(set(nodes))


def test_route_disjoint_flows_equal_independent_routing():
    g = NetworkGraph.from_dict({
        (1, 2): ch(2.0), (2, 3): ch(2.0),
        (4, 5): ch(3.0), (5, 6): ch(3.0),
    })
    f1 = Flow("a", 1, 3, A123, 10)
    f2 = Flow("b", 4, 6, A123, 10)
    plan = route_flows_sequential(g, [f1, f2])
    assert plan.paths == {"a": (1, 2, 3), "b": (4, 5, 6)}
    solo = route_flows_sequential(g, [f1])
    assert plan.paths["a"] == solo.paths["a"]


def test_cross_coupling_direction_of_sweeps():
    # raising one link's deadline lowers its own energy and raises every
    # other link's, so the sweep columns are strictly monotone
    by_link = {l: [] for l in rp.CHAIN_PATH}
    for r in rp.table_chain_sweep_d2():
        by_link[r.link].append(r.computed)
    assert all(a > b for a, b in zip(by_link[(5, 7)], by_link[(5, 7)][1:]))
    assert all(a < b for a, b in zip(by_link[(1, 5)], by_link[(1, 5)][1:]))
    assert all(a < b for a, b in zip(by_link[(7, 9)], by_link[(7, 9)][1:]))
    shared = [r.computed for r in rp.table_chain_sweep_d1() if r.link == (5, 7)]
    assert all(a < b for a, b in zip(shared, shared[1:]))


def test_route_infeasible_reports_binding_flow():
    g = NetworkGraph.from_dict({
        (1, 2): ch(1.0), (2, 3): ch(1.0), (3, 4): ch(1.0),
    })
    f = Flow("tight", 1, 4, A123, 2)  # 3 hops can never fit 2 slots
    with pytest.raises(InfeasibleDeadlineError, match="tight"):
        route_flows_sequential(g, [f])
