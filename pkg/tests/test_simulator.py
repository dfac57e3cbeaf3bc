"""Monte Carlo simulator tests. Unit runs use reduced frame/cycle counts;
the acceptance module repeats the headline comparisons at full size."""

import dataclasses
import math

import pytest

from fadesched import (
    ArrivalMode,
    ChannelModel,
    DiscreteDistribution,
    DpGrid,
    SimConfig,
    build_cycle_schedule,
    dp_value_at,
    expected_power_frame_start_random,
    expected_power_per_slot,
    simulate_network,
    simulate_single_hop,
    solve_per_slot,
)
from fadesched.policy import FRAME_START, PER_SLOT
from fadesched.stochastics import ModelValidationError
from fadesched import reproduce as rp

A3 = DiscreteDistribution.uniform([0.5, 1.0, 1.5])
H3 = ChannelModel(DiscreteDistribution.uniform([0.25, 0.37, 0.5, 0.62]))
A4 = DiscreteDistribution.uniform([2.0, 2.5, 3.0])
H4 = ChannelModel(DiscreteDistribution.uniform([0.5, 0.75, 1.0, 1.25]))


def test_zero_arrivals_zero_power():
    zero = DiscreteDistribution.point_mass(0.0)
    rep = simulate_single_hop(
        SimConfig(5000, 1, ArrivalMode(FRAME_START, zero), 3, H3)
    )
    assert rep.avg_power == 0.0
    assert rep.violations == 0


def test_frame_start_m1_matches_closed_form():
    rep = simulate_single_hop(
        SimConfig(200_000, 20240817, ArrivalMode(FRAME_START, A3), 1, H3)
    )
    theory = expected_power_frame_start_random(A3, 1, H3)
    assert rep.frame_energy == pytest.approx(theory, rel=0.01)
    assert rep.violations == 0


def test_per_slot_matches_feasible_dp_value():
    # the simulated (clamped) policy tracks the feasible-rate optimum; the
    # closed form is the interior relaxation and sits a few percent below
    # on this configuration
    m = 3
    rep = simulate_single_hop(
        SimConfig(300_000, 20240817, ArrivalMode(PER_SLOT, A4, A4), m, H4)
    )
    grid = DpGrid.for_frame_data(3.0, m, a_max=3.0, n_points=1501, n_rate_points=1501)
    sol = solve_per_slot(m, H4, A4, grid)
    dp_val = sum(
        p * dp_value_at(sol, 1, v) for v, p in zip(A4.support, A4.probs)
    )
    assert rep.frame_energy == pytest.approx(dp_val, rel=0.01)
    closed = expected_power_per_slot(A4, A4, m, H4)
    assert (rep.frame_energy - closed) / closed > 0.01  # documented gap
    assert rep.violations == 0


def test_seed_determinism_bit_identical():
    cfg = SimConfig(50_000, 99, ArrivalMode(PER_SLOT, A4, A4), 4, H4,
                    collect_trace=True)
    a = simulate_single_hop(cfg)
    b = simulate_single_hop(cfg)
    assert a == b
    c = simulate_single_hop(dataclasses.replace(cfg, seed=100))
    assert a != c


def test_trace_sums_to_frame_energy():
    cfg = SimConfig(20_000, 5, ArrivalMode(FRAME_START, A3), 4, H3,
                    collect_trace=True)
    rep = simulate_single_hop(cfg)
    assert len(rep.per_slot_power_trace) == 4
    assert math.fsum(rep.per_slot_power_trace) == pytest.approx(
        rep.frame_energy, rel=1e-12
    )


def _two_flow_sim(n_cycles=20_000, seed=20240817):
    g, flows = rp.two_flow_instance()
    return simulate_network(
        g, list(flows), rp.TWO_FLOW_PATHS, rp.two_flow_schedule(),
        n_cycles, seed,
    )


def test_network_two_flows_theory_agreement():
    net = _two_flow_sim()
    rows, _ = rp.multiuser_rows(n_cycles=0)
    for r in rows:
        st = net.link_stats[r.link]
        assert st.violations == 0
        assert st.frame_energy == pytest.approx(r.computed, rel=0.04)


def test_network_conservation():
    net = _two_flow_sim(n_cycles=5_000)
    assert net.mass_balance_error <= 1e-9
    for fid in ("f1", "f2"):
        lag = net.conservation_lag(fid)
        assert lag == 1


def test_network_chain_split_batch_sources():
    g, flow = rp.chain_instance()
    sched = build_cycle_schedule([[(1, 5), (7, 9)], [(5, 7)]], [3, 4])
    net = simulate_network(
        g, [flow], {"f1": (1, 5, 7, 9)}, sched, 20_000, 3,
        source_mode="frame_start",
    )
    for link, want in zip(((1, 5), (5, 7), (7, 9)), rp.chain_split_powers(3, 4)):
        st = net.link_stats[link]
        assert st.frame_energy == pytest.approx(want, rel=0.02)
        assert st.violations == 0


def test_adding_flow_leaves_other_flows_draws_alone():
    g, flows = rp.two_flow_instance()
    alone = simulate_network(
        g, [flows[0]], {"f1": rp.TWO_FLOW_PATHS["f1"]},
        rp.two_flow_schedule(), 3_000, 7,
    )
    both = simulate_network(
        g, list(flows), rp.TWO_FLOW_PATHS, rp.two_flow_schedule(), 3_000, 7,
    )
    # f1's source link sees only f1 arrivals and its own gain stream, so its
    # measured energy is unchanged by adding f2
    assert alone.link_stats[(1, 4)].frame_energy == pytest.approx(
        both.link_stats[(1, 4)].frame_energy, rel=1e-12
    )
    assert alone.injected_per_cycle["f1"] == both.injected_per_cycle["f1"]


def test_network_validation_errors():
    g, flows = rp.two_flow_instance()
    sched = build_cycle_schedule([[(1, 4)]], [1])  # misses most routed links
    with pytest.raises(ModelValidationError):
        simulate_network(g, list(flows), rp.TWO_FLOW_PATHS, sched, 100, 1)
    with pytest.raises(ModelValidationError):
        simulate_network(
            g, list(flows), rp.TWO_FLOW_PATHS, rp.two_flow_schedule(), 5, 1,
            warmup_cycles=10,
        )
