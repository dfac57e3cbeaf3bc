"""Command-line front end: experiment orchestration and CSV/report emission.

Verbs:

    fadesched singlehop --config cfg.json [--out DIR] [--seed N] [--frames N]
    fadesched dp-verify --config cfg.json [--out DIR] [--tolerance X]
    fadesched multihop  --config cfg.json [--out DIR] [--seed N] [--cycles N]
    fadesched reproduce {table1,table2,multiuser} [--out DIR] [--seed N]
                        [--cycles N] [--tolerance X]

Exit codes: 0 success, 1 validation failure, 2 tolerance or feasibility
failure. All CSVs are comma-separated with '.' decimals, LF line endings, a
header row and deterministic row order; reruns with the same seed are
byte-identical.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import dp_oracle, reproduce
from .config import ConfigError, ExperimentConfig
from .multihop import (
    InfeasibleDeadlineError,
    UnreachableError,
    assign_deadlines,
    build_cycle_schedule,
    partition_independent_sets,
    path_links,
    predicted_link_power,
    route_flows_sequential,
    shortest_path,
    worst_case_delay,
    RELAY,
    SOURCE,
)
from .policy import (
    ArrivalMode,
    FRAME_START,
    PER_SLOT,
    expected_power_frame_start_random,
    expected_power_per_slot,
)
from .simulator import SimConfig, simulate_network, simulate_single_hop
from .stochastics import ModelValidationError

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_TOLERANCE = 2


def _fmt(x) -> str:
    if isinstance(x, float):
        return repr(x)
    return str(x)


def write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(header)]
    lines += [",".join(_fmt(c) for c in row) for row in rows]
    path.write_text("\n".join(lines) + "\n", newline="\n")


def _load(args) -> ExperimentConfig:
    return ExperimentConfig.from_file(args.config)


def _closed_form(cfg: ExperimentConfig, section: dict, m: int, ch) -> float:
    fs = cfg.distribution(section["frame_start_dist"], "frame_start_dist")
    if section["arrival_mode"] == FRAME_START:
        return expected_power_frame_start_random(fs, m, ch)
    a = cfg.distribution(section["per_slot_dist"], "per_slot_dist")
    return expected_power_per_slot(fs, a, m, ch)


def cmd_singlehop(args) -> int:
    cfg = _load(args)
    s = cfg.data["singlehop"]
    ch = cfg.channel(s["channel"], "singlehop.channel")
    fs = cfg.distribution(s["frame_start_dist"], "singlehop.frame_start_dist")
    per_slot = (
        cfg.distribution(s["per_slot_dist"], "singlehop.per_slot_dist")
        if s["arrival_mode"] == PER_SLOT
        else None
    )
    mode = ArrivalMode(s["arrival_mode"], fs, per_slot)
    seed = args.seed if args.seed is not None else int(s["seed"])
    n_frames = args.frames if args.frames is not None else int(s["n_frames"])
    lo, hi = (int(v) for v in s["m_range"])
    rows = []
    for m in range(lo, hi + 1):
        theory = _closed_form(cfg, s, m, ch)
        rep = simulate_single_hop(
            SimConfig(n_frames=n_frames, seed=seed, arrival_mode=mode, M=m, ch=ch)
        )
        rel = abs(rep.frame_energy - theory) / abs(theory) if theory else 0.0
        rows.append(
            (m, theory, rep.frame_energy, rel, theory / m, rep.avg_power,
             rep.violations)
        )
    write_csv(
        Path(args.out) / "singlehop.csv",
        ["M", "closed_form_frame_energy", "sim_frame_energy", "rel_err",
         "closed_form_avg_power", "sim_avg_power", "violations"],
        rows,
    )
    return EXIT_OK


def cmd_dp_verify(args) -> int:
    cfg = _load(args)
    s = cfg.data["dp_verify"]
    ch = cfg.channel(s["channel"], "dp_verify.channel")
    fs = cfg.distribution(s["frame_start_dist"], "dp_verify.frame_start_dist")
    per_slot = (
        cfg.distribution(s["per_slot_dist"], "dp_verify.per_slot_dist")
        if s["arrival_mode"] == PER_SLOT
        else None
    )
    m_max = int(s["m_max"])
    n_points = int(s.get("n_points", 4001))
    n_rate = int(s.get("n_rate_points", 4001))
    tol = args.tolerance if args.tolerance is not None else float(
        s.get("tolerance", 0.01)
    )
    a_max = per_slot.max_value if per_slot else 0.0

    def solve(mode: str, npts: int, nrate: int):
        grid = dp_oracle.DpGrid.for_frame_data(
            fs.max_value, m_max, a_max=a_max, mode=mode,
            n_points=npts, n_rate_points=nrate,
        )
        if per_slot is None:
            return dp_oracle.solve_frame_start(m_max, ch, grid, mode=mode)
        return dp_oracle.solve_per_slot(m_max, ch, per_slot, grid, mode=mode)

    try:
        interior = solve(dp_oracle.INTERIOR, n_points, n_rate)
        interior_coarse = solve(
            dp_oracle.INTERIOR, n_points // 2 + 1, n_rate // 2 + 1
        )
        feasible = solve(dp_oracle.BACKLOG, n_points, n_rate)
    except dp_oracle.GridRangeError as exc:
        print(f"dp-verify: {exc}", file=sys.stderr)
        return EXIT_VALIDATION

    def mean_value(sol, m: int) -> float:
        stage = 1 + (m_max - m)  # stage with m slots remaining
        return sum(
            p * dp_oracle.dp_value_at(sol, stage, v)
            for v, p in zip(fs.support, fs.probs)
        )

    rows = []
    worst = 0.0
    for m in range(1, m_max + 1):
        theory = _closed_form(cfg, s, m, ch)
        vi = mean_value(interior, m)
        vc = mean_value(interior_coarse, m)
        vf = mean_value(feasible, m)
        gap = abs(vi - theory) / abs(theory)
        worst = max(worst, gap)
        richardson = vi + (vi - vc) / 3.0
        rows.append(
            (m, theory, vi, gap, vf, (vf - theory) / abs(theory), richardson)
        )
    write_csv(
        Path(args.out) / "dp_verify.csv",
        ["M", "closed_form", "dp_interior", "rel_gap", "dp_feasible",
         "feasible_gap", "richardson_estimate"],
        rows,
    )
    for row in rows:
        print(
            f"M={row[0]}: closed_form={row[1]:.6g} dp={row[2]:.6g} "
            f"gap={row[3]:.3e} feasible_gap={row[5]:.3e}"
        )
    if worst > tol:
        print(
            f"dp-verify: worst relative gap {worst:.4g} exceeds tolerance {tol}",
            file=sys.stderr,
        )
        return EXIT_TOLERANCE
    return EXIT_OK


def _multihop_plan(cfg: ExperimentConfig, source_mode: str):
    """Returns (paths, link_deadlines, schedule, predicted, worst_case,
    validation_mode)."""
    s = cfg.data["multihop"]
    graph = cfg.graph()
    flows = cfg.flows()
    override = s.get("deadline_override")
    if override is not None:
        flow = flows[0]
        path = shortest_path(graph, flow.src, flow.dst)
        links = path_links(path)
        deadlines = assign_deadlines(links, flow.deadline, override=override)
        sets = partition_independent_sets(graph, links)
        counts = [deadlines[sorted(st)[0]] for st in sets]
        schedule = build_cycle_schedule(sets, counts)
        cycle = schedule.cycle_length
        predicted = {}
        for i, l in enumerate(links):
            role = SOURCE if i == 0 else RELAY
            predicted[l] = predicted_link_power(
                role, deadlines[l], cycle, [flow], graph.channel(l),
                source_mode=source_mode,
            )
        worst = {flow.id: worst_case_delay(schedule, links)}
        return (
            {flow.id: path}, deadlines, schedule, predicted, worst, "sum",
            {l: (flow.id,) for l in links}, flows, graph,
        )
    plan = route_flows_sequential(graph, flows, source_mode=source_mode)
    return (
        plan.paths, plan.link_deadlines, plan.schedule, plan.predicted_power,
        plan.worst_case, plan.deadline_validation, plan.link_flows, flows,
        graph,
    )


def cmd_multihop(args) -> int:
    cfg = _load(args)
    s = cfg.data["multihop"]
    source_mode = s.get("source_mode", "per_slot")
    try:
        (paths, deadlines, schedule, predicted, worst, validation,
         link_flows, flows, graph) = _multihop_plan(cfg, source_mode)
    except (InfeasibleDeadlineError, UnreachableError) as exc:
        print(f"multihop: infeasible: {exc}", file=sys.stderr)
        return EXIT_TOLERANCE

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report = {
        "paths": {fid: list(p) for fid, p in sorted(paths.items())},
        "link_deadlines": {str(l): d for l, d in sorted(deadlines.items())},
        "worst_case_delay": dict(sorted(worst.items())),
        "deadline_validation": validation,
        "cycle_length": schedule.cycle_length,
        "independent_sets": [
            sorted(map(list, links)) for links, _c in schedule.blocks
        ],
        "total_predicted_power": sum(predicted.values()),
    }
    (out / "multihop_plan.json").write_text(json.dumps(report, indent=2) + "\n")

    sim_stats = None
    if s.get("simulate", True):
        n_cycles = args.cycles if args.cycles is not None else int(
            s.get("n_cycles", 100_000)
        )
        seed = args.seed if args.seed is not None else int(s.get("seed", 0))
        sim_stats = simulate_network(
            graph, flows, paths, schedule, n_cycles, seed,
            source_mode=source_mode,
        ).link_stats

    rows = []
    for l in sorted(predicted):
        theory = predicted[l]
        fid = "+".join(link_flows[l])
        if sim_stats is not None:
            sim_val = sim_stats[l].frame_energy
            rel = abs(sim_val - theory) / abs(theory)
        else:
            sim_val, rel = "", ""
        rows.append((l[0], l[1], fid, deadlines[l], sim_val, theory, rel))
    write_csv(
        out / "multihop_links.csv",
        ["link_src", "link_dst", "flow", "D_i", "avg_power_sim",
         "avg_power_theory", "rel_err"],
        rows,
    )
    return EXIT_OK


def cmd_reproduce(args) -> int:
    tol = args.tolerance
    if args.target == "table1":
        rows, sim_report = reproduce.table_chain_sweep_d2(), None
    elif args.target == "table2":
        rows, sim_report = reproduce.table_chain_sweep_d1(), None
    else:
        rows, sim_report = reproduce.multiuser_rows(
            n_cycles=args.cycles, seed=args.seed
        )
    csv_rows = [
        (r.configuration, r.link[0], r.link[1], r.published, r.computed,
         r.rel_err)
        for r in rows
    ]
    write_csv(
        Path(args.out) / f"reproduce_{args.target}.csv",
        ["configuration", "link_src", "link_dst", "published", "computed",
         "rel_err"],
        csv_rows,
    )
    worst = max(r.rel_err for r in rows)
    status = EXIT_OK
    for r in rows:
        flag = "ok" if r.rel_err <= tol else "EXCEEDS"
        print(
            f"{args.target} {r.configuration} link={r.link}: "
            f"published={r.published:g} computed={r.computed:.6g} "
            f"rel_err={r.rel_err:.4f} {flag}"
        )
        if r.rel_err > tol:
            status = EXIT_TOLERANCE
    if sim_report is not None:
        for link, row in sorted(reproduce.PUBLISHED_MULTIUSER.items()):
            theory = next(r.computed for r in rows if r.link == link)
            sim_val = sim_report.link_stats[link].frame_energy
            rel = abs(sim_val - theory) / theory
            flag = "ok" if rel <= tol else "EXCEEDS"
            print(
                f"multiuser sim link={link}: sim={sim_val:.6g} "
                f"theory={theory:.6g} rel_err={rel:.4f} {flag}"
            )
            if rel > tol:
                status = EXIT_TOLERANCE
    if status != EXIT_OK:
        print(
            f"reproduce {args.target}: worst relative error {worst:.4g} "
            f"exceeds tolerance {tol}",
            file=sys.stderr,
        )
    return status


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fadesched", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    sh = sub.add_parser("singlehop", help="closed form vs simulation over M")
    sh.add_argument("--config", required=True)
    sh.add_argument("--out", default="out")
    sh.add_argument("--seed", type=int)
    sh.add_argument("--frames", type=int)
    sh.set_defaults(func=cmd_singlehop)

    dv = sub.add_parser("dp-verify", help="closed forms vs backward induction")
    dv.add_argument("--config", required=True)
    dv.add_argument("--out", default="out")
    dv.add_argument("--tolerance", type=float)
    dv.set_defaults(func=cmd_dp_verify)

    mh = sub.add_parser("multihop", help="route, schedule, predict, simulate")
    mh.add_argument("--config", required=True)
    mh.add_argument("--out", default="out")
    mh.add_argument("--seed", type=int)
    mh.add_argument("--cycles", type=int)
    mh.set_defaults(func=cmd_multihop)

    rp = sub.add_parser("reproduce", help="regenerate published reference values")
    rp.add_argument("target", choices=["table1", "table2", "multiuser"])
    rp.add_argument("--out", default="out")
    rp.add_argument("--seed", type=int, default=20240817)
    rp.add_argument("--cycles", type=int, default=100_000)
    rp.add_argument("--tolerance", type=float, default=0.05)
    rp.set_defaults(func=cmd_reproduce)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ModelValidationError) as exc:
        print(f"fadesched: invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
