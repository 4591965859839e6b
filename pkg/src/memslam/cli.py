"""Command line entry points: simulate, compare-reduction, export-graph."""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

from .config import Config, load_config
from .grid import assemble_grid, write_pgm
from .ltm_store import LtmStore
from .planners import plan_topological
from .pose_graph import export_graph_text, global_map
from .simulator import load_world, run_scenario

EXIT_OK = 0
EXIT_SCENARIO = 1
EXIT_USAGE = 2


def _load_inputs(args) -> tuple:
    try:
        world = load_world(args.world)
    except (OSError, ValueError) as exc:
        print(f"error: cannot load world: {exc}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)
    try:
        cfg = load_config(args.config) if args.config else Config()
    except (OSError, ValueError) as exc:
        print(f"error: cannot load config: {exc}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)
    return world, cfg


def _apply_flags(cfg: Config, args) -> Config:
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "no_reduction", False):
        cfg.enable_reduction = False
    if getattr(args, "no_proximity", False):
        cfg.enable_proximity = False
    return cfg


def _write_outputs(out_dir: Path, system, report) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.csv").write_text(report.csv_text())

    system.flush_to_store()
    nodes = []
    for nid in sorted(system.graph.nodes):
        n = system.graph.nodes[nid]
        nodes.append((n.id, n.session, n.weight, n.opt_pose))
    for nid in sorted(system.state.ltm):
        n = system.store.get_node(nid)
        nodes.append((n.id, n.session, n.weight, n.odom_pose))
    nodes.sort(key=lambda item: item[0])
    links = {l.key(): l for l in system.store.all_links()}
    links.update({l.key(): l for l in system.graph.all_links()})
    link_list = [links[k] for k in sorted(links)]
    (out_dir / "graph.txt").write_text(export_graph_text(nodes, link_list))

    if system.local is not None and len(system.local):
        grid = assemble_grid(system.graph, system.local, system.cfg.grid_resolution)
        write_pgm(grid, out_dir / "map_final.pgm")

    reached = sum(1 for g in report.goals if g.status == "reached")
    failed = len(report.goals) - reached
    lines = [
        f"updates = {len(report.rows)}",
        f"nodes_resident = {len(system.graph.nodes)}",
        f"nodes_ltm = {len(system.state.ltm)}",
        f"nodes_total = {system.total_nodes()}",
        f"links_total = {system.total_links()}",
        f"loop_closures = {report.loop_closure_total}",
        f"proximity_visual = {report.visual_proximity_total}",
        f"proximity_laser = {report.laser_proximity_total}",
        f"goals_reached = {reached}",
        f"goals_failed = {failed}",
    ]
    for g in report.goals:
        err = "inf" if g.true_error == float("inf") else f"{g.true_error:.3f}"
        lines.append(f"goal session={g.session} wp={g.waypoint} node={g.node_id} "
                     f"status={g.status} true_error={err}")
    (out_dir / "summary.txt").write_text("\n".join(lines) + "\n")


def cmd_simulate(args) -> int:
    world, cfg = _load_inputs(args)
    cfg = _apply_flags(cfg, args)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    system, report = run_scenario(
        world, cfg, out_dir / "ltm.splm", measured_time=args.measured_time
    )
    _write_outputs(out_dir, system, report)
    if any(g.status != "reached" for g in report.goals):
        return EXIT_SCENARIO
    return EXIT_OK


def cmd_compare_reduction(args) -> int:
    world, cfg = _load_inputs(args)
    out_dir = Path(args.out_dir)
    results = {}
    for label, enabled in (("with_reduction", True), ("without_reduction", False)):
        sub = out_dir / label
        sub.mkdir(parents=True, exist_ok=True)
        run_cfg = load_config(args.config) if args.config else Config()
        run_cfg.enable_reduction = enabled
        world_run = load_world(args.world)  # fresh agents/state per run
        system, report = run_scenario(world_run, run_cfg, sub / "ltm.splm")
        _write_outputs(sub, system, report)

        plan_s = float("nan")
        far_goal = None
        if report.waypoint_nodes:
            far_name = list(report.waypoint_nodes)[len(report.waypoint_nodes) // 2]
            far_goal = report.waypoint_nodes[far_name]
        if far_goal is not None and system.last_node_id is not None:
            t0 = time.perf_counter()
            gm = global_map(system.graph, system.last_node_id, system.state.ltm, system.store)
            plan_topological(gm, system.last_node_id, far_goal)
            plan_s = time.perf_counter() - t0
        results[label] = {
            "nodes": system.total_nodes(),
            "links": system.total_links(),
            "store_bytes": system.store.size_bytes(),
            "planning_s": plan_s,
        }

    w, wo = results["with_reduction"], results["without_reduction"]
    lines = []
    for label, r in results.items():
        lines.append(
            f"{label}: nodes={r['nodes']} links={r['links']} "
            f"store_bytes={r['store_bytes']} planning_s={r['planning_s']:.6f}"
        )
    if wo["links"]:
        lines.append(f"link_ratio = {w['links'] / wo['links']:.4f}")
    if wo["planning_s"] and wo["planning_s"] > 0:
        lines.append(f"planning_time_ratio = {w['planning_s'] / wo['planning_s']:.4f}")
    text = "\n".join(lines) + "\n"
    (out_dir / "comparison.txt").write_text(text)
    print(text, end="")
    return EXIT_OK


def cmd_export_graph(args) -> int:
    try:
        store = LtmStore(args.store)
    except (OSError, IOError) as exc:
        print(f"error: cannot open store: {exc}", file=sys.stderr)
        return EXIT_USAGE
    nodes = []
    for nid in store.node_ids():
        n = store.get_node(nid)
        nodes.append((n.id, n.session, n.weight, n.odom_pose))
    text = export_graph_text(nodes, store.all_links())
    Path(args.out).write_text(text)
    store.close()
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="memslam")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a scenario and write its outputs")
    sim.add_argument("world")
    sim.add_argument("out_dir")
    sim.add_argument("--config", default=None)
    sim.add_argument("--seed", type=int, default=None)
    sim.add_argument("--no-reduction", action="store_true")
    sim.add_argument("--no-proximity", action="store_true")
    sim.add_argument("--measured-time", action="store_true",
                     help="drive the memory budget from wall-clock update time "
                          "(non-deterministic outputs)")
    sim.set_defaults(func=cmd_simulate)

    cmp_ = sub.add_parser("compare-reduction", help="same scenario with and without reduction")
    cmp_.add_argument("world")
    cmp_.add_argument("out_dir")
    cmp_.add_argument("--config", default=None)
    cmp_.set_defaults(func=cmd_compare_reduction)

    exp = sub.add_parser("export-graph", help="dump a store file as a text edge list")
    exp.add_argument("store")
    exp.add_argument("out")
    exp.set_defaults(func=cmd_export_graph)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
