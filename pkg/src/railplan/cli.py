"""Command line entry point.

Exit codes: 0 success, 2 validation failure, 3 infeasible problem.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

from . import design, scenario_io
from .equilibrium import InfeasibleAssignmentError
from .network import apply_design
from .scenario_io import Scenario, ValidationError

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_INFEASIBLE = 3


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", default=None, help="scenario key=value file")
    parser.add_argument("--seed", type=int, default=None, help="override scenario seed")
    parser.add_argument("--tol", type=float, default=None, help="override equilibrium gap tolerance")
    parser.add_argument("--out-dir", default="out", help="artifact directory")
    parser.add_argument("--threads", type=int, default=None, help="fitness evaluation workers")


def _load(args: argparse.Namespace) -> Scenario:
    scenario = scenario_io.load_scenario(args.config) if args.config else Scenario()
    if args.seed is not None:
        scenario = replace(scenario, seed=args.seed)
    if args.tol is not None:
        scenario = replace(scenario, gap_tolerance=args.tol)
    if getattr(args, "threads", None) is not None:
        scenario = replace(scenario, workers=args.threads)
    scenario.validate()
    return scenario


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="railplan", description="rail electrification planning")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("transform", help="expand the physical network and list arcs")
    _add_common(p)

    p = sub.add_parser("costs", help="per-link traction costs and electrification capital")
    _add_common(p)

    p = sub.add_parser("corridors", help="enumerate candidate yard-to-yard corridors")
    _add_common(p)

    p = sub.add_parser("assign", help="solve one traffic equilibrium")
    _add_common(p)
    p.add_argument("--design", default=None, help="CSV of corridor ids to electrify")

    p = sub.add_parser("optimize", help="search corridor designs under the budget")
    _add_common(p)

    p = sub.add_parser("sweep", help="re-optimize across a parameter axis")
    _add_common(p)
    p.add_argument("--axis", required=True, choices=sorted(scenario_io._SWEEP_AXES))
    p.add_argument("--values", required=True, help="comma separated axis values")

    p = sub.add_parser("report", help="summarize a stored design")
    _add_common(p)
    p.add_argument("--design", required=True, help="CSV of corridor ids to electrify")
    return parser


def _cmd_transform(scenario: Scenario, args: argparse.Namespace) -> int:
    assembled = scenario_io.assemble(scenario)
    expanded = assembled.expanded
    print(f"nodes: {len(assembled.network.nodes)} physical, {expanded.n_nodes} expanded")
    print(f"arcs:  {expanded.n_arcs} ({len(assembled.network.links)} links, "
          f"{sum(len(v) for v in expanded.switch_arcs_at.values())} switch arcs)")
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "arcs.csv", "w", newline="") as fh:
        import csv

        writer = csv.writer(fh)
        writer.writerow(["arc_id", "kind", "tail", "head", "physical_link", "fixed_cost"])
        for arc in expanded.arcs:
            writer.writerow(
                [
                    arc.id,
                    arc.kind.value,
                    expanded.node_label(arc.tail),
                    expanded.node_label(arc.head),
                    "" if arc.physical_link is None else arc.physical_link,
                    repr(arc.fixed_cost),
                ]
            )
    print(f"wrote {out / 'arcs.csv'}")
    return EXIT_OK


def _cmd_costs(scenario: Scenario, args: argparse.Namespace) -> int:
    assembled = scenario_io.assemble(scenario)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "link_costs.csv", "w", newline="") as fh:
        import csv

        writer = csv.writer(fh)
        writer.writerow(
            [
                "link_id", "t0_hr", "congestion_coef", "diesel_fuel_per_ton",
                "electric_fuel_per_ton", "electrification_cost_usd",
            ]
        )
        for lid in sorted(assembled.profiles):
            p = assembled.profiles[lid]
            writer.writerow(
                [
                    lid,
                    repr(p.t0_hr),
                    repr(p.congestion_coef),
                    repr(p.diesel.fuel_cost_per_ton),
                    repr(p.electric.fuel_cost_per_ton),
                    repr(assembled.link_costs.get(lid, float("nan"))),
                ]
            )
    print(f"wrote {out / 'link_costs.csv'}")
    return EXIT_OK


def _cmd_corridors(scenario: Scenario, args: argparse.Namespace) -> int:
    assembled = scenario_io.assemble(scenario)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    scenario_io.save_corridors(out / "corridors.csv", assembled.corridors)
    print(f"{len(assembled.corridors)} corridors, wrote {out / 'corridors.csv'}")
    return EXIT_OK


def _cmd_assign(scenario: Scenario, args: argparse.Namespace) -> int:
    ids = scenario_io.load_design(args.design) if args.design else None
    state, metrics = scenario_io.assign_run(scenario, ids, args.out_dir)
    print(
        f"equilibrium: gap {metrics.relative_gap:.3e} after {metrics.iteration} iterations, "
        f"objective {metrics.beckmann:.6e}"
    )
    return EXIT_OK


def _cmd_optimize(scenario: Scenario, args: argparse.Namespace) -> int:
    report = scenario_io.optimize_run(scenario, args.out_dir)
    print(scenario_io.format_report(report))
    return EXIT_OK


def _cmd_sweep(scenario: Scenario, args: argparse.Namespace) -> int:
    try:
        values = [float(v) for v in args.values.split(",") if v.strip()]
    except ValueError as exc:
        raise ValidationError(f"bad --values: {exc}") from exc
    _, rows = scenario_io.sweep(scenario, args.axis, values, args.out_dir)
    for row in rows:
        print(
            f"{row.axis}={row.value:g}: cost {row.best_cost:.6e}, "
            f"{len(row.selected)} corridors, +{len(row.added_vs_base)} "
            f"-{len(row.removed_vs_base)} vs base"
        )
    return EXIT_OK


def _cmd_report(scenario: Scenario, args: argparse.Namespace) -> int:
    assembled = scenario_io.assemble(scenario)
    ids = scenario_io.load_design(args.design)
    bits = design.DesignVector.from_ids(ids, len(assembled.corridors)).bits
    report = scenario_io.summarize_design(assembled, bits)
    scenario_io.write_report(report, args.out_dir)
    print(scenario_io.format_report(report))
    return EXIT_OK


_COMMANDS = {
    "transform": _cmd_transform,
    "costs": _cmd_costs,
    "corridors": _cmd_corridors,
    "assign": _cmd_assign,
    "optimize": _cmd_optimize,
    "sweep": _cmd_sweep,
    "report": _cmd_report,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        scenario = _load(args)
        return _COMMANDS[args.command](scenario, args)
    except (ValidationError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except InfeasibleAssignmentError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE


if __name__ == "__main__":
    sys.exit(main())
