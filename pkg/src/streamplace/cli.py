"""Command line front end: evaluate, optimize, sweep, paths, validate.

Exit codes: 0 success, 1 validation or usage error, 2 search-space or
path-count guard tripped.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from .bundle import (
    BundleError,
    ProblemBundle,
    check_bundle,
    load_bundle,
    placement_to_list,
)
from .graph import (
    DEFAULT_PATH_CAP,
    PathExplosionError,
    critical_path,
    enumerate_paths,
    edge_weights,
    path_latency,
)
from .model import ModelError, ModelParams, edge_latency, network_volume, objective_f
from .optimizer import (
    DqScenario,
    InfeasibleError,
    OptimizerConfig,
    SearchSpaceError,
    brute_force_optimize,
    local_search_optimize,
)

EXIT_OK, EXIT_INVALID, EXIT_GUARD = 0, 1, 2
SWEEP_HEADER = ["beta", "dq_fraction", "latency", "objective", "method"]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INVALID, f"{self.prog}: error: {message}\n")


def machine(v: float) -> str:
    return f"{v:.17g}"


def human(v: float) -> str:
    return f"{v:.4g}"


def parse_list(text: str | None, name: str) -> list[float] | None:
    if text is None:
        return None
    items = [t for t in text.replace(" ", "").split(",") if t]
    if not items:
        raise UsageError(f"--{name} needs at least one value")
    try:
        return [float(t) for t in items]
    except ValueError:
        raise UsageError(f"--{name}: cannot parse {text!r} as a comma-separated list") from None


def _params(bundle: ProblemBundle, args) -> ModelParams:
    p = bundle.params
    betas = parse_list(getattr(args, "beta", None), "beta")
    dqs = parse_list(getattr(args, "dq", None), "dq")
    for name, vals in (("beta", betas), ("dq", dqs)):
        if vals is not None and len(vals) != 1:
            raise UsageError(f"--{name} takes a single value for this command")
    try:
        return ModelParams(p.alpha, betas[0] if betas else p.beta, dqs[0] if dqs else p.dq_fraction,
                           p.link_count_mode, p.batch_size)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _config(args) -> OptimizerConfig:
    try:
        return OptimizerConfig(granularity=args.granularity, max_iterations=args.iterations,
                               restarts=args.restarts, seed=args.seed,
                               initial_temperature=args.temperature)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def cmd_evaluate(bundle: ProblemBundle, args, out) -> int:
    if bundle.placement is None:
        raise UsageError("evaluate needs a placement in the bundle")
    params = _params(bundle, args)
    g, topo, x = bundle.graph, bundle.topology, bundle.placement
    breakdowns = [edge_latency(i, j, g, topo, x, params) for i, j in g.valid_edges()]
    crit = critical_path(g, topo, x, params)
    f = objective_f(crit.latency, params)
    volume = network_volume(g, topo, x, params.batch_size)

    if args.format == "json":
        doc = {
            "edges": [{"edge": list(b.edge), "per_device_cost": list(b.per_device_cost),
                       "max_transfer": b.transfer_max, "enabled_links": b.enabled_links,
                       "latency": b.latency} for b in breakdowns],
            "critical_path": list(crit.path.nodes),
            "latency": crit.latency,
            "beta": params.beta,
            "dq_fraction": params.dq_fraction,
            "objective": f,
            "network_volume": volume,
        }
        out.write(json.dumps(doc, indent=2) + "\n")
    elif args.format == "csv":
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["i", "j", "max_transfer", "enabled_links", "latency", "critical"])
        on_path = set(crit.path.edges)
        for b in breakdowns:
            w.writerow([b.edge[0], b.edge[1], machine(b.transfer_max), b.enabled_links,
                        machine(b.latency), int(b.edge in on_path)])
    else:
        for b in breakdowns:
            costs = ", ".join(human(c) for c in b.per_device_cost)
            out.write(f"edge {b.edge[0]} -> {b.edge[1]}: per-device [{costs}] "
                      f"max {human(b.transfer_max)}, enabled links {b.enabled_links}, "
                      f"latency {human(b.latency)}\n")
        out.write(f"critical path: {crit.path or '(no edges)'}\n")
        out.write(f"total latency: {human(crit.latency)}\n")
        out.write(f"F (beta={human(params.beta)}, dq={human(params.dq_fraction)}): {human(f)}\n")
        out.write(f"network volume: {human(volume)}\n")
    return EXIT_OK


def cmd_optimize(bundle: ProblemBundle, args, out) -> int:
    params = _params(bundle, args)
    config = _config(args)
    search = brute_force_optimize if args.method == "brute" else local_search_optimize
    result = search(bundle.graph, bundle.topology, params, bundle.scenario, config)
    rows = placement_to_list(result.placement)

    if args.format == "json":
        doc = {"method": result.method.value, "dq_fraction": result.dq_fraction,
               "latency": result.latency, "objective": result.objective,
               "network_volume": result.network_volume, "evaluations": result.evaluations,
               "placement": rows}
        out.write(json.dumps(doc, indent=2) + "\n")
    elif args.format == "csv":
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["method", "dq_fraction", "latency", "objective", "network_volume",
                    "evaluations"])
        w.writerow([result.method.value, machine(result.dq_fraction), machine(result.latency),
                    machine(result.objective), machine(result.network_volume),
                    result.evaluations])
    else:
        out.write(f"method: {result.method.value}\n")
        out.write(f"dq_fraction: {human(result.dq_fraction)}\n")
        out.write(f"latency: {human(result.latency)}\n")
        out.write(f"objective F: {human(result.objective)}\n")
        out.write(f"network volume: {human(result.network_volume)}\n")
        out.write(f"evaluations: {result.evaluations}\n")
        out.write("placement:\n")
        for i, row in enumerate(rows):
            out.write(f"  operator {i}: " + " ".join(human(v) for v in row) + "\n")
    if args.out:
        Path(args.out).write_text(json.dumps(
            {"placement": rows, "dq_fraction": result.dq_fraction}, indent=2) + "\n")
    return EXIT_OK


def sweep_rows(bundle: ProblemBundle, betas, dqs=None, method: str | None = None,
               config: OptimizerConfig | None = None) -> list[dict]:
    """One row per (beta, dq) pair, ascending.

    Without ``method`` each dq uses a fixed placement: the scenario level's
    own placement when it has one, else the bundle's. With ``method`` the
    placement is re-optimized per level (beta only rescales F, so one search
    per level suffices).
    """
    g, topo, p = bundle.graph, bundle.topology, bundle.params
    if dqs is not None:
        levels = [(dq, None, None) for dq in dqs]
    elif bundle.scenario is not None:
        levels = [(lv.dq_fraction, lv.placement, lv) for lv in bundle.scenario.levels]
    else:
        levels = [(p.dq_fraction, None, None)]

    latencies = {}
    for dq, placement, level in levels:
        base = p.with_dq(dq)
        if method is None:
            placement = placement or bundle.placement
            if placement is None:
                raise UsageError("fixed-placement sweep needs a placement (or pass --method)")
            latencies[dq] = critical_path(g, topo, placement, base).latency
        else:
            scenario = DqScenario([level]) if level is not None else None
            search = brute_force_optimize if method == "brute" else local_search_optimize
            latencies[dq] = search(g, topo, base, scenario, config).latency

    rows = []
    for beta in sorted(set(betas)):
        for dq in sorted(latencies):
            params = ModelParams(p.alpha, beta, dq, p.link_count_mode, p.batch_size)
            lat = latencies[dq]
            rows.append({"beta": beta, "dq_fraction": dq, "latency": lat,
                         "objective": objective_f(lat, params), "method": method or "fixed"})
    return rows


def write_sweep_csv(rows, out) -> None:
    w = csv.writer(out, lineterminator="\n")
    w.writerow(SWEEP_HEADER)
    for r in rows:
        w.writerow([machine(r["beta"]), machine(r["dq_fraction"]), machine(r["latency"]),
                    machine(r["objective"]), r["method"]])


def cmd_sweep(bundle: ProblemBundle, args, out) -> int:
    betas = parse_list(args.beta, "beta") or [bundle.params.beta]
    dqs = parse_list(args.dq, "dq")
    for v in betas:
        if v < 0:
            raise UsageError(f"beta must be >= 0, got {v}")
    for v in dqs or []:
        if not 0 <= v <= 1:
            raise UsageError(f"dq must lie in [0, 1], got {v}")
    config = _config(args) if args.method else None
    rows = sweep_rows(bundle, betas, dqs, args.method, config)
    if args.format == "json":
        out.write(json.dumps(rows, indent=2) + "\n")
    elif args.format == "human":
        for r in rows:
            out.write(f"beta {human(r['beta'])}  dq {human(r['dq_fraction'])}  "
                      f"latency {human(r['latency'])}  F {human(r['objective'])}  "
                      f"({r['method']})\n")
    else:
        write_sweep_csv(rows, out)
    return EXIT_OK


def cmd_paths(bundle: ProblemBundle, args, out) -> int:
    g = bundle.graph
    paths = enumerate_paths(g, args.path_cap)
    lat = crit = None
    if bundle.placement is not None:
        params = _params(bundle, args)
        weights = edge_weights(g, bundle.topology, bundle.placement, params)
        lat = [path_latency(pth, weights) for pth in paths]
        crit = critical_path(g, bundle.topology, bundle.placement, params).path

    if args.format == "json":
        doc = [{"nodes": list(pth.nodes),
                **({"latency": lat[k], "critical": pth == crit} if lat is not None else {})}
               for k, pth in enumerate(paths)]
        out.write(json.dumps(doc, indent=2) + "\n")
    elif args.format == "csv":
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["path", "latency", "critical"])
        for k, pth in enumerate(paths):
            w.writerow([" ".join(map(str, pth.nodes)),
                        machine(lat[k]) if lat is not None else "",
                        int(pth == crit) if lat is not None else ""])
    else:
        for k, pth in enumerate(paths):
            line = str(pth)
            if lat is not None:
                line += f"  latency {human(lat[k])}" + ("  [critical]" if pth == crit else "")
            out.write(line + "\n")
        out.write(f"{len(paths)} path(s)\n")
    return EXIT_OK


def cmd_validate(path, args, out) -> int:
    bundle = load_bundle(path, strict=False)
    report = check_bundle(bundle)
    if args.format == "json":
        doc = {"ok": report.ok,
               "errors": [vars(i) | {"witness": list(i.witness)} for i in report.errors],
               "warnings": [vars(i) | {"witness": list(i.witness)} for i in report.warnings]}
        out.write(json.dumps(doc, indent=2) + "\n")
    else:
        for issue in report.errors:
            out.write(f"error: {issue}\n")
        for issue in report.warnings:
            out.write(f"warning: {issue}\n")
        out.write("ok\n" if report.ok else f"{len(report.errors)} error(s)\n")
    return EXIT_OK if report.ok else EXIT_INVALID


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--input", "-i", required=True, help="problem bundle (JSON)")
    common.add_argument("--format", choices=["human", "json", "csv"], default=None)

    search = _Parser(add_help=False)
    search.add_argument("--granularity", "-g", type=int, default=10,
                        help="fractions are multiples of 1/g (default 10)")
    search.add_argument("--seed", type=int, default=0)
    search.add_argument("--restarts", type=int, default=10)
    search.add_argument("--iterations", type=int, default=500,
                        help="local-search proposals per restart")
    search.add_argument("--temperature", type=float, default=0.05,
                        help="initial annealing temperature relative to the start objective; 0 disables")

    weights = _Parser(add_help=False)
    weights.add_argument("--beta", help="data-quality weight (comma list for sweep)")
    weights.add_argument("--dq", help="dq_fraction (comma list for sweep)")

    parser = _Parser(prog="streamplace", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("evaluate", parents=[common, weights], help="cost of the bundle's placement")
    opt = sub.add_parser("optimize", parents=[common, weights, search], help="search placements")
    opt.add_argument("--method", choices=["brute", "local"], default="local")
    opt.add_argument("--out", help="write the winning placement here (JSON)")
    sw = sub.add_parser("sweep", parents=[common, weights, search], help="CSV over beta x dq")
    sw.add_argument("--method", choices=["brute", "local"], default=None,
                    help="re-optimize per dq level instead of using fixed placements")
    paths = sub.add_parser("paths", parents=[common, weights], help="list source-to-sink paths")
    paths.add_argument("--path-cap", type=int, default=DEFAULT_PATH_CAP)
    sub.add_parser("validate", parents=[common], help="report every constraint violation")
    return parser


COMMANDS = {"evaluate": cmd_evaluate, "optimize": cmd_optimize, "sweep": cmd_sweep,
            "paths": cmd_paths}


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    args = build_parser().parse_args(argv)
    if args.format is None:
        args.format = "csv" if args.command == "sweep" else "human"
    try:
        if args.command == "validate":
            return cmd_validate(args.input, args, out)
        bundle = load_bundle(args.input)
        return COMMANDS[args.command](bundle, args, out)
    except (SearchSpaceError, PathExplosionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_GUARD
    except (UsageError, BundleError, InfeasibleError, ModelError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
