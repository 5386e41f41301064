"""Command-line surface: solve, ablate, render, and eval.

Fully offline by default; ``--live`` gates real model endpoints and external
binaries. All randomness flows from ``--seed``.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from . import construct, orchestrator, render as render_mod, tsplib
from .core import Instance, Tour, gap, tour_length
from .selector import (
    RandomBoxSelector,
    RandomSequenceSelector,
    RouletteSelector,
    VlmSelector,
)
from .subsolver import AdapterConfig, SubsolverConfig
from .vlmclient import ClientConfig, HttpClient, ReplayClient

log = logging.getLogger(__name__)


class CliError(RuntimeError):
    pass


def _read_text(path: str, what: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise CliError(f"cannot read {what} {path!r}: {exc}") from exc


def _load_instance(path: str) -> Instance:
    try:
        return tsplib.parse_instance(_read_text(path, "instance"))
    except tsplib.ParseError as exc:
        raise CliError(f"bad instance file {path!r}: {exc}") from exc


def _load_optima(path: str | None) -> tsplib.OptimaTable:
    if path is None:
        return tsplib.bundled_optima()
    try:
        return tsplib.load_optima(_read_text(path, "optima table"))
    except tsplib.ParseError as exc:
        raise CliError(f"bad optima table {path!r}: {exc}") from exc


def _file_config(args) -> dict[str, str]:
    if not getattr(args, "config", None):
        return {}
    try:
        return orchestrator.load_config_text(_read_text(args.config, "config file"))
    except ValueError as exc:
        raise CliError(str(exc)) from exc


def _orchestrator_config(args, fcfg: dict[str, str], live: bool) -> orchestrator.OrchestratorConfig:
    mapping = dict(fcfg)
    mapping.update({
        "boxes_per_prompt": args.q,
        "solver_time_s": args.tmax_s,
        "slave_count": args.slaves,
        "stall_limit": args.k_stop,
        "budget_s": args.budget_s if args.budget_s is not None else 2.0 * args.init_s,
        "seed": args.seed,
    })
    if args.alpha is not None:
        mapping["node_cap"] = args.alpha
    mapping.setdefault("scheduler", "threads" if live else "stepped")
    mapping.setdefault("deterministic", not live)
    try:
        return orchestrator.OrchestratorConfig.from_mapping(mapping)
    except ValueError as exc:
        raise CliError(f"bad configuration: {exc}") from exc


def _subsolver_config(args, fcfg: dict[str, str], cfg) -> SubsolverConfig:
    adapter = None
    if fcfg.get("solver_cmd") and args.live:  # external programs are gated like endpoints
        adapter = AdapterConfig(command=tuple(fcfg["solver_cmd"].split()),
                                timeout_s=float(fcfg.get("solver_timeout_s", 60.0)))
    if args.subsolver == "external" and adapter is None:
        if fcfg.get("solver_cmd"):
            raise CliError("subsolver 'external' runs an external program; pass --live")
        raise CliError("subsolver 'external' needs solver_cmd in the config file")
    return SubsolverConfig(mode=args.subsolver, time_limit_s=cfg.solver_time_s,
                           seed=args.seed, adapter=adapter)


def _initial_tour(inst: Instance, args, fcfg: dict[str, str]) -> Tour:
    if fcfg.get("initializer_cmd") and args.live:
        cfg = construct.InitializerConfig(
            command=tuple(fcfg["initializer_cmd"].split()),
            timeout_s=float(fcfg.get("initializer_timeout_s", 300.0)))
        try:
            return construct.external_initializer(inst, cfg)
        except construct.InitializerError as exc:
            log.warning("external initializer failed (%s); using built-in", exc)
    tour = construct.farthest_insertion(inst, args.seed)
    if inst.n >= 4:
        if args.init_passes is not None:
            # pass-bounded polish is exactly reproducible (used by replay runs)
            tour = construct.polish(inst, tour, time_budget_s=None,
                                    max_passes=args.init_passes, seed=args.seed)
        elif args.init_s > 0:
            tour = construct.polish(inst, tour, time_budget_s=args.init_s, seed=args.seed)
    return tour


def _selector(kind: str, args, cfg, live: bool):
    if kind == "random-box":
        return lambda inst: RandomBoxSelector(
            cfg.boxes_per_prompt, orchestrator.resolve_node_cap(inst.n, cfg.node_cap),
            seed=args.seed)
    if kind == "random-sequence":
        return lambda inst: RandomSequenceSelector(length=args.length, seed=args.seed)
    if kind == "replay":
        if not args.replay_fixture:
            raise CliError("selector 'replay' needs --replay-fixture")
        fixture_path = args.replay_fixture

        def make_replay(inst):
            client = ReplayClient.from_file(fixture_path)
            return VlmSelector(client, cfg.boxes_per_prompt,
                               orchestrator.resolve_node_cap(inst.n, cfg.node_cap))
        return make_replay
    if kind == "vlm":
        if not live:
            raise CliError("selector 'vlm' calls a live endpoint; pass --live "
                           "(or use --selector replay with a fixture)")
        import os

        from .vlmclient import DEFAULT_KEY_ENV, DEFAULT_URL_ENV

        for var in (DEFAULT_KEY_ENV, DEFAULT_URL_ENV):
            if not os.environ.get(var):
                raise CliError(f"live selection needs the {var} environment variable")

        def make_vlm(inst):
            models = [m.strip() for m in args.models.split(",") if m.strip()]
            selectors = [
                VlmSelector(HttpClient(ClientConfig(model=m)), cfg.boxes_per_prompt,
                            orchestrator.resolve_node_cap(inst.n, cfg.node_cap))
                for m in models
            ]
            return RouletteSelector(selectors, seed=args.seed)
        return make_vlm
    raise CliError(f"unknown selector {kind!r}")


def _write_outputs(out_dir: Path, name: str, inst: Instance, result,
                   optimum: int | None) -> dict:
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / f"{name}.tour").write_text(
        tsplib.write_tour(result.tour.canonical(), name=name), encoding="utf-8")
    (out_dir / f"{name}.gap.csv").write_text(
        orchestrator.emit_gap_log(result.events, optimum), encoding="utf-8")
    (out_dir / f"{name}.events.jsonl").write_text(
        orchestrator.emit_event_log(result.events, result.trajectory), encoding="utf-8")
    summary = {"instance": inst.name, "length": result.length}
    if optimum:
        summary["optimum"] = optimum
        summary["gap_percent"] = round(gap(result.length, optimum).gap_percent, 2)
    (out_dir / f"{name}.summary.json").write_text(
        json.dumps(summary, indent=1, sort_keys=True), encoding="utf-8")
    return summary


def cmd_solve(args) -> int:
    fcfg = _file_config(args)
    inst = _load_instance(args.instance)
    optima = _load_optima(args.optima)
    cfg = _orchestrator_config(args, fcfg, args.live)
    sub_cfg = _subsolver_config(args, fcfg, cfg)
    make_selector = _selector(args.selector, args, cfg, args.live)

    t0 = time.monotonic()
    initial = _initial_tour(inst, args, fcfg)
    result = orchestrator.run(inst, initial, cfg, make_selector(inst), sub_cfg)
    elapsed = time.monotonic() - t0

    optimum = optima.get(inst.name)
    summary = _write_outputs(Path(args.out_dir), "solve", inst, result, optimum)
    summary["runtime_s"] = round(elapsed, 1)
    gap_text = f"{summary['gap_percent']:.2f}%" if "gap_percent" in summary else "n/a"
    print(f"{inst.name}: length {result.length} gap {gap_text} "
          f"(initial {tour_length(inst, initial)}, {elapsed:.1f}s)")
    return 0


def cmd_ablate(args) -> int:
    fcfg = _file_config(args)
    inst = _load_instance(args.instance)
    optima = _load_optima(args.optima)
    policies = [p.strip() for p in args.policies.split(",") if p.strip()]
    if not policies:
        raise CliError("no selection policies given")
    cfg = _orchestrator_config(args, fcfg, args.live)
    sub_cfg = _subsolver_config(args, fcfg, cfg)
    # one shared warm start; the wall budget is split across the policies
    initial = _initial_tour(inst, args, fcfg)
    init_length = tour_length(inst, initial)
    per_policy = cfg.budget_s / len(policies)
    optimum = optima.get(inst.name)

    out_dir = Path(args.out_dir)
    rows = []
    for policy in policies:
        make_selector = _selector(policy, args, cfg, args.live)
        run_cfg = orchestrator.OrchestratorConfig.from_mapping({
            **{f: getattr(cfg, f) for f in ("boxes_per_prompt", "solver_time_s",
                                            "slave_count", "stall_limit", "seed",
                                            "queue_cap", "dim_cap", "scheduler")},
            "budget_s": per_policy,
            "deterministic": cfg.deterministic,
            **({"node_cap": cfg.node_cap} if cfg.node_cap is not None else {}),
        })
        result = orchestrator.run(inst, initial, run_cfg, make_selector(inst), sub_cfg)
        summary = _write_outputs(out_dir, policy, inst, result, optimum)
        rows.append((policy, init_length, result.length, summary.get("gap_percent")))

    print(f"{'policy':<18}{'initial':>10}{'final':>10}{'gap':>8}")
    for policy, init_len, final, gp in rows:
        gap_text = f"{gp:.2f}%" if gp is not None else "n/a"
        print(f"{policy:<18}{init_len:>10}{final:>10}{gap_text:>8}")
    return 0


def cmd_render(args) -> int:
    inst = _load_instance(args.instance)
    tour = None
    if args.tour:
        try:
            tour = tsplib.read_tour(_read_text(args.tour, "tour"), n=inst.n)
        except tsplib.ParseError as exc:
            raise CliError(f"bad tour file {args.tour!r}: {exc}") from exc
    try:
        png = render_mod.render(inst, tour)
    except render_mod.RenderError as exc:
        raise CliError(str(exc)) from exc
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_bytes(png)
    print(f"wrote {out} ({len(png)} bytes)")
    return 0


def _read_gap_csv(path: str) -> list[tuple[float, int]]:
    points = []
    for line in _read_text(path, "gap log").splitlines()[1:]:
        parts = line.split(",")
        if len(parts) >= 2 and parts[0]:
            points.append((float(parts[0]), int(parts[1])))
    return points


def _svg_plot(curves: list[tuple[str, list[tuple[float, int]]]]) -> str:
    width, height, margin = 640, 400, 50
    xs = [p[0] for _, pts in curves for p in pts]
    ys = [p[1] for _, pts in curves for p in pts]
    if not xs:
        raise CliError("no data points in the given gap logs")
    x0, x1 = min(xs), max(xs)
    y0, y1 = min(ys), max(ys)
    x_span = (x1 - x0) or 1.0
    y_span = (y1 - y0) or 1.0
    colors = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#8c564b", "#e377c2"]

    def px(x):
        return margin + (x - x0) / x_span * (width - 2 * margin)

    def py(y):
        return height - margin - (y - y0) / y_span * (height - 2 * margin)

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
             f'<rect width="{width}" height="{height}" fill="white"/>',
             f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" '
             f'y2="{height - margin}" stroke="black"/>',
             f'<line x1="{margin}" y1="{margin}" x2="{margin}" y2="{height - margin}" '
             f'stroke="black"/>',
             f'<text x="{width // 2}" y="{height - 10}" font-size="12" '
             f'text-anchor="middle">elapsed_s</text>',
             f'<text x="14" y="{height // 2}" font-size="12" text-anchor="middle" '
             f'transform="rotate(-90 14 {height // 2})">length</text>']
    for i, (name, pts) in enumerate(curves):
        color = colors[i % len(colors)]
        # step curve: the incumbent holds its value until the next acceptance
        coords = []
        for j, (x, y) in enumerate(pts):
            if j:
                coords.append(f"{px(x):.1f},{py(pts[j - 1][1]):.1f}")
            coords.append(f"{px(x):.1f},{py(y):.1f}")
        parts.append(f'<polyline points="{" ".join(coords)}" fill="none" '
                     f'stroke="{color}" stroke-width="1.5"/>')
        parts.append(f'<text x="{width - margin - 150}" y="{margin + 16 * i + 4}" '
                     f'font-size="12" fill="{color}">{name}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def cmd_eval(args) -> int:
    optima = _load_optima(args.optima)
    if args.instance and args.tour:
        inst = _load_instance(args.instance)
        try:
            tour = tsplib.read_tour(_read_text(args.tour, "tour"), n=inst.n)
        except tsplib.ParseError as exc:
            raise CliError(f"bad tour file {args.tour!r}: {exc}") from exc
        length = tour_length(inst, tour)
        optimum = optima.get(inst.name)
        if optimum:
            report = gap(length, optimum)
            print(f"{inst.name},{length},{optimum},{report.gap_percent:.2f}%")
        else:
            print(f"{inst.name},{length},n/a,n/a")
    elif not args.gap_log:
        raise CliError("eval needs --instance/--tour, --gap-log files, or both")

    if args.gap_log:
        if not args.plot_svg:
            raise CliError("--gap-log needs --plot-svg OUT to write the curve plot")
        curves = [(Path(p).stem, _read_gap_csv(p)) for p in args.gap_log]
        out = Path(args.plot_svg)
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(_svg_plot(curves), encoding="utf-8")
        print(f"wrote {out}")
    return 0


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--instance", required=True, help="TSPLIB .tsp file")
    p.add_argument("--subsolver", default="auto",
                   choices=["auto", "exact", "local", "external"])
    p.add_argument("--q", type=int, default=2, help="box selections per prompt")
    p.add_argument("--alpha", type=int, default=None,
                   help="free-node cap (default: 1000 below 10k nodes, else 2000)")
    p.add_argument("--tmax-s", type=float, default=10.0, help="per-subproblem solver limit")
    p.add_argument("--slaves", type=int, default=8, help="screening solver count")
    p.add_argument("--k-stop", type=int, default=5,
                   help="consecutive non-improving master steps before stopping")
    p.add_argument("--budget-s", type=float, default=None,
                   help="wall-clock cap (default: twice the init budget)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--optima", default=None, help="optima table (default: bundled)")
    p.add_argument("--out-dir", default="out")
    p.add_argument("--live", action="store_true",
                   help="allow live model endpoints and external programs")
    p.add_argument("--replay-fixture", default=None, help="recorded prompt/response script")
    p.add_argument("--config", default=None, help="run configuration file (key = value)")
    p.add_argument("--init-s", type=float, default=5.0, help="initial polish budget")
    p.add_argument("--init-passes", type=int, default=None,
                   help="polish by pass count instead of wall time (reproducible)")
    p.add_argument("--length", type=int, default=500, help="random-sequence slice length")
    p.add_argument("--models", default="gpt-4.1,o4-mini",
                   help="model names for the live selector roulette")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vitsp",
                                     description="Box-decomposition tour improvement")
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("solve", help="improve one instance end to end")
    _add_run_flags(p_solve)
    p_solve.add_argument("--selector", default="random-box",
                         choices=["vlm", "random-box", "random-sequence", "replay"])
    p_solve.set_defaults(func=cmd_solve)

    p_ablate = sub.add_parser("ablate", help="compare selection policies under one budget")
    _add_run_flags(p_ablate)
    p_ablate.add_argument("--policies", default="random-box,random-sequence",
                          help="comma-separated policies to compare")
    p_ablate.set_defaults(func=cmd_ablate)

    p_render = sub.add_parser("render", help="draw an instance (and tour) to PNG")
    p_render.add_argument("--instance", required=True)
    p_render.add_argument("--tour", default=None, help="optional .tour file")
    p_render.add_argument("--out", required=True, help="output PNG path")
    p_render.set_defaults(func=cmd_render)

    p_eval = sub.add_parser("eval", help="gap report and gap-curve plots")
    p_eval.add_argument("--instance", default=None)
    p_eval.add_argument("--tour", default=None)
    p_eval.add_argument("--optima", default=None)
    p_eval.add_argument("--gap-log", nargs="*", default=[], help="gap CSVs to plot")
    p_eval.add_argument("--plot-svg", default=None, help="overlaid SVG output path")
    p_eval.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
