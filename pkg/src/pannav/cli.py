"""Command line entry point: ``pannav run | replay | export-maps | validate-config``.

Failures print a single line ``error: <Kind>[ field=<path>]: <message>`` to stderr.
Exit code 2 means bad input (configuration or arguments), 1 a runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

from .errors import ConfigError, PannavError

LEVELS = {"error": logging.ERROR, "warn": logging.WARNING, "info": logging.INFO, "debug": logging.DEBUG}


def _setup_logging():
    name = os.environ.get("PANNAV_LOG_LEVEL", "warn").lower()
    if name not in LEVELS:
        raise ConfigError("PANNAV_LOG_LEVEL", f"expected one of {sorted(LEVELS)}, got {name!r}")
    logging.basicConfig(level=LEVELS[name], format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def _cycles(text: str | None) -> list[int]:
    if not text:
        return []
    try:
        out = sorted({int(tok) for tok in text.replace(" ", "").split(",") if tok})
    except ValueError:
        raise ConfigError("--export-cycles", f"expected comma-separated integers, got {text!r}") from None
    if any(c < 0 for c in out):
        raise ConfigError("--export-cycles", "cycle indices must be >= 0")
    return out


def _load(args):
    from .sim.scenario import load_scenario

    cfg = load_scenario(args.scenario, seed=args.seed)
    if not getattr(args, "deterministic", True):
        cfg.planner = replace(cfg.planner, deterministic=False)
    return cfg


def _summary_line(result, out):
    s = result.metrics.summary()
    s["out"] = str(out)
    return json.dumps({k: ("inf" if v == float("inf") else v) for k, v in s.items()}, sort_keys=True)


def _render_exports(out: Path, cfg):
    from .gridmap import import_map
    from .report import render_map

    for d in sorted((out / "maps").glob("cycle_*")):
        render_map(import_map(d), cfg.registry, d / "map.png", goal=cfg.goal, title=f"{cfg.name} {d.name}")


def cmd_run(args):
    from .sim.runner import run_scenario

    cfg = _load(args)
    out = Path(args.out)
    result = run_scenario(cfg, out_dir=out, record_dir=args.record, export_cycles=_cycles(args.export_cycles),
                          figures=not args.no_figures)
    if not args.no_figures:
        _render_exports(out, cfg)
    print(_summary_line(result, out))
    return 0


def cmd_replay(args):
    from .sim.runner import ReplaySource, run_scenario
    from .sim.scenario import load_scenario

    clouds = Path(args.clouds)
    scenario = Path(args.scenario) if args.scenario else clouds.parent / "scenario.yaml"
    if not scenario.is_file():
        raise ConfigError("--scenario", f"no scenario.yaml next to {clouds}; pass --scenario")
    cfg = load_scenario(scenario)
    src = ReplaySource(clouds, args.masks, cfg.registry)
    out = Path(args.out)
    result = run_scenario(cfg, out_dir=out, replay=src, figures=not args.no_figures)
    print(_summary_line(result, out))
    return 0


def cmd_export_maps(args):
    from .sim.runner import run_scenario

    cfg = _load(args)
    cycles = _cycles(args.export_cycles)
    if not cycles:
        raise ConfigError("--export-cycles", "at least one cycle index is required")
    out = Path(args.out)
    result = run_scenario(cfg, out_dir=out, export_cycles=cycles, figures=not args.no_figures)
    if not args.no_figures:
        _render_exports(out, cfg)
    written = sorted(p.name for p in (out / "maps").glob("cycle_*")) if (out / "maps").exists() else []
    print(json.dumps({"exported": written, "cycles_run": len(result.metrics.cycles)}))
    return 0


def cmd_validate(args):
    cfg = _load(args)
    print(json.dumps({"ok": True, "scenario": cfg.name, "seed": cfg.seed, "classes": len(cfg.registry)}))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pannav", description="Semantic navigation pipeline and closed-loop simulator.")
    sub = p.add_subparsers(dest="command", required=True)

    def scenario_args(sp, out_required=True):
        sp.add_argument("--scenario", required=True, help="scenario YAML path or bundled name")
        sp.add_argument("--seed", type=int, default=None, help="override the scenario seed")
        if out_required:
            sp.add_argument("--out", required=True, help="output directory")
        det = sp.add_mutually_exclusive_group()
        det.add_argument("--deterministic", dest="deterministic", action="store_true", default=True,
                         help="iteration-budget planning (default)")
        det.add_argument("--wall-clock", dest="deterministic", action="store_false", help="wall-clock planning budget")
        sp.add_argument("--no-figures", action="store_true", help="skip the PNG figures")

    r = sub.add_parser("run", help="run a scenario")
    scenario_args(r)
    r.add_argument("--record", default=None, help="record scans, masks and ground truth to this directory")
    r.add_argument("--export-cycles", default=None, help="comma-separated planning cycles whose maps are exported")
    r.set_defaults(func=cmd_run)

    rp = sub.add_parser("replay", help="re-run the pipeline from recorded scans and masks")
    rp.add_argument("--masks", required=True)
    rp.add_argument("--clouds", required=True)
    rp.add_argument("--out", required=True)
    rp.add_argument("--scenario", default=None, help="defaults to scenario.yaml next to the clouds directory")
    rp.add_argument("--no-figures", action="store_true")
    rp.set_defaults(func=cmd_replay)

    e = sub.add_parser("export-maps", help="run a scenario and dump map layers at chosen cycles")
    scenario_args(e)
    e.add_argument("--export-cycles", required=True)
    e.set_defaults(func=cmd_export_maps)

    v = sub.add_parser("validate-config", help="check a scenario without running it")
    scenario_args(v, out_required=False)
    v.set_defaults(func=cmd_validate)
    return p


def _error_line(exc: BaseException) -> str:
    kind = type(exc).__name__
    if isinstance(exc, ConfigError):
        return f"error: {kind} field={exc.field}: {exc.message}"
    msg = " ".join(str(exc).split())
    return f"error: {kind}: {msg}"


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        _setup_logging()
        return args.func(args)
    except ConfigError as exc:
        print(_error_line(exc), file=sys.stderr)
        return 2
    except (PannavError, OSError, ValueError) as exc:
        print(_error_line(exc), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
