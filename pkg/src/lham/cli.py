"""Command line entry point: ``lham run | sweep | dump-system | check``."""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .runner import (PRESETS, ConfigError, EngineMismatch, RunConfig, build_system, coerce,
                     load_config, preset, run, sweep_orders)


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--preset", choices=sorted(PRESETS), help="start from a built-in configuration")
    p.add_argument("--config", type=Path, help="key = value configuration file")
    g = p.add_argument_group("configuration overrides")
    for f in dataclasses.fields(RunConfig):
        flag = "--" + f.name.replace("_", "-")
        g.add_argument(flag, dest=f"cfg_{f.name}", metavar=f.name.upper(), default=None,
                       help=f"override {f.name} ({f.type})")


def config_from_args(args: argparse.Namespace) -> RunConfig:
    base = preset(args.preset) if args.preset else RunConfig()
    if args.config:
        base = load_config(args.config, base)
    changes = {}
    for f in dataclasses.fields(RunConfig):
        raw = getattr(args, f"cfg_{f.name}")
        if raw is not None:
            changes[f.name] = coerce(f.name, raw)
    return base.replace(**changes)


def _print_errors(report) -> None:
    if report.errors is None:
        return
    for name, value in report.errors.rows():
        print(f"  {name:<18} {100 * value:9.4f} %")


def cmd_run(args) -> int:
    cfg = config_from_args(args)
    report = run(cfg)
    print(f"{cfg.problem}  J={cfg.J}  order={cfg.order}  engine={cfg.engine}  "
          f"lifted dim={report.system.dim}  T={cfg.T:g}")
    if report.engine_agreement is not None:
        print(f"  gamma={report.gamma:.6g}  relative gap to expm={report.engine_agreement:.3e}")
    _print_errors(report)
    if args.json:
        print(json.dumps(report.to_json(), indent=1))
    return 0


def cmd_sweep(args) -> int:
    cfg = config_from_args(args)
    result = sweep_orders(cfg, args.max_order)
    for row in result.table():
        cells = "  ".join(f"{k}={100 * v:.4f}%" for k, v in row.items() if k != "order")
        print(f"order {row['order']}: {cells}")
    return 0


def cmd_dump(args) -> int:
    cfg = config_from_args(args)
    system, _ = build_system(cfg)
    text = json.dumps(system.to_json(), indent=1)
    if args.output:
        Path(args.output).write_text(text)
        print(f"wrote {args.output} (dim {system.dim})")
    else:
        print(text)
    return 0


def cmd_check(args) -> int:
    from .checks import run_checks

    cfg = config_from_args(args)
    results = run_checks(cfg)
    for r in results:
        print(r.line())
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} invariants hold")
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="lham", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run the full pipeline once")
    _add_config_flags(p)
    p.add_argument("--json", action="store_true", help="print the JSON report")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="errors for homotopy orders 0..MAX_ORDER")
    _add_config_flags(p)
    p.add_argument("--max-order", type=int, required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("dump-system", help="write the lifted system as JSON")
    _add_config_flags(p)
    p.add_argument("-o", "--output", help="output file (default: stdout)")
    p.set_defaults(func=cmd_dump)

    p = sub.add_parser("check", help="run the invariant suite; nonzero exit on failure")
    _add_config_flags(p)
    p.set_defaults(func=cmd_check)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, EngineMismatch) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
