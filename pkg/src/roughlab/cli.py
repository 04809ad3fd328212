"""Command line entry point: ``roughlab run | validate | list-registry``."""
from __future__ import annotations

import argparse
import logging
import sys

from .config import (
    INTEGRATORS,
    MOLLIFICATIONS,
    NONLINEARITY_KEYS,
    ROUGH_KEYS,
    SCENARIOS,
    KINDS,
    ConfigError,
    emit_config,
    load_config,
)
from .harness import (
    EXIT_CONFIG,
    EXIT_NUMERIC,
    OUT_ENV,
    prepare,
    resolve_output,
    run_scenario,
    write_outputs,
)


def _load(path):
    try:
        cfg = load_config(path)
        return cfg, prepare(cfg)
    except OSError as exc:
        raise ConfigError([f"cannot read {path}: {exc.strerror}"]) from exc


def cmd_run(args):
    try:
        cfg, prepared = _load(args.config)
        if args.workers is not None:
            if args.workers < 1:
                raise ConfigError(["--workers must be at least 1"])
            cfg.numerics["workers"] = args.workers
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return EXIT_CONFIG
    out = resolve_output(cfg, args.out)
    result = run_scenario(cfg, prepared)
    try:
        write_outputs(result, out)
    except OSError as exc:
        print(f"cannot write outputs to {out}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    for stage, rep in result.reports:
        print(f"{stage}: {rep.summary()}")
    if result.error:
        print(f"error: {result.error}", file=sys.stderr)
    print(f"outputs written to {out}")
    return result.exit_code


def cmd_validate(args):
    try:
        cfg, _ = _load(args.config)
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return EXIT_CONFIG
    sys.stdout.write(emit_config(cfg))
    return 0


def _keys(table):
    out = []
    for name, keys in table.items():
        shown = ", ".join(f"{k}={KINDS[kind][1](d)}" for k, (kind, d) in keys.items())
        out.append(f"  {name}" + (f" ({shown})" if shown else ""))
    return out


def cmd_list(_args):
    lines = ["scenarios:"] + [f"  {s}" for s in SCENARIOS]
    lines += ["nonlinearities:"] + _keys(NONLINEARITY_KEYS)
    lines += ["rough data:"] + _keys(ROUGH_KEYS)
    lines += ["integrators:"] + [f"  {s}" for s in INTEGRATORS]
    lines += ["mollifications:"] + [f"  {s}" for s in MOLLIFICATIONS]
    print("\n".join(lines))
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="roughlab",
        description="Rough-data semilinear heat-flow studies with pass/fail bound reports.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run a scenario and write CSV reports")
    run.add_argument("config", help="path to a scenario configuration file")
    run.add_argument("--out", help=f"output directory (default: config, then ${OUT_ENV})")
    run.add_argument("--workers", type=int, help="worker threads for independent trajectories")
    run.add_argument("--verbose", action="store_true", help="log every verdict as it is produced")
    run.set_defaults(func=cmd_run)
    val = sub.add_parser("validate", help="check a configuration and print its canonical form")
    val.add_argument("config")
    val.set_defaults(func=cmd_validate)
    reg = sub.add_parser("list-registry", help="list scenarios and registered components")
    reg.set_defaults(func=cmd_list)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else 0
    logging.basicConfig(
        level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
        format="%(levelname)s %(message)s",
    )
    try:
        return args.func(args)
    except Exception as exc:  # noqa: BLE001 - the exit-code contract covers internal errors
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
