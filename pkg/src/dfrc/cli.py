"""Command line entry point: ``dfrc <kind> --config PATH --out PATH``."""

from __future__ import annotations

import argparse
import sys

import yaml

from .config import ConfigError, load_config
from .experiments import KINDS, manifest, parse_sweep, run_experiment, write_table
from .optimizer import GuardExceeded, InfeasibleError

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_GUARD = 0, 2, 3, 4


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dfrc", description="Run a DFRC experiment and write a "
                                "CSV table with a manifest header.")
    p.add_argument("kind", choices=KINDS)
    p.add_argument("--config", required=True, help="YAML/JSON system configuration")
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--seed", type=int, default=None, help="master seed (overrides the file)")
    p.add_argument("--sweep", action="append", default=[], metavar="KEY=START:STOP:STEP",
                   help="replace an experiment grid; stop is inclusive")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg, experiment = load_config(args.config)
        experiment = dict(experiment)
        seed = experiment.pop("seed", None)
        seed = args.seed if args.seed is not None else (cfg.seed if seed is None else int(seed))
        for text in args.sweep:
            key, values = parse_sweep(text)
            experiment[key] = values
        table = run_experiment(args.kind, cfg, experiment, seed)
        write_table(args.out, table, manifest(args.kind, cfg, experiment, seed))
    except (ConfigError, OSError, yaml.YAMLError) as exc:
        print(f"dfrc: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InfeasibleError as exc:
        print(f"dfrc: infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except GuardExceeded as exc:
        print(f"dfrc: guard exceeded: {exc}", file=sys.stderr)
        return EXIT_GUARD
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
