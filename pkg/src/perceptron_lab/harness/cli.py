"""Command-line entry point: ``perceptron-lab <experiment> --config cfg.json``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from perceptron_lab.errors import CapabilityError, DomainError
from perceptron_lab.harness.config import ConfigError, Experiment, ExperimentConfig
from perceptron_lab.harness.experiments import run

EXIT_OK, EXIT_CONFIG, EXIT_CAPABILITY = 0, 2, 3


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="perceptron-lab", description=__doc__)
    parser.add_argument("experiment", choices=[e.value for e in Experiment])
    parser.add_argument("--config", type=Path, help="JSON experiment config")
    parser.add_argument("--seed", type=int, help="master seed (overrides the config)")
    parser.add_argument("--out", type=Path, default=Path("results"), help="output directory")
    parser.add_argument("--workers", type=int, default=1)
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.config is not None:
            raw = json.loads(args.config.read_text())
            if not isinstance(raw, dict):
                raise ConfigError("config must be a JSON object")
        else:
            raw = {}
        if raw.setdefault("experiment", args.experiment) != args.experiment:
            raise ConfigError(f"config is for {raw['experiment']!r}, not {args.experiment!r}")
        if args.seed is not None:
            raw["seed"] = args.seed
        config = ExperimentConfig.from_dict(raw)
    except CapabilityError as exc:
        print(f"capability error: {exc}", file=sys.stderr)
        return EXIT_CAPABILITY
    except (ConfigError, DomainError, OSError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        summary = run(config, args.out, max(1, args.workers))
    except CapabilityError as exc:
        print(f"capability error: {exc}", file=sys.stderr)
        return EXIT_CAPABILITY
    except DomainError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(json.dumps({"experiment": config.experiment.value, "out": str(args.out),
                      "summary_keys": sorted(summary)}))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
