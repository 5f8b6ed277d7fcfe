"""Command-line entry point.

Exit codes: 0 success, 2 configuration error, 3 numerical failure,
4 I/O failure, 1 anything else.
"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import sys

from . import __version__
from .preconditioning import KINDS
from .runner import PRESETS, ConfigError, NumericalError, load_config, load_preset, run_experiment
from .runner import ExperimentConfig
from .topology import TopologyError

EXIT_OK, EXIT_OTHER, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_IO = 0, 1, 2, 3, 4


def build_parser():
    ap = argparse.ArgumentParser(prog="distcg", description="Distributed CG adaptive estimation experiments.")
    src = ap.add_mutually_exclusive_group()
    src.add_argument("--config", help="INI experiment file")
    src.add_argument("--preset", choices=sorted(PRESETS), help="bundled experiment")
    ap.add_argument("--scenario", choices=("parameter", "spectrum"))
    ap.add_argument("--algorithm", action="append", help="algorithm entry, repeatable (name or name@preconditioner)")
    ap.add_argument("--nodes", type=int)
    ap.add_argument("--instants", type=int)
    ap.add_argument("--runs", type=int)
    ap.add_argument("--seed", type=int)
    ap.add_argument("--preconditioner", choices=KINDS)
    ap.add_argument("--topology", help="edge-list file, or one of ring, geometric, full, auto")
    ap.add_argument("--workers", type=int)
    ap.add_argument("--output", help="output directory")
    ap.add_argument("-v", "--verbose", action="store_true")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return ap


_OVERRIDES = ("scenario", "nodes", "instants", "runs", "seed", "preconditioner", "topology", "workers", "output")


def config_from_args(args):
    if args.config:
        cfg = load_config(args.config)
    elif args.preset:
        cfg = load_preset(args.preset)
    else:
        cfg = ExperimentConfig()
    changes = {k: getattr(args, k) for k in _OVERRIDES if getattr(args, k) is not None}
    if args.algorithm:
        changes["algorithms"] = tuple(args.algorithm)
    if "scenario" in changes and changes["scenario"] != cfg.scenario:
        # scenario-specific keys do not carry across scenarios
        changes["scenario_params"] = {}
    return dataclasses.replace(cfg, **changes).validate()


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = config_from_args(args)
        if cfg.output is None:
            cfg = dataclasses.replace(cfg, output="distcg-output")
        exp = run_experiment(cfg)
    except (ConfigError, TopologyError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except Exception as exc:  # noqa: BLE001
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_OTHER
    for tag, r in exp.results.items():
        print(f"{tag:24s} steady-state MSD {r.steady_msd_db():8.2f} dB")
    print(f"outputs written to {cfg.output}")
    return EXIT_OK
