"""Command line: ``eprsim {theory,experiment,analyze,full}``."""
from __future__ import annotations

import argparse
import logging
import sys

from . import pipeline
from .config import RunConfig
from .errors import ConfigError, DataError, DegeneracyError

log = logging.getLogger("eprsim")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat YAML config file (defaults: published parameters)")
    common.add_argument("--out", help="output directory (overrides output_dir)")
    common.add_argument("--seed", type=int, help="random seed (overrides seed)")

    ap = argparse.ArgumentParser(prog="eprsim", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("theory", parents=[common], help="model conditionals and theory report")
    sub.add_parser("experiment", parents=[common], help="simulated near/far-field slit scans")
    an = sub.add_parser("analyze", parents=[common], help="analyze measured scan CSV files")
    an.add_argument("--position", required=True, help="position-scan CSV")
    an.add_argument("--momentum", required=True, help="momentum-scan CSV")
    sub.add_parser("full", parents=[common], help="theory + experiment + comparison")
    return ap


def load_config(args) -> RunConfig:
    cfg = RunConfig.from_file(args.config) if args.config else RunConfig()
    changes = {}
    if args.out is not None:
        changes["output_dir"] = args.out
    if args.seed is not None:
        changes["seed"] = args.seed
    return cfg.replace(**changes) if changes else cfg


def _summary(name: str, r) -> str:
    return (f"[{name}] dx_inf={r.dx_inf_mm:.5g} mm  dp_inf={r.dp_inf_invmm:.5g} hbar/mm  "
            f"product={r.product_hbar2:.4g} hbar^2  EPR violated={r.epr_violated}  "
            f"inseparable={r.inseparable}")


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args)
        if args.command == "theory":
            print(_summary("theory", pipeline.run_theory(cfg)))
        elif args.command == "experiment":
            print(_summary("experiment", pipeline.run_experiment(cfg)))
        elif args.command == "analyze":
            print(_summary("analyze", pipeline.analyze_external(args.position, args.momentum, cfg)))
        else:
            th, ex = pipeline.run_full(cfg)
            print(_summary("theory", th))
            print(_summary("experiment", ex))
        log.info("outputs written to %s", cfg.output_dir)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except DegeneracyError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
