"""Command-line entry point.

    tergmkit validate --config run.yaml
    tergmkit run --config run.yaml --output-dir out --seed 7 --workers 4

Failures print a JSON error report on stderr and exit nonzero (2 for invalid
configuration, 1 for errors while running).
"""
from __future__ import annotations

import argparse
import json
import logging
import sys

from . import __version__
from .analysis import AnalysisError
from .config import ConfigError, load_config, validate
from .estimation import EstimationError
from .netcore import PanelError
from .pipeline import COMMANDS, cmd_report, resolve_workers
from .terms import ModelError

EXIT_INVALID = 2
EXIT_FAILED = 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tergmkit", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"tergmkit {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "validate": "check a config and print diagnostics as JSON",
        "ingest": "read and threshold the input files; write a panel summary",
        "simulate": "simulate a panel from the config's model and theta (and fit it)",
        "fit": "bootstrapped MPLE; writes coefficients.csv and fit.json",
        "report": "mixing, probability and decile tables from an existing fit",
        "run": "ingest or simulate, fit, and report in one go",
    }
    for name, text in helps.items():
        p = sub.add_parser(name, help=text)
        p.add_argument("--config", "-c", required=True, help="YAML run configuration")
        if name == "validate":
            p.add_argument("--data-dir", help="validate against inputs in this directory")
        else:
            p.add_argument("--output-dir", "-o", help="override output_dir")
            p.add_argument("--data-dir", help="read edges.csv, attributes.csv and dyad_covariates.csv "
                                              "from this directory instead of the data section")
            p.add_argument("--seed", type=int, help="override fit and simulation seeds")
            p.add_argument("--workers", "-j", type=int,
                           help="worker threads (default: $TERGMKIT_WORKERS, then config)")
        if name == "report":
            p.add_argument("--fit", help="fit.json to report on (default: OUTPUT_DIR/fit.json)")
        p.add_argument("--verbose", "-v", action="store_true")
    return parser


def _error(kind: str, errors: list[dict], code: int) -> int:
    json.dump({"status": "error", "kind": kind, "errors": errors}, sys.stderr, indent=2)
    sys.stderr.write("\n")
    return code


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        if getattr(args, "data_dir", None):
            cfg = cfg.with_overrides(data_dir=args.data_dir)
        if args.command == "validate":
            diags = validate(cfg)
            errors = [d for d in diags if d.level == "error"]
            json.dump({"status": "error" if errors else "ok",
                       "diagnostics": [d.to_dict() for d in diags]}, sys.stdout, indent=2)
            sys.stdout.write("\n")
            return EXIT_INVALID if errors else 0
        cfg = resolve_workers(cfg.with_overrides(seed=args.seed, output_dir=args.output_dir), args.workers)
        if args.command == "report":
            out = cmd_report(cfg, args.fit)
        else:
            out = COMMANDS[args.command](cfg)
    except ConfigError as e:
        return _error("invalid-config", [d.to_dict() for d in e.diagnostics if d.level == "error"]
                      or [{"level": "error", "code": "invalid-config", "message": str(e)}], EXIT_INVALID)
    except FileNotFoundError as e:
        return _error("missing-input", [{"level": "error", "code": "missing-input", "message": str(e)}],
                      EXIT_INVALID)
    except (PanelError, ModelError, EstimationError, AnalysisError, ValueError, OSError) as e:
        code = getattr(e, "code", type(e).__name__)
        return _error("run-failed", [{"level": "error", "code": code, "message": str(e)}], EXIT_FAILED)
    print(json.dumps({"status": "ok", "command": args.command, "output_dir": str(out)}))
    return 0


if __name__ == "__main__":
    sys.exit(main())
