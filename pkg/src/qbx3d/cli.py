"""Command line driver: ``qbx3d run <config>`` and ``qbx3d sweep <config>``."""
import argparse
import logging
import os
import sys

from . import _backend
from .config import ConfigError, load_config
from .experiments import (COLUMNS, ESTIMATE_COLUMNS, SWEEP_COLUMNS, run_distance_sweep,
                          run_row, write_csv)

log = logging.getLogger("qbx3d")


def build_parser():
    ap = argparse.ArgumentParser(prog="qbx3d", description="Local QBX layer potentials and "
                                 "Dirichlet solves on 3D surfaces.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, text in (("run", "run the parameter rows of a config (lists are zipped)"),
                       ("sweep", "cross all sweep lists, or sweep target distance for "
                                 "eval_near configs")):
        p = sub.add_parser(name, help=text)
        p.add_argument("config")
        p.add_argument("--far-field", choices=("direct", "treecode"), default=None,
                       help="override the far-field method of the config")
        p.add_argument("--threads", type=int, default=None, help="numba thread count")
        p.add_argument("--out", default=None, help="CSV output path (default: config "
                       "'output' key, else stdout)")
        p.add_argument("--estimates", action="store_true",
                       help="append coefficient and truncation error estimates")
        p.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    if args.threads is not None:
        if args.threads < 1:
            print("qbx3d: --threads must be positive", file=sys.stderr)
            return 2
        _backend.set_threads(args.threads)
    try:
        cfg = load_config(args.config)
        out = args.out or cfg.output
        distance = args.command == "sweep" and cfg.kind in ("eval_near", "sweep")
        rows = []
        for row in cfg.rows(product=args.command == "sweep"):
            log.info("%s: %s", cfg.id, row)
            if distance:
                rows.extend(run_distance_sweep(cfg, row, args.far_field))
            else:
                rows.extend(run_row(cfg, row, args.far_field, args.estimates))
        if distance:
            cols = SWEEP_COLUMNS
        else:
            cols = COLUMNS + (ESTIMATE_COLUMNS if args.estimates else ())
        if out:
            d = os.path.dirname(os.path.abspath(out))
            os.makedirs(d, exist_ok=True)
            write_csv(out, rows, cols)
        else:
            write_csv(sys.stdout, rows, cols)
    except (ConfigError, ValueError, RuntimeError, MemoryError, OSError) as exc:
        print("qbx3d: error: %s" % exc, file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
