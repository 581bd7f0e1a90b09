"""Command line: ``kzxx run|analyze|figures|validate``."""
from __future__ import annotations

import argparse
import json
import logging
import sys

from .analyze import analyze
from .config import ConfigError, load_config, load_yaml, validate
from .figures import FIGURES, emit_figures
from .sweep import run


def _run(args):
    cfg = load_config(args.config)
    man = run(cfg, args.workers)
    bad = 0
    for key in man["runs"][-1]["new"]:
        info = man["trajectories"][key]
        print(f"{key}: {info['status']} {info['message']}".rstrip())
        bad += info["status"] == "failed"
    print(f"store: {cfg.output}")
    return 1 if bad else 0


def _analyze(args):
    summary = analyze(args.store)
    print(json.dumps(summary, indent=1, sort_keys=True))
    return 0


def _figures(args):
    which = FIGURES if args.which == ["all"] else args.which
    written = emit_figures(args.store, which, args.out)
    if not written:
        print("nothing to draw: no figure selected or no matching data")
    for p in written:
        print(p)
    return 0


def _validate(args):
    try:
        findings = validate(load_yaml(args.config))
    except (OSError, ConfigError) as e:
        print(f"error: {e}")
        return 1
    for f in findings:
        print(f)
    if not findings:
        print("ok")
    return 1 if any(f.level == "error" for f in findings) else 0


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="kzxx", description=__doc__)
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="cmd", required=True)
    p = sub.add_parser("run", help="run every trajectory of a config")
    p.add_argument("config")
    p.add_argument("--workers", type=int, default=None,
                   help="parallel trajectories (default: $KZXX_WORKERS or 1)")
    p.set_defaults(func=_run)
    p = sub.add_parser("analyze", help="fits, collapses and exponents for a store")
    p.add_argument("store")
    p.set_defaults(func=_analyze)
    p = sub.add_parser("figures", help="SVG figures plus their CSV data")
    p.add_argument("store")
    p.add_argument("--which", nargs="*", default=["all"], choices=list(FIGURES) + ["all"])
    p.add_argument("--out", default=None, help="output directory (default <store>/figures)")
    p.set_defaults(func=_figures)
    p = sub.add_parser("validate", help="check a config without running it")
    p.add_argument("config")
    p.set_defaults(func=_validate)
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(message)s")
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"invalid config: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
