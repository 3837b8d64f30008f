"""Command-line entry point: ``gkploss sweep`` and ``gkploss marginal``."""
from __future__ import annotations

import argparse
import sys

from .sweep import ConfigError, emit_marginal, load_config, run_sweep, summarize_flags, write_csv


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gkploss", description="GKP teleportation-QEC under loss.")
    sub = parser.add_subparsers(dest="command", required=True)

    sw = sub.add_parser("sweep", help="channel fidelity over an (epsilon, eta, gain) grid")
    sw.add_argument("--config", required=True, help="key = value configuration file")
    sw.add_argument("--out", help="CSV output path (overrides 'output' in the config)")
    sw.add_argument("--workers", type=int, help="worker processes (overrides the config)")

    mg = sub.add_parser("marginal", help="q-marginal of logical 0 after amplification and loss")
    mg.add_argument("--epsilon", type=float, required=True)
    mg.add_argument("--eta", type=float, required=True)
    mg.add_argument("--gain", default="none", help="none, pre-amp or a numeric gain >= 1")
    mg.add_argument("--out", required=True)
    mg.add_argument("--points", type=int, default=4001)
    return parser


def _sweep(args) -> int:
    config = load_config(args.config)
    out = args.out or config.output
    if out is None:
        raise ConfigError("output: no --out given and no 'output' key in the config")
    rows = run_sweep(config, workers=args.workers)
    write_csv(out, config, rows)
    return 1 if summarize_flags(rows) else 0


def _marginal(args) -> int:
    dump = emit_marginal(args.epsilon, args.eta, args.gain, out=args.out, n_points=args.points)
    print(f"misinterpreted_mass = {dump.misinterpreted_mass:.11e}")
    return 0


def main(argv=None) -> int:
    return _run(_build_parser().parse_args(argv))


def sweep_main(argv=None) -> int:
    """Entry point for the bare ``sweep`` command."""
    return main(["sweep", *(sys.argv[1:] if argv is None else argv)])


def marginal_main(argv=None) -> int:
    """Entry point for the bare ``marginal`` command."""
    return main(["marginal", *(sys.argv[1:] if argv is None else argv)])


def _run(args) -> int:
    try:
        return _sweep(args) if args.command == "sweep" else _marginal(args)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
