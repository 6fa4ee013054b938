"""``syncloc`` command line: simulate, estimate, tolerance, grid."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from . import bench
from .errors import SynclocError

log = logging.getLogger("syncloc")


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="key = value config file")
    common.add_argument("--preset", choices=sorted(bench.PRESETS))
    common.add_argument("--seed", type=int)
    common.add_argument("--offset", type=float, help="single true offset (s)")
    common.add_argument("--sigma", type=float, help="single bearing noise level")
    common.add_argument("--trials", type=int)
    common.add_argument("--workers", type=int)
    common.add_argument("--out", type=str)
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="syncloc", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="write a simulated scenario to files")

    est = sub.add_parser("estimate", parents=[common], help="estimate from trajectory and bearing files")
    est.add_argument("traj_a", type=Path)
    est.add_argument("traj_b", type=Path)
    est.add_argument("bearings", type=Path)
    est.add_argument("--method", choices=bench.METHODS, default="nto")
    est.add_argument("--truth", type=Path, help="ground-truth sidecar for error reporting")

    sub.add_parser("tolerance", parents=[common], help="zero-noise offset sweep (NTO, ITO)")
    grid = sub.add_parser("grid", parents=[common], help="offset x noise grid (baseline, NTO, ITO)")
    grid.add_argument("--method", choices=bench.METHODS, action="append",
                      help="restrict to these methods (repeatable)")
    return p


def _config(args) -> bench.ExperimentConfig:
    overrides = dict(seed=args.seed, trials=args.trials, workers=args.workers, out=args.out)
    if args.offset is not None:
        overrides["offsets"] = (args.offset,)
    if args.sigma is not None:
        overrides["sigmas"] = (args.sigma,)
    return bench.build_config(args.preset, args.config, **overrides)


def _print_summary(records) -> None:
    for row in bench.summarize(records):
        print(
            f"{row['method']:>8}  offset={row['true_offset']:.2f}  sigma={row['sigma']:.3f}  "
            f"n={row['trials']}  ok={row['n_ok']}  "
            f"med_offset_err={row['median_offset_error']:.4g}  "
            f"mean_rot_err={row['mean_rotation_error_deg']:.4g}"
        )


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        config = _config(args)
        if args.command == "simulate":
            paths = bench.cmd_simulate(config)
            for p in paths.values():
                print(p)
            return 0
        if args.command == "estimate":
            report = bench.cmd_estimate(args.traj_a, args.traj_b, args.bearings, args.method, config, args.truth)
            text = json.dumps(report, indent=2)
            if args.out:
                Path(args.out).parent.mkdir(parents=True, exist_ok=True)
                Path(args.out).write_text(text + "\n")
            print(text)
            return 0 if report["status"] in ("ok", "not_converged") else 1
        if args.command == "tolerance":
            records = bench.cmd_tolerance(config)
        else:
            if args.method:
                config = dataclasses.replace(config, methods=tuple(args.method))
                records = bench.run_sweep(config)
                bench.save_sweep(config, records, "grid")
            else:
                records = bench.cmd_grid(config)
        _print_summary(records)
        print(f"records written to {config.out}")
        return 0
    except (SynclocError, OSError) as exc:
        print(f"syncloc: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
