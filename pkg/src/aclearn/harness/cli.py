"""Command line entry point: ``aclearn {train,eval,simulate,gradcheck,report}``."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from ..errors import AclError, ArgumentError
from ..gradcheck import LOSSES, run_gradcheck
from ..nn import load_params
from ..simulators import (
    CHANNELS,
    JOINT_NAMES,
    HarmonicOscillatorSpec,
    TrapezoidSkeletonSpec,
    render_pendulum_frame,
    render_skeleton_frame,
    sample_pendulum_batch,
    sample_skeleton_batch,
    sample_timeseries_labels,
    write_dump_csv,
)
from .config import EXPERIMENTS, apply_settings, default_config, load_config, parse_config, with_overrides
from .experiments import REPORT_HEADER, evaluate_checkpoint, report_csv, run_experiment, timeseries_groups

log = logging.getLogger("aclearn")


def _config_from_args(args):
    if args.config:
        path = Path(args.config)
        if not path.exists():
            raise ArgumentError(f"config file {path} does not exist")
        text = path.read_text()
    else:
        text = f"[experiment]\nname = {args.experiment}\n"
    if args.set:
        text = apply_settings(text, args.set)
    cfg = parse_config(text, args.config or "<command line>")
    return with_overrides(cfg, seed=args.seed, out=args.out)


def cmd_train(args) -> int:
    cfg = _config_from_args(args)
    result = run_experiment(cfg)
    for row in result.rows:
        if row[4] in ("pearson", "pearson_abs", "mae") or row[5] == "mean":
            print(f"{row[4]}[{row[5]}] = {row[6]:.4f}")
    print(f"wrote {cfg.out}/report.csv and {cfg.out}/history.csv")
    return 0


def cmd_eval(args) -> int:
    run_dir = Path(args.run)
    cfg = load_config(run_dir / "config.ini")
    params = load_params(Path(args.checkpoint) if args.checkpoint else run_dir / "predictor.json")
    text = report_csv(evaluate_checkpoint(cfg, params))
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_simulate(args) -> int:
    rng = np.random.default_rng(args.seed)
    images = None
    if args.experiment == "pendulum":
        traj = sample_pendulum_batch(HarmonicOscillatorSpec(length=args.length), rng, args.count)[:, :, None]
        names = ["value"]
        if args.render:
            angles = args.max_angle * traj[:, :, 0]
            images = np.array([[render_pendulum_frame(a) for a in row] for row in angles])
    elif args.experiment == "skeleton":
        flat = sample_skeleton_batch(TrapezoidSkeletonSpec(n_frames=args.length), rng, args.count)
        traj = flat.reshape(args.count, args.length, -1)
        names = [f"{j}_{axis}" for j in JOINT_NAMES for axis in "xy"]
        if args.render:
            images = np.array([[render_skeleton_frame(f)[0] for f in row] for row in traj])
    else:
        cfg = default_config("timeseries")
        cfg.seed = args.seed
        train, _ = timeseries_groups(cfg)
        labels = sample_timeseries_labels(train, rng, args.count, cfg.data.k).labels
        traj = labels.reshape(args.count, cfg.data.k, len(CHANNELS))
        names = list(CHANNELS)
    write_dump_csv(args.output, traj, names, images)
    print(f"wrote {args.count} trajectories to {args.output}")
    return 0


def cmd_gradcheck(args) -> int:
    results = run_gradcheck(range(args.seeds))
    worst = {name: max(r.errors[name] for r in results) for name in LOSSES}
    for name in LOSSES:
        status = "ok" if worst[name] < args.tol else "FAIL"
        print(f"{name:12s} worst relative error {worst[name]:.3e}  {status}")
    return 0 if max(worst.values()) < args.tol else 1


def _report_files(paths):
    for p in map(Path, paths):
        if p.is_dir():
            yield from sorted(p.rglob("report.csv"))
        elif p.exists():
            yield p
        else:
            raise ArgumentError(f"{p} does not exist")


def aggregate_reports(paths) -> str:
    """Mean, sample std, min, max and count per (experiment, mode, labeled, metric, target)."""
    groups: dict[tuple, list[float]] = {}
    for path in _report_files(paths):
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or tuple(header) != REPORT_HEADER:
                raise ArgumentError(f"{path} is not a report file")
            for row in reader:
                key = (row[0], row[2], int(row[3]), row[4], row[5])
                groups.setdefault(key, []).append(float(row[6]))
    if not groups:
        raise ArgumentError("no report rows found")
    lines = ["experiment,mode,labeled,metric,target,count,mean,std,min,max"]
    for key in sorted(groups):
        v = np.array(groups[key])
        std = float(v.std(ddof=1)) if len(v) > 1 else 0.0
        stats = [len(v), repr(float(v.mean())), repr(std), repr(float(v.min())), repr(float(v.max()))]
        lines.append(",".join(str(x) for x in (*key, *stats)))
    return "\n".join(lines) + "\n"


def cmd_report(args) -> int:
    text = aggregate_reports(args.paths)
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aclearn", description="Adversarial constraint learning experiments")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeat for debug)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train one configuration and write history/report CSVs")
    p.add_argument("config", nargs="?", help="INI config file")
    p.add_argument("--experiment", choices=EXPERIMENTS, default="pendulum",
                   help="experiment defaults to use when no config file is given")
    p.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE", help="override one config value")
    p.add_argument("--seed", type=int, help="split and training seed")
    p.add_argument("--out", help="output directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="re-evaluate a trained run on its test groups")
    p.add_argument("run", help="run directory written by train")
    p.add_argument("--checkpoint", help="predictor checkpoint (default: RUN/predictor.json)")
    p.add_argument("--output", help="write the report here instead of stdout")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("simulate", help="dump simulator samples to CSV")
    p.add_argument("experiment", choices=EXPERIMENTS)
    p.add_argument("--count", type=int, default=10)
    p.add_argument("--length", type=int, default=5, help="frames per trajectory")
    p.add_argument("--render", action="store_true", help="append rendered 32x32 pixels")
    p.add_argument("--max-angle", type=float, default=0.6, help="swing angle for a unit pendulum value")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", dest="output", default="samples.csv")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("gradcheck", help="finite-difference check of every training loss")
    p.add_argument("--seeds", type=int, default=20)
    p.add_argument("--tol", type=float, default=1e-4)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("report", help="aggregate report CSVs across runs")
    p.add_argument("paths", nargs="+", help="report files or directories to search")
    p.add_argument("--out", dest="output", help="write the summary here instead of stdout")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = {0: logging.WARNING, 1: logging.INFO}.get(args.verbose, logging.DEBUG)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "count", 1) < 1 or getattr(args, "length", 5) < 2:
        parser.error("--count must be >= 1 and --length >= 2")
    try:
        return args.func(args)
    except (AclError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
