"""Command-line entry points.

``repdyn run <config-file>`` executes a configured experiment; ``simulate``,
``fit``, ``mds``, and ``mnist-prep`` offer the individual pipeline stages
directly.  Exit codes: 0 success, 1 configuration error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .analysis import DistanceMatrix, classical_mds
from .config import ConfigError, parse_config
from .data import DataFormatError, export_csv, load_mnist
from .experiments import RunError, make_run_dir, run
from .fitting import fit_rates, trajectory_energy
from .network import DivergenceError
from .theory import (
    EffectiveParams,
    RhsVariant,
    SingularityError,
    StepFailureError,
    TheoryState,
    Trajectory,
    integrate,
    loss_curve,
)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="repdyn",
        description="Two-point representation-dynamics experiments")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="execute an experiment config file")
    p_run.add_argument("config", type=Path)
    p_run.add_argument("--paper-scale", action="store_true",
                       help="use the published architecture table for defaults")
    p_run.add_argument("--workers", type=int, default=None)
    p_run.add_argument("--out", type=Path, default=None)

    p_sim = sub.add_parser("simulate", help="integrate the reduced dynamics")
    p_sim.add_argument("--inv-tau-h", type=float, required=True)
    p_sim.add_argument("--inv-tau-y", type=float, required=True)
    p_sim.add_argument("--inv-tau-ybar", type=float, default=None)
    p_sim.add_argument("--dx2", type=float, default=0.25)
    p_sim.add_argument("--dyT2", type=float, default=1.0)
    p_sim.add_argument("--dh2-0", type=float, default=1e-6)
    p_sim.add_argument("--dy2-0", type=float, default=1e-12)
    p_sim.add_argument("--w-0", type=float, default=0.0)
    p_sim.add_argument("--ybar-dev2-0", type=float, default=0.0)
    p_sim.add_argument("--t-end", type=float, default=50.0)
    p_sim.add_argument("--samples", type=int, default=400)
    p_sim.add_argument("--variant", type=str, default="true",
                       choices=[v.value for v in RhsVariant])
    p_sim.add_argument("--out", type=Path, default=Path("trajectory.csv"))

    p_fit = sub.add_parser("fit", help="fit effective rates to a trajectory CSV")
    p_fit.add_argument("--trajectory", type=Path, required=True)
    p_fit.add_argument("--dx2", type=float, required=True)
    p_fit.add_argument("--dyT2", type=float, required=True)
    p_fit.add_argument("--variant", type=str, default="true",
                       choices=[v.value for v in RhsVariant])
    p_fit.add_argument("--fit-ybar", action="store_true")
    p_fit.add_argument("--starts", type=int, default=16)
    p_fit.add_argument("--out", type=Path, default=Path("fit.json"))

    p_mds = sub.add_parser("mds", help="project a distance-matrix CSV")
    p_mds.add_argument("--matrix", type=Path, required=True)
    p_mds.add_argument("--dims", type=int, default=2)
    p_mds.add_argument("--out", type=Path, default=Path("mds.csv"))

    p_prep = sub.add_parser("mnist-prep", help="validate and export an IDX pair")
    p_prep.add_argument("--images", type=Path, required=True)
    p_prep.add_argument("--labels", type=Path, required=True)
    p_prep.add_argument("--out", type=Path, default=Path("mnist_prep"))
    p_prep.add_argument("--limit", type=int, default=0,
                        help="export at most this many items (0 = all)")
    return parser


def _cmd_run(args) -> int:
    try:
        text = args.config.read_text()
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        config = parse_config(text, paper_scale=args.paper_scale)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.workers is not None:
        if args.workers < 1:
            print("config error: --workers must be >= 1", file=sys.stderr)
            return EXIT_CONFIG
        config = replace(config, workers=args.workers)
    try:
        run_dir = run(config, out_dir=args.out)
    except (RunError, DivergenceError, DataFormatError, SingularityError,
            StepFailureError, OSError) as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(run_dir)
    return EXIT_OK


def _cmd_simulate(args) -> int:
    try:
        params = EffectiveParams(dx2=args.dx2, dyT2=args.dyT2,
                                 inv_tau_h=args.inv_tau_h,
                                 inv_tau_y=args.inv_tau_y,
                                 inv_tau_ybar=args.inv_tau_ybar)
        initial = TheoryState(dh2=args.dh2_0, dy2=args.dy2_0, w=args.w_0)
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        times = np.linspace(0.0, args.t_end, args.samples)
        traj = integrate(initial, params, RhsVariant(args.variant),
                         t_end=args.t_end, sample_times=times)
        if params.inv_tau_ybar is not None:
            traj = Trajectory(times=traj.times, dh2=traj.dh2, dy2=traj.dy2,
                              w=traj.w,
                              loss=loss_curve(traj, params, args.ybar_dev2_0))
        traj.to_csv(args.out)
    except (SingularityError, StepFailureError, ValueError, OSError) as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(args.out)
    return EXIT_OK


def _cmd_fit(args) -> int:
    try:
        observed = Trajectory.from_csv(args.trajectory)
    except (OSError, ValueError) as exc:
        print(f"config error: bad trajectory file: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        partial = EffectiveParams(dx2=args.dx2, dyT2=args.dyT2,
                                  inv_tau_h=1.0, inv_tau_y=1.0)
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        result = fit_rates(observed, partial, RhsVariant(args.variant),
                           fit_ybar=args.fit_ybar, n_starts=args.starts)
        payload = result.to_json_dict()
        energy = trajectory_energy(observed)
        payload["normalized_fit_loss"] = (
            result.fit_loss / energy if energy > 0 else None)
        with open(args.out, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
    except (ValueError, SingularityError, StepFailureError, OSError) as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(args.out)
    return EXIT_OK


def _cmd_mds(args) -> int:
    try:
        matrix = DistanceMatrix.from_csv(args.matrix)
    except (OSError, ValueError) as exc:
        print(f"config error: bad matrix file: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        result = classical_mds(matrix, dims=args.dims)
        result.to_csv(args.out, labels=matrix.labels)
    except (ValueError, OSError) as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    if result.padded:
        print("warning: fewer nonnegative eigenvalues than requested "
              "dimensions; padded with zero axes", file=sys.stderr)
    print(args.out)
    return EXIT_OK


def _cmd_mnist_prep(args) -> int:
    try:
        dataset = load_mnist(args.images, args.labels)
    except (OSError, DataFormatError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        n = len(dataset) if args.limit == 0 else min(args.limit, len(dataset))
        from .data import subset as dataset_subset

        trimmed = dataset_subset(dataset, np.arange(n), name=dataset.name)
        export_csv(trimmed, out / "data.csv")
        histogram = {str(d): int(np.sum(dataset.labels == d)) for d in range(10)}
        with open(out / "manifest.json", "w") as fh:
            json.dump({
                "items": len(dataset),
                "exported": n,
                "input_dim": int(dataset.inputs.shape[1]),
                "label_histogram": histogram,
                "source_images": str(args.images),
                "source_labels": str(args.labels),
            }, fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    print(out)
    return EXIT_OK


_COMMANDS = {
    "run": _cmd_run,
    "simulate": _cmd_simulate,
    "fit": _cmd_fit,
    "mds": _cmd_mds,
    "mnist-prep": _cmd_mnist_prep,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    return _COMMANDS[args.command](args)


if __name__ == "__main__":
    sys.exit(main())
