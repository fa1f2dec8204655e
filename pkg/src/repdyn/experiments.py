"""Config-driven experiment runner.

Each experiment reproduces one protocol at desk scale: train seeded networks,
probe the pair observables, fit the reduced model, and run the structural
analyses, writing every artifact (CSV data, JSON fit records, JSON manifest)
into a fresh run directory.  Trials run in parallel when requested; all
writes happen in the parent process.
"""

from __future__ import annotations

import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .analysis import (
    DistanceMatrix,
    classical_mds,
    exponential_weighing,
    pairwise_distances,
    pearson,
    rescale_to_median,
    theory_distance_matrix,
)
from .config import ExperimentConfig, Experiment, config_to_dict
from .data import (
    Dataset,
    blobs,
    digit_pair_indices,
    load_mnist,
    sorted_digit_subset,
    subset as dataset_subset,
    two_point,
    write_idx,
    xor,
)
from .fitting import FitResult, ablation, fit_rates, theory_curve, trajectory_energy
from .network import (
    DivergenceError,
    NetworkConfig,
    TrainingRecord,
    TrainSchedule,
    build_network,
    forward,
    train,
)
from .observables import (
    PairObservation,
    has_initial_plateau,
    initial_drop_fraction,
    measure_pair,
    measure_pair_at_layers,
    observed_trajectory,
)
from .theory import (
    EffectiveParams,
    RhsVariant,
    TheoryState,
    Trajectory,
    fixed_points,
    integrate,
    loss_curve,
)

# A trial counts as converged when it reduces the training loss by this
# factor; everything else is reported and discarded from aggregate fits.
CONVERGENCE_FACTOR = 1e-3

MNIST_DIR_ENV = "REPDYN_MNIST_DIR"


class RunError(RuntimeError):
    """Raised when an experiment cannot produce its artifacts."""


class RunDir:
    """Output directory that tracks every artifact it hands out."""

    def __init__(self, path: Path):
        self.path = path
        self.artifacts: list[str] = []

    def file(self, name: str) -> Path:
        if name not in self.artifacts:
            self.artifacts.append(name)
        return self.path / name

    def write_json(self, name: str, payload: dict) -> None:
        with open(self.file(name), "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")


def make_run_dir(root, seed: int, stamp: Optional[str] = None) -> RunDir:
    """Create a unique run directory named by timestamp and seed."""
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    stamp = stamp or datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%S")
    base = f"{stamp}-seed{seed}"
    candidate = root / base
    counter = 0
    while candidate.exists():
        counter += 1
        candidate = root / f"{base}-{counter}"
    candidate.mkdir()
    return RunDir(candidate)


def trial_seeds(seed: int, trials: int) -> list[int]:
    """Per-trial 64-bit network seeds derived from the run seed."""
    state = np.random.SeedSequence(seed).generate_state(trials, dtype=np.uint64)
    return [int(s) for s in state]


@dataclass
class TrialJob:
    net_config: NetworkConfig
    schedule: TrainSchedule
    inputs: np.ndarray
    targets: np.ndarray
    pair: tuple[int, int]
    probe_kind: str = "pair"  # "pair" | "depth" | "none"


@dataclass
class TrialOutcome:
    record: Optional[TrainingRecord]
    layer_dh2: Optional[dict[int, list[float]]]
    status: str  # converged | not_converged | diverged
    reason: str = ""


def _execute_trial(job: TrialJob) -> TrialOutcome:
    net = build_network(job.net_config)
    X, Y = job.inputs, job.targets
    i, j = job.pair
    x1, y1, x2, y2 = X[i], Y[i], X[j], Y[j]
    layer_series: dict[int, list[float]] = {
        k: [] for k in range(1, job.net_config.hidden_layers + 1)}

    if job.probe_kind == "depth":
        def probe(n):
            for k, v in measure_pair_at_layers(n, x1, x2).items():
                layer_series[k].append(v)
            return measure_pair(n, x1, y1, x2, y2)
    elif job.probe_kind == "pair":
        def probe(n):
            return measure_pair(n, x1, y1, x2, y2)
    else:
        probe = None

    try:
        record = train(net, X, Y, job.schedule, probe=probe)
    except DivergenceError as exc:
        return TrialOutcome(record=None, layer_dh2=None, status="diverged",
                            reason=str(exc))
    converged = record.losses[-1] < CONVERGENCE_FACTOR * record.losses[0]
    outcome = TrialOutcome(
        record=record,
        layer_dh2=layer_series if job.probe_kind == "depth" else None,
        status="converged" if converged else "not_converged",
        reason="" if converged else "loss reduction below threshold",
    )
    # the trained network is needed by structure experiments
    outcome.net = net  # type: ignore[attr-defined]
    return outcome


def _run_trials(jobs: list[TrialJob], workers: int) -> list[TrialOutcome]:
    if workers <= 1 or len(jobs) <= 1:
        return [_execute_trial(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_execute_trial, jobs))


def _base_manifest(config: ExperimentConfig) -> dict:
    return {
        "experiment": config.experiment.value,
        "config": config_to_dict(config),
        "version": __version__,
        "started_utc": datetime.now(timezone.utc).isoformat(),
    }


def _trial_entries(seeds: list[int], outcomes: list[TrialOutcome]) -> list[dict]:
    return [{"index": i, "seed": s, "status": o.status, "reason": o.reason}
            for i, (s, o) in enumerate(zip(seeds, outcomes))]


def _fit_json(result: FitResult) -> dict:
    return result.to_json_dict()


def _theory_params(config: ExperimentConfig, dx: float, dy: float,
                   fit: FitResult) -> EffectiveParams:
    return EffectiveParams(dx2=dx * dx, dyT2=dy * dy,
                           inv_tau_h=fit.inv_tau_h, inv_tau_y=fit.inv_tau_y,
                           inv_tau_ybar=fit.inv_tau_ybar)


def _write_theory_csv(rd: RunDir, name: str, observed: Trajectory,
                      params: EffectiveParams, variant: RhsVariant) -> None:
    theory = theory_curve(observed, params, variant)
    if params.inv_tau_ybar is not None and observed.loss is not None:
        pair_term = 0.25 * (theory.w + 0.5 * (params.dyT2 - theory.dy2))
        q = max(2.0 * (float(observed.loss[0]) - float(pair_term[0])), 0.0)
        theory = Trajectory(times=theory.times, dh2=theory.dh2, dy2=theory.dy2,
                            w=theory.w, loss=loss_curve(theory, params, q))
    theory.to_csv(rd.file(name))


def run(config: ExperimentConfig, out_dir=None) -> Path:
    """Execute the configured experiment; returns the run directory path.

    Artifacts and a manifest naming all of them are written inside a fresh
    timestamp+seed directory under `out_dir` (defaults to the config's
    ``output_dir``, overridable by the ``REPDYN_OUT`` environment variable).
    """
    root = out_dir or os.environ.get("REPDYN_OUT") or config.output_dir
    rd = make_run_dir(root, config.seed)
    started = time.monotonic()
    manifest = _base_manifest(config)
    runner = _EXPERIMENTS[config.experiment]
    runner(config, rd, manifest)
    manifest["wall_clock_s"] = round(time.monotonic() - started, 3)
    manifest["artifacts"] = sorted(rd.artifacts)
    with open(rd.path / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return rd.path


def _run_simulate(config: ExperimentConfig, rd: RunDir, manifest: dict) -> None:
    t = config.theory
    params = EffectiveParams(dx2=t.dx2, dyT2=t.dyT2, inv_tau_h=t.inv_tau_h,
                             inv_tau_y=t.inv_tau_y, inv_tau_ybar=t.inv_tau_ybar)
    initial = TheoryState(dh2=t.dh2_0, dy2=t.dy2_0, w=t.w_0)
    times = np.linspace(0.0, t.t_end, t.samples)
    traj = integrate(initial, params, t.variant, t_end=t.t_end, sample_times=times)
    if t.inv_tau_ybar is not None:
        traj = Trajectory(times=traj.times, dh2=traj.dh2, dy2=traj.dy2, w=traj.w,
                          loss=loss_curve(traj, params, t.ybar_dev2_0))
    traj.to_csv(rd.file("trajectory.csv"))
    report = fixed_points(initial, params)
    manifest["results"] = {
        "a_high": report.a_high,
        "a_low": report.a_low,
        "dh2_stable": report.dh2_stable,
    }


def _two_point_jobs(config: ExperimentConfig, seeds: list[int],
                    gain: Optional[float] = None,
                    hidden_layers: Optional[int] = None,
                    probe_kind: str = "pair") -> tuple[Dataset, list[TrialJob]]:
    ds = two_point(config.data.dx, config.data.dy)
    jobs = []
    for s in seeds:
        net_cfg = NetworkConfig(
            input_dim=ds.inputs.shape[1], output_dim=ds.targets.shape[1],
            hidden_layers=hidden_layers or config.network.hidden_layers,
            units=config.network.units, activation=config.network.activation,
            init_gain=gain if gain is not None else config.network.init_gain,
            skip_connections=config.network.skip_connections,
            dropout_p=config.network.dropout_p,
            hidden_index=config.network.hidden_index, seed=s)
        jobs.append(TrialJob(net_cfg, config.schedule, ds.inputs, ds.targets,
                             ds.pair_of_interest, probe_kind=probe_kind))
    return ds, jobs


def _run_two_point(config: ExperimentConfig, rd: RunDir, manifest: dict) -> None:
    seeds = trial_seeds(config.seed, config.trials)
    ds, jobs = _two_point_jobs(config, seeds)
    outcomes = _run_trials(jobs, config.workers)
    manifest["trials"] = _trial_entries(seeds, outcomes)
    dx, dy = config.data.dx, config.data.dy
    partial = EffectiveParams(dx2=dx * dx, dyT2=dy * dy, inv_tau_h=1.0, inv_tau_y=1.0)
    results = []
    for i, outcome in enumerate(outcomes):
        if outcome.record is None:
            continue
        outcome.record.to_csv(rd.file(f"trial_{i}_record.csv"))
        if outcome.status != "converged":
            continue
        observed = observed_trajectory(outcome.record)
        fit = fit_rates(observed, partial, RhsVariant.TRUE, fit_ybar=True,
                        n_starts=config.fit.n_starts, seed=config.fit.seed)
        rd.write_json(f"trial_{i}_fit.json", _fit_json(fit))
        _write_theory_csv(rd, f"trial_{i}_theory.csv", observed,
                          _theory_params(config, dx, dy, fit), RhsVariant.TRUE)
        results.append({
            "trial": i,
            "fit_loss": fit.fit_loss,
            "normalized_fit_loss": fit.fit_loss / trajectory_energy(observed),
            "inv_tau_h": fit.inv_tau_h,
            "inv_tau_y": fit.inv_tau_y,
            "inv_tau_ybar": fit.inv_tau_ybar,
            "converged_fit": fit.converged,
        })
    manifest["results"] = {"fits": results}


def _run_init_sweep(config: ExperimentConfig, rd: RunDir, manifest: dict) -> None:
    gains = config.sweep.gains
    if not gains:
        raise RunError("InitSweep requires sweep.gains")
    seeds = trial_seeds(config.seed, len(gains))
    summary = []
    dx, dy = config.data.dx, config.data.dy
    partial = EffectiveParams(dx2=dx * dx, dyT2=dy * dy, inv_tau_h=1.0, inv_tau_y=1.0)
    trial_rows = []
    for g_idx, gain in enumerate(gains):
        _, jobs = _two_point_jobs(config, [seeds[g_idx]], gain=gain)
        outcome = _run_trials(jobs, 1)[0]
        trial_rows.append({"index": g_idx, "seed": seeds[g_idx], "gain": gain,
                           "status": outcome.status, "reason": outcome.reason})
        if outcome.record is None:
            continue
        tag = f"gain_{g_idx}"
        outcome.record.to_csv(rd.file(f"{tag}_record.csv"))
        observed = observed_trajectory(outcome.record)
        fit = fit_rates(observed, partial, RhsVariant.TRUE,
                        n_starts=config.fit.n_starts, seed=config.fit.seed)
        rd.write_json(f"{tag}_fit.json", _fit_json(fit))
        energy = trajectory_energy(observed)
        summary.append({
            "gain": gain,
            "loss_plateau": has_initial_plateau(outcome.record.losses),
            "dh2_plateau": has_initial_plateau(observed.dh2),
            "loss_initial_drop": initial_drop_fraction(outcome.record.losses),
            "fit_loss": fit.fit_loss,
            "normalized_fit_loss": fit.fit_loss / energy if energy > 0 else math.inf,
            "status": outcome.status,
        })
    manifest["trials"] = trial_rows
    manifest["results"] = {"sweep": summary}
    with open(rd.file("sweep_summary.csv"), "w") as fh:
        fh.write("gain,loss_plateau,dh2_plateau,loss_initial_drop,"
                 "fit_loss,normalized_fit_loss,status\n")
        for row in summary:
            fh.write(f"{row['gain']:.17g},{int(row['loss_plateau'])},"
                     f"{int(row['dh2_plateau'])},{row['loss_initial_drop']:.17g},"
                     f"{row['fit_loss']:.17g},{row['normalized_fit_loss']:.17g},"
                     f"{row['status']}\n")


def _run_grid_sweep(config: ExperimentConfig, rd: RunDir, manifest: dict) -> None:
    # stage 1: rates at the canonical separations, averaged over trials
    seeds = trial_seeds(config.seed, config.trials)
    _, jobs = _two_point_jobs(config, seeds)
    outcomes = _run_trials(jobs, config.workers)
    manifest["trials"] = _trial_entries(seeds, outcomes)
    dx0, dy0 = config.data.dx, config.data.dy
    partial = EffectiveParams(dx2=dx0 * dx0, dyT2=dy0 * dy0, inv_tau_h=1.0, inv_tau_y=1.0)
    rates_h, rates_y = [], []
    for outcome in outcomes:
        if outcome.status != "converged":
            continue
        fit = fit_rates(observed_trajectory(outcome.record), partial,
                        RhsVariant.TRUE, n_starts=config.fit.n_starts,
                        seed=config.fit.seed)
        if fit.converged:
            rates_h.append(fit.inv_tau_h)
            rates_y.append(fit.inv_tau_y)
    if not rates_h:
        raise RunError("no converged trials to fit rates from")
    inv_tau_h = float(np.mean(rates_h))
    inv_tau_y = float(np.mean(rates_y))
    rd.write_json("rates.json", {"inv_tau_h": inv_tau_h, "inv_tau_y": inv_tau_y,
                                 "n_fits": len(rates_h)})

    # stage 2: one trial per grid cell, measured vs predicted final distance
    nx, ny = config.sweep.nx, config.sweep.ny
    dxs = np.linspace(*config.sweep.dx_range, nx)
    dys = np.linspace(*config.sweep.dy_range, ny)
    cell_seeds = trial_seeds(config.seed + 1, nx * ny)
    cell_jobs = []
    for i, dx in enumerate(dxs):
        for j, dy in enumerate(dys):
            ds = two_point(float(dx), float(dy))
            net_cfg = NetworkConfig(
                input_dim=1, output_dim=1,
                hidden_layers=config.network.hidden_layers,
                units=config.network.units, activation=config.network.activation,
                init_gain=config.network.init_gain,
                skip_connections=config.network.skip_connections,
                dropout_p=config.network.dropout_p,
                hidden_index=config.network.hidden_index,
                seed=cell_seeds[i * ny + j])
            cell_jobs.append(TrialJob(net_cfg, config.schedule, ds.inputs,
                                      ds.targets, (0, 1)))
    cell_outcomes = _run_trials(cell_jobs, config.workers)
    rows = []
    for idx, outcome in enumerate(cell_outcomes):
        i, j = divmod(idx, ny)
        dx, dy = float(dxs[i]), float(dys[j])
        if outcome.record is None:
            rows.append((dx, dy, math.nan, math.nan, "diverged"))
            continue
        first, last = outcome.record.probes[0], outcome.record.probes[-1]
        params = EffectiveParams(dx2=dx * dx, dyT2=dy * dy,
                                 inv_tau_h=inv_tau_h, inv_tau_y=inv_tau_y)
        predicted = fixed_points(
            TheoryState(dh2=max(first.dh2, 1e-300), dy2=first.dy2, w=first.w),
            params).dh2_stable
        rows.append((dx, dy, last.dh2, predicted, outcome.status))
    with open(rd.file("grid.csv"), "w") as fh:
        fh.write("dx,dy,dh2_final,dh2_predicted,status\n")
        for dx, dy, measured, predicted, status in rows:
            fh.write(f"{dx:.17g},{dy:.17g},{measured:.17g},{predicted:.17g},{status}\n")
    manifest["results"] = {"grid_cells": len(rows),
                           "inv_tau_h": inv_tau_h, "inv_tau_y": inv_tau_y}


def xor_merge_metrics(matrix: np.ndarray) -> dict:
    """Distance ratios between equal-target and unequal-target XOR pairs.

    Works on squared distances; ratios are reported on plain distances.
    """
    d = np.sqrt(np.maximum(matrix, 0.0))
    equal_pairs = [(0, 3), (1, 2)]
    unequal_pairs = [(0, 1), (0, 2), (1, 3), (2, 3)]
    equal = [float(d[i, j]) for i, j in equal_pairs]
    unequal_mean = float(np.mean([d[i, j] for i, j in unequal_pairs]))
    return {
        "equal_pair_distances": equal,
        "unequal_mean_distance": unequal_mean,
        "equal_over_unequal": [e / unequal_mean if unequal_mean > 0 else math.inf
                               for e in equal],
    }


def _run_xor(config: ExperimentConfig, rd: RunDir, manifest: dict) -> None:
    ds = xor()
    seeds = trial_seeds(config.seed, config.trials)
    jobs = []
    for s in seeds:
        net_cfg = NetworkConfig(
            input_dim=2, output_dim=1,
            hidden_layers=config.network.hidden_layers, units=config.network.units,
            activation=config.network.activation, init_gain=config.network.init_gain,
            skip_connections=config.network.skip_connections,
            dropout_p=config.network.dropout_p,
            hidden_index=config.network.hidden_index, seed=s)
        jobs.append(TrialJob(net_cfg, config.schedule, ds.inputs, ds.targets,
                             (0, 1), probe_kind="none"))
    outcomes = _run_trials(jobs, config.workers)
    manifest["trials"] = _trial_entries(seeds, outcomes)
    metrics = []
    for i, outcome in enumerate(outcomes):
        if outcome.record is None:
            continue
        net = getattr(outcome, "net", None)
        if net is None:  # pooled execution does not ship the network back
            net = _retrain_network(jobs[i])
        matrix = pairwise_distances(net, ds)
        matrix.to_csv(rd.file(f"trial_{i}_distances.csv"))
        entry = xor_merge_metrics(matrix.entries)
        entry["trial"] = i
        entry["status"] = outcome.status
        entry["final_loss"] = outcome.record.losses[-1]
        metrics.append(entry)
    manifest["results"] = {"merge_metrics": metrics}


def _retrain_network(job: TrialJob):
    net = build_network(job.net_config)
    train(net, job.inputs, job.targets, job.schedule, probe=None)
    return net


def blob_collapse_metrics(hidden: np.ndarray, grid: int) -> dict:
    """Collapse diagnostics for the two-context bump task.

    The representation block for each context is indexed (x, y); the task
    cares about x in context 1 and y in context 2.  Reported are the
    variance along the irrelevant lattice direction over the variance along
    the relevant one (per context), and the spread between equal-target
    points across contexts relative to the within-context spread.
    """
    per_context = grid * grid
    blocks = [hidden[:per_context].reshape(grid, grid, -1),
              hidden[per_context:].reshape(grid, grid, -1)]
    ratios = []
    for context, block in enumerate(blocks):
        relevant_axis = 0 if context == 0 else 1
        var_relevant = float(np.mean(np.sum(np.var(block, axis=relevant_axis), axis=-1)))
        var_irrelevant = float(np.mean(np.sum(np.var(block, axis=1 - relevant_axis), axis=-1)))
        ratios.append(var_irrelevant / var_relevant if var_relevant > 0 else math.inf)

    # equal-target cross-context spread: context-1 x == context-2 y
    cross = []
    for v in range(grid):
        a = blocks[0][v, :, :]  # all context-1 points with x index v
        b = blocks[1][:, v, :]  # all context-2 points with y index v
        diff = a[:, None, :] - b[None, :, :]
        cross.append(float(np.mean(np.sqrt(np.sum(diff * diff, axis=-1)))))
    inter = float(np.mean(cross))
    intra = []
    for block in blocks:
        flat = block.reshape(per_context, -1)
        centered = flat - flat.mean(axis=0)
        rms = math.sqrt(2.0 * float(np.mean(np.sum(centered**2, axis=1))))
        intra.append(rms)  # RMS pairwise distance within the context
    intra_mean = float(np.mean(intra))
    return {
        "variance_ratio_context1": ratios[0],
        "variance_ratio_context2": ratios[1],
        "inter_equal_target_distance": inter,
        "intra_context_spread": intra_mean,
        "merge_ratio": inter / intra_mean if intra_mean > 0 else math.inf,
    }


def _run_blobs(config: ExperimentConfig, rd: RunDir, manifest: dict) -> None:
    ds = blobs(config.data.grid, config.data.image)
    seeds = trial_seeds(config.seed, config.trials)
    results = []
    trial_rows = []
    for i, s in enumerate(seeds):
        net_cfg = NetworkConfig(
            input_dim=ds.inputs.shape[1], output_dim=1,
            hidden_layers=config.network.hidden_layers, units=config.network.units,
            activation=config.network.activation, init_gain=config.network.init_gain,
            skip_connections=config.network.skip_connections,
            dropout_p=config.network.dropout_p,
            hidden_index=config.network.hidden_index, seed=s)
        job = TrialJob(net_cfg, config.schedule, ds.inputs, ds.targets, (0, 1),
                       probe_kind="none")
        outcome = _execute_trial(job)
        trial_rows.append({"index": i, "seed": s, "status": outcome.status,
                           "reason": outcome.reason})
        if outcome.record is None:
            continue
        net = outcome.net  # type: ignore[attr-defined]
        hidden, _ = forward(net, ds.inputs, train_mode=False)
        entry = blob_collapse_metrics(hidden, config.data.grid)
        entry["trial"] = i
        entry["final_loss"] = outcome.record.losses[-1]
        results.append(entry)
        stride = max(config.data.grid // 10, 1)
        keep = [c * config.data.grid**2 + ix * config.data.grid + iy
                for c in (0, 1)
                for ix in range(0, config.data.grid, stride)
                for iy in range(0, config.data.grid, stride)]
        mds = classical_mds(pairwise_distances(net, ds, keep), dims=2)
        mds.to_csv(rd.file(f"trial_{i}_mds.csv"),
                   labels=[ds.labels[k] for k in keep])
    manifest["trials"] = trial_rows
    manifest["results"] = {"collapse": results}


def resolve_digit_corpus(config: ExperimentConfig, rd: RunDir) -> tuple[Dataset, str]:
    """Locate a digit-image corpus for the structure experiment.

    Priority: explicit config paths, then an IDX pair under the directory
    named by ``REPDYN_MNIST_DIR``, else the bundled scikit-learn handwritten
    digits packed through the same IDX loader (desk-scale stand-in recorded
    in the manifest).
    """
    if config.data.mnist_images and config.data.mnist_labels:
        return load_mnist(config.data.mnist_images, config.data.mnist_labels), "mnist"
    env_dir = os.environ.get(MNIST_DIR_ENV, "")
    if env_dir:
        images = Path(env_dir) / "train-images-idx3-ubyte"
        labels = Path(env_dir) / "train-labels-idx1-ubyte"
        if images.exists() and labels.exists():
            return load_mnist(images, labels), "mnist"
    try:
        from sklearn.datasets import load_digits
    except ImportError as exc:
        raise RunError(
            "no MNIST files configured and scikit-learn digits fallback "
            "unavailable") from exc
    bunch = load_digits()
    images = bunch.images.reshape(len(bunch.images), -1) / 16.0
    img_path = rd.file("digits-images-idx3-ubyte")
    lab_path = rd.file("digits-labels-idx1-ubyte")
    write_idx(images, bunch.target, img_path, lab_path, rows=8, cols=8)
    return load_mnist(img_path, lab_path), "sklearn_digits"


def _run_mnist(config: ExperimentConfig, rd: RunDir, manifest: dict) -> None:
    full, corpus = resolve_digit_corpus(config, rd)
    n_train = len(full) if config.data.subset == 0 else min(config.data.subset, len(full))
    ds = dataset_subset(full, np.arange(n_train), name=f"{corpus}_train")
    structure_idx = sorted_digit_subset(ds, n=min(100, n_train))

    seeds = trial_seeds(config.seed, config.trials)
    matrices = []
    trial_rows = []
    for i, s in enumerate(seeds):
        net_cfg = NetworkConfig(
            input_dim=ds.inputs.shape[1], output_dim=ds.targets.shape[1],
            hidden_layers=config.network.hidden_layers, units=config.network.units,
            activation=config.network.activation, init_gain=config.network.init_gain,
            skip_connections=config.network.skip_connections,
            dropout_p=config.network.dropout_p,
            hidden_index=config.network.hidden_index, seed=s)
        pair_rng = np.random.default_rng(s)
        try:
            pair = digit_pair_indices(ds, 0, 1, pair_rng)
        except ValueError:
            pair = (0, 1)
        job = TrialJob(net_cfg, config.schedule, ds.inputs, ds.targets, pair,
                       probe_kind="pair" if i == 0 else "none")
        outcome = _execute_trial(job)
        trial_rows.append({"index": i, "seed": s, "status": outcome.status,
                           "reason": outcome.reason, "tracked_pair": list(pair)})
        if outcome.record is None:
            continue
        if i == 0:
            outcome.record.to_csv(rd.file("trial_0_record.csv"))
        net = outcome.net  # type: ignore[attr-defined]
        matrices.append(pairwise_distances(net, ds, structure_idx))
    if not matrices:
        raise RunError("every trial diverged")
    mean_entries = np.mean([m.entries for m in matrices], axis=0)
    measured = DistanceMatrix(entries=mean_entries,
                              provenance=matrices[0].provenance,
                              labels=matrices[0].labels)
    measured.to_csv(rd.file("measured_mean_distances.csv"))

    theory = theory_distance_matrix(ds, structure_idx, rate_ratio=1.0)
    theory = rescale_to_median(theory, float(np.median(measured.upper_triangle())))
    weighted = exponential_weighing(theory)
    weighted.to_csv(rd.file("theory_weighted_distances.csv"))
    corr = pearson(measured, weighted)
    corr_off = pearson(measured, weighted, exclude_same_label=True)
    manifest["trials"] = trial_rows
    manifest["results"] = {
        "corpus": corpus,
        "n_train": n_train,
        "pearson": corr,
        "pearson_excluding_same_label": corr_off,
        "trials_averaged": len(matrices),
    }


def _run_depth_sweep(config: ExperimentConfig, rd: RunDir, manifest: dict) -> None:
    seeds = trial_seeds(config.seed, config.trials)
    _, jobs = _two_point_jobs(config, seeds, probe_kind="depth")
    outcomes = _run_trials(jobs, config.workers)
    manifest["trials"] = _trial_entries(seeds, outcomes)
    dx, dy = config.data.dx, config.data.dy
    partial = EffectiveParams(dx2=dx * dx, dyT2=dy * dy, inv_tau_h=1.0, inv_tau_y=1.0)
    rows = []
    for outcome in outcomes:
        if outcome.record is None or outcome.layer_dh2 is None:
            continue
        base = observed_trajectory(outcome.record)
        for layer in sorted(outcome.layer_dh2):
            series = np.array(outcome.layer_dh2[layer])
            observed = Trajectory(times=base.times, dh2=series, dy2=base.dy2, w=base.w)
            fit = fit_rates(observed, partial, RhsVariant.TRUE,
                            n_starts=config.fit.n_starts, seed=config.fit.seed)
            energy = trajectory_energy(observed)
            rows.append((layer, fit.inv_tau_h, fit.inv_tau_y, fit.fit_loss,
                         fit.fit_loss / energy if energy > 0 else math.inf,
                         fit.converged))
        break  # rates per layer from the first usable trial
    if not rows:
        raise RunError("no usable depth-sweep trial")
    with open(rd.file("depth_rates.csv"), "w") as fh:
        fh.write("layer,inv_tau_h,inv_tau_y,fit_loss,normalized_fit_loss,converged\n")
        for layer, ith, ity, fl, nfl, conv in rows:
            fh.write(f"{layer},{ith:.17g},{ity:.17g},{fl:.17g},{nfl:.17g},{int(conv)}\n")
    manifest["results"] = {"layers_fitted": len(rows)}


def _run_ablation(config: ExperimentConfig, rd: RunDir, manifest: dict) -> None:
    seeds = trial_seeds(config.seed, config.trials)
    _, jobs = _two_point_jobs(config, seeds)
    outcomes = _run_trials(jobs, config.workers)
    manifest["trials"] = _trial_entries(seeds, outcomes)
    usable = [o for o in outcomes if o.status == "converged"]
    if not usable:
        raise RunError("no converged trial for the ablation")
    observed = observed_trajectory(usable[0].record)
    usable[0].record.to_csv(rd.file("record.csv"))
    dx, dy = config.data.dx, config.data.dy
    partial = EffectiveParams(dx2=dx * dx, dyT2=dy * dy, inv_tau_h=1.0, inv_tau_y=1.0)
    results = ablation(observed, partial, n_starts=config.fit.n_starts,
                       seed=config.fit.seed)
    energy = trajectory_energy(observed)
    rd.write_json("ablation.json", {
        "results": [_fit_json(r) for r in results],
        "trajectory_energy": energy,
    })
    with open(rd.file("ablation.csv"), "w") as fh:
        fh.write("variant,fit_loss,normalized_fit_loss,inv_tau_h,inv_tau_y,converged\n")
        for r in results:
            nfl = r.fit_loss / energy if energy > 0 else math.inf
            fh.write(f"{r.variant.value},{r.fit_loss:.17g},{nfl:.17g},"
                     f"{r.inv_tau_h:.17g},{r.inv_tau_y:.17g},{int(r.converged)}\n")
    manifest["results"] = {
        "ordering": [r.variant.value for r in
                     sorted(results, key=lambda r: r.fit_loss)],
    }


_EXPERIMENTS = {
    Experiment.SIMULATE: _run_simulate,
    Experiment.TWO_POINT: _run_two_point,
    Experiment.INIT_SWEEP: _run_init_sweep,
    Experiment.GRID_SWEEP: _run_grid_sweep,
    Experiment.XOR: _run_xor,
    Experiment.BLOBS: _run_blobs,
    Experiment.MNIST: _run_mnist,
    Experiment.DEPTH_SWEEP: _run_depth_sweep,
    Experiment.ABLATION: _run_ablation,
}
