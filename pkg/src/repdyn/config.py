"""Experiment configuration: a small `key = value` text format.

Grammar: one ``key = value`` assignment per line; ``#`` starts a comment;
blank lines are ignored.  Keys are dotted (``network.units = 100``).  The
``experiment`` key selects per-experiment defaults for everything omitted;
unknown keys and out-of-range values are rejected with their line number.
Parsing then serializing yields a text that reparses to an equal config.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from enum import Enum
from typing import Optional

from .network import Activation, NetworkConfig, Optimizer, TrainSchedule
from .theory import RhsVariant


class ConfigError(ValueError):
    """Invalid experiment configuration; carries a line number when known."""

    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class Experiment(Enum):
    SIMULATE = "Simulate"
    TWO_POINT = "TwoPoint"
    INIT_SWEEP = "InitSweep"
    GRID_SWEEP = "GridSweep"
    XOR = "Xor"
    BLOBS = "Blobs"
    MNIST = "Mnist"
    DEPTH_SWEEP = "DepthSweep"
    ABLATION = "Ablation"


@dataclass(frozen=True)
class NetworkSettings:
    hidden_layers: int = 8
    units: int = 100
    activation: Activation = Activation.LEAKY_RELU
    init_gain: float = 1.0
    skip_connections: bool = False
    dropout_p: float = 0.0
    hidden_index: Optional[int] = None  # None selects the halfway layer

    def to_network_config(self, input_dim: int, output_dim: int, seed: int) -> NetworkConfig:
        return NetworkConfig(input_dim=input_dim, output_dim=output_dim,
                             hidden_layers=self.hidden_layers, units=self.units,
                             activation=self.activation, init_gain=self.init_gain,
                             skip_connections=self.skip_connections,
                             dropout_p=self.dropout_p,
                             hidden_index=self.hidden_index, seed=seed)


@dataclass(frozen=True)
class TheorySettings:
    """Reduced-model inputs for `Simulate` and overrides elsewhere."""

    inv_tau_h: float = 1.0
    inv_tau_y: float = 1.0
    inv_tau_ybar: Optional[float] = None
    dx2: float = 0.25
    dyT2: float = 1.0
    dh2_0: float = 1e-6
    dy2_0: float = 1e-12
    w_0: float = 0.0
    ybar_dev2_0: float = 0.0
    t_end: float = 50.0
    samples: int = 400
    variant: RhsVariant = RhsVariant.TRUE


@dataclass(frozen=True)
class DataSettings:
    dx: float = 0.5
    dy: float = 1.0
    mnist_images: str = ""
    mnist_labels: str = ""
    subset: int = 1000
    grid: int = 30
    image: int = 5


@dataclass(frozen=True)
class SweepSettings:
    gains: tuple[float, ...] = ()
    nx: int = 5
    ny: int = 5
    dx_range: tuple[float, float] = (0.5, 1.5)
    dy_range: tuple[float, float] = (0.0, 1.0)


@dataclass(frozen=True)
class FitSettings:
    n_starts: int = 16
    seed: int = 0


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: Experiment
    network: NetworkSettings
    schedule: TrainSchedule
    theory: TheorySettings
    data: DataSettings
    sweep: SweepSettings
    fit: FitSettings
    trials: int = 1
    workers: int = 1
    seed: int = 0
    output_dir: str = "runs"
    provided: frozenset = field(default_factory=frozenset, compare=False)


# Desk-scale defaults per experiment; `run --paper-scale` swaps in the
# published architecture table for fields the config leaves at default.
_DESK = {
    Experiment.SIMULATE: dict(),
    Experiment.TWO_POINT: dict(
        network=NetworkSettings(hidden_layers=8, units=100, init_gain=1.0),
        schedule=TrainSchedule(learning_rate=0.02, epochs=4000, record_every=1),
    ),
    Experiment.INIT_SWEEP: dict(
        network=NetworkSettings(hidden_layers=8, units=100, init_gain=1.0),
        schedule=TrainSchedule(learning_rate=0.02, epochs=4000, record_every=1),
        sweep=SweepSettings(gains=(1.0, 2.2, 3.5)),
    ),
    Experiment.GRID_SWEEP: dict(
        network=NetworkSettings(hidden_layers=8, units=100, init_gain=1.0),
        schedule=TrainSchedule(learning_rate=0.02, epochs=4000, record_every=4),
        trials=3,
    ),
    Experiment.XOR: dict(
        network=NetworkSettings(hidden_layers=12, units=100, init_gain=0.8),
        schedule=TrainSchedule(learning_rate=0.01, epochs=4000, record_every=10),
    ),
    Experiment.BLOBS: dict(
        network=NetworkSettings(hidden_layers=4, units=100,
                                activation=Activation.TANH, init_gain=0.5),
        schedule=TrainSchedule(learning_rate=0.015, epochs=1500, record_every=50),
    ),
    Experiment.MNIST: dict(
        network=NetworkSettings(hidden_layers=4, units=100, init_gain=0.5),
        schedule=TrainSchedule(learning_rate=0.005, epochs=200, record_every=10),
        trials=5,
    ),
    Experiment.DEPTH_SWEEP: dict(
        network=NetworkSettings(hidden_layers=12, units=100, init_gain=1.0),
        schedule=TrainSchedule(learning_rate=0.02, epochs=4000, record_every=2),
    ),
    Experiment.ABLATION: dict(
        network=NetworkSettings(hidden_layers=8, units=100, init_gain=1.0),
        schedule=TrainSchedule(learning_rate=0.02, epochs=4000, record_every=1),
    ),
}

_PAPER = {
    Experiment.TWO_POINT: dict(
        network=NetworkSettings(hidden_layers=20, units=500, init_gain=1.0),
        schedule=TrainSchedule(learning_rate=0.005, epochs=6000, record_every=1),
    ),
    Experiment.INIT_SWEEP: dict(
        network=NetworkSettings(hidden_layers=20, units=500, init_gain=0.9),
        schedule=TrainSchedule(learning_rate=0.015, epochs=6000, record_every=1),
        sweep=SweepSettings(gains=(0.9, 1.3, 1.4)),
    ),
    Experiment.GRID_SWEEP: dict(
        network=NetworkSettings(hidden_layers=20, units=500, init_gain=1.0),
        schedule=TrainSchedule(learning_rate=0.005, epochs=6000, record_every=4),
        trials=50,
    ),
    Experiment.XOR: dict(
        network=NetworkSettings(hidden_layers=20, units=500, init_gain=0.7),
        schedule=TrainSchedule(learning_rate=0.015, epochs=1000, record_every=10),
    ),
    Experiment.BLOBS: dict(
        network=NetworkSettings(hidden_layers=4, units=100,
                                activation=Activation.TANH, init_gain=0.5),
        schedule=TrainSchedule(learning_rate=0.015, epochs=1500, record_every=50),
    ),
    Experiment.MNIST: dict(
        network=NetworkSettings(hidden_layers=4, units=200, init_gain=0.5),
        schedule=TrainSchedule(learning_rate=0.005, epochs=200, record_every=10),
        trials=50,
        data=DataSettings(subset=0),  # 0 selects the full training set
    ),
    Experiment.DEPTH_SWEEP: dict(
        network=NetworkSettings(hidden_layers=20, units=500, init_gain=1.0),
        schedule=TrainSchedule(learning_rate=0.005, epochs=6000, record_every=2),
    ),
    Experiment.ABLATION: dict(
        network=NetworkSettings(hidden_layers=20, units=500, init_gain=1.0),
        schedule=TrainSchedule(learning_rate=0.005, epochs=6000, record_every=1),
    ),
}


def _defaults_for(experiment: Experiment, paper_scale: bool = False) -> ExperimentConfig:
    base = ExperimentConfig(
        experiment=experiment,
        network=NetworkSettings(),
        schedule=TrainSchedule(learning_rate=0.01, epochs=1000, record_every=1),
        theory=TheorySettings(),
        data=DataSettings(),
        sweep=SweepSettings(),
        fit=FitSettings(),
    )
    table = dict(_DESK.get(experiment, {}))
    if paper_scale:
        table.update(_PAPER.get(experiment, {}))
    return replace(base, **table)


def _parse_bool(text: str) -> bool:
    low = text.lower()
    if low in ("true", "yes", "1"):
        return True
    if low in ("false", "no", "0"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _parse_optional_int(text: str) -> Optional[int]:
    if text.lower() in ("auto", "none"):
        return None
    return int(text)


def _parse_floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.split(",") if v.strip())


def _parse_activation(text: str) -> Activation:
    key = text.lower().replace("-", "_")
    aliases = {"leakyrelu": "leaky_relu", "none": "linear"}
    key = aliases.get(key, key)
    try:
        return Activation(key)
    except ValueError:
        raise ValueError(f"unknown activation {text!r}") from None


def _parse_optimizer(text: str) -> Optimizer:
    try:
        return Optimizer(text.lower())
    except ValueError:
        raise ValueError(f"unknown optimizer {text!r}") from None


def _parse_variant(text: str) -> RhsVariant:
    try:
        return RhsVariant(text.lower())
    except ValueError:
        raise ValueError(f"unknown dynamics variant {text!r}") from None


def _parse_experiment(text: str) -> Experiment:
    for exp in Experiment:
        if exp.value.lower() == text.lower():
            return exp
    raise ValueError(f"unknown experiment {text!r}")


# key -> (section attribute or None for top level, field name, parser, serializer)
_FIELDS = {
    "experiment": (None, "experiment", _parse_experiment, lambda v: v.value),
    "trials": (None, "trials", int, str),
    "workers": (None, "workers", int, str),
    "seed": (None, "seed", int, str),
    "output_dir": (None, "output_dir", str, str),
    "network.hidden_layers": ("network", "hidden_layers", int, str),
    "network.units": ("network", "units", int, str),
    "network.activation": ("network", "activation", _parse_activation, lambda v: v.value),
    "network.init_gain": ("network", "init_gain", float, repr),
    "network.skip_connections": ("network", "skip_connections", _parse_bool,
                                 lambda v: "true" if v else "false"),
    "network.dropout_p": ("network", "dropout_p", float, repr),
    "network.hidden_index": ("network", "hidden_index", _parse_optional_int,
                             lambda v: "auto" if v is None else str(v)),
    "schedule.learning_rate": ("schedule", "learning_rate", float, repr),
    "schedule.epochs": ("schedule", "epochs", int, str),
    "schedule.optimizer": ("schedule", "optimizer", _parse_optimizer, lambda v: v.value),
    "schedule.beta1": ("schedule", "beta1", float, repr),
    "schedule.beta2": ("schedule", "beta2", float, repr),
    "schedule.eps": ("schedule", "eps", float, repr),
    "schedule.record_every": ("schedule", "record_every", int, str),
    "theory.inv_tau_h": ("theory", "inv_tau_h", float, repr),
    "theory.inv_tau_y": ("theory", "inv_tau_y", float, repr),
    "theory.inv_tau_ybar": ("theory", "inv_tau_ybar",
                            lambda t: None if t.lower() == "none" else float(t),
                            lambda v: "none" if v is None else repr(v)),
    "theory.dx2": ("theory", "dx2", float, repr),
    "theory.dyT2": ("theory", "dyT2", float, repr),
    "theory.dh2_0": ("theory", "dh2_0", float, repr),
    "theory.dy2_0": ("theory", "dy2_0", float, repr),
    "theory.w_0": ("theory", "w_0", float, repr),
    "theory.ybar_dev2_0": ("theory", "ybar_dev2_0", float, repr),
    "theory.t_end": ("theory", "t_end", float, repr),
    "theory.samples": ("theory", "samples", int, str),
    "theory.variant": ("theory", "variant", _parse_variant, lambda v: v.value),
    "data.dx": ("data", "dx", float, repr),
    "data.dy": ("data", "dy", float, repr),
    "data.mnist_images": ("data", "mnist_images", str, str),
    "data.mnist_labels": ("data", "mnist_labels", str, str),
    "data.subset": ("data", "subset", int, str),
    "data.grid": ("data", "grid", int, str),
    "data.image": ("data", "image", int, str),
    "sweep.gains": ("sweep", "gains", _parse_floats,
                    lambda v: ",".join(repr(g) for g in v)),
    "sweep.nx": ("sweep", "nx", int, str),
    "sweep.ny": ("sweep", "ny", int, str),
    "fit.n_starts": ("fit", "n_starts", int, str),
    "fit.seed": ("fit", "seed", int, str),
}

_RANGE_CHECKS = {
    "trials": lambda v: v >= 1 or "trials must be >= 1",
    "workers": lambda v: v >= 1 or "workers must be >= 1",
    "network.hidden_layers": lambda v: v >= 1 or "hidden_layers must be >= 1",
    "network.units": lambda v: v >= 1 or "units must be >= 1",
    "network.init_gain": lambda v: (v >= 0 and math.isfinite(v)) or "init_gain must be >= 0",
    "network.dropout_p": lambda v: 0 <= v < 1 or "dropout_p must lie in [0, 1)",
    "schedule.learning_rate": lambda v: v >= 0 or "learning_rate must be >= 0",
    "schedule.epochs": lambda v: v >= 0 or "epochs must be >= 0",
    "schedule.record_every": lambda v: v >= 1 or "record_every must be >= 1",
    "theory.inv_tau_h": lambda v: v > 0 or "inv_tau_h must be > 0",
    "theory.inv_tau_y": lambda v: v > 0 or "inv_tau_y must be > 0",
    "theory.dx2": lambda v: v >= 0 or "dx2 must be >= 0",
    "theory.dyT2": lambda v: v >= 0 or "dyT2 must be >= 0",
    "theory.dh2_0": lambda v: v > 0 or "dh2_0 must be > 0",
    "theory.ybar_dev2_0": lambda v: v >= 0 or "ybar_dev2_0 must be >= 0",
    "theory.t_end": lambda v: v >= 0 or "t_end must be >= 0",
    "theory.samples": lambda v: v >= 1 or "samples must be >= 1",
    "data.subset": lambda v: v >= 0 or "subset must be >= 0 (0 = full set)",
    "data.grid": lambda v: v >= 2 or "grid must be >= 2",
    "data.image": lambda v: v >= 1 or "image must be >= 1",
    "sweep.nx": lambda v: v >= 1 or "nx must be >= 1",
    "sweep.ny": lambda v: v >= 1 or "ny must be >= 1",
    "fit.n_starts": lambda v: v >= 1 or "n_starts must be >= 1",
}


def parse_config(text: str, paper_scale: bool = False) -> ExperimentConfig:
    """Parse config text into a fully resolved `ExperimentConfig`.

    Defaults for omitted keys come from the named experiment's desk-scale
    table (or, with `paper_scale`, the published table).  Unknown keys,
    syntax errors, and range violations raise `ConfigError` with the
    offending line number.
    """
    assignments: dict[str, tuple[str, int]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", lineno)
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _FIELDS:
            raise ConfigError(f"unknown key {key!r}", lineno)
        if key in assignments:
            raise ConfigError(f"duplicate key {key!r}", lineno)
        assignments[key] = (value, lineno)

    if "experiment" not in assignments:
        raise ConfigError("missing required key 'experiment'")
    exp_text, exp_line = assignments["experiment"]
    try:
        experiment = _parse_experiment(exp_text)
    except ValueError as exc:
        raise ConfigError(str(exc), exp_line) from None

    config = _defaults_for(experiment, paper_scale=paper_scale)
    sections: dict[Optional[str], dict] = {}
    for key, (value_text, lineno) in assignments.items():
        if key == "experiment":
            continue
        section, name, parser, _ = _FIELDS[key]
        try:
            value = parser(value_text)
        except ValueError as exc:
            raise ConfigError(str(exc), lineno) from None
        check = _RANGE_CHECKS.get(key)
        if check is not None:
            verdict = check(value)
            if verdict is not True:
                raise ConfigError(verdict, lineno)
        sections.setdefault(section, {})[name] = value

    for section, values in sections.items():
        if section is None:
            config = replace(config, **values)
        else:
            try:
                config = replace(config, **{section: replace(getattr(config, section), **values)})
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
    return replace(config, provided=frozenset(assignments))


def serialize_config(config: ExperimentConfig) -> str:
    """Render every resolved field; `parse_config` of the output is equal to
    the input (ignoring which keys were originally provided)."""
    lines = []
    for key, (section, name, _, render) in _FIELDS.items():
        holder = config if section is None else getattr(config, section)
        lines.append(f"{key} = {render(getattr(holder, name))}")
    return "\n".join(lines) + "\n"


def config_to_dict(config: ExperimentConfig) -> dict:
    """JSON-ready echo of every field, for run manifests."""
    out: dict = {}
    for key, (section, name, _, render) in _FIELDS.items():
        holder = config if section is None else getattr(config, section)
        out[key] = render(getattr(holder, name))
    return out
