"""Scalar observables of a live network for a designated datapoint pair.

These are the measured counterparts of the reduced-model variables: squared
hidden separation, squared prediction separation, and alignment, read off a
network in eval mode so they can be compared and fitted against integrated
theory curves.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .network import Network, TrainingRecord, _forward_full, forward
from .theory import Trajectory


@dataclass(frozen=True)
class PairObservation:
    """One probe of the tracked pair.

    ``w = dy2 - (yhat2 - yhat1) . (y2 - y1)``; ``ybar_dev2`` is the squared
    deviation of the prediction midpoint from the target midpoint, and
    ``loss`` the two-point mean-squared error.
    """

    dh2: float
    dy2: float
    w: float
    ybar_dev2: float
    loss: float


def measure_pair(net: Network, x1, y1, x2, y2) -> PairObservation:
    """Evaluate the pair observables in eval mode.

    The prediction midpoint stands in for the network value at the input
    midpoint; within the linearized pair model the two coincide, and the
    midpoint is well-defined even for inputs that cannot be interpolated
    (such as one-hot context codes).
    """
    x1 = np.asarray(x1, dtype=float).reshape(-1)
    x2 = np.asarray(x2, dtype=float).reshape(-1)
    y1 = np.asarray(y1, dtype=float).reshape(-1)
    y2 = np.asarray(y2, dtype=float).reshape(-1)
    hidden, output = forward(net, np.stack([x1, x2]), train_mode=False)
    dh = hidden[1] - hidden[0]
    dy = output[1] - output[0]
    dh2 = float(dh @ dh)
    dy2 = float(dy @ dy)
    w = dy2 - float(dy @ (y2 - y1))
    ybar = 0.5 * (output[0] + output[1]) - 0.5 * (y1 + y2)
    ybar_dev2 = float(ybar @ ybar)
    loss = 0.25 * float(np.sum((output[0] - y1) ** 2) + np.sum((output[1] - y2) ** 2))
    return PairObservation(dh2=dh2, dy2=dy2, w=w, ybar_dev2=ybar_dev2, loss=loss)


def measure_pair_at_layers(net: Network, x1, x2) -> dict[int, float]:
    """Squared hidden separation at every hidden layer (eval mode).

    Only dh2 varies with the probed layer; dy2 and w live at the output and
    are shared, so depth sweeps reuse a single `measure_pair` alongside this.
    """
    X = np.stack([np.asarray(x1, dtype=float).reshape(-1),
                  np.asarray(x2, dtype=float).reshape(-1)])
    _, acts, _, _ = _forward_full(net, X, train_mode=False)
    out = {}
    for k in range(1, net.config.hidden_layers + 1):
        d = acts[k][1] - acts[k][0]
        out[k] = float(d @ d)
    return out


def observed_trajectory(record: TrainingRecord) -> Trajectory:
    """Repackage a probed training record as a trajectory for fitting.

    Epoch stamps are preserved exactly; the loss channel carries the
    recorded eval-mode training loss.
    """
    if not record.epochs:
        raise ValueError("empty training record")
    if any(p is None for p in record.probes):
        raise ValueError("record was not probed with measure_pair")
    return Trajectory(
        times=np.array(record.epochs, dtype=float),
        dh2=np.array([p.dh2 for p in record.probes]),
        dy2=np.array([p.dy2 for p in record.probes]),
        w=np.array([p.w for p in record.probes]),
        loss=np.array(record.losses, dtype=float),
    )


def pair_probe(x1, y1, x2, y2):
    """Probe callback for `network.train` that measures a fixed pair."""

    def probe(net: Network) -> PairObservation:
        return measure_pair(net, x1, y1, x2, y2)

    return probe


def has_initial_plateau(series, frac: float = 0.02, tol: float = 0.05) -> bool:
    """True when the series stays within `tol` of its initial value over the
    first `frac` of its span."""
    series = np.asarray(series, dtype=float)
    n_head = max(math.ceil(frac * (len(series) - 1)), 1)
    head = series[: n_head + 1]
    scale = abs(series[0])
    if scale == 0.0:
        return bool(np.all(head == 0.0))
    return bool(np.max(np.abs(head - series[0])) <= tol * scale)


def initial_drop_fraction(series, frac: float = 0.02) -> float:
    """Fractional decrease from the initial value over the first `frac` of
    the series span (positive means decay)."""
    series = np.asarray(series, dtype=float)
    n_head = max(math.ceil(frac * (len(series) - 1)), 1)
    if series[0] == 0.0:
        return 0.0
    return float((series[0] - series[n_head]) / abs(series[0]))
