"""Reduced dynamics of a two-point representational interaction.

The model tracks three scalars for a pair of training points: the squared
hidden-representation separation ``dh2``, the squared predicted-output
separation ``dy2``, and the output alignment ``w`` (``dy2`` minus the dot
product of the prediction difference with the target difference).  Their
coupled evolution under gradient descent closes on itself once two effective
learning rates are given, one for the encoder map and one for the decoder
map.  This module provides:

* the right-hand side of that system and four deliberately broken variants
  used for ablation fits,
* adaptive numerical integration,
* the closed-form solution for identical target outputs,
* fixed points with a linear stability report,
* the predicted training-loss curve,
* the lazy-limit rescaling, and
* the distribution of the final separation under Gaussian initialization.

All quantities are in "epoch" time units; the effective rates absorb the
learning-rate scale of whatever produced a measured trajectory.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

import numpy as np
from scipy.integrate import solve_ivp
from scipy.special import ndtr

# Floor below which dh2 counts as having hit the singular origin; the
# dynamics divide by dh2, so trajectories are cut here instead of clamped.
DH2_FLOOR = 1e-12

DEFAULT_RTOL = 1e-8
DEFAULT_ATOL = 1e-12


class SingularityError(RuntimeError):
    """Raised when an integrated trajectory drives dh2 down to the floor."""

    def __init__(self, t_reached: float):
        super().__init__(f"dh2 reached the singular floor at t={t_reached:.6g}")
        self.t_reached = t_reached


class StepFailureError(RuntimeError):
    """Raised when the adaptive step controller fails to advance."""


class RhsVariant(Enum):
    """The exact dynamics plus four single-edit alterations used as foils.

    Each altered variant changes exactly one term: squaring the alignment in
    the separation equation, doubling the prediction-difference equation,
    dropping that equation's encoder term, or flipping the sign of the
    encoder term in the alignment equation.
    """

    TRUE = "true"
    SQUARED_W = "squared_w"
    FACTOR_TWO = "factor_two"
    SIGN_FLIP = "sign_flip"
    DROPPED_TERM = "dropped_term"


@dataclass(frozen=True)
class EffectiveParams:
    """Data separations and effective learning rates of the reduced model.

    ``dx2`` and ``dyT2`` are the squared input and target-output separations
    of the tracked pair.  ``inv_tau_h`` and ``inv_tau_y`` are the encoder and
    decoder effective learning rates; ``inv_tau_ybar`` is the mean-output
    rate, needed only when evaluating loss curves.
    """

    dx2: float
    dyT2: float
    inv_tau_h: float
    inv_tau_y: float
    inv_tau_ybar: Optional[float] = None

    def __post_init__(self):
        if not (self.dx2 >= 0.0 and math.isfinite(self.dx2)):
            raise ValueError(f"dx2 must be finite and >= 0, got {self.dx2}")
        if not (self.dyT2 >= 0.0 and math.isfinite(self.dyT2)):
            raise ValueError(f"dyT2 must be finite and >= 0, got {self.dyT2}")
        if not (self.inv_tau_h > 0.0 and math.isfinite(self.inv_tau_h)):
            raise ValueError(f"inv_tau_h must be finite and > 0, got {self.inv_tau_h}")
        if not (self.inv_tau_y > 0.0 and math.isfinite(self.inv_tau_y)):
            raise ValueError(f"inv_tau_y must be finite and > 0, got {self.inv_tau_y}")
        if self.inv_tau_ybar is not None and not self.inv_tau_ybar > 0.0:
            raise ValueError(f"inv_tau_ybar must be > 0, got {self.inv_tau_ybar}")


@dataclass(frozen=True)
class TheoryState:
    """One point of the reduced system: (dh2, dy2, w).

    ``w`` is signed; it goes negative transiently in real networks.  ``dh2``
    must stay positive for the dynamics to be defined, which `rhs` and
    `integrate` enforce against `DH2_FLOOR`.
    """

    dh2: float
    dy2: float
    w: float

    def __post_init__(self):
        if not (math.isfinite(self.dh2) and self.dh2 >= 0.0):
            raise ValueError(f"dh2 must be finite and >= 0, got {self.dh2}")
        if not (math.isfinite(self.dy2) and self.dy2 >= 0.0):
            raise ValueError(f"dy2 must be finite and >= 0, got {self.dy2}")
        if not math.isfinite(self.w):
            raise ValueError(f"w must be finite, got {self.w}")

    def as_array(self) -> np.ndarray:
        return np.array([self.dh2, self.dy2, self.w], dtype=float)


@dataclass
class Trajectory:
    """Time-indexed series of reduced-model states, plus an optional loss.

    Stored as parallel arrays; `states` offers the per-sample view.  Holds
    both integrated theory curves and measured network trajectories.
    """

    times: np.ndarray
    dh2: np.ndarray
    dy2: np.ndarray
    w: np.ndarray
    loss: Optional[np.ndarray] = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.dh2 = np.asarray(self.dh2, dtype=float)
        self.dy2 = np.asarray(self.dy2, dtype=float)
        self.w = np.asarray(self.w, dtype=float)
        n = len(self.times)
        if not (len(self.dh2) == len(self.dy2) == len(self.w) == n):
            raise ValueError("trajectory channels must have equal length")
        if n > 1 and not np.all(np.diff(self.times) > 0):
            raise ValueError("trajectory times must be strictly increasing")
        if self.loss is not None:
            self.loss = np.asarray(self.loss, dtype=float)
            if len(self.loss) != n:
                raise ValueError("loss channel length mismatch")

    def __len__(self) -> int:
        return len(self.times)

    def state(self, i: int) -> TheoryState:
        return TheoryState(float(self.dh2[i]), float(self.dy2[i]), float(self.w[i]))

    @property
    def states(self) -> list[TheoryState]:
        return [self.state(i) for i in range(len(self))]

    def to_csv(self, path) -> None:
        """Write `t,dh2,dy2,w[,loss]` rows at full double precision."""
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            header = ["t", "dh2", "dy2", "w"] + (["loss"] if self.loss is not None else [])
            writer.writerow(header)
            for i in range(len(self)):
                row = [self.times[i], self.dh2[i], self.dy2[i], self.w[i]]
                if self.loss is not None:
                    row.append(self.loss[i])
                writer.writerow(f"{v:.17g}" for v in row)

    @classmethod
    def from_csv(cls, path) -> "Trajectory":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if header[:4] != ["t", "dh2", "dy2", "w"]:
                raise ValueError(f"unexpected trajectory header: {header}")
            has_loss = len(header) == 5 and header[4] == "loss"
            cols = [[] for _ in header]
            for row in reader:
                for c, v in zip(cols, row):
                    c.append(float(v))
        return cls(
            times=np.array(cols[0]),
            dh2=np.array(cols[1]),
            dy2=np.array(cols[2]),
            w=np.array(cols[3]),
            loss=np.array(cols[4]) if has_loss else None,
        )


@dataclass(frozen=True)
class FixedPointReport:
    """Fixed-point structure of the reduced dynamics for given initial data.

    ``a_high`` carries the initialization through a conserved combination;
    ``a_low`` carries the data structure.  The stable separation is
    ``a_high/2 + sqrt(a_high**2/4 + a_low**2)``.  ``trace``/``determinant``
    describe the linearization at the stable point, and
    ``unstable_eigenvalues`` is the (plus, minus) pair at the origin.
    """

    a_high: float
    a_low: float
    dh2_stable: float
    trace: float
    determinant: float
    unstable_eigenvalues: tuple[float, float]


def _rhs_raw(u: float, v: float, w: float, dx2: float, dyT2: float,
             ith: float, ity: float, variant: RhsVariant) -> tuple[float, float, float]:
    """Derivatives of (dh2, dy2, w); assumes u > 0.

    Trial evaluations past the singular floor (steppers probe beyond the
    terminal event before locating it) get zero derivatives instead of NaN;
    the floor event always cuts the reported trajectory first.
    """
    if u <= DH2_FLOOR:
        return 0.0, 0.0, 0.0
    if variant is RhsVariant.SQUARED_W:
        du = -ith * dx2 * w * w
    else:
        du = -ith * dx2 * w

    encoder_dy = ith * dx2 * v / u
    if variant is RhsVariant.DROPPED_TERM:
        dv = -w * (ity * u)
    elif variant is RhsVariant.FACTOR_TWO:
        dv = -2.0 * w * (ity * u + encoder_dy)
    else:
        dv = -w * (ity * u + encoder_dy)

    decoder_w = -ity * 0.5 * (3.0 * w - v + dyT2) * u
    encoder_w = ith * 0.5 * dx2 * (v + w) * w / u
    if variant is RhsVariant.SIGN_FLIP:
        dw = decoder_w + encoder_w
    else:
        dw = decoder_w - encoder_w

    return du, dv, dw


def rhs(state: TheoryState, params: EffectiveParams,
        variant: RhsVariant = RhsVariant.TRUE) -> tuple[float, float, float]:
    """Instantaneous derivatives of (dh2, dy2, w) under the chosen variant.

    Raises `SingularityError` if ``state.dh2`` is at or below `DH2_FLOOR`,
    since every variant divides by dh2.
    """
    if state.dh2 <= DH2_FLOOR:
        raise SingularityError(0.0)
    return _rhs_raw(state.dh2, state.dy2, state.w, params.dx2, params.dyT2,
                    params.inv_tau_h, params.inv_tau_y, variant)


def integrate(initial: TheoryState, params: EffectiveParams,
              variant: RhsVariant = RhsVariant.TRUE, t_end: float = 1.0,
              sample_times: Optional[Sequence[float]] = None,
              tol: float = DEFAULT_RTOL, atol: float = DEFAULT_ATOL,
              method: str = "RK45") -> Trajectory:
    """Integrate the reduced dynamics, reporting states at `sample_times`.

    Uses an embedded Runge-Kutta 4(5) pair with relative tolerance `tol` and
    absolute tolerance `atol` (`method` accepts any solve_ivp stepper name).
    The run is cut with `SingularityError` if dh2 falls to `DH2_FLOOR` (the
    origin is a genuine fixed point of the dynamics and must not be crossed
    silently), and with `StepFailureError` if the step controller cannot
    advance.
    """
    if initial.dh2 <= DH2_FLOOR:
        raise SingularityError(0.0)
    if t_end < 0:
        raise ValueError("t_end must be >= 0")
    if t_end == 0.0:
        return Trajectory(times=np.array([0.0]), dh2=np.array([initial.dh2]),
                          dy2=np.array([initial.dy2]), w=np.array([initial.w]))
    if sample_times is None:
        sample_times = np.linspace(0.0, t_end, 200)
    ts = np.asarray(sample_times, dtype=float)
    if ts.size == 0:
        raise ValueError("sample_times must be nonempty")
    if np.any(ts < 0) or np.any(ts > t_end * (1 + 1e-12)):
        raise ValueError("sample_times must lie within [0, t_end]")
    if ts.size > 1 and not np.all(np.diff(ts) > 0):
        raise ValueError("sample_times must be strictly increasing")

    dx2, dyT2 = params.dx2, params.dyT2
    ith, ity = params.inv_tau_h, params.inv_tau_y

    def f(_t, y):
        return _rhs_raw(y[0], y[1], y[2], dx2, dyT2, ith, ity, variant)

    def hits_floor(_t, y):
        return y[0] - DH2_FLOOR

    hits_floor.terminal = True
    hits_floor.direction = -1

    sol = solve_ivp(f, (0.0, float(t_end)), initial.as_array(), method=method,
                    rtol=tol, atol=atol, t_eval=ts, events=hits_floor)
    if sol.status == 1:
        raise SingularityError(float(sol.t_events[0][0]))
    if sol.status != 0:
        raise StepFailureError(sol.message)
    return Trajectory(times=sol.t, dh2=sol.y[0], dy2=sol.y[1], w=sol.y[2])


def loss_curve(traj: Trajectory, params: EffectiveParams,
               ybar_dev2_at_0: float) -> np.ndarray:
    """Predicted training loss along a trajectory.

    The mean-output channel decays exponentially from its initial squared
    deviation ``ybar_dev2_at_0`` at rate ``2 * inv_tau_ybar``; the pair
    channel contributes ``(w + (dyT2 - dy2) / 2) / 4`` per sample.
    """
    if params.inv_tau_ybar is None:
        raise ValueError("loss_curve requires params.inv_tau_ybar")
    if len(traj) == 0:
        raise ValueError("loss_curve requires a nonempty trajectory")
    if ybar_dev2_at_0 < 0:
        raise ValueError("ybar_dev2_at_0 must be >= 0")
    mean_term = 0.5 * ybar_dev2_at_0 * np.exp(-2.0 * params.inv_tau_ybar * traj.times)
    pair_term = 0.25 * (traj.w + 0.5 * (params.dyT2 - traj.dy2))
    return mean_term + pair_term


def fixed_points(initial: TheoryState, params: EffectiveParams) -> FixedPointReport:
    """Fixed points of the reduced system and their linear stability.

    ``a_high`` mixes the initial condition with the input separation (the
    lazy branch); ``a_low`` is set purely by the data separations and the
    rate ratio (the rich branch).  The nonzero fixed point is always stable
    (trace < 0, determinant > 0); the origin carries one positive and one
    negative eigenvalue whenever a_low > 0.
    """
    if initial.dh2 <= 0:
        raise ValueError("fixed_points requires initial.dh2 > 0")
    dx2 = params.dx2
    ratio = params.inv_tau_h / params.inv_tau_y  # tau_y / tau_h
    a_high = (initial.dh2 / dx2 - ratio * initial.dy2 / initial.dh2) * dx2
    a_low = math.sqrt(ratio) * math.sqrt(dx2 * params.dyT2)
    root = math.sqrt(0.25 * a_high**2 + a_low**2)
    dh2_stable = 0.5 * a_high + root
    wide_root = math.sqrt(a_high**2 + 4.0 * a_low**2)
    ity = params.inv_tau_y
    trace = -ity * (0.5 * a_high + wide_root)
    determinant = 0.25 * ity**2 * (2.0 * a_low**2 + 0.5 * (a_high + wide_root) ** 2)
    lam_plus = ity * (a_high + wide_root) / 2.0
    lam_minus = ity * (a_high - wide_root) / 2.0
    return FixedPointReport(a_high=a_high, a_low=a_low, dh2_stable=dh2_stable,
                            trace=trace, determinant=determinant,
                            unstable_eigenvalues=(lam_plus, lam_minus))


def solve_identical_outputs(initial: TheoryState, params: EffectiveParams,
                            t: float) -> TheoryState:
    """Closed-form state at time `t` when the two targets coincide.

    With dyT2 = 0 the alignment equals dy2 and the separation follows a
    logistic (Bernoulli) law with carrying capacity a_high and rate
    ``a_high * inv_tau_y``; dy2 follows as
    ``(tau_h / tau_y) * dh2 * (dh2 - a_high) / dx2``.
    """
    if params.dyT2 != 0.0:
        raise ValueError("solve_identical_outputs requires dyT2 == 0")
    if initial.dh2 <= DH2_FLOOR:
        raise SingularityError(0.0)
    if abs(initial.w - initial.dy2) > 1e-9 * max(1.0, abs(initial.dy2)):
        raise ValueError("identical outputs force w == dy2 at all times")
    if t < 0:
        raise ValueError("t must be >= 0")
    u0 = initial.dh2
    ratio_hy = params.inv_tau_y / params.inv_tau_h  # tau_h / tau_y
    a_high = u0 - (1.0 / ratio_hy) * params.dx2 * initial.dy2 / u0
    rate = a_high * params.inv_tau_y
    # logistic solution in expm1 form, stable through a_high -> 0 where it
    # degenerates to the pure 1/t decay
    if a_high == 0.0:
        u = u0 / (1.0 + u0 * params.inv_tau_y * t)
    elif rate >= 0.0:
        u = a_high / ((a_high / u0) * math.exp(-rate * t) - math.expm1(-rate * t))
    else:
        u = a_high * math.exp(rate * t) / (math.expm1(rate * t) + a_high / u0)
    v = ratio_hy * u * (u - a_high) / params.dx2
    u = max(u, 0.0)
    v = max(v, 0.0)
    return TheoryState(dh2=u, dy2=v, w=v)


def lazy_rescale(initial: TheoryState, params: EffectiveParams,
                 gain: float) -> tuple[TheoryState, EffectiveParams, float]:
    """Normalize a large-initialization problem by its gain factor.

    Returns the rescaled initial state ``(dh2/G, dy2/G**2, w/G**2)``, the
    rescaled parameters with the target separation divided by G**2, and the
    time scale G: the rescaled system at time ``G * t``, mapped back through
    ``(G, G**2, G**2)``, reproduces the original system at time ``t``.  As G
    grows the rescaled target term vanishes and the problem approaches the
    identical-outputs dynamics.
    """
    if gain <= 0:
        raise ValueError("gain must be > 0")
    g2 = gain * gain
    scaled = TheoryState(dh2=initial.dh2 / gain, dy2=initial.dy2 / g2,
                         w=initial.w / g2)
    scaled_params = EffectiveParams(dx2=params.dx2, dyT2=params.dyT2 / g2,
                                    inv_tau_h=params.inv_tau_h,
                                    inv_tau_y=params.inv_tau_y,
                                    inv_tau_ybar=params.inv_tau_ybar)
    return scaled, scaled_params, gain


def final_distance_cdf(h, gain: float, a_low: float, dx2: float):
    """P(final separation < h) under Gaussian-distributed initialization.

    The lazy branch a_high is Gaussian with standard deviation
    ``sqrt(2) * dx2 * gain``; pushing it through the stable fixed point gives
    ``Phi((h - a_low**2 / h) / (sqrt(2) * dx2 * gain))`` for h > 0.
    Accepts scalar or array `h`.
    """
    h = np.asarray(h, dtype=float)
    if np.any(h <= 0):
        raise ValueError("h must be > 0")
    if gain <= 0 or dx2 <= 0 or a_low < 0:
        raise ValueError("require gain > 0, dx2 > 0, a_low >= 0")
    z = (h - a_low**2 / h) / (math.sqrt(2.0) * dx2 * gain)
    out = ndtr(z)
    return float(out) if out.ndim == 0 else out


def final_distance_pdf(h, gain: float, a_low: float, dx2: float):
    """Density of the final separation; derivative of `final_distance_cdf`."""
    h = np.asarray(h, dtype=float)
    if np.any(h <= 0):
        raise ValueError("h must be > 0")
    if gain <= 0 or dx2 <= 0 or a_low < 0:
        raise ValueError("require gain > 0, dx2 > 0, a_low >= 0")
    sigma = math.sqrt(2.0) * dx2 * gain
    z = (h - a_low**2 / h) / sigma
    out = (1.0 + a_low**2 / h**2) / sigma * np.exp(-0.5 * z**2) / math.sqrt(2.0 * math.pi)
    return float(out) if out.ndim == 0 else out


def conserved_quantity(state: TheoryState, params: EffectiveParams) -> float:
    """Combination dy2/dh2 - (tau_h/tau_y) * dh2/dx2, constant along exact
    trajectories of the unaltered dynamics."""
    ratio_hy = params.inv_tau_y / params.inv_tau_h
    return state.dy2 / state.dh2 - ratio_hy * state.dh2 / params.dx2
