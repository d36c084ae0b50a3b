"""
Explicit Runge-Kutta integrators.

``integrate_fixed`` is the classical 4th order scheme on a uniform grid.
``integrate_adaptive`` is the Dormand-Prince 5(4) pair with PI step size
control and the usual 4th order continuous extension, so a returned
``Trajectory`` can be evaluated anywhere inside its time span.
"""

import logging
import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass
from typing import Final, Literal

import numpy as np
from ddtrace import tracer
from django.conf import settings

from subrig.utils.expr import ExprError

logger = logging.getLogger(__name__)

Rhs = Callable[[np.ndarray, float], np.ndarray]


class IntegrationError(Exception):
    def __init__(self, msg: str, time: float | None = None) -> None:
        super().__init__(msg)
        self.time = time


class StepUnderflow(IntegrationError):
    pass


class TooManySteps(IntegrationError):
    pass


@dataclass(frozen=True)
class OdeProblem:
    dimension: int
    rhs: Rhs
    jacobian: Callable[[np.ndarray, float], np.ndarray] | None = None


@dataclass(frozen=True, eq=False)
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    derivatives: np.ndarray | None = None
    interpolation: Literal["hermite3", "dopri4"] = "hermite3"
    # One row of five coefficient vectors per step for "dopri4".
    dense: np.ndarray | None = None

    def __post_init__(self) -> None:
        times = np.asarray(self.times, dtype=float)
        states = np.atleast_2d(np.asarray(self.states, dtype=float))
        if times.ndim != 1 or len(times) != len(states):
            raise ValueError("Trajectory needs one state per sample time")
        if len(times) > 1 and not np.all(np.diff(times) > 0):
            raise ValueError("Trajectory times must be strictly increasing")
        for name, value in (("times", times), ("states", states)):
            value.setflags(write=False)
            object.__setattr__(self, name, value)
        if self.derivatives is not None:
            derivatives = np.asarray(self.derivatives, dtype=float)
            derivatives.setflags(write=False)
            object.__setattr__(self, "derivatives", derivatives)

    def __len__(self) -> int:
        return len(self.times)

    @property
    def dimension(self) -> int:
        return self.states.shape[1]

    @property
    def start(self) -> float:
        return float(self.times[0])

    @property
    def end(self) -> float:
        return float(self.times[-1])

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    def at(self, t: float) -> np.ndarray:
        if len(self.times) == 1 or t == self.times[-1]:
            if not math.isclose(t, self.times[-1], abs_tol=1e-12):
                raise ValueError(f"t={t} outside single-sample trajectory")
            return self.states[-1].copy()
        if not self.times[0] - 1e-12 <= t <= self.times[-1] + 1e-12:
            raise ValueError(
                f"t={t} outside [{self.times[0]}, {self.times[-1]}]"
            )
        i = int(np.clip(np.searchsorted(self.times, t, side="right") - 1, 0, len(self.times) - 2))
        t0, t1 = self.times[i], self.times[i + 1]
        h = t1 - t0
        theta = (t - t0) / h
        if self.interpolation == "dopri4" and self.dense is not None:
            r1, r2, r3, r4, r5 = self.dense[i]
            return r1 + theta * (
                r2 + (1 - theta) * (r3 + theta * (r4 + (1 - theta) * r5))
            )
        y0, y1 = self.states[i], self.states[i + 1]
        if self.derivatives is None:
            return (1 - theta) * y0 + theta * y1
        f0, f1 = self.derivatives[i], self.derivatives[i + 1]
        h00 = (1 + 2 * theta) * (1 - theta) ** 2
        h10 = theta * (1 - theta) ** 2
        h01 = theta**2 * (3 - 2 * theta)
        h11 = theta**2 * (theta - 1)
        return h00 * y0 + h10 * h * f0 + h01 * y1 + h11 * h * f1

    def resample(self, times: Sequence[float]) -> np.ndarray:
        return np.array([self.at(t) for t in times])


def _evaluate_rhs(problem: OdeProblem, y: np.ndarray, t: float) -> np.ndarray:
    try:
        dy = np.asarray(problem.rhs(y, t), dtype=float)
    except ExprError as exc:
        raise IntegrationError(f"{exc} at t={t}", time=t) from exc
    if dy.shape != (problem.dimension,):
        raise IntegrationError(
            f"Right-hand side returned shape {dy.shape}, "
            f"expected ({problem.dimension},)",
            time=t,
        )
    return dy


@tracer.wrap()
def integrate_fixed(
    problem: OdeProblem, y0: Sequence[float], t0: float, t1: float, step: float
) -> Trajectory:
    if step <= 0:
        raise ValueError("Step must be positive")
    if not t1 > t0:
        raise ValueError("Fixed-step integration needs t1 > t0")

    count = max(1, math.ceil((t1 - t0) / step - 1e-9))
    h = (t1 - t0) / count
    y = np.array(y0, dtype=float)
    times = [t0]
    states = [y]
    derivatives = []
    for i in range(count):
        t = t0 + i * h
        k1 = _evaluate_rhs(problem, y, t)
        k2 = _evaluate_rhs(problem, y + 0.5 * h * k1, t + 0.5 * h)
        k3 = _evaluate_rhs(problem, y + 0.5 * h * k2, t + 0.5 * h)
        k4 = _evaluate_rhs(problem, y + h * k3, t + h)
        y = y + h * (k1 + 2 * k2 + 2 * k3 + k4) / 6
        derivatives.append(k1)
        times.append(t0 + (i + 1) * h)
        states.append(y)
    derivatives.append(_evaluate_rhs(problem, y, t1))
    return Trajectory(np.array(times), np.array(states), np.array(derivatives))


# Dormand-Prince 5(4) tableau.

_C: Final = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A: Final = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_B: Final = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B_LOW: Final = np.array(
    [5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40]
)
_E: Final = _B - _B_LOW
# Continuous extension coefficients.
_D: Final = np.array(
    [
        -12715105075 / 11282082432,
        0.0,
        87487479700 / 32700410799,
        -10690763975 / 1880347072,
        701980252875 / 199316789632,
        -1453857185 / 822651844,
        69997945 / 29380423,
    ]
)

_SAFETY: Final = 0.9
_BETA: Final = 0.04
_EXPO: Final = 0.2 - 0.75 * _BETA
_MIN_FACTOR: Final = 0.2
_MAX_FACTOR: Final = 10.0
_STAGE_RETRIES: Final = 20


def _initial_step(
    problem: OdeProblem,
    t0: float,
    y0: np.ndarray,
    f0: np.ndarray,
    span: float,
    rtol: float,
    atol: float,
) -> float:
    scale = atol + rtol * np.abs(y0)
    d0 = np.max(np.abs(y0) / scale)
    d1 = np.max(np.abs(f0) / scale)
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, span)
    try:
        f1 = _evaluate_rhs(problem, y0 + h0 * f0, t0 + h0)
        d2 = np.max(np.abs(f1 - f0) / scale) / h0
    except IntegrationError:
        return h0 * 0.01
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    return min(100 * h0, h1, span)


@tracer.wrap()
def integrate_adaptive(
    problem: OdeProblem,
    y0: Sequence[float],
    t0: float,
    t1: float,
    rtol: float | None = None,
    atol: float | None = None,
    *,
    max_steps: int | None = None,
) -> Trajectory:
    rtol = settings.SUBRIG["RTOL"] if rtol is None else rtol
    atol = settings.SUBRIG["ATOL"] if atol is None else atol
    max_steps = settings.SUBRIG["MAX_STEPS"] if max_steps is None else max_steps
    if rtol <= 0 or atol <= 0:
        raise ValueError("Tolerances must be positive")
    if t1 < t0:
        raise ValueError("Adaptive integration runs forward in time only")

    y = np.array(y0, dtype=float)
    f = _evaluate_rhs(problem, y, t0)
    if t1 == t0:
        return Trajectory(np.array([t0]), y[None, :], f[None, :], "dopri4")

    t = t0
    h = _initial_step(problem, t0, y, f, t1 - t0, rtol, atol)
    previous_error = 1e-4
    times, states, derivatives, dense = [t0], [y], [f], []
    rejected = stage_failures = 0

    while t < t1:
        if len(times) > max_steps:
            raise TooManySteps(f"More than {max_steps} steps before t={t1}", time=t)
        last = t + 1.01 * h >= t1
        if last:
            h = t1 - t
        if h <= 10 * np.spacing(max(abs(t), abs(t1))):
            raise StepUnderflow(
                f"Step size underflow at t={t}; the problem is stiff or "
                "the solution is singular here",
                time=t,
            )

        try:
            k = np.empty((7, len(y)))
            k[0] = f
            for s in range(1, 7):
                k[s] = _evaluate_rhs(problem, y + h * (np.array(_A[s]) @ k[:s]), t + _C[s] * h)
        except IntegrationError:
            stage_failures += 1
            if stage_failures > _STAGE_RETRIES:
                raise
            h *= 0.25
            continue
        stage_failures = 0

        y_new = y + h * (_B[:6] @ k[:6])
        scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
        error = float(np.max(np.abs(h * (_E @ k)) / scale))
        if not math.isfinite(error):
            error = math.inf

        if error <= 1.0:
            delta = y_new - y
            dense.append(
                np.array(
                    [
                        y,
                        delta,
                        h * k[0] - delta,
                        delta - h * k[6] - (h * k[0] - delta),
                        h * (_D @ k),
                    ]
                )
            )
            t = t1 if last else t + h
            y, f = y_new, k[6]
            times.append(t)
            states.append(y)
            derivatives.append(f)
            factor = (
                _SAFETY
                * max(error, 1e-10) ** -_EXPO
                * previous_error**_BETA
            )
            previous_error = max(error, 1e-4)
            h *= min(_MAX_FACTOR, max(_MIN_FACTOR, factor))
        else:
            rejected += 1
            factor = _SAFETY * error**-_EXPO if math.isfinite(error) else _MIN_FACTOR
            h *= min(1.0, max(_MIN_FACTOR, factor))

    logger.debug(
        "Integrated [%s, %s] in %d steps (%d rejected)",
        t0,
        t1,
        len(times) - 1,
        rejected,
    )
    span = tracer.current_span()
    if span:
        span.set_tag("steps", len(times) - 1)
        span.set_tag("rejected", rejected)
    return Trajectory(
        np.array(times),
        np.array(states),
        np.array(derivatives),
        "dopri4",
        np.array(dense),
    )
