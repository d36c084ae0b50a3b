"""
Flows of vector fields together with their variational Jacobians.

The augmented state is (x, J) with J flattened row-major; J(t) solves
J' = DX(x(t)) J with J(t0) = I, so J(t) is the derivative of the flow map
from time t0 to t.
"""

import logging
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
import sentry_sdk
from ddtrace import tracer
from django.conf import settings

from subrig.utils.integrate import OdeProblem, Trajectory, integrate_adaptive

from .fields import VectorField

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class VariationalFlow:
    field: VectorField
    trajectory: Trajectory
    min_abs_det: float

    @property
    def dimension(self) -> int:
        return self.field.chart.dimension

    @property
    def start(self) -> float:
        return self.trajectory.start

    @property
    def end(self) -> float:
        return self.trajectory.end

    @property
    def singular(self) -> bool:
        return self.min_abs_det < settings.SUBRIG["DET_FLOOR"]

    def point(self, t: float) -> np.ndarray:
        return self.trajectory.at(t)[: self.dimension]

    def jacobian(self, t: float) -> np.ndarray:
        n = self.dimension
        return self.trajectory.at(t)[n:].reshape(n, n)

    def pullback_vector(self, t: float, v: Sequence[float]) -> np.ndarray:
        """Carry a tangent vector at x(t) back to the start point."""
        return np.linalg.solve(self.jacobian(t), np.asarray(v, dtype=float))

    def pushforward_vector(self, t: float, v: Sequence[float]) -> np.ndarray:
        return self.jacobian(t) @ np.asarray(v, dtype=float)


def _variational_problem(field: VectorField) -> OdeProblem:
    n = field.chart.dimension

    def rhs(y: np.ndarray, t: float) -> np.ndarray:
        x = y[:n]
        field.chart.check(x)
        J = y[n:].reshape(n, n)
        return np.concatenate([field.value(x), (field.jacobian(x) @ J).ravel()])

    return OdeProblem(n + n * n, rhs)


@tracer.wrap()
def flow_with_variational(
    X: VectorField,
    x0: Sequence[float],
    t0: float,
    t1: float,
    rtol: float | None = None,
    atol: float | None = None,
) -> VariationalFlow:
    n = X.chart.dimension
    y0 = np.concatenate([np.asarray(x0, dtype=float), np.eye(n).ravel()])
    trajectory = integrate_adaptive(_variational_problem(X), y0, t0, t1, rtol, atol)
    dets = [np.linalg.det(state[n:].reshape(n, n)) for state in trajectory.states]
    min_abs_det = float(np.min(np.abs(dets)))
    flow = VariationalFlow(X, trajectory, min_abs_det)
    if flow.singular:
        logger.warning(
            "Variational Jacobian of %s nearly singular on [%s, %s]: |det| = %.3g",
            X,
            t0,
            t1,
            min_abs_det,
        )
        sentry_sdk.capture_message(
            f"Near-singular variational Jacobian (|det| = {min_abs_det:.3g})",
            level="warning",
        )
    return flow
