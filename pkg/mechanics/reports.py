import enum
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from geometry.structures import MetricField, SubRiemannianStructure
from subrig.utils.integrate import Trajectory


class NonholonomicState(NamedTuple):
    x: np.ndarray
    u: np.ndarray

    def velocity(self, s: SubRiemannianStructure) -> np.ndarray:
        return s.frame_matrix(self.x) @ self.u


@dataclass(frozen=True, eq=False)
class NonholonomicTrajectory:
    """Sampled motion in quasi-velocities; states are (x, u) rows."""

    structure: SubRiemannianStructure
    metric: MetricField
    trajectory: Trajectory

    def __len__(self) -> int:
        return len(self.trajectory)

    @property
    def times(self) -> np.ndarray:
        return self.trajectory.times

    @property
    def start(self) -> float:
        return self.trajectory.start

    @property
    def end(self) -> float:
        return self.trajectory.end

    def state(self, t: float) -> NonholonomicState:
        y = self.trajectory.at(t)
        n = self.structure.dimension
        return NonholonomicState(y[:n], y[n:])

    def velocity(self, t: float) -> np.ndarray:
        return self.state(t).velocity(self.structure)

    def energy(self, t: float) -> float:
        x, u = self.state(t)
        return float(u @ self.structure.fibre_metric(x) @ u)


@dataclass(frozen=True, eq=False)
class Q0Transport:
    """Annihilator section along a nonholonomic motion.

    States are (x, u, mu); the covector is eta = sum_m mu_m flat_G(Z_m).
    """

    structure: SubRiemannianStructure
    metric: MetricField
    trajectory: Trajectory
    forced: bool

    @property
    def times(self) -> np.ndarray:
        return self.trajectory.times

    def point(self, t: float) -> np.ndarray:
        return self.trajectory.at(t)[: self.structure.dimension]

    def coefficients(self, t: float) -> np.ndarray:
        return self.trajectory.at(t)[self.structure.dimension + self.structure.rank :]

    def eta(self, t: float) -> np.ndarray:
        y = self.trajectory.at(t)
        n, k = self.structure.dimension, self.structure.rank
        x = y[:n]
        Z, _dZ = self.structure.complement_jet(x)
        return self.metric.matrix(x) @ Z @ y[n + k :]


class Verdict(str, enum.Enum):
    COMPATIBLE = "compatible"
    INCOMPATIBLE = "incompatible"


class CandidateProfile(NamedTuple):
    eta0: np.ndarray
    etas: np.ndarray
    pi_b_residual: float
    annihilation_residual: float

    @property
    def residual(self) -> float:
        return max(self.pi_b_residual, self.annihilation_residual)


@dataclass(frozen=True, eq=False)
class CompatibilityReport:
    """Whether a nonholonomic motion is also a normal extremal.

    ``candidates`` holds the affine solution started at 0, then one started
    at each annihilator basis element; ``best`` is the least-squares
    combination of the family. ``vacuous`` marks a trivial initial
    annihilator.

    ``lift_residual`` is not an auto-parallel residual of the lift: it is the
    largest deviation, over the sample times and in both x and p, between
    the lift flat_G(cdot) + eta and the normal extremal started from the
    lift's initial covector. It and ``lift`` are None unless compatible.
    """

    trajectory: NonholonomicTrajectory
    sample_times: np.ndarray
    annihilator: np.ndarray
    candidates: tuple[CandidateProfile, ...]
    best: CandidateProfile
    weights: np.ndarray
    verdict: Verdict
    vacuous: bool
    tolerance: float
    lift: np.ndarray | None = None
    lift_residual: float | None = None

    def as_dict(self) -> dict:
        return {
            "verdict": self.verdict.value,
            "vacuous": self.vacuous,
            "residual_max": self.best.residual,
            "pi_b_residual": self.best.pi_b_residual,
            "annihilation_residual": self.best.annihilation_residual,
            "annihilator": [[float(c) for c in row] for row in self.annihilator],
            "weights": [float(w) for w in self.weights],
            "candidates": [
                {
                    "eta0": [float(c) for c in candidate.eta0],
                    "pi_b_residual": candidate.pi_b_residual,
                    "annihilation_residual": candidate.annihilation_residual,
                }
                for candidate in self.candidates
            ],
            "lift_residual": self.lift_residual,
        }
