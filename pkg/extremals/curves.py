import math
from collections.abc import Sequence
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from geometry.fields import VectorField
from geometry.structures import SubRiemannianStructure
from subrig.utils import expr
from subrig.utils.expr import Chart, Expr
from subrig.utils.integrate import Trajectory

# Junction times closer than this are considered equal.
JUNCTION_TOL = 1e-12


class CurveSpecError(ValueError):
    pass


class BasisDegeneracy(ArithmeticError):
    pass


class CotangentState(NamedTuple):
    x: np.ndarray
    p: np.ndarray

    @classmethod
    def of(cls, x: Sequence[float], p: Sequence[float]) -> "CotangentState":
        x, p = np.asarray(x, dtype=float), np.asarray(p, dtype=float)
        if x.shape != p.shape:
            raise ValueError("Base point and covector must have the same dimension")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(p))):
            raise ValueError("Cotangent state must be finite")
        return cls(x, p)


@dataclass(frozen=True, eq=False)
class CotangentCurve:
    """Sampled curve in T*M; states are (x, p) rows."""

    structure: SubRiemannianStructure
    trajectory: Trajectory

    def __post_init__(self) -> None:
        if self.trajectory.dimension != 2 * self.structure.dimension:
            raise ValueError("Cotangent curve states must hold (x, p)")

    def __len__(self) -> int:
        return len(self.trajectory)

    @property
    def times(self) -> np.ndarray:
        return self.trajectory.times

    @property
    def base_points(self) -> np.ndarray:
        return self.trajectory.states[:, : self.structure.dimension]

    @property
    def covectors(self) -> np.ndarray:
        return self.trajectory.states[:, self.structure.dimension :]

    def state(self, t: float) -> CotangentState:
        y = self.trajectory.at(t)
        n = self.structure.dimension
        return CotangentState(y[:n], y[n:])

    def admissibility_residual(self) -> float:
        """max |xdot - gbar(x) p| over the samples."""
        if self.trajectory.derivatives is None:
            raise ValueError("Admissibility needs sampled derivatives")
        n = self.structure.dimension
        residual = 0.0
        for y, dy in zip(self.trajectory.states, self.trajectory.derivatives):
            x, p = y[:n], y[n:]
            residual = max(
                residual, float(np.abs(dy[:n] - self.structure.cometric(x) @ p).max())
            )
        return residual


@dataclass(frozen=True)
class Segment:
    """Integral curve of sum_a coefficients[a] X_a over [start, end]."""

    coefficients: tuple[Expr, ...]
    start: float
    end: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "coefficients", tuple(self.coefficients))
        if not (math.isfinite(self.start) and math.isfinite(self.end)):
            raise CurveSpecError("Segment interval must be finite")
        if self.end < self.start:
            raise CurveSpecError(
                f"Segment interval [{self.start}, {self.end}] runs backwards"
            )

    @classmethod
    def parse(
        cls, chart: Chart, sources: Sequence[str], start: float, end: float
    ) -> "Segment":
        return cls(tuple(expr.parse(src, chart) for src in sources), start, end)

    @classmethod
    def along(cls, rank: int, index: int, start: float, end: float) -> "Segment":
        """Integral curve of the single frame field X_index."""
        if not 0 <= index < rank:
            raise CurveSpecError(f"No frame field {index} in a rank {rank} frame")
        return cls(
            tuple(expr.ONE if a == index else expr.ZERO for a in range(rank)),
            start,
            end,
        )

    @property
    def duration(self) -> float:
        return self.end - self.start

    def generator(self, s: SubRiemannianStructure) -> VectorField:
        if len(self.coefficients) != s.rank:
            raise CurveSpecError(
                f"Segment has {len(self.coefficients)} frame coefficients, "
                f"frame has {s.rank} fields"
            )
        return VectorField.combination(s.chart, self.coefficients, s.frame)


@dataclass(frozen=True)
class PiecewiseCurveSpec:
    """Concatenation of integral curves of generators in Q.

    Only the first segment carries a start point; each later segment starts
    where the previous one ends after integration.
    """

    x0: tuple[float, ...]
    segments: tuple[Segment, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "x0", tuple(float(c) for c in self.x0))
        object.__setattr__(self, "segments", tuple(self.segments))
        if not self.segments:
            raise CurveSpecError("A curve needs at least one segment")
        for previous, current in zip(self.segments, self.segments[1:]):
            if abs(previous.end - current.start) > JUNCTION_TOL:
                raise CurveSpecError(
                    f"Segments do not abut: {previous.end} != {current.start}"
                )

    @classmethod
    def single(
        cls, x0: Sequence[float], segment: Segment
    ) -> "PiecewiseCurveSpec":
        return cls(tuple(x0), (segment,))

    @property
    def start(self) -> float:
        return self.segments[0].start

    @property
    def end(self) -> float:
        return self.segments[-1].end

    def check(self, s: SubRiemannianStructure) -> None:
        if len(self.x0) != s.dimension:
            raise CurveSpecError(
                f"Start point has {len(self.x0)} coordinates, chart has {s.dimension}"
            )
        s.chart.check(self.x0)
        for segment in self.segments:
            segment.generator(s)
