import logging
import math
from collections.abc import Sequence
from functools import cached_property
from typing import NamedTuple

import numpy as np
from django.conf import settings

from subrig.utils import expr
from subrig.utils.expr import Chart, Expr, ExprError

from .fields import VectorField, _compile

logger = logging.getLogger(__name__)

# Unbounded coordinates are probed inside this box.
PROBE_BOX = (-2.0, 2.0)

_PRIMES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37)


class StructureError(Exception):
    pass


class CompletionError(StructureError):
    pass


class NotInDistribution(ValueError):
    pass


def _radical_inverse(index: int, base: int) -> float:
    result, f = 0.0, 1.0 / base
    while index > 0:
        index, digit = divmod(index, base)
        result += digit * f
        f /= base
    return result


def probe_box(chart: Chart) -> list[tuple[float, float]]:
    box = []
    for lo, hi in chart.domain:
        if math.isinf(lo) and math.isinf(hi):
            lo, hi = PROBE_BOX
        elif math.isinf(lo):
            lo = hi - (PROBE_BOX[1] - PROBE_BOX[0])
        elif math.isinf(hi):
            hi = lo + (PROBE_BOX[1] - PROBE_BOX[0])
        margin = 0.01 * (hi - lo)
        box.append((lo + margin, hi - margin))
    return box


def halton_probes(chart: Chart, count: int) -> np.ndarray:
    """Deterministic quasi-random points inside the chart's domain box."""
    if chart.dimension > len(_PRIMES):
        raise ValueError("Too many coordinates for the Halton sequence")
    box = probe_box(chart)
    points = np.empty((count, chart.dimension))
    for row in range(count):
        for i, (lo, hi) in enumerate(box):
            points[row, i] = lo + (hi - lo) * _radical_inverse(row + 1, _PRIMES[i])
    return points


def _relative_sigma_min(matrix: np.ndarray) -> float:
    sigma = np.linalg.svd(matrix, compute_uv=False)
    if sigma.size == 0 or sigma[0] == 0:
        return 0.0
    return float(sigma[-1] / sigma[0])


class SubRiemannianStructure:
    """A distribution given by a frame, with a fibre metric on it.

    The frame columns span Q; ``metric`` holds the matrix H_ab = h(X_a, X_b)
    and defaults to the identity. The optional complement frame spans a
    complement of Q and is completed from coordinate fields when absent.
    """

    def __init__(
        self,
        chart: Chart,
        frame: Sequence[VectorField],
        metric: Sequence[Sequence[Expr]] | None = None,
        complement: Sequence[VectorField] | None = None,
        *,
        probes: np.ndarray | None = None,
        anchor: Sequence[float] | None = None,
        name: str = "",
        rank_tol: float | None = None,
    ) -> None:
        self.chart = chart
        self.frame = tuple(frame)
        self.name = name
        self.rank_tol = settings.SUBRIG["RANK_TOL"] if rank_tol is None else rank_tol
        n, k = chart.dimension, len(self.frame)
        if not 1 <= k <= n:
            raise StructureError(f"Frame must have between 1 and {n} fields, got {k}")
        for field in self.frame:
            if field.chart != chart:
                raise StructureError("Frame field defined on another chart")

        if metric is None:
            self.metric = tuple(
                tuple(expr.ONE if a == b else expr.ZERO for b in range(k))
                for a in range(k)
            )
            self.orthonormal = True
        else:
            self.metric = tuple(tuple(row) for row in metric)
            if len(self.metric) != k or any(len(row) != k for row in self.metric):
                raise StructureError(f"Fibre metric must be {k}x{k}")
            self.orthonormal = False

        if complement is not None:
            complement = tuple(complement)
            if len(complement) != n - k:
                raise StructureError(
                    f"Complement frame must have {n - k} fields, got {len(complement)}"
                )
        self._complement = complement

        self.probes = (
            halton_probes(chart, settings.SUBRIG["PROBE_COUNT"])
            if probes is None
            else np.atleast_2d(np.asarray(probes, dtype=float))
        )
        if anchor is None:
            anchor = [(lo + hi) / 2 for lo, hi in probe_box(chart)]
        self.anchor = np.asarray(anchor, dtype=float)

        self._frame = _compile(
            [field.components[j] for j in range(n) for field in self.frame]
        )
        self._frame_derivatives = _compile(
            [
                field.jacobian_exprs[j][i]
                for i in range(n)
                for j in range(n)
                for field in self.frame
            ]
        )
        self._metric = _compile([e for row in self.metric for e in row])
        self._metric_derivatives = _compile(
            [
                expr.differentiate(e, name)
                for name in chart.names
                for row in self.metric
                for e in row
            ]
        )
        self._check_probes()

    @property
    def dimension(self) -> int:
        return self.chart.dimension

    @property
    def rank(self) -> int:
        return len(self.frame)

    def __repr__(self) -> str:
        return f"<SubRiemannianStructure {self.name or '?'} n={self.dimension} k={self.rank}>"

    def _check_probes(self) -> None:
        for x in self.probes:
            try:
                F = self.frame_matrix(x)
                H = self.fibre_metric(x)
            except ExprError as exc:
                raise StructureError(f"Frame not defined at probe {x}: {exc}") from exc
            if _relative_sigma_min(F) <= self.rank_tol:
                raise StructureError(f"Frame drops rank at probe {x}")
            if not np.allclose(H, H.T, rtol=0, atol=1e-12 * (1 + np.abs(H).max())):
                raise StructureError(f"Fibre metric not symmetric at probe {x}")
            if np.linalg.eigvalsh(H).min() <= 0:
                raise StructureError(f"Fibre metric not positive definite at probe {x}")
            if self._complement is not None:
                self._check_full_frame(x)

    def _check_full_frame(self, x: np.ndarray) -> None:
        try:
            E = np.hstack([self.frame_matrix(x), self.complement_jet(x)[0]])
        except ExprError as exc:
            raise CompletionError(f"Complement not defined at {x}: {exc}") from exc
        if _relative_sigma_min(E) <= self.rank_tol:
            raise CompletionError(f"Frame and complement are dependent at {x}")

    def frame_matrix(self, x: Sequence[float]) -> np.ndarray:
        return self._frame(x).reshape(self.dimension, self.rank)

    def frame_jet(self, x: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
        """F and dF with dF[i, j, a] = d(X_a^j)/dx^i."""
        n, k = self.dimension, self.rank
        return self.frame_matrix(x), self._frame_derivatives(x).reshape(n, n, k)

    def fibre_metric(self, x: Sequence[float]) -> np.ndarray:
        if self.orthonormal:
            return np.eye(self.rank)
        return self._metric(x).reshape(self.rank, self.rank)

    def fibre_metric_jet(self, x: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
        n, k = self.dimension, self.rank
        if self.orthonormal:
            return np.eye(k), np.zeros((n, k, k))
        return self.fibre_metric(x), self._metric_derivatives(x).reshape(n, k, k)

    @cached_property
    def complement_frame(self) -> tuple[VectorField, ...]:
        if self._complement is not None:
            return self._complement
        return self._complete()

    def _complete(self) -> tuple[VectorField, ...]:
        """Greedy column pivoting of F at the anchor over coordinate fields."""
        n, k = self.dimension, self.rank
        if k == n:
            return ()
        try:
            basis = self.frame_matrix(self.anchor)
        except ExprError as exc:
            raise CompletionError(f"Frame not defined at anchor: {exc}") from exc
        chosen: list[int] = []
        for _ in range(n - k):
            q, _r = np.linalg.qr(basis)
            residual = np.eye(n) - q @ q.T
            scores = np.linalg.norm(residual, axis=0)
            scores[chosen] = -1.0
            best = int(np.argmax(scores))
            chosen.append(best)
            basis = np.hstack([basis, np.eye(n)[:, [best]]])
        completion = tuple(VectorField.coordinate(self.chart, i) for i in chosen)
        logger.debug(
            "Completed %r with coordinate fields %s",
            self,
            [self.chart.names[i] for i in chosen],
        )
        self._complement = completion
        for x in self.probes:
            self._check_full_frame(x)
        return completion

    @cached_property
    def _complement_compiled(self):
        n = self.dimension
        fields = self.complement_frame
        value = _compile([f.components[j] for j in range(n) for f in fields])
        derivatives = _compile(
            [f.jacobian_exprs[j][i] for i in range(n) for j in range(n) for f in fields]
        )
        return value, derivatives

    def complement_jet(self, x: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
        """Z and dZ with dZ[i, j, m] = d(Z_m^j)/dx^i."""
        n, m = self.dimension, self.dimension - self.rank
        if m == 0:
            return np.zeros((n, 0)), np.zeros((n, n, 0))
        value, derivatives = self._complement_compiled
        return value(x).reshape(n, m), derivatives(x).reshape(n, n, m)

    def cometric(self, x: Sequence[float]) -> np.ndarray:
        F = self.frame_matrix(x)
        if self.orthonormal:
            return F @ F.T
        return F @ np.linalg.solve(self.fibre_metric(x), F.T)

    def cometric_jet(self, x: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
        """The cometric and its coordinate derivatives, d[i] = d(gbar)/dx^i."""
        F, dF = self.frame_jet(x)
        H, dH = self.fibre_metric_jet(x)
        Hinv = np.linalg.inv(H)
        half = np.einsum("ija,ab,lb->ijl", dF, Hinv, F)
        dgbar = half + half.transpose(0, 2, 1)
        if not self.orthonormal:
            dHinv = -np.einsum("ab,ibc,cd->iad", Hinv, dH, Hinv)
            dgbar += np.einsum("ja,iab,lb->ijl", F, dHinv, F)
        return F @ Hinv @ F.T, dgbar

    def frame_coefficients(
        self, x: Sequence[float], v: Sequence[float]
    ) -> tuple[np.ndarray, float]:
        """Coefficients u with F u closest to v, and the residual |v - F u|."""
        F = self.frame_matrix(x)
        v = np.asarray(v, dtype=float)
        u, *_ = np.linalg.lstsq(F, v, rcond=None)
        return u, float(np.linalg.norm(v - F @ u))

    def require_in_distribution(
        self, x: Sequence[float], v: Sequence[float], tol: float | None = None
    ) -> np.ndarray:
        tol = settings.SUBRIG["MEMBERSHIP_TOL"] if tol is None else tol
        u, residual = self.frame_coefficients(x, v)
        if residual > tol * max(1.0, float(np.linalg.norm(v))):
            raise NotInDistribution(f"Vector {v} is not in Q at {x} (residual {residual:.3g})")
        return u

    def require_in_annihilator(
        self, x: Sequence[float], eta: Sequence[float], tol: float | None = None
    ) -> None:
        tol = settings.SUBRIG["MEMBERSHIP_TOL"] if tol is None else tol
        eta = np.asarray(eta, dtype=float)
        residual = float(np.abs(eta @ self.frame_matrix(x)).max())
        if residual > tol * max(1.0, float(np.linalg.norm(eta))):
            raise NotInDistribution(
                f"Covector {eta} does not annihilate Q at {x} (residual {residual:.3g})"
            )


class MetricJet(NamedTuple):
    G: np.ndarray
    G_inv: np.ndarray
    dG: np.ndarray


class MetricField:
    """Riemannian extension G of h: the full frame is G-orthonormal blockwise.

    With E = [F Z] and D = diag(H, I), G = E^-T D E^-1, so G(X_a, X_b) = H_ab,
    G(X_a, Z_m) = 0 and G(Z_m, Z_l) = delta_ml; G^-1 = F H^-1 F^T + Z Z^T.
    """

    def __init__(self, structure: SubRiemannianStructure) -> None:
        self.structure = structure
        # Completes the complement frame when none was given.
        structure.complement_frame
        tol = settings.SUBRIG["RESTRICTION_TOL"]
        for x in structure.probes:
            F = structure.frame_matrix(x)
            H = structure.fibre_metric(x)
            frame = self._full_frame(x)[0]
            defect = np.abs(F.T @ self.matrix(x) @ F - H).max()
            scale = (1 + np.abs(H).max()) * max(1.0, np.abs(frame).max())
            if defect > tol * scale:
                raise StructureError(
                    f"Extension does not restrict to h at {x} (defect {defect:.3g})"
                )

    def _full_frame(self, x: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
        F, dF = self.structure.frame_jet(x)
        Z, dZ = self.structure.complement_jet(x)
        return np.hstack([F, Z]), np.concatenate([dF, dZ], axis=2)

    def _block_metric(self, x: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
        s = self.structure
        n, k = s.dimension, s.rank
        H, dH = s.fibre_metric_jet(x)
        D = np.eye(n)
        D[:k, :k] = H
        dD = np.zeros((n, n, n))
        dD[:, :k, :k] = dH
        return D, dD

    def inverse(self, x: Sequence[float]) -> np.ndarray:
        gbar = self.structure.cometric(x)
        Z, _dZ = self.structure.complement_jet(x)
        return gbar + Z @ Z.T

    def matrix(self, x: Sequence[float]) -> np.ndarray:
        E, _dE = self._full_frame(x)
        D, _dD = self._block_metric(x)
        W = np.linalg.inv(E)
        return W.T @ D @ W

    def jet(self, x: Sequence[float]) -> MetricJet:
        E, dE = self._full_frame(x)
        D, dD = self._block_metric(x)
        W = np.linalg.inv(E)
        dW = -np.einsum("ab,ibc,cd->iad", W, dE, W)
        half = np.einsum("iba,bc,cd->iad", dW, D, W)
        dG = half + half.transpose(0, 2, 1) + np.einsum("ba,ibc,cd->iad", W, dD, W)
        return MetricJet(W.T @ D @ W, self.inverse(x), dG)

    def flat(self, x: Sequence[float], v: Sequence[float]) -> np.ndarray:
        return self.matrix(x) @ np.asarray(v, dtype=float)

    def sharp(self, x: Sequence[float], p: Sequence[float]) -> np.ndarray:
        return self.inverse(x) @ np.asarray(p, dtype=float)
