import logging
from collections.abc import Sequence
from itertools import product
from typing import NamedTuple

import numpy as np
from ddtrace import tracer
from django.conf import settings

from subrig.utils import expr
from subrig.utils.integrate import OdeProblem, Trajectory, integrate_adaptive

from .fields import OneFormField, VectorField
from .structures import (
    MetricField,
    NotInDistribution,
    StructureError,
    SubRiemannianStructure,
)

logger = logging.getLogger(__name__)

Point = Sequence[float]


def _point(x: Point) -> np.ndarray:
    return np.asarray(x, dtype=float)


def cometric(s: SubRiemannianStructure, x: Point) -> np.ndarray:
    try:
        return s.cometric(_point(x))
    except np.linalg.LinAlgError as exc:
        raise StructureError(f"Fibre metric is singular at {list(x)}") from exc


def sharp_g(s: SubRiemannianStructure, x: Point, p: Sequence[float]) -> np.ndarray:
    return cometric(s, x) @ _point(p)


def riemannian_extension(s: SubRiemannianStructure) -> MetricField:
    return MetricField(s)


class Projections(NamedTuple):
    pi: np.ndarray
    pi_perp: np.ndarray
    tau: np.ndarray
    tau_perp: np.ndarray


def projections(G: MetricField, s: SubRiemannianStructure, x: Point) -> Projections:
    x = _point(x)
    gbar = cometric(s, x)
    metric = G.matrix(x)
    identity = np.eye(s.dimension)
    pi = gbar @ metric
    tau = metric @ gbar
    return Projections(pi, identity - pi, tau, identity - tau)


def christoffel(G: MetricField, x: Point) -> np.ndarray:
    """Levi-Civita symbols of G, indexed [k, i, j]."""
    jet = G.jet(_point(x))
    dG = jet.dG
    lowered = dG.transpose(1, 0, 2) + dG.transpose(1, 2, 0) - dG
    return 0.5 * np.einsum("kl,lij->kij", jet.G_inv, lowered)


def lie_bracket(X: VectorField, Y: VectorField) -> VectorField:
    if X.chart != Y.chart:
        raise ValueError("Vector fields live on different charts")
    components = []
    for j in range(X.chart.dimension):
        total = expr.ZERO
        for i in range(X.chart.dimension):
            total = expr.add(total, expr.mul(X.components[i], Y.jacobian_exprs[j][i]))
            total = expr.sub(total, expr.mul(Y.components[i], X.jacobian_exprs[j][i]))
        components.append(total)
    return VectorField(X.chart, tuple(components))


class BracketFiltration(NamedTuple):
    dims: tuple[int, ...]
    bracket_generating: bool


def _numerical_rank(matrix: np.ndarray, rank_tol: float) -> int:
    if matrix.size == 0:
        return 0
    sigma = np.linalg.svd(matrix, compute_uv=False)
    if sigma[0] == 0:
        return 0
    return int(np.sum(sigma > rank_tol * sigma[0]))


@tracer.wrap()
def bracket_filtration(
    s: SubRiemannianStructure,
    x: Point,
    depth: int,
    rank_tol: float | None = None,
) -> BracketFiltration:
    # Left-normed brackets of length m span all brackets of length m.
    if depth < 1:
        raise ValueError("Depth must be at least 1")
    rank_tol = settings.SUBRIG["RANK_TOL"] if rank_tol is None else rank_tol
    x = _point(x)
    level = list(s.frame)
    columns = [field.value(x) for field in level]
    dims = [_numerical_rank(np.column_stack(columns), rank_tol)]
    for _ in range(1, depth):
        if dims[-1] == s.dimension:
            dims.append(s.dimension)
            continue
        next_level = []
        for generator, field in product(s.frame, level):
            if generator == field:
                continue
            bracket = lie_bracket(generator, field)
            if not bracket.is_zero:
                next_level.append(bracket)
        columns.extend(field.value(x) for field in next_level)
        level = next_level
        dims.append(_numerical_rank(np.column_stack(columns), rank_tol))
    return BracketFiltration(tuple(dims), dims[-1] == s.dimension)


def _require_in_q(s: SubRiemannianStructure, x: np.ndarray, v: Sequence[float], what: str):
    try:
        return s.require_in_distribution(x, v)
    except NotInDistribution as exc:
        raise NotInDistribution(f"{what}: {exc}") from exc


def pi_G(
    G: MetricField,
    s: SubRiemannianStructure,
    x: Point,
    u: Sequence[float],
    v: Sequence[float],
) -> np.ndarray:
    x = _point(x)
    u = _point(u)
    _require_in_q(s, x, u, "u")
    coefficients = _require_in_q(s, x, v, "v")
    return projections(G, s, x).pi_perp @ covariant_derivative(G, s, x, u, coefficients)


def covariant_derivative(
    G: MetricField,
    s: SubRiemannianStructure,
    x: Point,
    u: Sequence[float],
    coefficients: Sequence[float],
) -> np.ndarray:
    x = _point(x)
    u = _point(u)
    coefficients = _point(coefficients)
    F, dF = s.frame_jet(x)
    v = F @ coefficients
    derivative = np.einsum("i,ija,a->j", u, dF, coefficients)
    return derivative + np.einsum("kij,i,j->k", christoffel(G, x), u, v)


def frame_brackets(s: SubRiemannianStructure, x: Point) -> np.ndarray:
    """All [X_a, X_b] at x, indexed [j, a, b]."""
    F, dF = s.frame_jet(_point(x))
    pushed = np.einsum("ia,ijb->jab", F, dF)
    return pushed - pushed.transpose(0, 2, 1)


def pi_B(
    s: SubRiemannianStructure,
    x: Point,
    u: Sequence[float],
    eta: Sequence[float],
) -> np.ndarray:
    x = _point(x)
    eta = _point(eta)
    coefficients = _require_in_q(s, x, u, "u")
    s.require_in_annihilator(x, eta)
    values = -np.einsum("j,jab,a->b", eta, frame_brackets(s, x), coefficients)
    F = s.frame_matrix(x)
    Z, _dZ = s.complement_jet(x)
    full = np.hstack([F, Z])
    rhs = np.concatenate([values, np.zeros(Z.shape[1])])
    return np.linalg.solve(full.T, rhs)


def symmetric_bracket(
    s: SubRiemannianStructure,
    alpha: OneFormField,
    beta: OneFormField,
    x: Point,
) -> np.ndarray:
    x = _point(x)
    gbar, dgbar = s.cometric_jet(x)
    a, b = alpha.value(x), beta.value(x)
    return (
        beta.jacobian(x) @ (gbar @ a)
        + alpha.jacobian(x) @ (gbar @ b)
        + np.einsum("j,ijl,l->i", a, dgbar, b)
    )


def _simpson(times: np.ndarray, values: np.ndarray) -> float:
    count = len(times) - 1
    if count <= 0:
        return 0.0
    if count == 1:
        return 0.5 * (times[1] - times[0]) * (values[0] + values[1])
    h = np.diff(times)
    total = 0.0
    for i in range(0, count - 1, 2):
        h0, h1 = h[i], h[i + 1]
        total += (h0 + h1) / 6 * (
            (2 - h1 / h0) * values[i]
            + (h0 + h1) ** 2 / (h0 * h1) * values[i + 1]
            + (2 - h0 / h1) * values[i + 2]
        )
    if count % 2 == 1:
        h0, h1 = h[-2], h[-1]
        total += (
            (2 * h1**2 + 3 * h0 * h1) / (6 * (h0 + h1)) * values[-1]
            + (h1**2 + 3 * h1 * h0) / (6 * h0) * values[-2]
            - h1**3 / (6 * h0 * (h0 + h1)) * values[-3]
        )
    return float(total)


def length(s: SubRiemannianStructure, samples: Trajectory, tol: float = 1e-8) -> float:
    # Only the leading n state columns are read.
    n = s.dimension
    if len(samples) < 2:
        return 0.0
    if samples.derivatives is None:
        raise ValueError("Length needs sampled velocities")
    speeds = np.zeros(len(samples))
    for i in range(len(samples)):
        x = samples.states[i, :n]
        v = samples.derivatives[i, :n]
        u = s.require_in_distribution(x, v, tol)
        speeds[i] = np.sqrt(max(0.0, u @ s.fibre_metric(x) @ u))
    return _simpson(samples.times, speeds)


@tracer.wrap()
def riemannian_geodesic(
    G: MetricField,
    x0: Point,
    v0: Sequence[float],
    T: float,
    rtol: float | None = None,
    atol: float | None = None,
) -> Trajectory:
    n = G.structure.dimension

    def rhs(y: np.ndarray, t: float) -> np.ndarray:
        x, v = y[:n], y[n:]
        G.structure.chart.check(x)
        return np.concatenate([v, -np.einsum("kij,i,j->k", christoffel(G, x), v, v)])

    y0 = np.concatenate([_point(x0), _point(v0)])
    return integrate_adaptive(OdeProblem(2 * n, rhs), y0, 0.0, T, rtol, atol)


def q0_basis(G: MetricField, x: Point) -> tuple[np.ndarray, np.ndarray]:
    """Annihilator basis eta^m = flat_G(Z_m) as columns, and d[i, j, m] = d(eta^m_j)/dx^i."""
    x = _point(x)
    jet = G.jet(x)
    Z, dZ = G.structure.complement_jet(x)
    eta = jet.G @ Z
    deta = np.einsum("ijl,lm->ijm", jet.dG, Z) + np.einsum("jl,ilm->ijm", jet.G, dZ)
    return eta, deta


def bott_derivative(
    G: MetricField, x: Point, u: Sequence[float], m: int
) -> np.ndarray:
    _eta, deta = q0_basis(G, x)
    d = deta[:, :, m]
    u = _point(u)
    return u @ d - d @ u
