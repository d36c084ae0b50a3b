import logging
import math
from collections.abc import Sequence

import numpy as np
import sentry_sdk
from ddtrace import tracer
from django.conf import settings

from geometry import api as geometry_api
from geometry.fields import OneFormField, VectorField
from geometry.flows import VariationalFlow, flow_with_variational
from geometry.structures import MetricField, SubRiemannianStructure
from subrig.utils.integrate import OdeProblem, Trajectory, integrate_adaptive

from .certificates import AbnormalCertificate, Verdict
from .curves import CotangentCurve, CotangentState, CurveSpecError, PiecewiseCurveSpec, Segment

logger = logging.getLogger(__name__)

Point = Sequence[float]

# Relative Hamiltonian drift tolerated along a normal extremal.
HAMILTONIAN_DRIFT_TOL = 1e-8
# Indeterminacy band width, in multiples of the rank tolerance.
BAND_FACTOR = 100.0


def hamiltonian(s: SubRiemannianStructure, state: CotangentState) -> float:
    x, p = state
    return 0.5 * float(p @ s.cometric(x) @ p)


def _hamiltonian_field(s: SubRiemannianStructure, y: np.ndarray) -> np.ndarray:
    n = s.dimension
    x, p = y[:n], y[n:]
    s.chart.check(x)
    gbar, dgbar = s.cometric_jet(x)
    return np.concatenate([gbar @ p, -0.5 * np.einsum("j,kjl,l->k", p, dgbar, p)])


@tracer.wrap()
def normal_extremal(
    s: SubRiemannianStructure,
    x0: Point,
    p0: Sequence[float],
    T: float,
    rtol: float | None = None,
    atol: float | None = None,
) -> CotangentCurve:
    start = CotangentState.of(x0, p0)
    s.chart.check(start.x)
    problem = OdeProblem(2 * s.dimension, lambda y, t: _hamiltonian_field(s, y))
    trajectory = integrate_adaptive(
        problem, np.concatenate(start), 0.0, T, rtol, atol
    )
    curve = CotangentCurve(s, trajectory)

    n = s.dimension
    energies = [
        hamiltonian(s, CotangentState(y[:n], y[n:])) for y in trajectory.states
    ]
    drift = max(abs(e - energies[0]) for e in energies) / max(energies[0], 1e-30)
    if drift > HAMILTONIAN_DRIFT_TOL:
        logger.warning(
            "Hamiltonian drift %.3g along normal extremal from %s", drift, list(x0)
        )
    span = tracer.current_span()
    if span:
        span.set_tag("hamiltonian_drift", drift)
    return curve


def _covector_jet(
    G: MetricField, omega: OneFormField, x: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """tau(omega) and tau_perp(omega) with derivatives d[i, k] = d(omega_k)/dx^i."""
    s = G.structure
    jet = G.jet(x)
    gbar, dgbar = s.cometric_jet(x)
    value = omega.value(x)
    d_value = omega.jacobian(x).T
    tau = jet.G @ gbar
    d_tau = np.einsum("ijl,lm->ijm", jet.dG, gbar) + np.einsum("jl,ilm->ijm", jet.G, dgbar)
    adapted = tau @ value
    d_adapted = np.einsum("ikm,m->ik", d_tau, value) + d_value @ tau.T
    return adapted, d_adapted, value - adapted, d_value - d_adapted


def nabla_normal(
    s: SubRiemannianStructure,
    G: MetricField,
    alpha: OneFormField,
    beta: OneFormField,
    x: Point,
) -> np.ndarray:
    """grad^G_{g(alpha)} tau(beta) + i_{g(alpha)} d tau_perp(beta)."""
    x = np.asarray(x, dtype=float)
    V = s.cometric(x) @ alpha.value(x)
    adapted, d_adapted, rest, d_rest = _covector_jet(G, beta, x)
    gamma = geometry_api.christoffel(G, x)
    levi_civita = V @ d_adapted - np.einsum("lik,i,l->k", gamma, V, adapted)
    insertion = V @ d_rest - d_rest @ V
    return levi_civita + insertion


def _immersion_check(generator: VectorField, x0: np.ndarray) -> None:
    if not np.any(generator.value(x0)):
        raise CurveSpecError(f"Generator {generator} vanishes at {list(x0)}")


def _coadjoint_problem(s: SubRiemannianStructure, generator: VectorField) -> OdeProblem:
    n = s.dimension

    def rhs(y: np.ndarray, t: float) -> np.ndarray:
        x, eta = y[:n], y[n:]
        s.chart.check(x)
        return np.concatenate([generator.value(x), -generator.jacobian(x).T @ eta])

    return OdeProblem(2 * n, rhs)


@tracer.wrap()
def coadjoint_transport(
    s: SubRiemannianStructure,
    seg: Segment,
    x0: Point,
    eta0: Sequence[float],
    rtol: float | None = None,
    atol: float | None = None,
) -> Trajectory:
    """Covector carried along the segment by eta' = -DX^T eta; states are (x, eta)."""
    generator = seg.generator(s)
    x0 = np.asarray(x0, dtype=float)
    s.chart.check(x0)
    _immersion_check(generator, x0)
    y0 = np.concatenate([x0, np.asarray(eta0, dtype=float)])
    return integrate_adaptive(
        _coadjoint_problem(s, generator), y0, seg.start, seg.end, rtol, atol
    )


def chebyshev_times(start: float, end: float, count: int) -> np.ndarray:
    if count < 2:
        raise ValueError("At least two samples per segment are required")
    j = np.arange(count)
    nodes = 0.5 * (start + end) - 0.5 * (end - start) * np.cos(math.pi * j / (count - 1))
    nodes[0], nodes[-1] = start, end
    return nodes


def _segment_flows(
    s: SubRiemannianStructure,
    spec: PiecewiseCurveSpec,
    rtol: float | None,
    atol: float | None,
) -> list[tuple[VariationalFlow, np.ndarray]]:
    spec.check(s)
    x = np.asarray(spec.x0, dtype=float)
    accumulated = np.eye(s.dimension)
    flows = []
    for segment in spec.segments:
        generator = segment.generator(s)
        _immersion_check(generator, x)
        flow = flow_with_variational(generator, x, segment.start, segment.end, rtol, atol)
        flows.append((flow, accumulated))
        accumulated = flow.jacobian(segment.end) @ accumulated
        x = flow.point(segment.end)
    return flows


def _pullback(
    s: SubRiemannianStructure,
    spec: PiecewiseCurveSpec,
    samples_per_segment: int,
    rtol: float | None,
    atol: float | None,
) -> tuple[np.ndarray, np.ndarray]:
    columns, times = [], []
    for flow, accumulated in _segment_flows(s, spec, rtol, atol):
        for t in chebyshev_times(flow.start, flow.end, samples_per_segment):
            back = flow.jacobian(t) @ accumulated
            columns.append(np.linalg.solve(back, s.frame_matrix(flow.point(t))))
            times.append(t)
    return np.hstack(columns), np.array(times)


@tracer.wrap()
def pullback_span(
    s: SubRiemannianStructure,
    spec: PiecewiseCurveSpec,
    samples_per_segment: int | None = None,
    rtol: float | None = None,
    atol: float | None = None,
) -> np.ndarray:
    if samples_per_segment is None:
        samples_per_segment = settings.SUBRIG["CHEBYSHEV_SAMPLES"]
    matrix, _times = _pullback(s, spec, samples_per_segment, rtol, atol)
    return matrix


def _transport_residual(
    s: SubRiemannianStructure,
    spec: PiecewiseCurveSpec,
    eta0: np.ndarray,
    samples_per_segment: int,
    rtol: float | None,
    atol: float | None,
) -> float:
    n = s.dimension
    x, eta = np.asarray(spec.x0, dtype=float), eta0
    residual = 0.0
    for segment in spec.segments:
        transport = coadjoint_transport(s, segment, x, eta, rtol, atol)
        sample_times = np.union1d(
            chebyshev_times(segment.start, segment.end, samples_per_segment),
            transport.times,
        )
        for t in sample_times:
            y = transport.at(t)
            residual = max(residual, float(np.abs(y[n:] @ s.frame_matrix(y[:n])).max()))
        x, eta = transport.final[:n], transport.final[n:]
    return residual


@tracer.wrap()
def abnormal_test(
    s: SubRiemannianStructure,
    spec: PiecewiseCurveSpec,
    samples_per_segment: int | None = None,
    rank_tol: float | None = None,
    certificate_tol: float | None = None,
    rtol: float | None = None,
    atol: float | None = None,
) -> AbnormalCertificate:
    if samples_per_segment is None:
        samples_per_segment = settings.SUBRIG["CHEBYSHEV_SAMPLES"]
    rank_tol = settings.SUBRIG["RANK_TOL"] if rank_tol is None else rank_tol
    if certificate_tol is None:
        certificate_tol = settings.SUBRIG["CERTIFICATE_TOL"]

    matrix, times = _pullback(s, spec, samples_per_segment, rtol, atol)
    U, sigma, _Vt = np.linalg.svd(matrix, full_matrices=True)
    n = s.dimension
    relative = sigma / sigma[0] if sigma[0] > 0 else np.zeros_like(sigma)
    rank = int(np.sum(relative > rank_tol))
    annihilator = U[:, rank:].T.copy()
    residuals = np.array(
        [
            _transport_residual(s, spec, eta, samples_per_segment, rtol, atol)
            for eta in annihilator
        ]
    )
    in_band = bool(np.any((relative >= rank_tol) & (relative <= BAND_FACTOR * rank_tol)))

    if in_band:
        verdict = Verdict.INDETERMINATE
    elif rank == n:
        verdict = Verdict.NOT_ABNORMAL
    elif np.min(residuals) <= certificate_tol:
        verdict = Verdict.ABNORMAL
    else:
        verdict = Verdict.INDETERMINATE

    if verdict == Verdict.INDETERMINATE:
        logger.warning(
            "Indeterminate abnormality test (rank %d, relative sigma %s); "
            "raise the sample count",
            rank,
            relative,
        )
        sentry_sdk.capture_message("Indeterminate abnormality certificate", level="warning")
    span = tracer.current_span()
    if span:
        span.set_tag("rank", rank)
        span.set_tag("verdict", verdict.value)

    return AbnormalCertificate(
        pullback=matrix,
        singular_values=sigma,
        rank=rank,
        annihilator=annihilator,
        residuals=residuals,
        verdict=verdict,
        rank_tol=rank_tol,
        certificate_tol=certificate_tol,
        sample_times=times,
    )


def variation_vector(
    s: SubRiemannianStructure,
    seg: Segment,
    x0: Point,
    Y: VectorField,
    tau: float,
    dt: float,
    flow: VariationalFlow | None = None,
) -> np.ndarray:
    """Needle variation: dt (Y - X)(c(tau)) pushed forward to the segment end."""
    if not seg.start <= tau <= seg.end:
        raise ValueError(f"tau={tau} outside [{seg.start}, {seg.end}]")
    if dt < 0:
        raise ValueError("dt must be nonnegative")
    if flow is None:
        flow = flow_with_variational(seg.generator(s), x0, seg.start, seg.end)
    point = flow.point(tau)
    s.require_in_distribution(point, Y.value(point))
    difference = dt * (Y.value(point) - flow.field.value(point))
    if tau == seg.end:
        return difference
    return flow.jacobian(seg.end) @ flow.pullback_vector(tau, difference)


@tracer.wrap()
def variation_span(
    s: SubRiemannianStructure,
    seg: Segment,
    x0: Point,
    taus: Sequence[float] | None = None,
    rtol: float | None = None,
    atol: float | None = None,
) -> np.ndarray:
    if taus is None:
        taus = chebyshev_times(seg.start, seg.end, 16)
    flow = flow_with_variational(seg.generator(s), x0, seg.start, seg.end, rtol, atol)
    fields = [VectorField.zero(s.chart), *s.frame]
    return np.column_stack(
        [
            variation_vector(s, seg, x0, Y, tau, 1.0, flow)
            for tau in taus
            for Y in fields
        ]
    )


def lift_geodesic(
    s: SubRiemannianStructure, G: MetricField, trajectory: Trajectory
) -> CotangentCurve:
    n = s.dimension
    if trajectory.derivatives is None:
        raise ValueError("Lifting needs sampled accelerations")
    states, derivatives = [], []
    for y, dy in zip(trajectory.states, trajectory.derivatives):
        x, v = y[:n], y[n:]
        jet = G.jet(x)
        states.append(np.concatenate([x, jet.G @ v]))
        dp = np.einsum("i,ijl,l->j", v, jet.dG, v) + jet.G @ dy[n:]
        derivatives.append(np.concatenate([v, dp]))
    return CotangentCurve(
        s, Trajectory(trajectory.times, np.array(states), np.array(derivatives))
    )


def hamiltonian_residual(s: SubRiemannianStructure, curve: CotangentCurve) -> float:
    trajectory = curve.trajectory
    if trajectory.derivatives is None:
        raise ValueError("Residual needs sampled derivatives")
    return max(
        float(np.abs(dy - _hamiltonian_field(s, y)).max())
        for y, dy in zip(trajectory.states, trajectory.derivatives)
    )
