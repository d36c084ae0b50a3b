import logging
from collections.abc import Sequence

import numpy as np
from ddtrace import tracer
from django.conf import settings

from extremals import api as extremals_api
from extremals.curves import BasisDegeneracy
from geometry import api as geometry_api
from geometry.structures import MetricField, SubRiemannianStructure
from subrig.utils.integrate import OdeProblem, integrate_adaptive

from .reports import (
    CandidateProfile,
    CompatibilityReport,
    NonholonomicTrajectory,
    Q0Transport,
    Verdict,
)

logger = logging.getLogger(__name__)

Point = Sequence[float]

ENERGY_DRIFT_TOL = 1e-8


def _acceleration(
    s: SubRiemannianStructure, G: MetricField, x: np.ndarray, u: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    # The Q-perp part of the returned acceleration is the reaction.
    F = s.frame_matrix(x)
    acceleration = geometry_api.covariant_derivative(G, s, x, F @ u, u)
    rhs = F.T @ G.matrix(x) @ acceleration
    return -np.linalg.solve(s.fibre_metric(x), rhs), acceleration


@tracer.wrap()
def nonholonomic_trajectory(
    s: SubRiemannianStructure,
    G: MetricField,
    x0: Point,
    u0: Sequence[float],
    T: float,
    rtol: float | None = None,
    atol: float | None = None,
) -> NonholonomicTrajectory:
    n, k = s.dimension, s.rank
    x0 = np.asarray(x0, dtype=float)
    u0 = np.asarray(u0, dtype=float)
    if u0.shape != (k,):
        raise ValueError(f"Expected {k} quasi-velocities, got {u0.shape}")
    s.chart.check(x0)

    def rhs(y: np.ndarray, t: float) -> np.ndarray:
        x, u = y[:n], y[n:]
        s.chart.check(x)
        du, _acc = _acceleration(s, G, x, u)
        return np.concatenate([s.frame_matrix(x) @ u, du])

    trajectory = integrate_adaptive(
        OdeProblem(n + k, rhs), np.concatenate([x0, u0]), 0.0, T, rtol, atol
    )
    motion = NonholonomicTrajectory(s, G, trajectory)
    energies = [motion.energy(t) for t in trajectory.times]
    drift = max(abs(e - energies[0]) for e in energies) / max(energies[0], 1e-30)
    if drift > ENERGY_DRIFT_TOL:
        logger.warning("Kinetic energy drift %.3g along nonholonomic motion", drift)
    return motion


def nh_covariant_derivative(
    s: SubRiemannianStructure,
    G: MetricField,
    x: Point,
    u: Sequence[float],
    v: Sequence[float],
) -> np.ndarray:
    """pi of the Levi-Civita derivative along u of sum_a v^a X_a."""
    x = np.asarray(x, dtype=float)
    s.require_in_distribution(x, u)
    derivative = geometry_api.covariant_derivative(G, s, x, u, v)
    return geometry_api.projections(G, s, x).pi @ derivative


def _q0_problem(
    s: SubRiemannianStructure, G: MetricField, forced: bool
) -> OdeProblem:
    n, k = s.dimension, s.rank

    def rhs(y: np.ndarray, t: float) -> np.ndarray:
        x, u, mu = y[:n], y[n : n + k], y[n + k :]
        s.chart.check(x)
        try:
            du, acceleration = _acceleration(s, G, x, u)
            Z, _dZ = s.complement_jet(x)
            _eta, deta = geometry_api.q0_basis(G, x)
            metric = G.matrix(x)
        except np.linalg.LinAlgError as exc:
            raise BasisDegeneracy(f"Annihilator basis degenerate at {list(x)}") from exc
        v = s.frame_matrix(x) @ u
        insertion = np.einsum("i,ijm->jm", v, deta) - np.einsum("jim,i->jm", deta, v)
        dmu = -Z.T @ insertion @ mu
        if forced:
            reaction = acceleration - s.cometric(x) @ metric @ acceleration
            dmu -= Z.T @ metric @ reaction
        return np.concatenate([v, du, dmu])

    return OdeProblem(2 * n, rhs)


def _check_basis(s: SubRiemannianStructure, transport: Q0Transport) -> None:
    n = s.dimension
    for y in transport.trajectory.states:
        x = y[:n]
        full = np.hstack([s.frame_matrix(x), s.complement_jet(x)[0]])
        sigma = np.linalg.svd(full, compute_uv=False)
        if sigma[-1] <= s.rank_tol * sigma[0]:
            raise BasisDegeneracy(f"Frame and complement dependent at {list(x)}")


def _transport(
    s: SubRiemannianStructure,
    G: MetricField,
    traj: NonholonomicTrajectory,
    eta0: np.ndarray,
    forced: bool,
    rtol: float | None,
    atol: float | None,
) -> Q0Transport:
    x0, u0 = traj.state(traj.start)
    Z, _dZ = s.complement_jet(x0)
    y0 = np.concatenate([x0, u0, Z.T @ eta0])
    trajectory = integrate_adaptive(
        _q0_problem(s, G, forced), y0, traj.start, traj.end, rtol, atol
    )
    transport = Q0Transport(s, G, trajectory, forced)
    _check_basis(s, transport)
    return transport


@tracer.wrap()
def tilde_nabla_B_transport(
    s: SubRiemannianStructure,
    G: MetricField,
    traj: NonholonomicTrajectory,
    eta0: Sequence[float],
    rtol: float | None = None,
    atol: float | None = None,
) -> Q0Transport:
    eta0 = np.asarray(eta0, dtype=float)
    s.require_in_annihilator(traj.state(traj.start).x, eta0)
    return _transport(s, G, traj, eta0, True, rtol, atol)


def _constraint_matrix(
    s: SubRiemannianStructure, x: np.ndarray, u: np.ndarray
) -> np.ndarray:
    """Columns X_a and sum_b u^b [X_b, X_a], spanning Q + [cdot, Q]."""
    brackets = geometry_api.frame_brackets(s, x)
    return np.hstack([s.frame_matrix(x), np.einsum("jba,b->ja", brackets, u)])


def _left_null_space(matrix: np.ndarray, rank_tol: float) -> np.ndarray:
    U, sigma, _Vt = np.linalg.svd(matrix, full_matrices=True)
    rank = int(np.sum(sigma > rank_tol * sigma[0])) if sigma[0] > 0 else 0
    return U[:, rank:].T.copy()


def _profile(
    s: SubRiemannianStructure,
    traj: NonholonomicTrajectory,
    times: np.ndarray,
    eta0: np.ndarray,
    etas: np.ndarray,
) -> CandidateProfile:
    pi_b = annihilation = 0.0
    for t, eta in zip(times, etas):
        x, u = traj.state(t)
        annihilation = max(
            annihilation, float(np.abs(eta @ _constraint_matrix(s, x, u)).max())
        )
        velocity = s.frame_matrix(x) @ u
        pi_b = max(pi_b, float(np.abs(geometry_api.pi_B(s, x, velocity, eta)).max()))
    return CandidateProfile(eta0, etas, pi_b, annihilation)


@tracer.wrap()
def compatibility_test(
    s: SubRiemannianStructure,
    G: MetricField,
    traj: NonholonomicTrajectory,
    tol: float | None = None,
    rank_tol: float | None = None,
    samples: int | None = None,
    rtol: float | None = None,
    atol: float | None = None,
) -> CompatibilityReport:
    tol = settings.SUBRIG["CERTIFICATE_TOL"] if tol is None else tol
    rank_tol = settings.SUBRIG["RANK_TOL"] if rank_tol is None else rank_tol
    samples = settings.SUBRIG["CHEBYSHEV_SAMPLES"] if samples is None else samples
    n = s.dimension

    x_a, u_a = traj.state(traj.start)
    annihilator = _left_null_space(_constraint_matrix(s, x_a, u_a), rank_tol)
    if traj.end > traj.start:
        times = extremals_api.chebyshev_times(traj.start, traj.end, samples)
    else:
        times = np.array([traj.start])

    particular = _transport(s, G, traj, np.zeros(n), True, rtol, atol)
    homogeneous = [_transport(s, G, traj, w, False, rtol, atol) for w in annihilator]
    base = np.array([particular.eta(t) for t in times])
    spans = [np.array([h.eta(t) for t in times]) for h in homogeneous]

    def defects(etas: np.ndarray) -> np.ndarray:
        return np.concatenate(
            [eta @ _constraint_matrix(s, *traj.state(t)) for t, eta in zip(times, etas)]
        )

    if spans:
        system = np.column_stack([defects(h) for h in spans])
        weights, *_ = np.linalg.lstsq(system, -defects(base), rcond=None)
    else:
        weights = np.zeros(0)
    best_etas = base + sum((w * h for w, h in zip(weights, spans)), np.zeros_like(base))

    candidates = [_profile(s, traj, times, np.zeros(n), base)]
    candidates.extend(
        _profile(s, traj, times, w, base + h) for w, h in zip(annihilator, spans)
    )
    best = _profile(s, traj, times, annihilator.T @ weights if spans else np.zeros(n), best_etas)
    compatible = best.residual <= tol
    verdict = Verdict.COMPATIBLE if compatible else Verdict.INCOMPATIBLE

    lift = lift_residual = None
    if compatible:
        lift, lift_residual = _cross_check_lift(s, G, traj, times, best_etas, rtol, atol)

    span = tracer.current_span()
    if span:
        span.set_tag("verdict", verdict.value)
        span.set_tag("vacuous", not len(annihilator))
    logger.info(
        "Compatibility test: %s (residual %.3g, %d annihilator directions)",
        verdict.value,
        best.residual,
        len(annihilator),
    )
    return CompatibilityReport(
        trajectory=traj,
        sample_times=times,
        annihilator=annihilator,
        candidates=tuple(candidates),
        best=best,
        weights=weights,
        verdict=verdict,
        vacuous=not len(annihilator),
        tolerance=tol,
        lift=lift,
        lift_residual=lift_residual,
    )


def _cross_check_lift(
    s: SubRiemannianStructure,
    G: MetricField,
    traj: NonholonomicTrajectory,
    times: np.ndarray,
    etas: np.ndarray,
    rtol: float | None,
    atol: float | None,
) -> tuple[np.ndarray, float]:
    """Lift alpha = flat_G(cdot) + eta and compare with the normal extremal through alpha(a)."""
    lift = np.array(
        [G.matrix(traj.state(t).x) @ traj.velocity(t) + eta for t, eta in zip(times, etas)]
    )
    x_a = traj.state(traj.start).x
    curve = extremals_api.normal_extremal(
        s, x_a, lift[0], traj.end - traj.start, rtol, atol
    )
    residual = 0.0
    for t, alpha in zip(times, lift):
        x, p = curve.state(t - traj.start)
        residual = max(
            residual,
            float(np.abs(x - traj.state(t).x).max()),
            float(np.abs(p - alpha).max()),
        )
    return lift, residual
