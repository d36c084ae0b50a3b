import numpy as np
import pytest

from geometry import api as geometry_api
from geometry.structures import NotInDistribution
from mechanics import api as mechanics_api
from mechanics.reports import Verdict
from subrig.utils.testing import sample_points


def test_heisenberg_axis(heisenberg, metric_of):
    G = metric_of(heisenberg)
    motion = mechanics_api.nonholonomic_trajectory(heisenberg, G, [0, 0, 0], [1, 0], 1.0)
    for t in (0.0, 0.5, 1.0):
        x, u = motion.state(t)
        np.testing.assert_allclose(x, [t, 0, 0], atol=1e-8)
        np.testing.assert_allclose(u, [1, 0], atol=1e-8)


def test_rest(montgomery, metric_of):
    G = metric_of(montgomery)
    motion = mechanics_api.nonholonomic_trajectory(montgomery, G, [1, 0, 0], [0, 0], 1.0)
    np.testing.assert_allclose(motion.trajectory.final, [1, 0, 0, 0, 0], atol=1e-14)


@pytest.mark.parametrize(
    "name, x0, u0, T",
    [
        ("heisenberg", [0, 0, 0], [0.6, 0.8], 3.0),
        ("montgomery", [1, 0, 0], [0.3, 0.4], 1.0),
        ("liu-sussmann", [0.2, 0, 0], [0.5, -0.5], 2.0),
    ],
)
def test_energy_conserved(examples, metric_of, name, x0, u0, T):
    s = examples[name]
    motion = mechanics_api.nonholonomic_trajectory(s, metric_of(s), x0, u0, T)
    energies = np.array([motion.energy(t) for t in motion.times])
    assert np.max(np.abs(energies - energies[0])) <= 1e-8 * energies[0]


def test_velocity_stays_in_distribution(liu_sussmann, metric_of):
    motion = mechanics_api.nonholonomic_trajectory(
        liu_sussmann, metric_of(liu_sussmann), [0.2, 0, 0], [0.5, -0.5], 2.0
    )
    for t in np.linspace(0, 2, 7):
        x = motion.state(t).x
        liu_sussmann.require_in_distribution(x, motion.velocity(t))


def test_full_rank_reduces_to_riemannian_geodesic(full_rank, metric_of):
    G = metric_of(full_rank)
    x0, u0 = np.array([0.2, -0.1]), np.array([0.7, 0.4])
    motion = mechanics_api.nonholonomic_trajectory(full_rank, G, x0, u0, 1.5)
    geodesic = geometry_api.riemannian_geodesic(
        G, x0, full_rank.frame_matrix(x0) @ u0, 1.5
    )
    for t in np.linspace(0, 1.5, 7):
        np.testing.assert_allclose(motion.state(t).x, geodesic.at(t)[:2], atol=1e-8)


def test_nh_derivative_heisenberg_frame(heisenberg, metric_of):
    G = metric_of(heisenberg)
    for x in sample_points(heisenberg, 8):
        F = heisenberg.frame_matrix(x)
        for a in range(2):
            for b in range(2):
                derivative = mechanics_api.nh_covariant_derivative(
                    heisenberg, G, x, F[:, a], np.eye(2)[b]
                )
                assert np.abs(derivative).max() < 1e-12


def test_nh_derivative_flat(plane, metric_of):
    G = metric_of(plane)
    derivative = mechanics_api.nh_covariant_derivative(
        plane, G, [0.3, 0.2, 0.1], [1, 2, 0], [0.5, -1]
    )
    np.testing.assert_array_equal(derivative, 0)


def test_nh_derivative_torsion_is_projected_bracket(examples, metric_of):
    for s in examples.values():
        G = metric_of(s)
        for x in sample_points(s, 8, seed=4):
            F = s.frame_matrix(x)
            pi = geometry_api.projections(G, s, x).pi
            brackets = geometry_api.frame_brackets(s, x)
            e = np.eye(s.rank)
            torsion = mechanics_api.nh_covariant_derivative(
                s, G, x, F[:, 0], e[1]
            ) - mechanics_api.nh_covariant_derivative(s, G, x, F[:, 1], e[0])
            np.testing.assert_allclose(torsion, pi @ brackets[:, 0, 1], atol=1e-9)


def test_nh_derivative_metric(examples, metric_of):
    for s in examples.values():
        G = metric_of(s)
        for x in sample_points(s, 8, seed=5):
            u = s.frame_matrix(x) @ np.array([0.7, -0.4])
            coefficients = np.array(
                [
                    s.frame_coefficients(
                        x, mechanics_api.nh_covariant_derivative(s, G, x, u, e)
                    )[0]
                    for e in np.eye(s.rank)
                ]
            )
            np.testing.assert_allclose(coefficients, -coefficients.T, atol=1e-9)


def test_levi_civita_decomposition(examples, metric_of):
    for s in examples.values():
        G = metric_of(s)
        for x in sample_points(s, 4, seed=6):
            c = np.array([0.3, 1.1])
            v = s.frame_matrix(x) @ c
            np.testing.assert_allclose(
                geometry_api.covariant_derivative(G, s, x, v, c),
                mechanics_api.nh_covariant_derivative(s, G, x, v, c)
                + geometry_api.pi_G(G, s, x, v, v),
                atol=1e-10,
            )


def test_nh_derivative_requires_q(heisenberg, metric_of):
    with pytest.raises(NotInDistribution):
        mechanics_api.nh_covariant_derivative(
            heisenberg, metric_of(heisenberg), [0, 0, 0], [0, 0, 1], [1, 0]
        )


def test_transport_zero_on_heisenberg_axis(heisenberg, metric_of):
    G = metric_of(heisenberg)
    motion = mechanics_api.nonholonomic_trajectory(heisenberg, G, [0, 0, 0], [1, 0], 1.0)
    transport = mechanics_api.tilde_nabla_B_transport(heisenberg, G, motion, [0, 0, 0])
    for t in (0.0, 0.5, 1.0):
        np.testing.assert_allclose(transport.eta(t), 0, atol=1e-10)


def test_transport_involutive(plane, metric_of):
    G = metric_of(plane)
    motion = mechanics_api.nonholonomic_trajectory(plane, G, [0, 0, 0], [0.5, 0.2], 2.0)
    transport = mechanics_api.tilde_nabla_B_transport(plane, G, motion, [0, 0, 1.5])
    for t in np.linspace(0, 2, 5):
        eta = transport.eta(t)
        np.testing.assert_allclose(eta, [0, 0, 1.5], atol=1e-10)
        assert np.abs(eta @ plane.frame_matrix(transport.point(t))).max() < 1e-9


def test_transport_requires_annihilator(heisenberg, metric_of):
    G = metric_of(heisenberg)
    motion = mechanics_api.nonholonomic_trajectory(heisenberg, G, [0, 0, 0], [1, 0], 1.0)
    with pytest.raises(NotInDistribution):
        mechanics_api.tilde_nabla_B_transport(heisenberg, G, motion, [1, 0, 0])


def test_heisenberg_axis_is_compatible(heisenberg, metric_of):
    G = metric_of(heisenberg)
    motion = mechanics_api.nonholonomic_trajectory(heisenberg, G, [0, 0, 0], [1, 0], 1.0)
    report = mechanics_api.compatibility_test(heisenberg, G, motion)
    assert report.verdict == Verdict.COMPATIBLE
    assert report.vacuous
    assert len(report.candidates) == 1
    assert report.lift_residual <= 1e-7
    np.testing.assert_allclose(report.best.etas, 0, atol=1e-10)


def test_full_rank_is_vacuously_compatible(full_rank, metric_of):
    G = metric_of(full_rank)
    motion = mechanics_api.nonholonomic_trajectory(full_rank, G, [0.2, -0.1], [0.7, 0.4], 1.0)
    report = mechanics_api.compatibility_test(full_rank, G, motion)
    assert report.verdict == Verdict.COMPATIBLE
    assert report.vacuous
    assert report.lift_residual <= 1e-7


def test_montgomery_radial_is_compatible(montgomery, metric_of):
    G = metric_of(montgomery)
    motion = mechanics_api.nonholonomic_trajectory(montgomery, G, [1, 0, 0], [1, 0], 1.0)
    report = mechanics_api.compatibility_test(montgomery, G, motion, samples=12)
    assert report.verdict == Verdict.COMPATIBLE
    assert not report.vacuous
    assert len(report.annihilator) == 1
    assert len(report.candidates) == 2
    np.testing.assert_allclose(report.weights, 0, atol=1e-8)
    assert report.lift_residual <= 1e-7
    summary = report.as_dict()
    assert summary["verdict"] == "compatible"
    assert summary["vacuous"] is False
    assert len(summary["candidates"]) == 2


def test_reaction_force_makes_motion_incompatible(tilted, metric_of):
    G = metric_of(tilted)
    motion = mechanics_api.nonholonomic_trajectory(tilted, G, [0, 0, 0], [1, 0], 1.0)
    x = motion.state(0.0).x
    reaction = geometry_api.pi_G(G, tilted, x, motion.velocity(0.0), motion.velocity(0.0))
    assert np.abs(reaction).max() > 0.5
    report = mechanics_api.compatibility_test(tilted, G, motion, samples=12)
    assert report.verdict == Verdict.INCOMPATIBLE
    assert report.vacuous
    assert len(report.candidates) == 1
    assert report.best.annihilation_residual > 0.1
    assert report.lift is None
    assert report.lift_residual is None
    summary = report.as_dict()
    assert summary["verdict"] == "incompatible"
    assert summary["lift_residual"] is None
    assert summary["weights"] == []
    assert summary["annihilator"] == []
    assert len(summary["candidates"]) == 1


def test_bott_operator_decomposition(examples, tilted, metric_of):
    for s in [*examples.values(), tilted]:
        G = metric_of(s)
        for x in sample_points(s, 8, seed=7):
            v = s.frame_matrix(x) @ np.array([0.7, -0.4])
            eta = 1.3 * geometry_api.q0_basis(G, x)[0][:, 0]
            bott = 1.3 * geometry_api.bott_derivative(G, x, v, 0)
            tau_perp = geometry_api.projections(G, s, x).tau_perp
            np.testing.assert_allclose(
                bott, tau_perp @ bott + geometry_api.pi_B(s, x, v, eta), atol=1e-9
            )


def test_annihilator_coefficients_solve_transport_equation(examples, tilted, metric_of):
    for s in [*examples.values(), tilted]:
        G = metric_of(s)
        n, k = s.dimension, s.rank
        problem = mechanics_api._q0_problem(s, G, True)
        for x in sample_points(s, 6, seed=9):
            u, mu = np.array([0.6, -0.8]), np.array([0.9])
            dmu = problem.rhs(np.concatenate([x, u, mu]), 0.0)[n + k :]
            v = s.frame_matrix(x) @ u
            basis, _deta = geometry_api.q0_basis(G, x)
            bott = mu[0] * geometry_api.bott_derivative(G, x, v, 0)
            transported = basis @ dmu + geometry_api.projections(G, s, x).tau_perp @ bott
            forcing = -G.matrix(x) @ geometry_api.pi_G(G, s, x, v, v)
            np.testing.assert_allclose(transported, forcing, atol=1e-9)
