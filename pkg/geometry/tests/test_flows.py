from unittest import mock

import numpy as np
import pytest

from geometry.fields import VectorField
from geometry.flows import flow_with_variational
from subrig.utils.expr import Chart
from subrig.utils.integrate import IntegrationError
from subrig.utils.testing import CYLINDER

XY = Chart(("x", "y"))


def test_linear_field_matches_exponential():
    shear = VectorField.parse(XY, ["y", "0"])
    flow = flow_with_variational(shear, [0.5, 2.0], 0.0, 1.5)
    for t in (0.0, 0.4, 1.5):
        np.testing.assert_allclose(flow.jacobian(t), [[1, t], [0, 1]], atol=1e-8)
        np.testing.assert_allclose(flow.point(t), [0.5 + 2 * t, 2.0], atol=1e-8)
    assert not flow.singular


def test_zero_field():
    flow = flow_with_variational(VectorField.zero(XY), [1.0, -1.0], 0.0, 1.0)
    np.testing.assert_allclose(flow.point(1.0), [1, -1])
    np.testing.assert_allclose(flow.jacobian(1.0), np.eye(2))


def test_montgomery_radial_field(montgomery):
    flow = flow_with_variational(montgomery.frame[0], [1.0, 0.3, -0.2], 0.0, 2.0)
    np.testing.assert_allclose(flow.point(2.0), [3.0, 0.3, -0.2], atol=1e-10)
    np.testing.assert_allclose(flow.jacobian(2.0), np.eye(3), atol=1e-10)


def test_empty_interval():
    field = VectorField.parse(XY, ["sin(y)", "x"])
    flow = flow_with_variational(field, [0.2, 0.1], 0.5, 0.5)
    np.testing.assert_allclose(flow.point(0.5), [0.2, 0.1])
    np.testing.assert_allclose(flow.jacobian(0.5), np.eye(2))


def test_jacobian_matches_finite_differences():
    field = VectorField.parse(XY, ["sin(y)", "x - y^2/2"])
    x0 = np.array([0.3, 0.2])
    flow = flow_with_variational(field, x0, 0.0, 1.0, 1e-13, 1e-14)
    h = 1e-6
    for i, e in enumerate(np.eye(2)):
        plus = flow_with_variational(field, x0 + h * e, 0.0, 1.0, 1e-13, 1e-14)
        minus = flow_with_variational(field, x0 - h * e, 0.0, 1.0, 1e-13, 1e-14)
        column = (plus.point(1.0) - minus.point(1.0)) / (2 * h)
        np.testing.assert_allclose(flow.jacobian(1.0)[:, i], column, rtol=1e-5, atol=1e-6)


def test_pullback_inverts_pushforward(liu_sussmann):
    flow = flow_with_variational(liu_sussmann.frame[1], [0.5, 0, 0], 0.0, 1.0)
    v = np.array([1.0, 0.5, -2.0])
    for t in (0.25, 1.0):
        np.testing.assert_allclose(
            flow.pullback_vector(t, flow.pushforward_vector(t, v)), v, atol=1e-10
        )


def test_flow_leaving_domain():
    field = VectorField.parse(CYLINDER, ["-1", "0", "0"])
    with pytest.raises(IntegrationError):
        flow_with_variational(field, [0.5, 0, 0], 0.0, 1.0)


def test_singular_jacobian_is_reported():
    contraction = VectorField.parse(XY, ["-40*x", "0"])
    with mock.patch("geometry.flows.sentry_sdk.capture_message") as capture:
        flow = flow_with_variational(contraction, [1.0, 0.0], 0.0, 1.0)
    assert flow.singular
    capture.assert_called_once()
