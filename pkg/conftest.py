import pytest

from geometry import api as geometry_api
from geometry.fields import OneFormField, VectorField
from geometry.structures import SubRiemannianStructure
from scenarios.builtins import MONTGOMERY_PROFILE
from subrig.utils.expr import Chart
from subrig.utils.testing import CYLINDER, XYZ


def _fields(chart: Chart, rows: list[list[str]]) -> list[VectorField]:
    return [VectorField.parse(chart, row) for row in rows]


@pytest.fixture
def heisenberg():
    return SubRiemannianStructure(
        XYZ,
        _fields(XYZ, [["1", "0", "-y/2"], ["0", "1", "x/2"]]),
        complement=[VectorField.coordinate(XYZ, 2)],
        name="heisenberg",
    )


@pytest.fixture
def montgomery():
    return SubRiemannianStructure(
        CYLINDER,
        _fields(CYLINDER, [["1", "0", "0"], ["0", "1", f"-({MONTGOMERY_PROFILE})"]]),
        complement=[VectorField.coordinate(CYLINDER, 2)],
        name="montgomery",
    )


@pytest.fixture
def liu_sussmann():
    return SubRiemannianStructure(
        XYZ,
        _fields(XYZ, [["1", "0", "0"], ["0", "1-x", "x^2"]]),
        complement=[VectorField.coordinate(XYZ, 2)],
        name="liu-sussmann",
    )


@pytest.fixture
def plane():
    """Involutive control: Q = span{d/dx, d/dy}."""
    return SubRiemannianStructure(
        XYZ,
        [VectorField.coordinate(XYZ, 0), VectorField.coordinate(XYZ, 1)],
        complement=[VectorField.coordinate(XYZ, 2)],
        name="plane",
    )


@pytest.fixture
def full_rank():
    chart = Chart(("x", "y"))
    return SubRiemannianStructure(
        chart, _fields(chart, [["1", "0"], ["0", "1 + x^2"]]), name="full-rank"
    )


@pytest.fixture
def q0_generators():
    """A symbolic section spanning Q^0 for each example."""
    return {
        "heisenberg": OneFormField.parse(XYZ, ["y/2", "-x/2", "1"]),
        "montgomery": OneFormField.parse(CYLINDER, ["0", MONTGOMERY_PROFILE, "1"]),
        "liu-sussmann": OneFormField.parse(XYZ, ["0", "x^2", "-(1-x)"]),
        "plane": OneFormField.parse(XYZ, ["0", "0", "1"]),
    }


@pytest.fixture
def examples(heisenberg, montgomery, liu_sussmann):
    return {s.name: s for s in (heisenberg, montgomery, liu_sussmann)}


@pytest.fixture
def metric_of():
    return geometry_api.riemannian_extension
