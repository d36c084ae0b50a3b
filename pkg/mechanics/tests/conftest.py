import pytest

from geometry.fields import VectorField
from geometry.structures import SubRiemannianStructure
from subrig.utils.testing import XYZ


@pytest.fixture
def tilted():
    """Contact distribution whose complement d/dz + x d/dx does not preserve h."""
    return SubRiemannianStructure(
        XYZ,
        [VectorField.parse(XYZ, ["1", "0", "0"]), VectorField.parse(XYZ, ["0", "1", "x"])],
        complement=[VectorField.parse(XYZ, ["x", "0", "1"])],
        name="tilted",
    )
