import json

import pytest

from scenarios.builtins import get_builtin


@pytest.fixture
def montgomery_data():
    return get_builtin("montgomery")


@pytest.fixture
def write_scenario(tmp_path):
    def write(data, name="scenario.json"):
        path = tmp_path / name
        path.write_text(json.dumps(data))
        return path

    return write


@pytest.fixture
def failing_scenario(montgomery_data):
    montgomery_data["tasks"] = [
        montgomery_data["tasks"][0],
        {
            "name": "escape",
            "kind": "geodesic",
            "x0": [0.02, 0, 0],
            "p0": [-1, 0, 0],
            "T": 1,
        },
    ]
    return montgomery_data


@pytest.fixture
def radial_scenario(montgomery_data):
    montgomery_data["tasks"] = [montgomery_data["tasks"][1]]
    return montgomery_data
