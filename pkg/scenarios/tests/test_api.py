import csv
import json

import numpy as np
import pytest

from scenarios import api as scenarios_api
from scenarios.api import ScenarioError
from scenarios.builtins import BUILTINS, get_builtin


@pytest.mark.parametrize("name", ["montgomery", "liu-sussmann", "heisenberg"])
def test_load_builtins(name):
    scenario = scenarios_api.load_scenario(name)
    assert scenario.name == name
    structure = scenario.build_structure()
    assert (structure.dimension, structure.rank) == (3, 2)
    assert len(scenario.tasks) == len(BUILTINS[name]["tasks"])


def test_load_from_file(write_scenario):
    path = write_scenario(get_builtin("heisenberg"))
    assert scenarios_api.load_scenario(path) == scenarios_api.load_scenario("heisenberg")
    assert scenarios_api.load_scenario(str(path)).digest == scenarios_api.load_scenario(path).digest


def test_montgomery_domain():
    chart = scenarios_api.load_scenario("montgomery").chart
    assert chart.domain[0] == (0.01, 10.0)
    assert chart.domain[1] == (float("-inf"), float("inf"))


def _path_of(data):
    with pytest.raises(ScenarioError) as excinfo:
        scenarios_api.load_scenario(data)
    return excinfo.value.path


def test_missing_frame():
    data = get_builtin("heisenberg")
    del data["frame"]
    assert _path_of(data) == "frame"


def test_unknown_field():
    data = get_builtin("heisenberg")
    data["colour"] = "blue"
    assert _path_of(data) == "colour"


def test_expression_error_location():
    data = get_builtin("heisenberg")
    data["frame"][1][2] = "x/2 +"
    with pytest.raises(ScenarioError) as excinfo:
        scenarios_api.load_scenario(data)
    assert excinfo.value.path == "frame.1.2"


def test_unknown_coordinate():
    data = get_builtin("heisenberg")
    data["frame"][0][2] = "-w/2"
    assert _path_of(data) == "frame.0.2"


def test_frame_arity():
    data = get_builtin("heisenberg")
    data["frame"][0] = ["1", "0"]
    assert _path_of(data) == "frame.0"


def test_unknown_task_kind():
    data = get_builtin("heisenberg")
    data["tasks"][0]["kind"] = "teleport"
    assert _path_of(data) == "tasks.0.kind"


def test_task_vector_length():
    data = get_builtin("heisenberg")
    data["tasks"][1]["u0"] = [1, 0, 0]
    assert _path_of(data) == "tasks.1.u0"


def test_task_missing_parameter():
    data = get_builtin("heisenberg")
    del data["tasks"][0]["T"]
    assert _path_of(data) == "tasks.0.T"


def test_segment_coefficient_count():
    data = get_builtin("montgomery")
    data["tasks"][0]["segments"][0]["coefficients"] = ["1"]
    assert _path_of(data) == "tasks.0.segments.0.coefficients"


def test_duplicate_task_names():
    data = get_builtin("heisenberg")
    data["tasks"][1]["name"] = "geodesic"
    assert _path_of(data) == "tasks.1.name"


def test_bad_tolerance():
    data = get_builtin("heisenberg")
    data["tolerances"] = {"rtol": -1}
    assert _path_of(data) == "tolerances.rtol"


def test_malformed_json(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{")
    with pytest.raises(ScenarioError):
        scenarios_api.load_scenario(path)
    with pytest.raises(ScenarioError):
        scenarios_api.load_scenario(tmp_path / "missing.json")


def test_effective_tolerances(settings):
    data = get_builtin("heisenberg")
    data["tolerances"] = {"rtol": 1e-9, "rank_tol": 1e-7}
    scenario = scenarios_api.load_scenario(data)
    tolerances = scenarios_api.effective_tolerances(scenario, {"rank_tol": 1e-6, "atol": None})
    assert tolerances["rtol"] == 1e-9
    assert tolerances["rank_tol"] == 1e-6
    assert tolerances["atol"] == settings.SUBRIG["ATOL"]


def _read_csv(path):
    with path.open() as f:
        rows = list(csv.reader(f))
    return rows[0], np.array(rows[1:], dtype=float)


def test_run_heisenberg(tmp_path):
    bundle = scenarios_api.run(scenarios_api.load_scenario("heisenberg"), tmp_path)
    assert bundle.exit_code == 0
    header, rows = _read_csv(tmp_path / "geodesic.csv")
    assert header == ["t", "x", "y", "z", "p_x", "p_y", "p_z"]
    np.testing.assert_allclose(rows[-1], [1, 1, 0, 0, 1, 0, 0], atol=1e-8)
    header, rows = _read_csv(tmp_path / "nonholonomic.csv")
    assert header == ["t", "x", "y", "z", "u_1", "u_2"]
    np.testing.assert_allclose(rows[-1], [1, 1, 0, 0, 1, 0], atol=1e-8)
    filtration = json.loads((tmp_path / "filtration.json").read_text())
    assert filtration == {"dims": [2, 3], "bracket_generating": True}
    compatibility = json.loads((tmp_path / "compatibility.json").read_text())
    assert compatibility["verdict"] == "compatible"
    assert compatibility["vacuous"] is True
    assert (tmp_path / "compatibility-eta.csv").exists()


def test_run_montgomery(tmp_path):
    bundle = scenarios_api.run(scenarios_api.load_scenario("montgomery"), tmp_path)
    assert bundle.exit_code == 0
    helix = json.loads((tmp_path / "helix.json").read_text())
    assert helix["verdict"] == "abnormal"
    assert helix["rank"] == 2
    assert helix["residual_max"] <= 1e-7
    radial = json.loads((tmp_path / "radial.json").read_text())
    assert radial["verdict"] == "not_abnormal"
    assert radial["residual_max"] is None
    index = json.loads((tmp_path / "bundle.json").read_text())
    assert index["exit_code"] == 0
    assert index["provenance"]["scenario"] == "montgomery"
    assert [task["name"] for task in index["tasks"]] == ["helix", "radial", "radial-geodesic"]


def test_run_liu_sussmann_verdicts():
    bundle = scenarios_api.run(scenarios_api.load_scenario("liu-sussmann"))
    verdicts = {output.name: output.verdict for output in bundle.outputs}
    assert verdicts == {
        "line-x0": "abnormal",
        "line-x1": "not_abnormal",
        "line-x2": "abnormal",
        "filtration": None,
    }
    filtration = bundle.outputs[-1].documents["filtration"]
    assert filtration["dims"] == [2, 2, 3]


def test_failed_task_does_not_stop_others(failing_scenario):
    bundle = scenarios_api.run(scenarios_api.load_scenario(failing_scenario))
    helix, escape = bundle.outputs
    assert helix.status == "ok"
    assert escape.status == "failed"
    assert "IntegrationError" in escape.error
    assert not escape.tables
    assert bundle.exit_code == 1


def test_invalid_structure_fails_every_task():
    data = get_builtin("heisenberg")
    data["frame"][1] = ["2", "0", "-y"]
    bundle = scenarios_api.run(scenarios_api.load_scenario(data))
    assert all(output.status == "failed" for output in bundle.outputs)
    assert bundle.exit_code == 1


def test_indeterminate_exit_code(radial_scenario):
    bundle = scenarios_api.run(
        scenarios_api.load_scenario(radial_scenario), overrides={"rank_tol": 0.005}
    )
    assert bundle.outputs[0].verdict == "indeterminate"
    assert bundle.exit_code == 2


def test_empty_task_list(tmp_path):
    data = get_builtin("heisenberg")
    data["tasks"] = []
    bundle = scenarios_api.run(scenarios_api.load_scenario(data), tmp_path)
    assert bundle.exit_code == 0
    assert json.loads((tmp_path / "bundle.json").read_text())["tasks"] == []


def test_runs_are_deterministic(tmp_path):
    scenario = scenarios_api.load_scenario("liu-sussmann")
    scenarios_api.run(scenario, tmp_path / "first")
    scenarios_api.run(scenario, tmp_path / "second", parallel=True)
    names = sorted(p.name for p in (tmp_path / "first").iterdir() if p.name != "timings.json")
    assert names == sorted(
        p.name for p in (tmp_path / "second").iterdir() if p.name != "timings.json"
    )
    for name in names:
        assert (tmp_path / "first" / name).read_bytes() == (
            tmp_path / "second" / name
        ).read_bytes()


def test_emit_report_json_only(tmp_path):
    bundle = scenarios_api.run(scenarios_api.load_scenario("heisenberg"))
    written = scenarios_api.emit_report(bundle, tmp_path, format="json")
    assert written
    assert all(path.suffix == ".json" for path in written)
    assert not list(tmp_path.glob("*.csv"))


def test_csv_precision(tmp_path):
    data = get_builtin("heisenberg")
    data["tasks"] = [
        {"name": "spiral", "kind": "geodesic", "x0": [0, 0, 0], "p0": [0.3, 0.8, 1.2], "T": 1}
    ]
    bundle = scenarios_api.run(scenarios_api.load_scenario(data), tmp_path)
    _header, rows = _read_csv(tmp_path / "spiral.csv")
    np.testing.assert_array_equal(rows, bundle.outputs[0].tables["spiral"].rows)
