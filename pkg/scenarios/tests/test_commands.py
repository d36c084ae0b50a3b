import json
import sys
from io import StringIO

import pytest
from django.core.management import call_command
from django.core.management.base import CommandError

from scenarios import api as scenarios_api
from scenarios.builtins import BUILTINS, get_builtin
from subrig.__main__ import main


def _call(*args, **options):
    stdout = StringIO()
    call_command(*args, stdout=stdout, **options)
    return stdout.getvalue()


def test_examples():
    lines = _call("examples").splitlines()
    assert [line.split(":")[0] for line in lines] == list(BUILTINS)


def test_export_builtin_round_trip(tmp_path):
    path = tmp_path / "montgomery.json"
    _call("export_builtin", "montgomery", out=str(path))
    assert json.loads(path.read_text()) == get_builtin("montgomery")
    assert scenarios_api.load_scenario(path) == scenarios_api.load_scenario("montgomery")


def test_export_builtin_stdout():
    assert json.loads(_call("export_builtin", "heisenberg")) == get_builtin("heisenberg")


def test_export_unknown_builtin():
    with pytest.raises(CommandError) as excinfo:
        _call("export_builtin", "sphere")
    assert excinfo.value.returncode == 1


def test_validate():
    assert _call("validate", "liu-sussmann").strip() == "OK liu-sussmann: n=3, k=2, 4 task(s)"


def test_validate_invalid_file(write_scenario):
    data = get_builtin("heisenberg")
    data["frame"][0][1] = "sin("
    with pytest.raises(CommandError) as excinfo:
        _call("validate", str(write_scenario(data)))
    assert excinfo.value.returncode == 1
    assert "frame.0.1" in str(excinfo.value)


def test_validate_degenerate_structure(write_scenario):
    data = get_builtin("heisenberg")
    data["frame"][1] = ["2", "0", "-y"]
    with pytest.raises(CommandError) as excinfo:
        _call("validate", str(write_scenario(data)))
    assert "Invalid structure" in str(excinfo.value)


def test_run(tmp_path):
    output = _call("run", "heisenberg", out=str(tmp_path))
    assert "compatibility (compatibility): ok, compatible" in output
    index = json.loads((tmp_path / "bundle.json").read_text())
    assert index["exit_code"] == 0
    assert {task["status"] for task in index["tasks"]} == {"ok"}


def test_run_failure(tmp_path, failing_scenario, write_scenario):
    with pytest.raises(CommandError) as excinfo:
        _call("run", str(write_scenario(failing_scenario)), out=str(tmp_path / "out"))
    assert excinfo.value.returncode == 1
    assert (tmp_path / "out" / "helix.json").exists()
    assert not (tmp_path / "out" / "escape.csv").exists()


def test_run_indeterminate(tmp_path, radial_scenario, write_scenario):
    with pytest.raises(CommandError) as excinfo:
        _call(
            "run",
            str(write_scenario(radial_scenario)),
            out=str(tmp_path / "out"),
            rank_tol=0.005,
        )
    assert excinfo.value.returncode == 2
    index = json.loads((tmp_path / "out" / "bundle.json").read_text())
    assert index["provenance"]["tolerances"]["rank_tol"] == 0.005


def test_run_exploratory(tmp_path, settings):
    _call("run", "heisenberg", out=str(tmp_path), exploratory=True, atol=1e-10)
    tolerances = json.loads((tmp_path / "bundle.json").read_text())["provenance"][
        "tolerances"
    ]
    assert tolerances["rtol"] == settings.SUBRIG["EXPLORATORY_RTOL"]
    assert tolerances["atol"] == 1e-10


def test_run_invalid_scenario(tmp_path):
    with pytest.raises(CommandError) as excinfo:
        _call("run", str(tmp_path / "missing.json"), out=str(tmp_path))
    assert excinfo.value.returncode == 1


def test_main_accepts_hyphenated_subcommand(monkeypatch, capsys):
    monkeypatch.setattr(sys, "argv", ["subrig", "export-builtin", "liu-sussmann"])
    main()
    assert json.loads(capsys.readouterr().out) == get_builtin("liu-sussmann")
