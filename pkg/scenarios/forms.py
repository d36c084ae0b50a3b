import math
from numbers import Real
from typing import Any, NamedTuple

from django import forms
from django.core.exceptions import ValidationError

from extremals.curves import CurveSpecError, Segment
from geometry.fields import VectorField
from subrig.utils import expr
from subrig.utils.expr import Chart


class Task(NamedTuple):
    name: str
    kind: str
    params: dict[str, Any]


def _invalid(path: str, message: str) -> ValidationError:
    # Messages are %-formatted with params.
    return ValidationError(
        message.replace("%", "%%"), code="invalid", params={"path": path}
    )


def _number(value: Any, path: str, *, minimum: float | None = None) -> float:
    if isinstance(value, bool) or not isinstance(value, Real) or not math.isfinite(value):
        raise _invalid(path, "Expected a finite number")
    if minimum is not None and value < minimum:
        raise _invalid(path, f"Must be at least {minimum}")
    return float(value)


def _count(value: Any, path: str, minimum: int) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or value < minimum:
        raise _invalid(path, f"Expected an integer of at least {minimum}")
    return value


def _vector(value: Any, path: str, length: int | None = None) -> tuple[float, ...]:
    if not isinstance(value, list):
        raise _invalid(path, "Expected a list of numbers")
    if length is not None and len(value) != length:
        raise _invalid(path, f"Expected {length} entries, got {len(value)}")
    return tuple(_number(v, f"{path}.{i}") for i, v in enumerate(value))


def _segment(value: Any, path: str) -> dict:
    if not isinstance(value, dict):
        raise _invalid(path, "Expected an object with coefficients, start and end")
    for key in ("coefficients", "start", "end"):
        if key not in value:
            raise _invalid(f"{path}.{key}", "This field is required.")
    if not isinstance(value["coefficients"], list) or not all(
        isinstance(c, str) for c in value["coefficients"]
    ):
        raise _invalid(f"{path}.coefficients", "Expected a list of expressions")
    return {
        "coefficients": value["coefficients"],
        "start": _number(value["start"], f"{path}.start"),
        "end": _number(value["end"], f"{path}.end"),
    }


def _segments(value: Any, path: str) -> list[dict]:
    if not isinstance(value, list) or not value:
        raise _invalid(path, "Expected a non-empty list of segments")
    return [_segment(v, f"{path}.{i}") for i, v in enumerate(value)]


# kind -> parameter -> (validator, required)
TASK_KINDS = {
    "geodesic": {"x0": (_vector, True), "p0": (_vector, True), "T": ("time", True)},
    "riemannian_geodesic": {
        "x0": (_vector, True),
        "v0": (_vector, True),
        "T": ("time", True),
    },
    "abnormal_test": {
        "x0": (_vector, True),
        "segments": (_segments, True),
        "samples": ("samples", False),
    },
    "pullback_span": {
        "x0": (_vector, True),
        "segments": (_segments, True),
        "samples": ("samples", False),
    },
    "coadjoint_transport": {
        "x0": (_vector, True),
        "segment": (_segment, True),
        "eta0": (_vector, True),
    },
    "variation_span": {
        "x0": (_vector, True),
        "segment": (_segment, True),
        "samples": ("samples", False),
    },
    "nonholonomic": {"x0": (_vector, True), "u0": (_vector, True), "T": ("time", True)},
    "compatibility": {
        "x0": (_vector, True),
        "u0": (_vector, True),
        "T": ("time", True),
    },
    "bracket_filtration": {"x": (_vector, True), "depth": ("depth", True)},
}

TOLERANCE_KEYS = ("rtol", "atol", "rank_tol", "certificate_tol")


def _task(value: Any, index: int) -> Task:
    path = f"tasks.{index}"
    if not isinstance(value, dict):
        raise _invalid(path, "Expected an object")
    kind = value.get("kind")
    if kind not in TASK_KINDS:
        raise _invalid(f"{path}.kind", f"Unknown task kind {kind!r}")
    name = value.get("name", f"{index:02d}-{kind}")
    if not isinstance(name, str) or not name or "/" in name:
        raise _invalid(f"{path}.name", "Expected a plain file-safe name")
    spec = TASK_KINDS[kind]
    unknown = set(value) - set(spec) - {"kind", "name"}
    if unknown:
        raise _invalid(f"{path}.{sorted(unknown)[0]}", "Unknown task parameter")
    params = {}
    for key, (validator, required) in spec.items():
        key_path = f"{path}.{key}"
        if key not in value:
            if required:
                raise _invalid(key_path, "This field is required.")
            continue
        if validator == "time":
            params[key] = _number(value[key], key_path, minimum=0)
        elif validator == "samples":
            params[key] = _count(value[key], key_path, 2)
        elif validator == "depth":
            params[key] = _count(value[key], key_path, 1)
        else:
            params[key] = validator(value[key], key_path)
    return Task(name, kind, params)


class ScenarioForm(forms.Form):
    name = forms.CharField(required=False)
    description = forms.CharField(required=False)
    chart = forms.JSONField()
    frame = forms.JSONField()
    metric = forms.JSONField(required=False)
    complement = forms.JSONField(required=False)
    probes = forms.JSONField(required=False)
    anchor = forms.JSONField(required=False)
    tolerances = forms.JSONField(required=False)
    tasks = forms.JSONField(required=False)

    def clean_chart(self) -> Chart:
        value = self.cleaned_data["chart"]
        if not isinstance(value, dict):
            raise _invalid("chart", "Expected an object with names and domain")
        names = value.get("names")
        if not isinstance(names, list) or not all(isinstance(n, str) for n in names):
            raise _invalid("chart.names", "Expected a list of coordinate names")
        domain = value.get("domain")
        if domain is not None:
            if not isinstance(domain, list) or len(domain) != len(names):
                raise _invalid("chart.domain", "Expected one interval per coordinate")
            intervals = []
            for i, interval in enumerate(domain):
                if not isinstance(interval, list) or len(interval) != 2:
                    raise _invalid(f"chart.domain.{i}", "Expected [low, high]")
                lo, hi = interval
                intervals.append(
                    (
                        -math.inf if lo is None else _number(lo, f"chart.domain.{i}.0"),
                        math.inf if hi is None else _number(hi, f"chart.domain.{i}.1"),
                    )
                )
            domain = tuple(intervals)
        try:
            return Chart(tuple(names), domain)
        except ValueError as exc:
            raise _invalid("chart", str(exc))

    def clean_tolerances(self) -> dict[str, float]:
        value = self.cleaned_data["tolerances"] or {}
        if not isinstance(value, dict):
            raise _invalid("tolerances", "Expected an object")
        tolerances = {}
        for key, tol in value.items():
            if key not in TOLERANCE_KEYS:
                raise _invalid(f"tolerances.{key}", "Unknown tolerance")
            tolerances[key] = _number(tol, f"tolerances.{key}")
            if tolerances[key] <= 0:
                raise _invalid(f"tolerances.{key}", "Must be positive")
        return tolerances

    def clean_tasks(self) -> list[Task]:
        value = self.cleaned_data["tasks"] or []
        if not isinstance(value, list):
            raise _invalid("tasks", "Expected a list of tasks")
        tasks = [_task(task, i) for i, task in enumerate(value)]
        names = [task.name for task in tasks]
        for i, name in enumerate(names):
            if name in names[:i]:
                raise _invalid(f"tasks.{i}.name", f"Duplicate task name {name!r}")
        return tasks

    def clean(self) -> dict[str, Any]:
        cleaned_data = super().clean()
        chart = cleaned_data.get("chart")
        if chart is None:
            return cleaned_data
        n = chart.dimension
        for field_name in ("frame", "complement"):
            if field_name in cleaned_data:
                self._clean_fields_of(cleaned_data, field_name, chart)
        frame = cleaned_data.get("frame")
        if frame is not None and cleaned_data.get("metric") is not None:
            self._clean_metric(cleaned_data, chart, len(frame))
        try:
            if cleaned_data.get("probes") is not None:
                probes = cleaned_data["probes"]
                if not isinstance(probes, list) or not probes:
                    raise _invalid("probes", "Expected a non-empty list of points")
                cleaned_data["probes"] = [
                    _vector(p, f"probes.{i}", n) for i, p in enumerate(probes)
                ]
            if cleaned_data.get("anchor") is not None:
                cleaned_data["anchor"] = _vector(cleaned_data["anchor"], "anchor", n)
        except ValidationError as error:
            self.add_error(error.params["path"].split(".")[0], error)
        if frame is not None and "tasks" in cleaned_data:
            self._clean_task_shapes(cleaned_data, chart, len(frame))
        return cleaned_data

    def _clean_fields_of(self, cleaned_data: dict, field_name: str, chart: Chart) -> None:
        value = cleaned_data[field_name]
        if value is None:
            return
        try:
            if not isinstance(value, list) or (field_name == "frame" and not value):
                raise _invalid(field_name, "Expected a list of vector fields")
            fields = []
            for i, components in enumerate(value):
                path = f"{field_name}.{i}"
                if not isinstance(components, list) or len(components) != chart.dimension:
                    raise _invalid(path, f"Expected {chart.dimension} expressions")
                fields.append(VectorField(chart, self._parse_all(components, chart, path)))
            cleaned_data[field_name] = tuple(fields)
        except ValidationError as error:
            del cleaned_data[field_name]
            self.add_error(field_name, error)

    def _clean_metric(self, cleaned_data: dict, chart: Chart, k: int) -> None:
        value = cleaned_data["metric"]
        try:
            if not isinstance(value, list) or len(value) != k:
                raise _invalid("metric", f"Expected a {k}x{k} matrix of expressions")
            rows = []
            for a, row in enumerate(value):
                if not isinstance(row, list) or len(row) != k:
                    raise _invalid(f"metric.{a}", f"Expected {k} expressions")
                rows.append(self._parse_all(row, chart, f"metric.{a}"))
            cleaned_data["metric"] = tuple(rows)
        except ValidationError as error:
            del cleaned_data["metric"]
            self.add_error("metric", error)

    def _clean_task_shapes(
        self, cleaned_data: dict, chart: Chart, k: int
    ) -> None:
        n = chart.dimension
        lengths = {"x0": n, "x": n, "p0": n, "v0": n, "eta0": n, "u0": k}
        tasks = []
        try:
            for i, task in enumerate(cleaned_data["tasks"]):
                params = dict(task.params)
                for key, length in lengths.items():
                    if key in params and len(params[key]) != length:
                        raise _invalid(
                            f"tasks.{i}.{key}", f"Expected {length} entries"
                        )
                if "segments" in params:
                    params["segments"] = tuple(
                        self._segment(segment, chart, k, f"tasks.{i}.segments.{j}")
                        for j, segment in enumerate(params["segments"])
                    )
                if "segment" in params:
                    params["segment"] = self._segment(
                        params["segment"], chart, k, f"tasks.{i}.segment"
                    )
                tasks.append(task._replace(params=params))
        except ValidationError as error:
            del cleaned_data["tasks"]
            self.add_error("tasks", error)
            return
        cleaned_data["tasks"] = tasks

    def _segment(self, value: dict, chart: Chart, k: int, path: str) -> Segment:
        coefficients = value["coefficients"]
        if len(coefficients) != k:
            raise _invalid(f"{path}.coefficients", f"Expected {k} frame coefficients")
        try:
            return Segment(
                self._parse_all(coefficients, chart, f"{path}.coefficients"),
                value["start"],
                value["end"],
            )
        except CurveSpecError as exc:
            raise _invalid(path, str(exc))

    @staticmethod
    def _parse_all(sources: list, chart: Chart, path: str) -> tuple:
        parsed = []
        for i, src in enumerate(sources):
            if not isinstance(src, str):
                raise _invalid(f"{path}.{i}", "Expected an expression string")
            try:
                parsed.append(expr.parse(src, chart))
            except expr.SyntaxError as exc:
                raise _invalid(f"{path}.{i}", str(exc))
        return tuple(parsed)
