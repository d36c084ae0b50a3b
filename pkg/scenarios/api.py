import csv
import hashlib
import json
import logging
import time
from collections.abc import Callable, Mapping
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Literal, NamedTuple

import numpy as np
import sentry_sdk
from ddtrace import tracer
from django.conf import settings

from extremals import api as extremals_api
from extremals.certificates import Verdict as AbnormalVerdict
from extremals.curves import PiecewiseCurveSpec
from geometry import api as geometry_api
from geometry.fields import VectorField
from geometry.structures import MetricField, StructureError, SubRiemannianStructure
from mechanics import api as mechanics_api
from subrig.utils.expr import Chart, Expr, ExprError

from .builtins import BUILTINS, get_builtin
from .forms import ScenarioForm, Task

logger = logging.getLogger(__name__)

Tolerances = dict[str, float]


class ScenarioError(Exception):
    def __init__(self, path: str, message: str) -> None:
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path
        self.message = message


@dataclass(frozen=True)
class Scenario:
    name: str
    description: str
    chart: Chart
    frame: tuple[VectorField, ...]
    metric: tuple[tuple[Expr, ...], ...] | None
    complement: tuple[VectorField, ...] | None
    probes: tuple[tuple[float, ...], ...] | None
    anchor: tuple[float, ...] | None
    tolerances: Tolerances
    tasks: tuple[Task, ...]
    digest: str = field(compare=False)

    def build_structure(self, rank_tol: float | None = None) -> SubRiemannianStructure:
        return SubRiemannianStructure(
            self.chart,
            self.frame,
            self.metric,
            self.complement,
            probes=None if self.probes is None else np.array(self.probes),
            anchor=self.anchor,
            name=self.name,
            rank_tol=self.tolerances.get("rank_tol") if rank_tol is None else rank_tol,
        )


def _digest(data: Mapping[str, Any]) -> str:
    canonical = json.dumps(data, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


def load_scenario(source: str | Path | Mapping[str, Any]) -> Scenario:
    if isinstance(source, Mapping):
        data = dict(source)
    elif isinstance(source, str) and source in BUILTINS:
        data = get_builtin(source)
    else:
        try:
            data = json.loads(Path(source).read_text())
        except FileNotFoundError:
            raise ScenarioError("", f"No built-in or file named {str(source)!r}")
        except json.JSONDecodeError as exc:
            raise ScenarioError("", f"Malformed JSON: {exc}")
    if not isinstance(data, dict):
        raise ScenarioError("", "A scenario must be a JSON object")

    form = ScenarioForm(data)
    unknown = sorted(set(data) - set(form.fields))
    if unknown:
        raise ScenarioError(unknown[0], "Unknown field")
    if not form.is_valid():
        field_name, errors = next(iter(form.errors.as_data().items()))
        error = errors[0]
        path = (error.params or {}).get("path", field_name)
        raise ScenarioError(path, error.messages[0])

    cleaned = form.cleaned_data
    return Scenario(
        name=cleaned["name"] or "scenario",
        description=cleaned["description"],
        chart=cleaned["chart"],
        frame=cleaned["frame"],
        metric=cleaned.get("metric"),
        complement=cleaned.get("complement"),
        probes=None if cleaned.get("probes") is None else tuple(cleaned["probes"]),
        anchor=cleaned.get("anchor"),
        tolerances=cleaned["tolerances"],
        tasks=tuple(cleaned["tasks"]),
        digest=_digest(data),
    )


class Table(NamedTuple):
    header: tuple[str, ...]
    rows: np.ndarray


@dataclass
class TaskOutput:
    name: str
    kind: str
    status: Literal["ok", "failed"] = "ok"
    verdict: str | None = None
    tables: dict[str, Table] = field(default_factory=dict)
    documents: dict[str, dict] = field(default_factory=dict)
    error: str | None = None

    @property
    def indeterminate(self) -> bool:
        return self.verdict == AbnormalVerdict.INDETERMINATE.value


@dataclass
class ResultBundle:
    scenario: str
    provenance: dict[str, Any]
    outputs: list[TaskOutput]
    timings: dict[str, float] = field(default_factory=dict)

    @property
    def exit_code(self) -> int:
        if any(output.status == "failed" for output in self.outputs):
            return 1
        if any(output.indeterminate for output in self.outputs):
            return 2
        return 0


class _Context(NamedTuple):
    structure: SubRiemannianStructure
    metric: Callable[[], MetricField]
    tolerances: Tolerances


def _trajectory_table(
    times: np.ndarray, states: np.ndarray, header: tuple[str, ...]
) -> Table:
    return Table(("t", *header), np.column_stack([times, states]))


def _coordinates(chart: Chart, prefix: str = "") -> tuple[str, ...]:
    return tuple(f"{prefix}{name}" for name in chart.names)


def _span_document(matrix: np.ndarray, rank_tol: float) -> dict:
    sigma = np.linalg.svd(matrix, compute_uv=False)
    rank = int(np.sum(sigma > rank_tol * sigma[0])) if sigma[0] > 0 else 0
    return {
        "rank": rank,
        "singular_values": [float(v) for v in sigma],
        "matrix": [[float(v) for v in row] for row in matrix],
    }


def _geodesic(ctx: _Context, task: Task, output: TaskOutput) -> None:
    s, p = ctx.structure, task.params
    curve = extremals_api.normal_extremal(
        s, p["x0"], p["p0"], p["T"], ctx.tolerances["rtol"], ctx.tolerances["atol"]
    )
    output.tables[task.name] = _trajectory_table(
        curve.times,
        curve.trajectory.states,
        _coordinates(s.chart) + _coordinates(s.chart, "p_"),
    )


def _riemannian_geodesic(ctx: _Context, task: Task, output: TaskOutput) -> None:
    s, p = ctx.structure, task.params
    trajectory = geometry_api.riemannian_geodesic(
        ctx.metric(), p["x0"], p["v0"], p["T"], ctx.tolerances["rtol"], ctx.tolerances["atol"]
    )
    output.tables[task.name] = _trajectory_table(
        trajectory.times,
        trajectory.states,
        _coordinates(s.chart) + _coordinates(s.chart, "v_"),
    )


def _curve_spec(task: Task) -> PiecewiseCurveSpec:
    return PiecewiseCurveSpec(task.params["x0"], task.params["segments"])


def _samples(task: Task) -> int:
    return task.params.get("samples", settings.SUBRIG["CHEBYSHEV_SAMPLES"])


def _abnormal_test(ctx: _Context, task: Task, output: TaskOutput) -> None:
    certificate = extremals_api.abnormal_test(
        ctx.structure,
        _curve_spec(task),
        _samples(task),
        ctx.tolerances["rank_tol"],
        ctx.tolerances["certificate_tol"],
        ctx.tolerances["rtol"],
        ctx.tolerances["atol"],
    )
    output.verdict = certificate.verdict.value
    output.documents[task.name] = certificate.as_dict()


def _pullback_span(ctx: _Context, task: Task, output: TaskOutput) -> None:
    matrix = extremals_api.pullback_span(
        ctx.structure,
        _curve_spec(task),
        _samples(task),
        ctx.tolerances["rtol"],
        ctx.tolerances["atol"],
    )
    output.documents[task.name] = _span_document(matrix, ctx.tolerances["rank_tol"])


def _coadjoint_transport(ctx: _Context, task: Task, output: TaskOutput) -> None:
    s, p = ctx.structure, task.params
    trajectory = extremals_api.coadjoint_transport(
        s, p["segment"], p["x0"], p["eta0"], ctx.tolerances["rtol"], ctx.tolerances["atol"]
    )
    output.tables[task.name] = _trajectory_table(
        trajectory.times,
        trajectory.states,
        _coordinates(s.chart) + _coordinates(s.chart, "eta_"),
    )


def _variation_span(ctx: _Context, task: Task, output: TaskOutput) -> None:
    s, p = ctx.structure, task.params
    segment = p["segment"]
    taus = extremals_api.chebyshev_times(segment.start, segment.end, p.get("samples", 16))
    matrix = extremals_api.variation_span(
        s, segment, p["x0"], taus, ctx.tolerances["rtol"], ctx.tolerances["atol"]
    )
    output.documents[task.name] = _span_document(matrix, ctx.tolerances["rank_tol"])


def _nonholonomic(ctx: _Context, task: Task, output: TaskOutput) -> None:
    s, p = ctx.structure, task.params
    motion = mechanics_api.nonholonomic_trajectory(
        s, ctx.metric(), p["x0"], p["u0"], p["T"], ctx.tolerances["rtol"], ctx.tolerances["atol"]
    )
    output.tables[task.name] = _trajectory_table(
        motion.times,
        motion.trajectory.states,
        _coordinates(s.chart) + tuple(f"u_{a + 1}" for a in range(s.rank)),
    )


def _compatibility(ctx: _Context, task: Task, output: TaskOutput) -> None:
    s, p = ctx.structure, task.params
    G = ctx.metric()
    motion = mechanics_api.nonholonomic_trajectory(
        s, G, p["x0"], p["u0"], p["T"], ctx.tolerances["rtol"], ctx.tolerances["atol"]
    )
    report = mechanics_api.compatibility_test(
        s,
        G,
        motion,
        ctx.tolerances["certificate_tol"],
        ctx.tolerances["rank_tol"],
        rtol=ctx.tolerances["rtol"],
        atol=ctx.tolerances["atol"],
    )
    output.verdict = report.verdict.value
    output.documents[task.name] = report.as_dict()
    output.tables[f"{task.name}-eta"] = _trajectory_table(
        report.sample_times, report.best.etas, _coordinates(s.chart, "eta_")
    )


def _bracket_filtration(ctx: _Context, task: Task, output: TaskOutput) -> None:
    filtration = geometry_api.bracket_filtration(
        ctx.structure, task.params["x"], task.params["depth"], ctx.tolerances["rank_tol"]
    )
    output.documents[task.name] = {
        "dims": list(filtration.dims),
        "bracket_generating": filtration.bracket_generating,
    }


RUNNERS: dict[str, Callable[[_Context, Task, TaskOutput], None]] = {
    "geodesic": _geodesic,
    "riemannian_geodesic": _riemannian_geodesic,
    "abnormal_test": _abnormal_test,
    "pullback_span": _pullback_span,
    "coadjoint_transport": _coadjoint_transport,
    "variation_span": _variation_span,
    "nonholonomic": _nonholonomic,
    "compatibility": _compatibility,
    "bracket_filtration": _bracket_filtration,
}


def effective_tolerances(
    scenario: Scenario, overrides: Mapping[str, float | None] | None = None
) -> Tolerances:
    tolerances = {
        "rtol": settings.SUBRIG["RTOL"],
        "atol": settings.SUBRIG["ATOL"],
        "rank_tol": settings.SUBRIG["RANK_TOL"],
        "certificate_tol": settings.SUBRIG["CERTIFICATE_TOL"],
    }
    tolerances.update(scenario.tolerances)
    tolerances.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return tolerances


def _run_task(ctx: _Context, task: Task) -> tuple[TaskOutput, float]:
    output = TaskOutput(task.name, task.kind)
    started = time.perf_counter()
    try:
        RUNNERS[task.kind](ctx, task, output)
    except Exception as exc:
        logger.warning("Task %s (%s) failed: %s", task.name, task.kind, exc)
        sentry_sdk.capture_exception(exc)
        output.status = "failed"
        output.error = f"{type(exc).__name__}: {exc}"
        output.tables.clear()
        output.documents.clear()
        output.verdict = None
    return output, time.perf_counter() - started


@tracer.wrap()
def run(
    scenario: Scenario,
    output_dir: str | Path | None = None,
    *,
    parallel: bool = False,
    overrides: Mapping[str, float | None] | None = None,
) -> ResultBundle:
    started = time.perf_counter()
    tolerances = effective_tolerances(scenario, overrides)
    provenance = {
        "tool": "subrig",
        "version": settings.VERSION,
        "scenario": scenario.name,
        "scenario_sha256": scenario.digest,
        "tolerances": tolerances,
    }
    bundle = ResultBundle(scenario.name, provenance, [])
    if not scenario.tasks:
        if output_dir is not None:
            emit_report(bundle, output_dir)
        return bundle

    try:
        structure = scenario.build_structure(tolerances["rank_tol"])
    except (StructureError, ExprError) as exc:
        logger.warning("Scenario %s has an invalid structure: %s", scenario.name, exc)
        sentry_sdk.capture_exception(exc)
        for task in scenario.tasks:
            bundle.outputs.append(
                TaskOutput(
                    task.name, task.kind, "failed", error=f"{type(exc).__name__}: {exc}"
                )
            )
        if output_dir is not None:
            emit_report(bundle, output_dir)
        return bundle

    metric: list[MetricField | Exception] = []

    def get_metric() -> MetricField:
        if isinstance(metric[0], Exception):
            raise metric[0]
        return metric[0]

    try:
        metric.append(geometry_api.riemannian_extension(structure))
    except Exception as exc:
        metric.append(exc)
    ctx = _Context(structure, get_metric, tolerances)

    if parallel:
        with ThreadPoolExecutor() as pool:
            results = list(pool.map(lambda task: _run_task(ctx, task), scenario.tasks))
    else:
        results = [_run_task(ctx, task) for task in scenario.tasks]

    for output, elapsed in results:
        bundle.outputs.append(output)
        bundle.timings[output.name] = elapsed
    bundle.timings["total"] = time.perf_counter() - started

    span = tracer.current_span()
    if span:
        span.set_tag("scenario", scenario.name)
        span.set_tag("exit_code", bundle.exit_code)
    if output_dir is not None:
        emit_report(bundle, output_dir)
    return bundle


def _format(value: float) -> str:
    return format(float(value), ".17g")


def _write_json(path: Path, document: Any) -> None:
    path.write_text(json.dumps(document, indent=2) + "\n")


def emit_report(
    bundle: ResultBundle,
    output_dir: str | Path,
    format: Literal["csv", "json"] | None = None,
) -> list[Path]:
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    written = []
    index = []
    for output in bundle.outputs:
        files = []
        if format in (None, "csv"):
            for stem, table in output.tables.items():
                path = output_dir / f"{stem}.csv"
                with path.open("w", newline="") as f:
                    writer = csv.writer(f, lineterminator="\n")
                    writer.writerow(table.header)
                    writer.writerows([_format(v) for v in row] for row in table.rows)
                files.append(path.name)
                written.append(path)
        if format in (None, "json"):
            for stem, document in output.documents.items():
                path = output_dir / f"{stem}.json"
                _write_json(path, document)
                files.append(path.name)
                written.append(path)
        index.append(
            {
                "name": output.name,
                "kind": output.kind,
                "status": output.status,
                "verdict": output.verdict,
                "files": files,
                "error": output.error,
            }
        )
    if format in (None, "json"):
        path = output_dir / "bundle.json"
        _write_json(
            path,
            {
                "provenance": bundle.provenance,
                "exit_code": bundle.exit_code,
                "tasks": index,
            },
        )
        written.append(path)
        path = output_dir / "timings.json"
        _write_json(path, bundle.timings)
        written.append(path)
    return written
