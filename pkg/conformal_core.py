"""
Engine core: input documents, the builtin metric families, probe grids and
the concurrent check fan-out that every command runs through.

A command is turned into a Plan (a list of named tasks); each task returns a
TaskResult carrying CheckRow verdicts and optional tables.  Tasks run
concurrently in worker threads and are reassembled in plan order, so a report
never depends on which task finished first.
"""

import asyncio
import hashlib
import itertools
import json
import logging
import math
import re
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np
import pandas as pd

from geometry import (
    CURVATURE_IDENTITY_TOL,
    KILLING_TOL,
    WEYL_FLAT_TOL,
    Chart,
    MetricField,
    VectorField,
    conformal_killing_check,
    curvature,
    weyl_conformal_covariance_check,
)
from liealg import (
    CLOSURE_TOL,
    GRADING_TOL,
    NULL_LINE_TOL,
    MatrixAlgebra,
    MinkowskiFrame,
    co_algebra,
    eigenspace_decompose,
    grading_action_check,
    invariant_null_lines,
    jordan_decompose,
    sigma_B_spectrum,
)
from penrose import (
    CONFORMAL_TOL,
    CONVERGENCE_RATIO,
    GEODESIC_TOL,
    SHAPE_TOL,
    RosenWave,
    adapted_from_brinkmann,
    brinkmann_to_rosen,
    default_probe_grid,
    first_order_convergence,
    penrose_limit,
    penrose_of_conformal,
    plane_wave_limit_dichotomy,
    rescale_convergence,
    validate_adapted,
)
from planewave import (
    PLANE_WAVE_TOL,
    CheckRow,
    PlaneWaveSpec,
    brinkmann_metric,
    check_prop_pwkilling,
    killing_basis,
    probe_points,
    probe_window,
    verify_plane_wave,
)
from smoothfield.errors import EngineError, ExprError
from smoothfield.expr import ExprField

__version__ = "0.1.0"

logger = logging.getLogger("conformal_core")

DEFAULT_SEED = 42
DEFAULT_PROBE_COUNT = 12
PLANE_WAVE_PROBES = 20
DICHOTOMY_TOL = 1e-6
PROFILE_TOL = 1e-12
JORDAN_RECONSTRUCTION_TOL = 1e-10
JORDAN_TOL = 1e-8
SPECTRUM_DIMS = (1, 2, 3)
DEFAULT_BOX = (-1.0, 1.0)
PROBE_GROUP_SEPARATOR = re.compile(r"\s*[x×]\s*")
CHECK_COLUMNS = ["task", "stage", "check", "residual", "tol", "passed", "error"]


class InputError(EngineError):
    """Missing or malformed input file or flag."""


# ============ input documents ============


@dataclass(frozen=True)
class InputDocument:
    path: str
    digest: str
    data: object


def load_document(path) -> InputDocument:
    p = Path(path)
    try:
        raw = p.read_bytes()
    except FileNotFoundError:
        raise InputError(f"{path}: file not found")
    except OSError as e:
        raise InputError(f"{path}: cannot read ({e})")
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as e:
        raise InputError(f"{path}: invalid JSON at line {e.lineno} column {e.colno}: {e.msg}")
    return InputDocument(str(path), hashlib.sha256(raw).hexdigest(), data)


def _require_object(doc: InputDocument) -> dict:
    if not isinstance(doc.data, dict):
        raise InputError(f"{doc.path}: expected a JSON object at the top level")
    return doc.data


def spec_from_dict(data: dict, where: str) -> PlaneWaveSpec:
    try:
        return PlaneWaveSpec.from_dict(data)
    except KeyError as e:
        raise InputError(f"{where}: plane-wave spec is missing {e}")
    except ExprError as e:
        raise InputError(f"{where}: {e}")
    except (TypeError, ValueError) as e:
        raise InputError(f"{where}: {e}")


def load_spec(path) -> tuple[PlaneWaveSpec, InputDocument]:
    doc = load_document(path)
    return spec_from_dict(_require_object(doc), doc.path), doc


def load_algebra(path) -> tuple[MatrixAlgebra, InputDocument]:
    doc = load_document(path)
    data = _require_object(doc)
    try:
        alg = MatrixAlgebra.from_dict(data, name=data.get("name", Path(doc.path).stem))
    except (TypeError, ValueError, IndexError) as e:
        raise InputError(f"{doc.path}: {e}")
    return alg, doc


def load_matrix(path) -> tuple[np.ndarray, InputDocument]:
    doc = load_document(path)
    data = doc.data.get("matrix") if isinstance(doc.data, dict) else doc.data
    try:
        matrix = np.asarray(data, dtype=float)
    except (TypeError, ValueError) as e:
        raise InputError(f"{doc.path}: matrix entries must be numbers ({e})")
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1] or matrix.size == 0:
        raise InputError(f"{doc.path}: expected a non-empty square matrix, got shape {matrix.shape}")
    return matrix, doc


# ============ metric families ============


@dataclass
class LoadedMetric:
    metric: MetricField
    family: str
    box: list[tuple[float, float]]
    spec: Optional[PlaneWaveSpec] = None
    rosen: Optional[RosenWave] = None
    u_domain: tuple[float, float] = (-math.inf, math.inf)
    fields: list[tuple[VectorField, Optional[str]]] = field(default_factory=list)

    @property
    def u_window(self) -> tuple[float, float]:
        lo, hi = self.u_domain
        if math.isfinite(lo) and math.isfinite(hi):
            return lo, hi
        return self.box[0]


def _null_chart(n: int, transverse: Sequence[str]) -> Chart:
    return Chart(["u", "v"] + list(transverse))


def minkowski_family(data: dict) -> LoadedMetric:
    n = int(data.get("n", 2))
    if n < 1:
        raise InputError(f"minkowski needs n >= 1, got {n}")
    chart = _null_chart(n, [f"x{i + 1}" for i in range(n)])
    exprs = {(0, 1): "1"}
    exprs.update({(2 + i, 2 + i): "1" for i in range(n)})
    metric = MetricField.from_expressions(chart, exprs, name=f"minkowski[{n}]")
    return LoadedMetric(metric, "minkowski", [DEFAULT_BOX] * chart.dim)


def sphere_product_family(data: dict) -> LoadedMetric:
    chart = _null_chart(2, ["th", "ph"])
    radius = float(data.get("radius", 1.0))
    r2 = f"{radius * radius!r}"
    metric = MetricField.from_expressions(
        chart, {(0, 1): "1", (2, 2): r2, (3, 3): f"{r2}*sin(th)^2"}, name="sphere_product"
    )
    return LoadedMetric(metric, "sphere_product", [DEFAULT_BOX, DEFAULT_BOX, (0.5, 2.5), DEFAULT_BOX])


def de_sitter_family(data: dict) -> LoadedMetric:
    chart = Chart(["tau", "x", "y", "z"])
    h = float(data.get("hubble", 1.0))
    scale = f"exp({2.0 * h!r}*tau)"
    exprs = {(0, 0): "-1", (1, 1): scale, (2, 2): scale, (3, 3): scale}
    return LoadedMetric(MetricField.from_expressions(chart, exprs, name="de_sitter"), "de_sitter", [DEFAULT_BOX] * 4)


def brinkmann_family(data: dict) -> LoadedMetric:
    spec = spec_from_dict(data.get("spec", {}), "brinkmann metric")
    if data.get("adapted"):
        t_c = data.get("t_c")
        metric = adapted_from_brinkmann(spec, None if t_c is None else float(t_c))
    else:
        metric = brinkmann_metric(spec)
    box = [probe_window(spec)] + [DEFAULT_BOX] * (spec.n + 1)
    return LoadedMetric(metric, "brinkmann", box, spec=spec)


def rosen_family(data: dict) -> LoadedMetric:
    if "profile" not in data:
        raise InputError("rosen metric needs a 'profile' matrix of expressions in u")
    lo, hi = data.get("domain", [None, None])
    domain = (-math.inf if lo is None else float(lo), math.inf if hi is None else float(hi))
    try:
        rosen = RosenWave.from_expressions(data["profile"], domain, name=data.get("name", "rosen"))
    except ExprError as e:
        raise InputError(f"rosen profile: {e}")
    u_box = domain if all(math.isfinite(x) for x in domain) else DEFAULT_BOX
    box = [u_box] + [DEFAULT_BOX] * (rosen.n + 1)
    return LoadedMetric(rosen.metric(), "rosen", box, rosen=rosen, u_domain=domain)


def _component_key(key: str, chart: Chart) -> tuple[int, int]:
    parts = [s.strip() for s in str(key).split(",")]
    if len(parts) != 2:
        raise InputError(f"component key {key!r} must read 'i,j'")
    out = []
    for part in parts:
        if part.isdigit():
            out.append(int(part))
        elif part in chart.aliases():
            out.append(chart.index(part))
        else:
            raise InputError(f"component key {key!r} names an unknown coordinate {part!r}")
    if max(out) >= chart.dim:
        raise InputError(f"component key {key!r} is outside a {chart.dim}-dimensional chart")
    return out[0], out[1]


def expression_family(data: dict) -> LoadedMetric:
    if "coordinates" not in data or "components" not in data:
        raise InputError("expression metric needs 'coordinates' and 'components'")
    chart = Chart(data["coordinates"])
    exprs = {_component_key(k, chart): str(v) for k, v in data["components"].items()}
    signature = data.get("signature")
    metric = MetricField.from_expressions(chart, exprs, signature=signature, name=data.get("name", "g"))
    box = [tuple(b) for b in data.get("box", [DEFAULT_BOX] * chart.dim)]
    lo, hi = data.get("u_domain", [None, None])
    u_domain = (-math.inf if lo is None else float(lo), math.inf if hi is None else float(hi))
    return LoadedMetric(metric, "expression", box, u_domain=u_domain)


METRIC_FAMILIES: dict[str, Callable[[dict], LoadedMetric]] = {
    "minkowski": minkowski_family,
    "sphere_product": sphere_product_family,
    "de_sitter": de_sitter_family,
    "brinkmann": brinkmann_family,
    "rosen": rosen_family,
    "expression": expression_family,
}
FAMILY_NAMES = list(METRIC_FAMILIES)


def _parse_fields(data: dict, chart: Chart) -> list[tuple[VectorField, Optional[str]]]:
    fields = []
    for name, entry in data.get("fields", {}).items():
        expect = None
        if isinstance(entry, dict):
            expect = entry.get("expect")
            entry = entry.get("components")
        if not isinstance(entry, list) or len(entry) != chart.dim:
            raise InputError(f"field {name!r} needs {chart.dim} component expressions")
        fields.append((VectorField.from_expressions(chart, [str(s) for s in entry], name), expect))
    return fields


def load_metric(path) -> tuple[LoadedMetric, InputDocument]:
    doc = load_document(path)
    data = _require_object(doc)
    family = data.get("family", "expression")
    builder = METRIC_FAMILIES.get(family)
    if builder is None:
        raise InputError(f"{doc.path}: unknown metric family {family!r} (known: {', '.join(FAMILY_NAMES)})")
    try:
        loaded = builder(data)
        loaded.fields = _parse_fields(data, loaded.metric.chart)
    except InputError as e:
        raise InputError(f"{doc.path}: {e}")
    except (ExprError, TypeError, ValueError) as e:
        raise InputError(f"{doc.path}: {e}")
    if "box" in data and family != "expression":
        loaded.box = [tuple(float(x) for x in b) for b in data["box"]]
    logger.info("[Load] %s: %s metric on %s", doc.path, family, loaded.metric.chart)
    return loaded, doc


def parse_sigma(source: str, chart: Chart) -> ExprField:
    try:
        return ExprField.parse(source, chart.dim, chart.aliases())
    except ExprError as e:
        raise InputError(f"--sigma {source!r}: {e}")


# ============ probes ============


def parse_probes(text: str, dim: int) -> list[np.ndarray]:
    """
    "lo,hi,count x lo,hi,count ..." -> product grid, one group per leading
    coordinate; coordinates without a group are held at 0.
    """
    groups = [g for g in PROBE_GROUP_SEPARATOR.split(text.strip()) if g]
    if not groups:
        raise InputError("--probes is empty")
    if len(groups) > dim:
        raise InputError(f"--probes has {len(groups)} groups for a {dim}-dimensional chart")
    axes = []
    for group in groups:
        parts = [s.strip() for s in group.split(",")]
        if len(parts) != 3:
            raise InputError(f"--probes group {group!r} must read lo,hi,count")
        try:
            lo, hi, count = float(parts[0]), float(parts[1]), int(parts[2])
        except ValueError:
            raise InputError(f"--probes group {group!r} must read lo,hi,count")
        if count < 1:
            raise InputError(f"--probes group {group!r} needs a positive count")
        axes.append(np.linspace(lo, hi, count))
    axes += [np.zeros(1)] * (dim - len(axes))
    return [np.array(p, dtype=float) for p in itertools.product(*axes)]


def random_probes(box: Sequence[tuple[float, float]], count: int, seed: int) -> list[np.ndarray]:
    rng = np.random.default_rng(seed)
    lo = np.array([b[0] for b in box], dtype=float)
    hi = np.array([b[1] for b in box], dtype=float)
    return [rng.uniform(lo, hi) for _ in range(count)]


def parse_window(text: str) -> tuple[float, float]:
    try:
        lo, hi = (float(s) for s in text.split(","))
    except ValueError:
        raise InputError(f"--window {text!r} must read lo,hi")
    if not lo < hi:
        raise InputError(f"--window {text!r} needs lo < hi")
    return lo, hi


def _point_columns(chart: Chart, p: np.ndarray) -> dict:
    return {name: float(x) for name, x in zip(chart.names, p)}


# ============ fan-out ============


@dataclass
class TaskResult:
    rows: list[CheckRow]
    tables: list[tuple[str, pd.DataFrame]] = field(default_factory=list)


Task = tuple[str, Callable[[], TaskResult]]


async def run_checks(tasks: Sequence[Task]):
    async def run_one(task: Task):
        name, fn = task
        start = time.time()
        try:
            result = await asyncio.to_thread(fn)
            duration = time.time() - start
            ok = all(r.passed for r in result.rows)
            logger.info("[Check] %s %s in %.2fs", name, "ok" if ok else "failed", duration)
            return {"task": name, "result": result, "duration": duration}
        except Exception as e:
            duration = time.time() - start
            logger.error("[Check] %s failed in %.2fs: %s", name, duration, e)
            return {"task": name, "result": None, "error": str(e), "duration": duration}

    return await asyncio.gather(*[run_one(t) for t in tasks])


def process_check_results(results) -> tuple[pd.DataFrame, list[tuple[str, pd.DataFrame]]]:
    """Flatten task results into one check table plus titled tables, merging tables that share a title."""
    rows = []
    merged: dict[str, list[pd.DataFrame]] = {}
    for item in results:
        result = item.get("result")
        if result is None:
            rows.append(
                {
                    "task": item["task"],
                    "stage": "error",
                    "check": item["task"],
                    "residual": math.nan,
                    "tol": math.nan,
                    "passed": False,
                    "error": item.get("error"),
                }
            )
            continue
        for r in result.rows:
            rows.append(
                {
                    "task": item["task"],
                    "stage": r.stage,
                    "check": r.check,
                    "residual": float(r.residual),
                    "tol": float(r.tol),
                    "passed": r.passed,
                    "error": None,
                }
            )
        for title, table in result.tables:
            merged.setdefault(title, []).append(table)
    tables = [(title, pd.concat(parts, ignore_index=True)) for title, parts in merged.items()]
    return pd.DataFrame(rows, columns=CHECK_COLUMNS), tables


# ============ commands ============


@dataclass
class Options:
    command: str
    argv: list[str] = field(default_factory=list)
    metric: Optional[str] = None
    spec: Optional[str] = None
    algebra: Optional[str] = None
    matrix: Optional[str] = None
    sigma: Optional[str] = None
    probes: Optional[str] = None
    tol: Optional[float] = None
    seed: int = DEFAULT_SEED
    alpha: Optional[float] = None
    window: Optional[str] = None

    def tol_or(self, default: float) -> float:
        return default if self.tol is None else float(self.tol)

    def require(self, flag: str) -> str:
        value = getattr(self, flag)
        if value is None:
            raise InputError(f"{self.command} needs --{flag}")
        return value


@dataclass
class Plan:
    tasks: list[Task]
    inputs: dict[str, str] = field(default_factory=dict)
    summary: dict = field(default_factory=dict)


@dataclass
class Report:
    command: str
    argv: list[str]
    seed: int
    inputs: dict[str, str]
    summary: dict
    tables: list[tuple[str, pd.DataFrame]]
    checks: pd.DataFrame
    wall_time: float
    version: str = __version__

    @property
    def passed(self) -> bool:
        return not self.checks.empty and bool(self.checks["passed"].all())


def _metric_probes(opts: Options, loaded: LoadedMetric, count: int = DEFAULT_PROBE_COUNT) -> list[np.ndarray]:
    dim = loaded.metric.dim
    if opts.probes:
        return parse_probes(opts.probes, dim)
    if loaded.spec is not None and loaded.metric.chart == loaded.spec.chart:
        return probe_points(loaded.spec, max(count, PLANE_WAVE_PROBES), opts.seed)
    return random_probes(loaded.box, count, opts.seed)


def plan_curvature(opts: Options) -> Plan:
    loaded, doc = load_metric(opts.require("metric"))
    g = loaded.metric
    probes = _metric_probes(opts, loaded)
    tol = opts.tol_or(CURVATURE_IDENTITY_TOL)

    def at(i, p):
        def task():
            bundle = curvature(g, p)
            row = {
                "probe": i,
                **_point_columns(g.chart, p),
                "riemann": bundle.riemann_norm,
                "weyl": bundle.weyl_norm,
                "scalar": float(bundle.scalar),
                "kretschmann": bundle.kretschmann(),
            }
            residual = bundle.identity_residual()
            check = CheckRow("identities", f"Riemann symmetries + first Bianchi@{i}", residual, tol)
            return TaskResult([check], [("curvature", pd.DataFrame([row]))])

        return task

    tasks = [(f"curvature@{i}", at(i, p)) for i, p in enumerate(probes)]
    return Plan(tasks, {doc.path: doc.digest}, {"family": loaded.family, "chart": list(g.chart.names), "probes": len(probes)})


def plan_weyl(opts: Options) -> Plan:
    loaded, doc = load_metric(opts.require("metric"))
    g = loaded.metric
    probes = _metric_probes(opts, loaded)
    tol = opts.tol_or(WEYL_FLAT_TOL)

    def at(i, p):
        def task():
            w = curvature(g, p).weyl_norm
            row = {"probe": i, **_point_columns(g.chart, p), "weyl": w}
            return TaskResult([CheckRow("weyl", f"|W|@{i}", w, tol)], [("weyl", pd.DataFrame([row]))])

        return task

    tasks = [(f"weyl@{i}", at(i, p)) for i, p in enumerate(probes)]
    if opts.sigma:
        sigma = parse_sigma(opts.sigma, g.chart)

        def covariance():
            deviation = weyl_conformal_covariance_check(g, sigma, probes)
            return TaskResult([CheckRow("covariance", "W(e^sigma g) = W(g)", deviation, tol)])

        tasks.append(("covariance", covariance))
    return Plan(tasks, {doc.path: doc.digest}, {"family": loaded.family, "chart": list(g.chart.names), "probes": len(probes)})


def _killing_task(g: MetricField, X: VectorField, probes, tol: float, expect: Optional[str]):
    def task():
        verdict = conformal_killing_check(g, X, probes, tol)
        rows = [CheckRow("killing", f"{X.name}: L_X g = lambda g", verdict.max_residual, tol)]
        if expect is not None:
            rows.append(CheckRow("killing", f"{X.name}: kind {verdict.kind} (expected {expect})", float(verdict.kind != expect), 0.5))
        row = {"field": X.name, "kind": verdict.kind, "constant": verdict.constant, "max_residual": verdict.max_residual}
        return TaskResult(rows, [("fields", pd.DataFrame([row]))])

    return task


def plan_killing_check(opts: Options) -> Plan:
    tol = opts.tol_or(KILLING_TOL)
    inputs = {}
    if opts.spec:
        spec, doc = load_spec(opts.spec)
        inputs[doc.path] = doc.digest
        g = brinkmann_metric(spec)
        probes = parse_probes(opts.probes, g.dim) if opts.probes else probe_points(spec, PLANE_WAVE_PROBES, opts.seed)
        basis = killing_basis(spec)
        fields = [(X, "killing") for X in basis.killing_fields()] + [(basis.homothety, "homothetic")]
        summary = {"family": spec.family, "n": spec.n, "fields": len(fields)}
    else:
        loaded, doc = load_metric(opts.require("metric"))
        inputs[doc.path] = doc.digest
        g = loaded.metric
        if not loaded.fields:
            raise InputError(f"{doc.path}: killing-check needs a 'fields' entry (or use --spec)")
        probes = _metric_probes(opts, loaded)
        fields = loaded.fields
        summary = {"family": loaded.family, "fields": len(fields)}
    tasks = [(f"killing:{X.name}", _killing_task(g, X, probes, tol, expect)) for X, expect in fields]
    summary["probes"] = len(probes)
    return Plan(tasks, inputs, summary)


def plan_planewave_verify(opts: Options) -> Plan:
    spec, doc = load_spec(opts.require("spec"))
    tol = opts.tol_or(PLANE_WAVE_TOL)
    g = brinkmann_metric(spec)
    probes = parse_probes(opts.probes, g.dim) if opts.probes else probe_points(spec, PLANE_WAVE_PROBES, opts.seed)
    basis = killing_basis(spec)

    def proposition():
        report = check_prop_pwkilling(basis.heisenberg(), g, probes, tol)
        return TaskResult(report.rows, [("killing characterization", report.table())])

    def predicate():
        verdict = verify_plane_wave(g, basis.xi0, probes, tol)
        rows = [
            CheckRow("predicate", "parallel-null", verdict.parallel_null_residual, tol),
            CheckRow("predicate", "R(X,Y)=0 on perp", verdict.curvature_flat_on_perp_residual, tol),
            CheckRow("predicate", "nabla_X R=0 on perp", verdict.nabla_R_on_perp_residual, tol),
            CheckRow("predicate", "probe failures", float(len(verdict.failures)), 0.5),
        ]
        return TaskResult(rows, [("plane-wave predicate", verdict.table)])

    def wronskian():
        c = basis.structure_constants()
        alg = MatrixAlgebra.from_structure_constants(c, name="heis")
        table = pd.DataFrame(basis.wronskian, columns=[f"w{j}" for j in range(basis.wronskian.shape[1])])
        return TaskResult([CheckRow("heisenberg", "jacobi identity", alg.jacobi_residual(), tol)], [("wronskian", table)])

    tasks = [("proposition", proposition), ("predicate", predicate), ("heisenberg", wronskian)]
    if basis.extra is not None:
        tasks.append(("killing:extra", _killing_task(g, basis.extra, probes, KILLING_TOL, "killing")))
    tasks.append(("killing:homothety", _killing_task(g, basis.homothety, probes, KILLING_TOL, "homothetic")))
    summary = {"family": spec.family, "n": spec.n, "domain": list(spec.domain), "t0": basis.t0, "probes": len(probes)}
    return Plan(tasks, {doc.path: doc.digest}, summary)


def _adapted(opts: Options, loaded: LoadedMetric):
    g = loaded.metric
    n = g.dim - 2
    probes = parse_probes(opts.probes, g.dim) if opts.probes else default_probe_grid(n, loaded.u_window)
    return validate_adapted(g, probes, u_domain=loaded.u_domain)


def plan_penrose(opts: Options) -> Plan:
    loaded, doc = load_metric(opts.require("metric"))
    am = _adapted(opts, loaded)
    us = am.probe_us()

    def shape():
        rows = [
            CheckRow("adapted", "g_uu=0, g_uv=1, g_ux=0", am.shape_residual, SHAPE_TOL),
            CheckRow("adapted", "u-line geodesic", am.geodesic_residual, GEODESIC_TOL),
        ]
        return TaskResult(rows)

    def limit():
        pl = penrose_limit(am)
        tables = [("limit profile", pl.samples(us))]
        rows = [CheckRow("limit", "min eigenvalue of cbar > 0", -pl.check_definite(us), 0.0)]
        if loaded.rosen is not None:
            residual = max(float(np.max(np.abs(pl.matrix(u) - loaded.rosen.matrix(u)))) for u in us)
            rows.append(CheckRow("limit", "limit = input Rosen profile", residual, opts.tol_or(PROFILE_TOL)))
            tables.insert(0, ("input profile", loaded.rosen.samples(us)))
        curv = max(curvature(pl.metric(), am.central_point(u)).riemann_norm for u in us)
        tables.append(("limit curvature", pd.DataFrame([{"max_riemann_on_central_line": curv}])))
        return TaskResult(rows, tables)

    def rescale():
        table = rescale_convergence(am)
        residual = 0.0
        if not first_order_convergence(table):
            ratios = table["ratio"].iloc[-3:].to_numpy()
            residual = float(np.nanmax(ratios)) if np.isfinite(ratios).any() else math.inf
        return TaskResult([CheckRow("rescale", "first-order convergence", residual, CONVERGENCE_RATIO)], [("rescaling", table)])

    tasks = [("adapted", shape), ("limit", limit), ("rescale", rescale)]
    summary = {"family": loaded.family, "n": am.n, "probes": len(am.probes), "u_domain": list(am.u_domain)}
    return Plan(tasks, {doc.path: doc.digest}, summary)


def plan_penrose_conformal(opts: Options) -> Plan:
    loaded, doc = load_metric(opts.require("metric"))
    sigma = parse_sigma(opts.require("sigma"), loaded.metric.chart)
    am = _adapted(opts, loaded)
    tol = opts.tol_or(CONFORMAL_TOL)

    def conformal():
        limit, flow, report = penrose_of_conformal(am, sigma, tol=tol)
        samples = limit.samples([flow.f_value(u) for u in am.probe_us()])
        return TaskResult(report.rows, [("conformal checks", report.table()), ("conformal limit profile", samples)])

    def covariance():
        deviation = weyl_conformal_covariance_check(am.metric, sigma, am.probes[:: max(1, len(am.probes) // 9)])
        return TaskResult([CheckRow("covariance", "W(e^sigma g) = W(g)", deviation, max(tol, WEYL_FLAT_TOL))])

    tasks = [("penrose-conformal", conformal), ("covariance", covariance)]
    summary = {"family": loaded.family, "n": am.n, "sigma": opts.sigma, "probes": len(am.probes)}
    return Plan(tasks, {doc.path: doc.digest}, summary)


def plan_rosen_convert(opts: Options) -> Plan:
    spec, doc = load_spec(opts.require("spec"))
    window = parse_window(opts.window) if opts.window else probe_window(spec)
    tol = opts.tol_or(DICHOTOMY_TOL)
    rosen = brinkmann_to_rosen(spec, window)
    us = np.linspace(window[0], window[1], 9)

    def samples():
        smallest = rosen.check_definite(us)
        rows = [CheckRow("rosen", "min eigenvalue of cbar > 0", -smallest, 0.0)]
        return TaskResult(rows, [("rosen profile", rosen.samples(us))])

    def dichotomy():
        result = plane_wave_limit_dichotomy(spec, window=window, tol=tol)
        rows = [
            CheckRow("dichotomy", "xi-tangent limit flat", result.flat_residual, 1e-9),
            CheckRow("dichotomy", "self-limit profile", result.profile_residual, PROFILE_TOL),
            CheckRow("dichotomy", "self-limit curvature = E^T Q E", result.curvature_residual, tol),
        ]
        return TaskResult(rows, [("dichotomy", result.table())])

    summary = {"family": spec.family, "n": spec.n, "window": list(window)}
    return Plan([("rosen", samples), ("dichotomy", dichotomy)], {doc.path: doc.digest}, summary)


def _grading_source(alg: MatrixAlgebra, data: dict, alpha: Optional[float]):
    """(B, derivation) from the algebra document; frame algebras default to alpha Id + A."""
    if "derivation" in data:
        return None, np.asarray(data["derivation"], dtype=float)
    if "element" in data:
        return np.asarray(data["element"], dtype=float), None
    if alg.frame is not None:
        B = alg.frame.grading_element
        if alpha is not None:
            B = alpha * np.eye(alg.frame.dim) + B
        return B, None
    raise InputError(f"{alg.name}: abstract algebras need an 'element' or a 'derivation'")


def plan_grade(opts: Options) -> Plan:
    alg, doc = load_algebra(opts.require("algebra"))
    tol = opts.tol_or(GRADING_TOL)
    try:
        B, derivation = _grading_source(alg, doc.data, opts.alpha)
        decomposition = eigenspace_decompose(alg, B=B, derivation=derivation)
    except (TypeError, ValueError) as e:
        raise InputError(f"{doc.path}: {e}")

    def grading():
        residual = decomposition.grading_residual or 0.0
        return TaskResult([CheckRow("grading", "[g^mu, g^nu] in g^(mu+nu)", residual, tol)], [("spectrum", decomposition.table())])

    def algebra():
        rows = [
            CheckRow("algebra", "closure", alg.closure_residual(), CLOSURE_TOL),
            CheckRow("algebra", "jacobi identity", alg.jacobi_residual(), CLOSURE_TOL),
        ]
        return TaskResult(rows)

    tasks = [("grading", grading), ("algebra", algebra)]
    if alg.frame is not None and opts.alpha is not None:
        n = alg.frame.n

        def action():
            return TaskResult([CheckRow("grading", "s^mu(V^nu) in V^(mu+nu)", grading_action_check(opts.alpha, n), tol)])

        tasks.append(("grading-action", action))
    summary = {"algebra": alg.name, "dim": alg.dim, "matrix_size": alg.matrix_size}
    return Plan(tasks, {doc.path: doc.digest}, summary)


def plan_jordan(opts: Options) -> Plan:
    matrix, doc = load_matrix(opts.require("matrix"))

    def jordan():
        parts = jordan_decompose(matrix)
        rows = []
        for name, value in parts.residuals().items():
            default = JORDAN_RECONSTRUCTION_TOL if name == "reconstruction" else JORDAN_TOL
            rows.append(CheckRow("jordan", name, value, opts.tol_or(default)))
        tables = [(label, pd.DataFrame(getattr(parts, label))) for label in ("B_s", "B_u", "B_h", "B_e")]
        return TaskResult(rows, tables)

    return Plan([("jordan", jordan)], {doc.path: doc.digest}, {"size": int(matrix.shape[0])})


def plan_spectrum(opts: Options) -> Plan:
    if opts.alpha is None:
        raise InputError("spectrum needs --alpha")
    alpha = float(opts.alpha)
    tol = opts.tol_or(GRADING_TOL)
    spectrum = sigma_B_spectrum(alpha)

    def table():
        frame = pd.DataFrame({"eigenvalue": spectrum.values, "multiplicity": spectrum.multiplicities})
        return TaskResult([CheckRow("spectrum", "multiplicities sum to 6", abs(sum(spectrum.multiplicities) - 6), 0.5)], [("sigma_B", frame)])

    def action(n):
        def check():
            residual = grading_action_check(alpha, n)
            return TaskResult([CheckRow("grading", f"s^mu(V^nu) in V^(mu+nu) [n={n}]", residual, tol)])

        return check

    def adjoint(n):
        def check():
            frame = MinkowskiFrame(n)
            B = alpha * np.eye(frame.dim) + frame.grading_element
            decomposition = eigenspace_decompose(co_algebra(frame), B=B)
            expected = [-1.0, 0.0, 1.0]
            residual = max(min(abs(v - e) for e in expected) for v in decomposition.eigenvalues)
            row = CheckRow("grading", f"ad_B spectrum on co(1,{n + 1}) = {{-1, 0, 1}}", residual, tol)
            return TaskResult([row], [(f"ad_B on co(1,{n + 1})", decomposition.table())])

        return check

    tasks = [("sigma_B", table)]
    for n in SPECTRUM_DIMS:
        tasks += [(f"grading-action[n={n}]", action(n)), (f"ad_B[n={n}]", adjoint(n))]
    summary = {"alpha": alpha, "branch": spectrum.branch, "special": spectrum.special, "n": list(SPECTRUM_DIMS)}
    return Plan(tasks, {}, summary)


def _line_invariance(v: np.ndarray, matrices) -> float:
    worst = 0.0
    for X in matrices:
        w = X @ v
        w = w - (v @ w) / (v @ v) * v
        worst = max(worst, float(np.linalg.norm(w)))
    return worst


def plan_null_lines(opts: Options) -> Plan:
    alg, doc = load_algebra(opts.require("algebra"))
    if alg.basis is None or alg.frame is None:
        raise InputError(f"{doc.path}: null-lines needs a matrix basis with a frame")
    tol = opts.tol_or(NULL_LINE_TOL)
    frame = alg.frame

    def lines():
        found = invariant_null_lines(list(alg.basis), frame, seed=opts.seed, tol=tol)
        rows, records = [], []
        for k, v in enumerate(found):
            q = abs(frame.quadratic(v))
            inv = _line_invariance(v, alg.basis)
            rows.append(CheckRow("null-lines", f"line {k}: null", q, tol))
            rows.append(CheckRow("null-lines", f"line {k}: invariant", inv, tol))
            records.append({"line": k, **{f"e{i}": float(x) for i, x in enumerate(v)}})
        if not found:
            rows.append(CheckRow("null-lines", "no invariant null line", 0.0, tol))
        columns = ["line"] + [f"e{i}" for i in range(frame.dim)]
        return TaskResult(rows, [("null lines", pd.DataFrame(records, columns=columns))])

    summary = {"algebra": alg.name, "dim": alg.dim, "frame_dim": frame.dim}
    return Plan([("null-lines", lines)], {doc.path: doc.digest}, summary)


COMMANDS: dict[str, Callable[[Options], Plan]] = {
    "curvature": plan_curvature,
    "weyl": plan_weyl,
    "killing-check": plan_killing_check,
    "planewave-verify": plan_planewave_verify,
    "penrose": plan_penrose,
    "penrose-conformal": plan_penrose_conformal,
    "rosen-convert": plan_rosen_convert,
    "grade": plan_grade,
    "jordan": plan_jordan,
    "spectrum": plan_spectrum,
    "null-lines": plan_null_lines,
}
COMMAND_NAMES = list(COMMANDS)


def execute(opts: Options) -> Report:
    """Plan the command, fan its tasks out and assemble the report in plan order."""
    handler = COMMANDS.get(opts.command)
    if handler is None:
        raise InputError(f"unknown command {opts.command!r}")
    start = time.time()
    plan = handler(opts)
    results = asyncio.run(run_checks(plan.tasks))
    checks, tables = process_check_results(results)
    wall_time = time.time() - start
    report = Report(opts.command, list(opts.argv), opts.seed, plan.inputs, plan.summary, tables, checks, wall_time)
    logger.info(
        "[Report] %s: %d checks, %s in %.2fs",
        opts.command,
        len(checks),
        "pass" if report.passed else "FAIL",
        wall_time,
    )
    return report
