"""
Brinkmann plane waves g = 2 dt dv + x^T Q(t) x dt^2 + dx^2 on the chart
(t, v, x1, ..., xn), their Heisenberg Killing algebras and the numeric
plane-wave predicate.
"""

import logging
import math
import threading
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np
import pandas as pd

from geometry import (
    KILLING_TOL,
    Chart,
    MetricField,
    VectorField,
    conformal_killing_check,
    curvature,
    lie_bracket,
    probe_sweep,
)
from smoothfield.base import ChartField, ConstantField, CoordinateField, SmoothField, SumField, TaylorFunction
from smoothfield.errors import DomainError, EngineError
from smoothfield.expr import ExprField
from smoothfield.jet import MAX_ORDER, jet_space, log_series
from smoothfield.matexp import MatrixExpCurve
from smoothfield.ode import GridTrajectory

logger = logging.getLogger("planewave")

PLANE_WAVE_TOL = 1e-7
WRONSKIAN_TOL = 1e-8
SINGULAR_T_MIN = 0.1
SYMMETRY_TOL = 1e-12
FAMILIES = ("generic", "regular", "singular")


class FrameError(EngineError):
    pass


# ============ profiles ============


class Profile(ABC):
    n: int

    @abstractmethod
    def taylor(self, t: float, order: int) -> np.ndarray:
        """Taylor coefficients Q^(k)(t)/k!, shape (order + 1, n, n)."""

    def matrix(self, t: float) -> np.ndarray:
        return self.taylor(t, 0)[0]


class GenericProfile(Profile):
    def __init__(self, entries):
        self.n = len(entries)
        self.entries = [[entries[min(i, j)][max(i, j)] for j in range(self.n)] for i in range(self.n)]

    def taylor(self, t, order):
        out = np.empty((order + 1, self.n, self.n))
        point = np.array([t])
        for i in range(self.n):
            for j in range(i, self.n):
                out[:, i, j] = out[:, j, i] = self.entries[i][j].coeffs(point, order)
        return out

    def matrix(self, t):
        point = np.array([t])
        out = np.empty((self.n, self.n))
        for i in range(self.n):
            for j in range(i, self.n):
                out[i, j] = out[j, i] = self.entries[i][j].value(point)
        return out


def _conjugated_taylor(curve: MatrixExpCurve, S: np.ndarray, s: float, order: int) -> np.ndarray:
    """Taylor coefficients of e^{sF} S e^{-sF} = E S E^T at s (F skew)."""
    E = curve.taylor(s, order)
    out = np.zeros((order + 1,) + S.shape)
    for m in range(order + 1):
        for a in range(m + 1):
            out[m] += E[a] @ S @ E[m - a].T
    return out


class RegularProfile(Profile):
    def __init__(self, S, F):
        self.S, self.F = _check_homogeneous_data(S, F)
        self.n = self.S.shape[0]
        self.curve = MatrixExpCurve(self.F)

    def taylor(self, t, order):
        return _conjugated_taylor(self.curve, self.S, float(t), order)


class SingularProfile(Profile):
    """Q(t) = t^-2 P(log t) with P(s) = e^{sF} S e^{-sF}, defined for t >= t_min."""

    def __init__(self, S, F, t_min: float = SINGULAR_T_MIN):
        if t_min <= 0:
            raise DomainError(f"singular plane waves live on t > 0, got t_min={t_min}")
        self.S, self.F = _check_homogeneous_data(S, F)
        self.n = self.S.shape[0]
        self.t_min = float(t_min)
        self.curve = MatrixExpCurve(self.F)

    def taylor(self, t, order):
        t = float(t)
        if t < self.t_min:
            raise DomainError(f"singular profile evaluated at t={t} below t_min={self.t_min}")
        space = jet_space(1, order)
        tj = space.variable(0, t)
        s = space.compose(tj, log_series(t, order))
        P = _conjugated_taylor(self.curve, self.S, math.log(t), order)
        Pj = space.compose(s, np.moveaxis(P, 0, -1))
        return np.moveaxis(space.mul(Pj, space.power(tj, -2)), -1, 0)


def _check_homogeneous_data(S, F):
    S = np.array(S, dtype=float)
    F = np.array(F, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1] or F.shape != S.shape:
        raise ValueError(f"S and F must be square of the same size, got {S.shape} and {F.shape}")
    if np.max(np.abs(S - S.T), initial=0.0) > SYMMETRY_TOL:
        raise ValueError("S must be symmetric")
    if np.max(np.abs(F + F.T), initial=0.0) > SYMMETRY_TOL:
        raise ValueError("F must be skew-symmetric")
    return S, F


# ============ spec ============


class PlaneWaveSpec:
    def __init__(self, family: str, profile: Profile, domain: tuple[float, float]):
        if family not in FAMILIES:
            raise ValueError(f"unknown plane-wave family {family!r}, expected one of {FAMILIES}")
        lo, hi = float(domain[0]), float(domain[1])
        if not lo < hi:
            raise ValueError(f"empty t-domain [{lo}, {hi}]")
        if family == "singular" and lo <= 0:
            raise DomainError(f"singular plane wave domain [{lo}, {hi}] touches t <= 0")
        self.family = family
        self.profile = profile
        self.n = profile.n
        self.dim = self.n + 2
        self.domain = (lo, hi)
        self._fundamentals: dict[float, "FundamentalSolution"] = {}
        self._lock = threading.Lock()

    @classmethod
    def generic(cls, Q, domain=(-math.inf, math.inf)) -> "PlaneWaveSpec":
        """``Q`` is a square matrix of expressions in t or of one-variable fields."""
        entries = [
            [ExprField.parse(q, 1, {"t": 0}) if isinstance(q, str) else q for q in row] for row in Q
        ]
        n = len(entries)
        if any(len(row) != n for row in entries):
            raise ValueError("Q must be a square matrix")
        spec = cls("generic", GenericProfile(entries), domain)
        for t in np.linspace(*probe_window(spec), 5):
            m = np.array([[entries[i][j].value([t]) for j in range(n)] for i in range(n)])
            if np.max(np.abs(m - m.T)) > SYMMETRY_TOL:
                raise ValueError(f"Q(t) is not symmetric at t={t}")
        return spec

    @classmethod
    def regular(cls, S, F, domain=(-math.inf, math.inf)) -> "PlaneWaveSpec":
        return cls("regular", RegularProfile(S, F), domain)

    @classmethod
    def singular(cls, S, F, t_min: float = SINGULAR_T_MIN, t_max: float = math.inf) -> "PlaneWaveSpec":
        return cls("singular", SingularProfile(S, F, t_min), (t_min, t_max))

    @classmethod
    def from_dict(cls, doc: dict) -> "PlaneWaveSpec":
        family = doc.get("family", "generic")
        lo, hi = doc.get("domain", [None, None])
        lo = -math.inf if lo is None else float(lo)
        hi = math.inf if hi is None else float(hi)
        if family == "generic":
            spec = cls.generic(doc["Q_expr"], (lo, hi))
        elif family == "regular":
            spec = cls.regular(doc["S"], doc["F"], (lo, hi))
        elif family == "singular":
            t_min = float(doc.get("t_min", lo if math.isfinite(lo) else SINGULAR_T_MIN))
            spec = cls.singular(doc["S"], doc["F"], t_min, hi)
        else:
            raise ValueError(f"unknown plane-wave family {family!r}")
        if "n" in doc and int(doc["n"]) != spec.n:
            raise ValueError(f"spec declares n={doc['n']} but its profile is {spec.n}x{spec.n}")
        return spec

    @property
    def default_t0(self) -> float:
        return 1.0 if self.family == "singular" else 0.0

    @property
    def chart(self) -> Chart:
        return Chart(["t", "v"] + [f"x{i + 1}" for i in range(self.n)])

    def Q(self, t: float) -> np.ndarray:
        return self.profile.matrix(t)

    def Q_taylor(self, t: float, order: int) -> np.ndarray:
        return self.profile.taylor(t, order)

    def check_time(self, t: float):
        lo, hi = self.domain
        if not lo <= t <= hi:
            raise DomainError(f"t={t} outside the plane-wave domain [{lo}, {hi}]")

    def fundamental(self, t0: Optional[float] = None) -> "FundamentalSolution":
        """Fundamental solution of the Jacobi equation based at t0, built once per t0."""
        t0 = self.default_t0 if t0 is None else float(t0)
        with self._lock:
            if t0 not in self._fundamentals:
                self.check_time(t0)
                self._fundamentals[t0] = FundamentalSolution(self, t0)
            return self._fundamentals[t0]

    def __repr__(self):
        return f"PlaneWaveSpec({self.family}, n={self.n}, domain={self.domain})"


# ============ Jacobi equation ============


class FundamentalSolution:
    """
    Phi(t) solving y' = [[0, I], [Q(t), 0]] y with Phi(t0) = I. Column a holds
    the solution with initial data (e_a, 0) for a < n and (0, e_{a-n}) after.
    """

    def __init__(self, spec: PlaneWaveSpec, t0: float):
        self.spec = spec
        self.t0 = t0
        n = spec.n
        zero = np.zeros((n, n))
        eye = np.eye(n)

        def rhs(t, y):
            block = np.block([[zero, eye], [spec.Q(t), zero]])
            return block @ y

        self.trajectory = GridTrajectory(rhs, t0, np.eye(2 * n), domain=spec.domain, name=f"jacobi@{t0:g}")
        self._derivatives = lru_cache(maxsize=4096)(self._derivatives_uncached)

    def state(self, t: float) -> np.ndarray:
        return self.trajectory(t)

    def _derivatives_uncached(self, t: float, count: int) -> np.ndarray:
        n = self.spec.n
        phi = self.trajectory(t)
        out = [phi[:n], phi[n:]]
        if count >= 2:
            qt = self.spec.Q_taylor(t, min(count - 2, MAX_ORDER))
            for m in range(count - 1):
                acc = np.zeros_like(out[0])
                for j in range(m + 1):
                    acc += math.comb(m, j) * math.factorial(j) * qt[j] @ out[m - j]
                out.append(acc)
        return np.stack(out[: count + 1])

    def derivatives(self, t: float, count: int) -> np.ndarray:
        """u^(m)(t) for every fundamental column, shape (count + 1, n, 2n)."""
        return self._derivatives(float(t), int(count))


class JacobiSolution:
    """The solution of u'' = Q(t) u with u(t0) = u0, u'(t0) = udot0."""

    def __init__(self, spec: PlaneWaveSpec, t0: float, u0, udot0):
        self.spec = spec
        self.t0 = float(t0)
        self.u0 = np.array(u0, dtype=float).reshape(spec.n)
        self.udot0 = np.array(udot0, dtype=float).reshape(spec.n)
        self.data = np.concatenate([self.u0, self.udot0])
        self.fundamental = spec.fundamental(self.t0)

    def state(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        y = self.fundamental.state(t) @ self.data
        return y[: self.spec.n], y[self.spec.n :]

    def derivatives(self, t: float, count: int) -> np.ndarray:
        return self.fundamental.derivatives(t, count) @ self.data

    def taylor(self, t: float, order: int) -> np.ndarray:
        d = self.derivatives(t, order)
        return np.stack([d[m] / math.factorial(m) for m in range(order + 1)])

    def velocity_taylor(self, t: float, order: int) -> np.ndarray:
        d = self.derivatives(t, order + 1)
        return np.stack([d[m + 1] / math.factorial(m) for m in range(order + 1)])

    def residual(self, ts: Sequence[float], h: float = 5e-3) -> float:
        """
        max |u'' - Q u| along ``ts`` with u'' taken from a five-point stencil of
        the integrated velocity, so the check exercises the integrator itself.
        """
        worst = 0.0
        for t in ts:
            v = [self.state(t + k * h)[1] for k in (-2, -1, 1, 2)]
            acc = (v[0] - 8 * v[1] + 8 * v[2] - v[3]) / (12 * h)
            worst = max(worst, float(np.max(np.abs(acc - self.spec.Q(t) @ self.state(t)[0]))))
        return worst


def solve_jacobi(spec: PlaneWaveSpec, t0: float, u0, udot0) -> JacobiSolution:
    spec.check_time(float(t0))
    return JacobiSolution(spec, t0, u0, udot0)


def wronskian(a: JacobiSolution, b: JacobiSolution, t: float) -> float:
    """udot_a . u_b - u_a . udot_b, the coefficient of [xi_a, xi_b] along d_v."""
    ua, va = a.state(t)
    ub, vb = b.state(t)
    return float(va @ ub - ua @ vb)


def wronskian_matrix(solutions: Sequence[JacobiSolution], t: float) -> np.ndarray:
    states = [s.state(t) for s in solutions]
    U = np.array([u for u, _ in states])
    V = np.array([v for _, v in states])
    return V @ U.T - U @ V.T


# ============ metric and Killing fields ============


class QuadraticPotential(SmoothField):
    """H(t, v, x) = x^T Q(t) x."""

    def __init__(self, spec: PlaneWaveSpec):
        self.spec = spec
        self.num_vars = spec.dim

    def coeffs(self, point, order):
        space = jet_space(self.num_vars, order)
        qt = self.spec.Q_taylor(float(point[0]), order)
        Q = space.zeros((self.spec.n, self.spec.n))
        for k in range(order + 1):
            alpha = (k,) + (0,) * (self.num_vars - 1)
            Q[..., space.position[alpha]] = qt[k]
        x = np.stack([space.variable(2 + i, point[2 + i]) for i in range(self.spec.n)])
        return space.einsum("j,j->", space.einsum("i,ij->j", x, Q), x)

    def value(self, point):
        x = np.asarray(point[2:], dtype=float)
        return float(x @ self.spec.Q(float(point[0])) @ x)


def brinkmann_metric(spec: PlaneWaveSpec) -> MetricField:
    if spec.family == "singular" and spec.domain[0] <= 0:
        raise DomainError("singular plane waves need a domain inside t > 0")
    d = spec.dim
    comps = {(0, 0): QuadraticPotential(spec), (0, 1): ConstantField(1.0, d)}
    for i in range(2, d):
        comps[(i, i)] = ConstantField(1.0, d)
    return MetricField(spec.chart, comps, (1, d - 1), name=f"brinkmann[{spec.family}]")


def jacobi_killing_field(solution: JacobiSolution, name: str = "xi") -> VectorField:
    """u^T d_x - (udot^T x) d_v."""
    spec = solution.spec
    d = spec.dim
    comps: list[SmoothField] = [ConstantField(0.0, d)]
    v_terms = []
    x_comps = []
    for i in range(spec.n):
        u_i = TaylorFunction(lambda t, order, i=i: solution.taylor(t, order)[:, i], f"{name}.u{i + 1}")
        w_i = TaylorFunction(lambda t, order, i=i: solution.velocity_taylor(t, order)[:, i], f"{name}.du{i + 1}")
        x_comps.append(ChartField(u_i, 0, d))
        v_terms.append(-1.0 * (ChartField(w_i, 0, d) * CoordinateField(2 + i, d)))
    comps.append(SumField(v_terms))
    comps.extend(x_comps)
    return VectorField(spec.chart, comps, name)


def _linear_x_components(F: np.ndarray, d: int) -> list[SmoothField]:
    n = F.shape[0]
    out = []
    for i in range(n):
        terms = [float(F[i, j]) * CoordinateField(2 + j, d) for j in range(n) if F[i, j] != 0.0]
        out.append(SumField(terms) if terms else ConstantField(0.0, d))
    return out


def extra_killing_field(spec: PlaneWaveSpec) -> Optional[VectorField]:
    """Regular: d_t + (F x) d_x. Singular: t d_t + (F x) d_x - v d_v. Generic: none."""
    d = spec.dim
    if spec.family == "regular":
        comps = [ConstantField(1.0, d), ConstantField(0.0, d)]
    elif spec.family == "singular":
        comps = [CoordinateField(0, d), -1.0 * CoordinateField(1, d)]
    else:
        return None
    comps += _linear_x_components(spec.profile.F, d)
    return VectorField(spec.chart, comps, "transitive")


def homothety_field(spec: PlaneWaveSpec) -> VectorField:
    """2 v d_v + x^T d_x."""
    d = spec.dim
    comps = [ConstantField(0.0, d), 2.0 * CoordinateField(1, d)]
    comps += [CoordinateField(2 + i, d) for i in range(spec.n)]
    return VectorField(spec.chart, comps, "homothety")


@dataclass
class KillingBasis:
    spec: PlaneWaveSpec
    t0: float
    xi0: VectorField
    transverse: list[VectorField]
    solutions: list[JacobiSolution]
    extra: Optional[VectorField]
    homothety: VectorField
    wronskian: np.ndarray

    def heisenberg(self) -> list[VectorField]:
        return [self.xi0] + list(self.transverse)

    def killing_fields(self) -> list[VectorField]:
        out = self.heisenberg()
        if self.extra is not None:
            out.append(self.extra)
        return out

    def structure_constants(self) -> np.ndarray:
        return heisenberg_structure_constants(self.wronskian)


def killing_basis(spec: PlaneWaveSpec, t0: Optional[float] = None) -> KillingBasis:
    t0 = spec.default_t0 if t0 is None else float(t0)
    n = spec.n
    solutions = []
    for a in range(2 * n):
        data = np.zeros(2 * n)
        data[a] = 1.0
        solutions.append(solve_jacobi(spec, t0, data[:n], data[n:]))
    names = [f"xi[u=e{a + 1}]" for a in range(n)] + [f"xi[du=e{a + 1}]" for a in range(n)]
    transverse = [jacobi_killing_field(s, name) for s, name in zip(solutions, names)]
    basis = KillingBasis(
        spec=spec,
        t0=t0,
        xi0=VectorField.coordinate(spec.chart, 1, "xi0"),
        transverse=transverse,
        solutions=solutions,
        extra=extra_killing_field(spec),
        homothety=homothety_field(spec),
        wronskian=wronskian_matrix(solutions, t0),
    )
    logger.info("[Killing] built %d Heisenberg fields for %s at t0=%g", 2 * n + 1, spec, t0)
    return basis


def heisenberg_structure_constants(w: np.ndarray) -> np.ndarray:
    """c[a, b, c] for the basis (xi0, xi1, ..., xi2n) with [xi_a, xi_b] = w_ab xi0."""
    m = w.shape[0] + 1
    c = np.zeros((m, m, m))
    c[1:, 1:, 0] = w
    return c


# ============ plane-wave predicate ============


def perp_frame(metric: np.ndarray, xi: np.ndarray) -> np.ndarray:
    """
    Columns spanning xi^perp: e_j - (w_j / w_p) e_p with w = g xi and p the
    pivot of largest |w_p| (lowest index on ties).
    """
    omega = metric @ xi
    p = int(np.argmax(np.abs(omega)))
    if abs(omega[p]) < 1e-12:
        raise FrameError("xi vanishes at the probe; no frame of its orthogonal complement")
    cols = []
    for j in range(len(xi)):
        if j == p:
            continue
        e = np.zeros(len(xi))
        e[j] = 1.0
        e[p] = -omega[j] / omega[p]
        cols.append(e)
    return np.array(cols).T


@dataclass
class PlaneWaveVerdict:
    parallel_null_residual: float
    curvature_flat_on_perp_residual: float
    nabla_R_on_perp_residual: float
    passed: bool
    flat: bool
    tol: float
    table: pd.DataFrame
    failures: list = field(default_factory=list)

    @property
    def is_plane_wave(self) -> bool:
        return self.passed and not self.flat


def _plane_wave_probe(g: MetricField, xi: VectorField, p: np.ndarray) -> dict:
    bundle = curvature(g, p)
    d = g.dim
    space = jet_space(d, 1)
    X = xi.jets(p, 1)
    xv = X[:, 0]
    # nabla_i xi^k = d_i xi^k + Gamma^k_ij xi^j
    nabla_xi = space.gradient(X)[..., 0] + np.einsum("kij,j->ik", bundle.christoffel, xv)
    null = float(xv @ bundle.metric @ xv)
    B = perp_frame(bundle.metric, xv)
    r_perp = np.einsum("lkij,ia,jb->lkab", bundle.riemann_up, B, B)
    nabla_perp = np.einsum("mijkl,ma->aijkl", bundle.nabla_riemann, B)
    return {
        "parallel": float(np.max(np.abs(nabla_xi))),
        "null": abs(null),
        "curvature_perp": float(np.max(np.abs(r_perp))),
        "nabla_perp": float(np.max(np.abs(nabla_perp))),
        "riemann": bundle.riemann_norm,
    }


def verify_plane_wave(g: MetricField, xi: VectorField, probes, tol: float = PLANE_WAVE_TOL) -> PlaneWaveVerdict:
    rows, failures = [], []
    for p in probes:
        p = np.asarray(p, dtype=float)
        try:
            row = _plane_wave_probe(g, xi, p)
        except FrameError:
            raise
        except EngineError as e:
            logger.warning("[Probe] plane-wave check failed at %s: %s", np.round(p, 6).tolist(), e)
            failures.append((tuple(p.tolist()), str(e)))
            continue
        rows.append({"point": tuple(np.round(p, 12)), **row})
    table = pd.DataFrame(rows, columns=["point", "parallel", "null", "curvature_perp", "nabla_perp", "riemann"])
    if table.empty:
        nan = float("nan")
        return PlaneWaveVerdict(nan, nan, nan, False, False, tol, table, failures)
    parallel_null = float(max(table["parallel"].max(), table["null"].max()))
    curv = float(table["curvature_perp"].max())
    nabla = float(table["nabla_perp"].max())
    passed = not failures and max(parallel_null, curv, nabla) < tol
    flat = float(table["riemann"].max()) < tol
    return PlaneWaveVerdict(parallel_null, curv, nabla, passed, flat, tol, table, failures)


# ============ Killing-field characterization ============


@dataclass
class CheckRow:
    stage: str
    check: str
    residual: float
    tol: float

    @property
    def passed(self) -> bool:
        return bool(self.residual < self.tol)


@dataclass
class PropositionReport:
    rows: list[CheckRow]
    verdict: Optional[PlaneWaveVerdict]

    @property
    def hypotheses_passed(self) -> bool:
        return all(r.passed for r in self.rows if r.stage == "hypothesis")

    @property
    def conclusions_passed(self) -> bool:
        concl = [r for r in self.rows if r.stage == "conclusion"]
        return bool(concl) and all(r.passed for r in concl)

    @property
    def failed_stage(self) -> Optional[str]:
        if not self.hypotheses_passed:
            return "hypothesis"
        if not self.conclusions_passed:
            return "conclusion"
        return None

    def table(self) -> pd.DataFrame:
        return pd.DataFrame(
            [{"stage": r.stage, "check": r.check, "residual": r.residual, "tol": r.tol, "passed": r.passed} for r in self.rows]
        )


def check_prop_pwkilling(
    fields: Sequence[VectorField],
    g: MetricField,
    probes,
    tol: float = PLANE_WAVE_TOL,
    killing_tol: float = KILLING_TOL,
) -> PropositionReport:
    """
    Hypotheses: every field is Killing, the fields span xi0^perp, [xi0, xi_i] = 0
    and [xi_i, xi_j] lies along xi0. Conclusions: xi0 is parallel and null and
    the curvature conditions hold on xi0^perp. Conclusions are only evaluated
    once every hypothesis holds.
    """
    if len(fields) < 2:
        raise ValueError("need xi0 and at least one further field")
    probes = [np.asarray(p, dtype=float) for p in probes]
    xi0, rest = fields[0], list(fields[1:])
    rows: list[CheckRow] = []

    for X in fields:
        verdict = conformal_killing_check(g, X, probes, killing_tol)
        residual = max(verdict.max_residual, float(np.max(np.abs(verdict.lambdas))))
        rows.append(CheckRow("hypothesis", f"killing:{X.name}", residual, killing_tol))

    def span_residual(p):
        metric = g.matrix(p)
        z = xi0.values(p)
        vals = np.array([X.values(p) for X in fields]).T
        sv = np.linalg.svd(vals, compute_uv=False)
        rank = int(np.sum(sv > 1e-8 * max(sv[0], 1.0)))
        ortho = float(np.max(np.abs(z @ metric @ vals)))
        return ortho if rank == g.dim - 1 else math.inf

    results, failures = probe_sweep(probes, span_residual, "span")
    span = max([r for _, r in results] + [math.inf if failures else 0.0])
    rows.append(CheckRow("hypothesis", "span:xi0-perp", span, tol))

    central = 0.0
    for X in rest:
        bracket = lie_bracket(xi0, X)
        central = max(central, max(float(np.max(np.abs(bracket.values(p)))) for p in probes))
    rows.append(CheckRow("hypothesis", "bracket:[xi0,xi_i]=0", central, tol))

    along = 0.0
    for a in range(len(rest)):
        for b in range(a + 1, len(rest)):
            bracket = lie_bracket(rest[a], rest[b])
            for p in probes:
                z = xi0.values(p)
                v = bracket.values(p)
                along = max(along, float(np.max(np.abs(v - (v @ z) / (z @ z) * z))))
    rows.append(CheckRow("hypothesis", "bracket:[xi_i,xi_j] in span(xi0)", along, tol))

    report = PropositionReport(rows, None)
    if not report.hypotheses_passed:
        bad = [r.check for r in rows if not r.passed]
        logger.info("[Prop] hypotheses fail: %s", ", ".join(bad))
        return report

    verdict = verify_plane_wave(g, xi0, probes, tol)
    rows.append(CheckRow("conclusion", "parallel-null", verdict.parallel_null_residual, tol))
    rows.append(CheckRow("conclusion", "R(X,Y)=0 on perp", verdict.curvature_flat_on_perp_residual, tol))
    rows.append(CheckRow("conclusion", "nabla_X R=0 on perp", verdict.nabla_R_on_perp_residual, tol))
    report.verdict = verdict
    if report.failed_stage == "conclusion":
        logger.error("[Prop] hypotheses hold but conclusions fail; engine inconsistency")
    return report


# ============ probes ============


def probe_window(spec: PlaneWaveSpec) -> tuple[float, float]:
    """Default t-window for probes: [-1, 1] or [0.5, 2] (singular), moved inside the domain."""
    lo, hi = spec.domain
    a, b = (0.5, 2.0) if spec.family == "singular" else (-1.0, 1.0)
    if a < lo or b > hi:
        a = lo if math.isfinite(lo) else hi - (b - a)
        b = min(hi, a + (b - a))
    return a, b


def probe_points(spec: PlaneWaveSpec, count: int = 20, seed: int = 42, window=None) -> list[np.ndarray]:
    rng = np.random.default_rng(seed)
    lo, hi = window or probe_window(spec)
    pts = []
    for _ in range(count):
        t = rng.uniform(lo, hi)
        rest = rng.uniform(-1.0, 1.0, size=spec.n + 1)
        pts.append(np.concatenate([[t], rest]))
    return pts
