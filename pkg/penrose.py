"""
Penrose limits of metrics written in coordinates adapted to a null geodesic

    g = 2 du dv + a dv^2 + 2 b_i dv dx_i + c_ij dx_i dx_j,   gamma(u) = (u, 0, 0),

the rescaling family eps^-2 Phi_eps^* g with Phi_eps(u, v, x) = (u, eps^2 v, eps x),
the behaviour of the limit under a conformal change e^sigma g, and the
Brinkmann/Rosen bridge for plane waves.
"""

import logging
import math
import threading
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Optional, Sequence

import numpy as np
import pandas as pd
from scipy import optimize

from geometry import Chart, ChartMismatchError, MetricField, curvature, geodesic_residual
from planewave import CheckRow, PlaneWaveSpec, QuadraticPotential, probe_window
from smoothfield.base import (
    ChartField,
    ConstantField,
    DiagonalPullback,
    ExpField,
    RestrictionField,
    ScaledField,
    SmoothField,
    TaylorFunction,
    UnivariateField,
)
from smoothfield.errors import DomainError, EngineError
from smoothfield.expr import ExprField
from smoothfield.jet import invert_series, jet_space
from smoothfield.ode import GridTrajectory

logger = logging.getLogger("penrose")

SHAPE_TOL = 1e-10
GEODESIC_TOL = 1e-7
DEGENERATE_EIG = 1e-10
CONJUGATE_DET = 1e-6
ROOT_TOL = 1e-12
INVERSE_TOL = 1e-9
CONFORMAL_TOL = 1e-8
CONVERGENCE_RATIO = 0.6
DEFAULT_EPS = tuple(2.0 ** -k for k in range(7))
GRID_V = (-0.5, 0.0, 0.5)
GRID_S = (-0.5, 0.0, 0.5)


class ShapeViolationError(EngineError):
    pass


class GeodesicResidualError(EngineError):
    pass


class DegenerateProfileError(EngineError):
    pass


class RootFindingError(EngineError):
    pass


class ConjugatePointError(EngineError):
    def __init__(self, u: float, message: Optional[str] = None):
        self.u = float(u)
        super().__init__(message or f"transverse frame degenerates (conjugate point) at u={u:.6g}")


def adapted_chart(n: int) -> Chart:
    return Chart(["u", "v"] + [f"x{i + 1}" for i in range(n)])


def default_probe_grid(n: int, u_window: tuple[float, float] = (-1.0, 1.0)) -> list[np.ndarray]:
    """5 x 3 x 3 grid in (u, v, x) with x = s (1, ..., 1)."""
    points = []
    for u in np.linspace(u_window[0], u_window[1], 5):
        for v in GRID_V:
            for s in GRID_S:
                points.append(np.array([u, v] + [s] * n))
    return points


# ============ adapted metrics ============


@dataclass
class AdaptedMetric:
    metric: MetricField
    n: int
    probes: list[np.ndarray]
    u_domain: tuple[float, float]
    shape_residual: float
    geodesic_residual: float

    def a(self) -> SmoothField:
        return self.metric.component(1, 1)

    def b(self, i: int) -> SmoothField:
        return self.metric.component(1, 2 + i)

    def c(self, i: int, j: int) -> SmoothField:
        return self.metric.component(2 + i, 2 + j)

    def central_point(self, u: float) -> np.ndarray:
        p = np.zeros(self.n + 2)
        p[0] = u
        return p

    def probe_us(self) -> list[float]:
        return sorted({float(p[0]) for p in self.probes})


def validate_adapted(
    g: MetricField,
    probes=None,
    u_domain: tuple[float, float] = (-math.inf, math.inf),
    tol: float = SHAPE_TOL,
    geodesic_tol: float = GEODESIC_TOL,
) -> AdaptedMetric:
    """Check g_uu = 0, g_uv = 1, g_ux = 0 at every probe and that u -> (u, 0, 0) is an affine null geodesic."""
    d = g.dim
    names = g.chart.names
    if names[0] != "u" or names[1] != "v":
        raise ChartMismatchError(f"adapted metrics live on a chart (u, v, x...), got {g.chart}")
    n = d - 2
    probes = [np.asarray(p, dtype=float) for p in (probes if probes is not None else default_probe_grid(n))]
    expected = {(0, 0): 0.0, (0, 1): 1.0}
    expected.update({(0, k): 0.0 for k in range(2, d)})
    shape = 0.0
    for p in probes:
        m = g.matrix(p)
        for (i, j), value in expected.items():
            dev = abs(m[i, j] - value)
            if dev > tol:
                raise ShapeViolationError(
                    f"g_{names[i]}{names[j]} = {m[i, j]:.6g} at probe {np.round(p, 6).tolist()}, expected {value:g}"
                )
            shape = max(shape, dev)

    am = AdaptedMetric(g, n, probes, (float(u_domain[0]), float(u_domain[1])), shape, 0.0)
    e_u = np.zeros(d)
    e_u[0] = 1.0
    worst = 0.0
    for u in am.probe_us():
        point = am.central_point(u)
        residual = float(np.max(np.abs(geodesic_residual(g, point, e_u))))
        if residual > geodesic_tol:
            raise GeodesicResidualError(f"u-line is not a geodesic at u={u:.6g}: residual {residual:.3e}")
        worst = max(worst, residual)
        c = g.matrix(point)[2:, 2:]
        if np.linalg.eigvalsh(c).min() <= 0:
            raise ShapeViolationError(f"c_ij is not positive definite on the central geodesic at u={u:.6g}")
    am.geodesic_residual = worst
    logger.info("[Adapted] %s: shape residual %.3e, geodesic residual %.3e", g.name, shape, worst)
    return am


class _SwappedShifted(SmoothField):
    """p -> field(p[1] + shift, p[0], p[2:]); swaps the roles of the first two coordinates."""

    def __init__(self, field: SmoothField, shift: float):
        self.field = field
        self.shift = float(shift)
        self.num_vars = field.num_vars

    def _point(self, point):
        p = np.array(point, dtype=float)
        p[0], p[1] = point[1] + self.shift, point[0]
        return p

    def coeffs(self, point, order):
        space = jet_space(self.num_vars, order)
        inner = self.field.coeffs(self._point(point), order)
        swapped = [space.position[(a[1], a[0]) + a[2:]] for a in space.indices]
        return inner[swapped]

    def value(self, point):
        return self.field.value(self._point(point))


def adapted_from_brinkmann(spec: PlaneWaveSpec, t_c: Optional[float] = None) -> MetricField:
    """
    The plane wave seen from the null geodesic tangent to d_v:
    g = 2 du dv + x^T Q(t_c + v) x dv^2 + dx^2.
    """
    t_c = spec.default_t0 if t_c is None else float(t_c)
    spec.check_time(t_c)
    d = spec.dim
    comps = {(0, 1): ConstantField(1.0, d), (1, 1): _SwappedShifted(QuadraticPotential(spec), t_c)}
    for i in range(2, d):
        comps[(i, i)] = ConstantField(1.0, d)
    return MetricField(adapted_chart(spec.n), comps, (1, d - 1), name=f"adapted[{spec.family}@{t_c:g}]")


# ============ Rosen waves ============


class RosenWave:
    """2 du dv + cbar_ij(u) dx_i dx_j with cbar a symmetric matrix of one-variable fields."""

    def __init__(
        self,
        profile: Sequence[Sequence[UnivariateField]],
        domain: tuple[float, float] = (-math.inf, math.inf),
        name: str = "rosen",
        frame: Optional[Callable[[float], np.ndarray]] = None,
    ):
        self.profile = [list(row) for row in profile]
        self.n = len(self.profile)
        if any(len(row) != self.n for row in self.profile):
            raise ValueError("Rosen profile must be a square matrix")
        self.domain = (float(domain[0]), float(domain[1]))
        self.name = name
        self.frame = frame

    @classmethod
    def from_expressions(cls, exprs, domain=(-math.inf, math.inf), name: str = "rosen") -> "RosenWave":
        def univariate(src):
            field = ExprField.parse(src, 1, {"u": 0})
            return TaylorFunction(lambda u, order, f=field: f.coeffs(np.array([u]), order), src)

        return cls([[univariate(str(s)) for s in row] for row in exprs], domain, name)

    @property
    def chart(self) -> Chart:
        return adapted_chart(self.n)

    def matrix(self, u: float) -> np.ndarray:
        return self.taylor(u, 0)[0]

    def taylor(self, u: float, order: int) -> np.ndarray:
        out = np.empty((order + 1, self.n, self.n))
        for i in range(self.n):
            for j in range(i, self.n):
                out[:, i, j] = out[:, j, i] = self.profile[i][j].taylor(float(u), order)
        return out

    def metric(self) -> MetricField:
        d = self.n + 2
        comps = {(0, 1): ConstantField(1.0, d)}
        for i in range(self.n):
            for j in range(i, self.n):
                comps[(2 + i, 2 + j)] = ChartField(self.profile[i][j], 0, d)
        return MetricField(self.chart, comps, (1, d - 1), name=self.name)

    def check_definite(self, us) -> float:
        """Smallest eigenvalue of cbar over ``us``; raises when cbar degenerates."""
        smallest = math.inf
        for u in us:
            eig = float(np.linalg.eigvalsh(self.matrix(u)).min())
            if eig <= DEGENERATE_EIG:
                raise DegenerateProfileError(f"{self.name}: cbar degenerate at u={u:.6g} (eigenvalue {eig:.3e})")
            smallest = min(smallest, eig)
        return smallest

    def samples(self, us) -> pd.DataFrame:
        rows = []
        for u in us:
            m = self.matrix(u)
            row = {"u": float(u)}
            for i in range(self.n):
                for j in range(i, self.n):
                    row[f"c{i + 1}{j + 1}"] = float(m[i, j])
            rows.append(row)
        return pd.DataFrame(rows)

    def __repr__(self):
        return f"RosenWave({self.name}, n={self.n})"


def penrose_limit(am: AdaptedMetric) -> RosenWave:
    """PL_g = 2 du dv + c_ij(u, 0, 0) dx_i dx_j."""
    base = np.zeros(am.n + 2)
    profile = [[RestrictionField(am.c(i, j), base, 0) for j in range(am.n)] for i in range(am.n)]
    limit = RosenWave(profile, am.u_domain, name=f"PL[{am.metric.name}]")
    limit.check_definite(am.probe_us())
    return limit


# ============ rescaling ============


def rescaled_metric(am: AdaptedMetric, eps: float) -> MetricField:
    """g_eps = eps^-2 Phi_eps^* g."""
    eps = float(eps)
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    scales = np.array([1.0, eps**2] + [eps] * am.n)
    comps = {}
    for (i, j), f in am.metric.components().items():
        comps[(i, j)] = ScaledField(scales[i] * scales[j] / eps**2, DiagonalPullback(f, scales))
    return MetricField(am.metric.chart, comps, am.metric.signature, name=f"{am.metric.name}[eps={eps:g}]")


def rescale_convergence(am: AdaptedMetric, probes=None, eps_list: Sequence[float] = DEFAULT_EPS) -> pd.DataFrame:
    """Sup-norm deviation |g_eps - PL_g| over the probes for each eps, with successive ratios."""
    probes = [np.asarray(p, dtype=float) for p in (probes if probes is not None else am.probes)]
    limit = penrose_limit(am).metric()
    targets = [limit.matrix(p) for p in probes]
    rows = []
    previous = None
    for eps in eps_list:
        g_eps = rescaled_metric(am, eps)
        deviation = 0.0
        for p, target in zip(probes, targets):
            try:
                m = g_eps.matrix(p)
            except DomainError as e:
                raise DomainError(f"probe {np.round(p, 6).tolist()} leaves the domain under Phi_eps, eps={eps:g}: {e}")
            deviation = max(deviation, float(np.max(np.abs(m - target))))
        ratio = deviation / previous if previous else math.nan
        rows.append({"eps": float(eps), "deviation": deviation, "ratio": ratio})
        previous = deviation
    table = pd.DataFrame(rows)
    logger.info("[Rescale] %s: deviation %.3e at eps=%g", am.metric.name, rows[-1]["deviation"], rows[-1]["eps"])
    return table


def first_order_convergence(table: pd.DataFrame, ratio: float = CONVERGENCE_RATIO, tail: int = 3) -> bool:
    """Deviations never grow and the last ``tail`` ratios stay below ``ratio`` (or everything is zero)."""
    dev = table["deviation"].to_numpy()
    if np.all(dev == 0.0):
        return True
    if np.any(np.diff(dev) > 1e-15):
        return False
    return bool((table["ratio"].iloc[-tail:] <= ratio).all())


# ============ conformal change ============


class ConformalFlow:
    """
    K = e^sigma and f with df/du = K, f(u_base, v, x) = 0, integrated along
    u-lines together with its transverse jets; h inverts f in u.
    """

    def __init__(self, sigma: SmoothField, u_base: float = 0.0, u_domain=(-math.inf, math.inf)):
        self.sigma = sigma
        self.K = ExpField(sigma)
        self.num_vars = sigma.num_vars
        self.n = self.num_vars - 2
        self.u_base = float(u_base)
        self.u_domain = (float(u_domain[0]), float(u_domain[1]))
        self._lines: dict[tuple, GridTrajectory] = {}
        self._lock = threading.Lock()
        self.profile_taylor = lru_cache(maxsize=1024)(self._profile_taylor)
        self.f = FlowPotential(self)

    def _line(self, transverse: tuple, order: int) -> GridTrajectory:
        key = (order, transverse)
        with self._lock:
            line = self._lines.get(key)
            if line is None:
                space = jet_space(self.num_vars, order)
                mask = [k for k, a in enumerate(space.indices) if a[0] == 0]
                rest = np.array(transverse)

                def rhs(s, y):
                    return self.K.coeffs(np.concatenate([[s], rest]), order)[mask]

                line = GridTrajectory(
                    rhs, self.u_base, np.zeros(len(mask)), domain=self.u_domain, name=f"flow{transverse}@{order}"
                )
                self._lines[key] = line
            return line

    def f_coeffs(self, point, order: int) -> np.ndarray:
        point = np.asarray(point, dtype=float)
        space = jet_space(self.num_vars, order)
        transverse = tuple(float(x) for x in point[1:])
        integral = self._line(transverse, order)(point[0])
        k = self.K.coeffs(point, order)
        out = space.zeros()
        it = iter(integral)
        for pos, a in enumerate(space.indices):
            if a[0] == 0:
                out[pos] = next(it)
            else:
                lower = (a[0] - 1,) + a[1:]
                out[pos] = k[space.position[lower]] / a[0]
        return out

    def f_value(self, u: float, rest=None) -> float:
        rest = np.zeros(self.num_vars - 1) if rest is None else np.asarray(rest, dtype=float)
        return float(self._line(tuple(float(x) for x in rest), 0)(u)[0])

    def h(self, U: float, rest=None) -> float:
        """u with f(u, v, x) = U; bisection to bracket tightly, then Newton to ROOT_TOL."""
        rest = np.zeros(self.num_vars - 1) if rest is None else np.asarray(rest, dtype=float)
        lo_dom, hi_dom = self.u_domain

        def residual(u):
            return self.f_value(u, rest) - U

        def slope(u):
            return self.K.value(np.concatenate([[u], rest]))

        guess = self.u_base + (U / slope(self.u_base))
        width = 1.0
        for _ in range(60):
            lo = min(max(guess - width, lo_dom), hi_dom)
            hi = max(min(guess + width, hi_dom), lo_dom)
            if residual(lo) <= 0.0 <= residual(hi):
                break
            width *= 2.0
        else:
            raise RootFindingError(f"cannot bracket f(u) = {U:.6g} on the line {np.round(rest, 6).tolist()}")
        try:
            rough = optimize.bisect(residual, lo, hi, xtol=1e-6) if lo < hi else lo
            root = optimize.newton(residual, rough, fprime=slope, tol=ROOT_TOL, maxiter=50)
        except (RuntimeError, ValueError) as e:
            raise RootFindingError(f"inverse of f failed at U={U:.6g}: {e}") from e
        if abs(residual(root)) > INVERSE_TOL:
            raise RootFindingError(f"inverse of f at U={U:.6g} has residual {residual(root):.3e}")
        return float(root)

    def phi(self, point) -> np.ndarray:
        """(u, v, x) -> (f(u, 0, 0), v, x)."""
        p = np.array(point, dtype=float)
        p[0] = self.f_value(p[0])
        return p

    def _profile_taylor(self, U: float, order: int, c_series: Callable) -> np.ndarray:
        u0 = self.h(U)
        base = np.zeros(self.num_vars)
        kbar = RestrictionField(self.K, base, 0).taylor(u0, order)
        f_series = np.zeros(order + 1)
        f_series[0] = U
        for k in range(order):
            f_series[k + 1] = kbar[k] / (k + 1)
        h_series = invert_series(f_series)
        h_series[0] = u0
        cbar = c_series(u0, order)
        space = jet_space(1, order)
        out = np.empty_like(cbar)
        for i in range(cbar.shape[1]):
            for j in range(cbar.shape[2]):
                kc = np.convolve(kbar, cbar[:, i, j])[: order + 1]
                out[:, i, j] = space.compose(h_series, kc)
        return out


class FlowPotential(SmoothField):
    def __init__(self, flow: ConformalFlow):
        self.flow = flow
        self.num_vars = flow.num_vars

    def coeffs(self, point, order):
        return self.flow.f_coeffs(point, order)

    def value(self, point):
        return self.flow.f_value(point[0], point[1:])


@dataclass
class ConformalReport:
    rows: list[CheckRow]
    u_base: float

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)

    def table(self) -> pd.DataFrame:
        return pd.DataFrame(
            [{"check": r.check, "residual": r.residual, "tol": r.tol, "passed": r.passed} for r in self.rows]
        )


def pulled_back_metric(g: MetricField, flow: ConformalFlow, u: float) -> np.ndarray:
    """
    Components of G^*(K g) at G^-1(u, 0, 0), where G(U, v, x) = (h(U, v, x), v, x).
    The Jacobian of h comes from the first-order jet of f: du/dU = 1/K and
    du/dy = -(df/dy)/K for the other coordinates.
    """
    point = np.zeros(g.dim)
    point[0] = u
    df = flow.f_coeffs(point, 1)[1:]
    Kp = flow.K.value(point)
    J = np.eye(g.dim)
    J[0, :] = -df / Kp
    J[0, 0] = 1.0 / Kp
    return J.T @ (Kp * g.matrix(point)) @ J


def conformal_limit_residuals(
    am: AdaptedMetric, flow: ConformalFlow, transformed: RosenWave, us: Sequence[float]
) -> tuple[float, float]:
    """
    Compare a limit profile of e^sigma g against the metric itself at each u.

    The first residual is the gap between the transverse block of G^*(K g)
    and transformed(f(u)). The second pulls 2 dU dv + (that block) dx dx back
    by phi and compares it with Kbar(u) PL[g](u). Neither goes through the
    series composition that builds ``transformed``.
    """
    n = am.n
    transverse = natural = 0.0
    for u in us:
        U = flow.f_value(u)
        block = pulled_back_metric(am.metric, flow, u)[2:, 2:]
        transverse = max(transverse, float(np.max(np.abs(block - transformed.matrix(U)))))

        kbar = flow.K.value(am.central_point(u))
        M = np.zeros((n + 2, n + 2))
        M[0, 1] = M[1, 0] = 1.0
        M[2:, 2:] = block
        J = np.eye(n + 2)
        J[0, 0] = kbar
        pulled = J.T @ M @ J
        target = np.zeros((n + 2, n + 2))
        target[0, 1] = target[1, 0] = 1.0
        target[2:, 2:] = am.metric.matrix(am.central_point(u))[2:, 2:]
        natural = max(natural, float(np.max(np.abs(pulled - kbar * target))))
    return transverse, natural


def penrose_of_conformal(
    am: AdaptedMetric,
    sigma: SmoothField,
    probes=None,
    u_base: Optional[float] = None,
    tol: float = CONFORMAL_TOL,
) -> tuple[RosenWave, ConformalFlow, ConformalReport]:
    """
    Penrose limit of e^sigma g through the chart U = f(u, v, x), and the check
    phi^* PL[e^sigma g] = K(u, 0, 0) PL[g] at the probes.
    """
    if sigma.num_vars != am.metric.dim:
        raise ChartMismatchError(f"sigma lives on {sigma.num_vars} variables, metric on {am.metric.dim}")
    probes = [np.asarray(p, dtype=float) for p in (probes if probes is not None else am.probes)]
    if u_base is None:
        lo, hi = am.u_domain
        u_base = 0.0 if lo <= 0.0 <= hi else lo
    limit = penrose_limit(am)
    flow = ConformalFlow(sigma, u_base, am.u_domain)
    n = am.n

    def c_series(u0, order):
        return limit.taylor(u0, order)

    def entry(i, j):
        return TaylorFunction(lambda U, order: flow.profile_taylor(float(U), int(order), c_series)[:, i, j], f"C{i + 1}{j + 1}")

    transformed = RosenWave(
        [[entry(i, j) for j in range(n)] for i in range(n)],
        domain=(-math.inf, math.inf),
        name=f"PL[exp(sigma)*{am.metric.name}]",
    )

    rows = []
    k_min = min(flow.K.value(p) for p in probes)
    rows.append(CheckRow("flow", "K>0", 0.0 if k_min > 0 else math.inf, 1.0))

    inverse = 0.0
    for p in probes:
        U = flow.f_value(p[0], p[1:])
        inverse = max(inverse, abs(flow.f_value(flow.h(U, p[1:]), p[1:]) - U))
    rows.append(CheckRow("flow", "f(h(U))=U", inverse, INVERSE_TOL))

    shape = 0.0
    for u in am.probe_us():
        pulled = pulled_back_metric(am.metric, flow, u)
        expected = np.zeros(n + 2)
        expected[1] = 1.0
        shape = max(shape, float(np.max(np.abs(pulled[0] - expected))))
    rows.append(CheckRow("adapted", "G*g_sigma shape on central line", shape, tol))

    transverse, natural = conformal_limit_residuals(am, flow, transformed, sorted({float(p[0]) for p in probes}))
    rows.append(CheckRow("limit", "G*g_sigma transverse=PL[g_sigma]", transverse, tol))
    rows.append(CheckRow("limit", "phi^*PL[g_sigma]=Kbar*PL[g]", natural, tol))

    report = ConformalReport(rows, u_base)
    level = logging.INFO if report.passed else logging.WARNING
    logger.log(level, "[Conformal] %s: naturality residual %.3e", am.metric.name, natural)
    return transformed, flow, report


# ============ Brinkmann / Rosen ============


def _rosen_taylor(fundamental, u: float, order: int, n: int) -> np.ndarray:
    E = fundamental.derivatives(u, order)[:, :, :n]
    out = np.zeros((order + 1, n, n))
    for k in range(order + 1):
        acc = np.zeros((n, n))
        for j in range(k + 1):
            acc += math.comb(k, j) * E[j].T @ E[k - j]
        out[k] = acc / math.factorial(k)
    return out


def brinkmann_to_rosen(
    spec: PlaneWaveSpec,
    window: Optional[tuple[float, float]] = None,
    t0: Optional[float] = None,
    samples: int = 41,
) -> RosenWave:
    """
    cbar(u) = E(u)^T E(u) with E'' = Q E, E(t0) = I, E'(t0) = 0; u is the
    Brinkmann t and x = E(u) y.
    """
    window = probe_window(spec) if window is None else (float(window[0]), float(window[1]))
    t0 = spec.default_t0 if t0 is None else float(t0)
    if not window[0] <= t0 <= window[1]:
        raise ValueError(f"t0={t0} outside the window {window}")
    n = spec.n
    fundamental = spec.fundamental(t0)

    def det(u):
        return float(np.linalg.det(fundamental.state(u)[:n, :n]))

    previous = None
    for u in np.linspace(window[0], window[1], samples):
        value = det(u)
        if abs(value) < CONJUGATE_DET:
            raise ConjugatePointError(u)
        if previous is not None and np.sign(value) != np.sign(previous[1]):
            raise ConjugatePointError(optimize.brentq(det, previous[0], u, xtol=1e-10))
        previous = (u, value)

    def entry(i, j):
        return TaylorFunction(lambda u, order: _rosen_taylor(fundamental, u, order, n)[:, i, j], f"c{i + 1}{j + 1}")

    rosen = RosenWave(
        [[entry(i, j) for j in range(n)] for i in range(n)],
        domain=window,
        name=f"rosen[{spec.family}]",
        frame=lambda u: fundamental.state(u)[:n, :n],
    )
    logger.info("[Rosen] %s converted on u in [%g, %g]", spec, *window)
    return rosen


@dataclass
class DichotomyResult:
    flat_limit: RosenWave
    self_limit: RosenWave
    rosen: RosenWave
    flat_residual: float
    profile_residual: float
    curvature_residual: float
    tol: float

    @property
    def flat(self) -> bool:
        return self.flat_residual < 1e-9

    @property
    def reproduces_input(self) -> bool:
        return self.profile_residual < 1e-12 and self.curvature_residual < self.tol

    def table(self) -> pd.DataFrame:
        return pd.DataFrame(
            [
                {"limit": "xi-tangent", "check": "riemann=0", "residual": self.flat_residual, "tol": 1e-9},
                {"limit": "transversal", "check": "profile", "residual": self.profile_residual, "tol": 0.0},
                {"limit": "transversal", "check": "curvature", "residual": self.curvature_residual, "tol": self.tol},
            ]
        )


def plane_wave_limit_dichotomy(
    spec: PlaneWaveSpec,
    t_c: Optional[float] = None,
    window: Optional[tuple[float, float]] = None,
    probe_count: int = 20,
    tol: float = 1e-6,
) -> DichotomyResult:
    """
    Penrose limits of a plane wave along the d_v-tangent null geodesic (flat)
    and along the transversal one (the wave itself, in Rosen form).
    """
    window = probe_window(spec) if window is None else (float(window[0]), float(window[1]))
    n = spec.n

    tangent = validate_adapted(adapted_from_brinkmann(spec, t_c))
    flat_limit = penrose_limit(tangent)
    flat_metric = flat_limit.metric()
    grid = default_probe_grid(n, window)
    step = max(1, len(grid) // probe_count)
    flat_residual = max(curvature(flat_metric, p).riemann_norm for p in grid[::step][:probe_count])

    rosen = brinkmann_to_rosen(spec, window)
    transversal = validate_adapted(rosen.metric(), grid, u_domain=window)
    self_limit = penrose_limit(transversal)
    us = np.linspace(window[0], window[1], 9)
    profile_residual = max(float(np.max(np.abs(self_limit.matrix(u) - rosen.matrix(u)))) for u in us)

    self_metric = self_limit.metric()
    curvature_residual = 0.0
    for u in us:
        E = rosen.frame(u)
        expected = E.T @ spec.Q(u) @ E
        R = curvature(self_metric, transversal.central_point(u)).riemann_lower
        got = R[2:, 0, 2:, 0]
        curvature_residual = max(curvature_residual, float(np.max(np.abs(got - expected))))

    result = DichotomyResult(flat_limit, self_limit, rosen, flat_residual, profile_residual, curvature_residual, tol)
    logger.info(
        "[Dichotomy] %s: flat residual %.3e, self-limit curvature residual %.3e",
        spec,
        flat_residual,
        curvature_residual,
    )
    return result
