"""
Curvature stack and conformal Killing checks on a coordinate chart.

Conventions, fixed once for the whole engine:

    R(X, Y)Z = nabla_X nabla_Y Z - nabla_Y nabla_X Z - nabla_[X,Y] Z
    riemann_up[l, k, i, j] = R^l_kij with R(d_i, d_j) d_k = R^l_kij d_l
    riemann_lower[i, j, k, l] = R_ijkl = g(R(d_i, d_j) d_k, d_l)
    ricci[i, j] = R^k_ikj   (positive on round spheres)
    schouten = (ricci - scalar * g / (2 (d - 1))) / (d - 2)
    weyl_lower = R - kulkarni_nomizu(schouten, g)
    weyl_up[l, k, i, j] = g^lm W_ijkm

With these, a Brinkmann wave 2 dt dv + x^T Q(t) x dt^2 + dx^2 has
R(d_xi, d_t, d_xj, d_t) = Q_ij and R(d_xi, d_t, d_t, d_xj) = -Q_ij.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence

import numpy as np
import pandas as pd

from smoothfield.base import ConstantField, ExpField, SmoothField
from smoothfield.errors import EngineError, JetOrderError
from smoothfield.expr import ExprField
from smoothfield.jet import jet_space

logger = logging.getLogger("geometry")

KILLING_TOL = 1e-8
WEYL_FLAT_TOL = 1e-8
CURVATURE_IDENTITY_TOL = 1e-9
MIN_KILLING_PROBES = 10
SINGULAR_COND = 1e12


class SingularMetricError(EngineError):
    pass


class SignatureError(EngineError):
    pass


class ChartMismatchError(EngineError):
    pass


class InsufficientProbesError(EngineError):
    pass


# ============ charts, metrics, vector fields ============


class Chart:
    def __init__(self, names: Sequence[str]):
        names = [str(n) for n in names]
        if len(names) < 3:
            raise ValueError(f"charts need dimension at least 3, got {len(names)}")
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate coordinate names in {names}")
        self.names = tuple(names)
        self.dim = len(names)

    @classmethod
    def default(cls, dim: int) -> "Chart":
        return cls([f"x{i}" for i in range(dim)])

    def index(self, name: str) -> int:
        return self.names.index(name)

    def aliases(self) -> dict[str, int]:
        return {name: i for i, name in enumerate(self.names)}

    def __eq__(self, other):
        return isinstance(other, Chart) and self.names == other.names

    def __hash__(self):
        return hash(self.names)

    def __repr__(self):
        return f"Chart({', '.join(self.names)})"


def _require_same_chart(a: Chart, b: Chart):
    if a.dim != b.dim:
        raise ChartMismatchError(f"chart dimensions differ: {a} vs {b}")


class MetricField:
    """
    Symmetric matrix of smooth components on a chart.

    Only the upper triangle is stored; ``signature`` is (negative, positive)
    eigenvalue counts, Lorentzian (1, dim - 1) by default.
    """

    def __init__(
        self,
        chart: Chart,
        components: Mapping[tuple[int, int], SmoothField],
        signature: Optional[tuple[int, int]] = None,
        name: str = "g",
    ):
        self.chart = chart
        self.dim = chart.dim
        self.name = name
        self.signature = tuple(signature) if signature is not None else (1, chart.dim - 1)
        if sum(self.signature) != self.dim:
            raise ValueError(f"signature {self.signature} does not fit dimension {self.dim}")
        zero = ConstantField(0.0, self.dim)
        self._components: dict[tuple[int, int], SmoothField] = {}
        for (i, j), f in components.items():
            if f.num_vars != self.dim:
                raise ChartMismatchError(f"component g[{i},{j}] lives on {f.num_vars} variables")
            self._components[(min(i, j), max(i, j))] = f
        for i in range(self.dim):
            for j in range(i, self.dim):
                self._components.setdefault((i, j), zero)

    @classmethod
    def from_expressions(
        cls,
        chart: Chart,
        exprs: Mapping[tuple[int, int], str],
        signature=None,
        name: str = "g",
    ) -> "MetricField":
        aliases = chart.aliases()
        comps = {key: ExprField.parse(src, chart.dim, aliases) for key, src in exprs.items()}
        return cls(chart, comps, signature, name)

    @classmethod
    def from_matrix(cls, chart: Chart, fields, signature=None, name: str = "g") -> "MetricField":
        comps = {(i, j): fields[i][j] for i in range(chart.dim) for j in range(i, chart.dim)}
        return cls(chart, comps, signature, name)

    def component(self, i: int, j: int) -> SmoothField:
        return self._components[(min(i, j), max(i, j))]

    def components(self) -> dict[tuple[int, int], SmoothField]:
        return dict(self._components)

    def matrix(self, point) -> np.ndarray:
        point = np.asarray(point, dtype=float)
        out = np.empty((self.dim, self.dim))
        for (i, j), f in self._components.items():
            out[i, j] = out[j, i] = f.value(point)
        return out

    def jets(self, point, order: int) -> np.ndarray:
        """(dim, dim, size) array of component jets."""
        point = np.asarray(point, dtype=float)
        space = jet_space(self.dim, order)
        out = np.empty((self.dim, self.dim, space.size))
        for (i, j), f in self._components.items():
            out[i, j] = out[j, i] = f.coeffs(point, order)
        return out

    def inverse(self, point) -> np.ndarray:
        m = self.matrix(point)
        _check_invertible(m, point)
        return np.linalg.inv(m)

    def check_signature(self, point) -> np.ndarray:
        m = self.matrix(point)
        _check_invertible(m, point)
        eig = np.linalg.eigvalsh(m)
        found = (int(np.sum(eig < 0)), int(np.sum(eig > 0)))
        if found != self.signature:
            raise SignatureError(
                f"{self.name} has signature {found} at {np.round(point, 6).tolist()}, expected {self.signature}"
            )
        return eig

    def conformal(self, sigma: SmoothField, name: Optional[str] = None) -> "MetricField":
        """The metric e^sigma g."""
        factor = ExpField(sigma)
        comps = {key: factor * f for key, f in self._components.items()}
        return MetricField(self.chart, comps, self.signature, name or f"exp(sigma)*{self.name}")

    def relabel(self, names: Sequence[str]) -> "MetricField":
        return MetricField(Chart(names), self._components, self.signature, self.name)

    def perturbed(self, i: int, j: int, extra: SmoothField) -> "MetricField":
        comps = self.components()
        comps[(min(i, j), max(i, j))] = comps[(min(i, j), max(i, j))] + extra
        return MetricField(self.chart, comps, self.signature, f"{self.name}+perturbation")

    def __repr__(self):
        return f"MetricField({self.name}, {self.chart})"


def _check_invertible(m: np.ndarray, point):
    if not np.all(np.isfinite(m)) or np.linalg.cond(m) > SINGULAR_COND:
        raise SingularMetricError(f"metric is degenerate at {np.round(np.asarray(point), 6).tolist()}")


class VectorField:
    def __init__(self, chart: Chart, components: Sequence[SmoothField], name: str = "X"):
        if len(components) != chart.dim:
            raise ChartMismatchError(f"{name} has {len(components)} components on a {chart.dim}-chart")
        for f in components:
            if f.num_vars != chart.dim:
                raise ChartMismatchError(f"{name} component lives on {f.num_vars} variables")
        self.chart = chart
        self.components = list(components)
        self.name = name

    @classmethod
    def from_expressions(cls, chart: Chart, exprs: Sequence[str], name: str = "X") -> "VectorField":
        aliases = chart.aliases()
        return cls(chart, [ExprField.parse(s, chart.dim, aliases) for s in exprs], name)

    @classmethod
    def coordinate(cls, chart: Chart, index: int, name: Optional[str] = None) -> "VectorField":
        comps = [ConstantField(float(i == index), chart.dim) for i in range(chart.dim)]
        return cls(chart, comps, name or f"d_{chart.names[index]}")

    def values(self, point) -> np.ndarray:
        point = np.asarray(point, dtype=float)
        return np.array([f.value(point) for f in self.components])

    def jets(self, point, order: int) -> np.ndarray:
        point = np.asarray(point, dtype=float)
        return np.stack([f.coeffs(point, order) for f in self.components])

    def __add__(self, other: "VectorField") -> "VectorField":
        _require_same_chart(self.chart, other.chart)
        comps = [a + b for a, b in zip(self.components, other.components)]
        return VectorField(self.chart, comps, f"{self.name}+{other.name}")

    def scaled(self, c: float) -> "VectorField":
        return VectorField(self.chart, [c * f for f in self.components], f"{c:g}*{self.name}")

    def __repr__(self):
        return f"VectorField({self.name})"


class BracketComponent(SmoothField):
    """k-th component of [X, Y] = X^j d_j Y^k - Y^j d_j X^k."""

    def __init__(self, X: VectorField, Y: VectorField, k: int):
        self.X = X
        self.Y = Y
        self.k = k
        self.num_vars = X.chart.dim

    def coeffs(self, point, order):
        if order + 1 > 3:
            raise JetOrderError(f"bracket jets are available up to order 2, asked for {order}")
        hi = jet_space(self.num_vars, order + 1)
        lo = jet_space(self.num_vars, order)
        X = self.X.jets(point, order + 1)
        Y = self.Y.jets(point, order + 1)
        dXk = hi.gradient(X[self.k])
        dYk = hi.gradient(Y[self.k])
        Xt = hi.truncate(X, order)
        Yt = hi.truncate(Y, order)
        return lo.einsum("j,j->", Xt, dYk) - lo.einsum("j,j->", Yt, dXk)


def lie_bracket(X: VectorField, Y: VectorField) -> VectorField:
    _require_same_chart(X.chart, Y.chart)
    comps = [BracketComponent(X, Y, k) for k in range(X.chart.dim)]
    return VectorField(X.chart, comps, f"[{X.name},{Y.name}]")


# ============ curvature ============


@dataclass(frozen=True)
class CurvatureBundle:
    point: np.ndarray
    metric: np.ndarray
    inverse: np.ndarray
    christoffel: np.ndarray
    riemann_up: np.ndarray
    riemann_lower: np.ndarray
    ricci: np.ndarray
    scalar: float
    schouten: np.ndarray
    weyl_lower: np.ndarray
    weyl_up: np.ndarray
    nabla_riemann: np.ndarray

    @property
    def riemann_norm(self) -> float:
        return float(np.max(np.abs(self.riemann_lower)))

    @property
    def weyl_norm(self) -> float:
        return float(np.max(np.abs(self.weyl_lower)))

    def kretschmann(self) -> float:
        ginv = self.inverse
        raised = np.einsum("ia,jb,kc,ld,abcd->ijkl", ginv, ginv, ginv, ginv, self.riemann_lower)
        return float(np.einsum("ijkl,ijkl->", raised, self.riemann_lower))

    def identity_residual(self) -> float:
        """
        Worst violation of the algebraic Riemann identities, relative to max(1, |R|):
        antisymmetry in each pair, pair symmetry and the first Bianchi identity.
        """
        R = self.riemann_lower
        gaps = [
            R + R.transpose(1, 0, 2, 3),
            R + R.transpose(0, 1, 3, 2),
            R - R.transpose(2, 3, 0, 1),
            R + np.einsum("iklj->ijkl", R) + np.einsum("iljk->ijkl", R),
        ]
        worst = max(float(np.max(np.abs(gap))) for gap in gaps)
        return worst / max(1.0, self.riemann_norm)


def kulkarni_nomizu(h: np.ndarray, k: np.ndarray) -> np.ndarray:
    """(h o k)_ijkl = h_il k_jk + h_jk k_il - h_ik k_jl - h_jl k_ik."""
    return (
        np.einsum("il,jk->ijkl", h, k)
        + np.einsum("jk,il->ijkl", h, k)
        - np.einsum("ik,jl->ijkl", h, k)
        - np.einsum("jl,ik->ijkl", h, k)
    )


def _first_kind(dG: np.ndarray) -> np.ndarray:
    """Gamma_{l,ij} = (d_i g_jl + d_j g_il - d_l g_ij) / 2 with dG[a, b, c] = d_a g_bc."""
    return 0.5 * (
        np.einsum("ijl...->lij...", dG) + np.einsum("jil...->lij...", dG) - dG
    )


def christoffel_first_kind(g: MetricField, p) -> np.ndarray:
    space = jet_space(g.dim, 1)
    dG = space.gradient(g.jets(p, 1))[..., 0]
    return _first_kind(dG)


def christoffel(g: MetricField, p) -> np.ndarray:
    """Gamma[k, i, j] = Gamma^k_ij at p."""
    p = np.asarray(p, dtype=float)
    space = jet_space(g.dim, 1)
    G = g.jets(p, 1)
    _check_invertible(G[..., 0], p)
    first = _first_kind(space.gradient(G)[..., 0])
    return np.einsum("kl,lij->kij", np.linalg.inv(G[..., 0]), first)


def curvature(g: MetricField, p) -> CurvatureBundle:
    p = np.asarray(p, dtype=float)
    d = g.dim
    s3, s2, s1 = jet_space(d, 3), jet_space(d, 2), jet_space(d, 1)

    G = g.jets(p, 3)
    _check_invertible(G[..., 0], p)
    Ginv = s3.inverse_matrix(G)

    first = _first_kind(s3.gradient(G))
    gamma = s2.einsum("kl,lij->kij", s3.truncate(Ginv, 2), first)

    # dgamma[m, l, i, j] = d_m Gamma^l_ij
    dgamma = s2.gradient(gamma)
    gamma1 = s2.truncate(gamma, 1)
    riemann_up = (
        np.einsum("iljk...->lkij...", dgamma)
        - np.einsum("jlik...->lkij...", dgamma)
        + s1.einsum("lim,mjk->lkij", gamma1, gamma1)
        - s1.einsum("ljm,mik->lkij", gamma1, gamma1)
    )
    riemann_lower_jet = s1.einsum("lm,mkij->ijkl", s3.truncate(G, 1), riemann_up)

    gamma0 = gamma[..., 0]
    R0 = riemann_lower_jet[..., 0]
    nabla = (
        s1.gradient(riemann_lower_jet)[..., 0]
        - np.einsum("pmi,pjkl->mijkl", gamma0, R0)
        - np.einsum("pmj,ipkl->mijkl", gamma0, R0)
        - np.einsum("pmk,ijpl->mijkl", gamma0, R0)
        - np.einsum("pml,ijkp->mijkl", gamma0, R0)
    )

    metric = G[..., 0]
    inverse = Ginv[..., 0]
    rup0 = riemann_up[..., 0]
    ricci = np.einsum("ikij->kj", rup0)
    scalar = float(np.einsum("jk,jk->", inverse, ricci))
    schouten = (ricci - scalar * metric / (2.0 * (d - 1))) / (d - 2)
    weyl_lower = R0 - kulkarni_nomizu(schouten, metric)
    weyl_up = np.einsum("lm,ijkm->lkij", inverse, weyl_lower)

    return CurvatureBundle(
        point=p,
        metric=metric,
        inverse=inverse,
        christoffel=gamma0,
        riemann_up=rup0,
        riemann_lower=R0,
        ricci=ricci,
        scalar=scalar,
        schouten=schouten,
        weyl_lower=weyl_lower,
        weyl_up=weyl_up,
        nabla_riemann=nabla,
    )


def geodesic_residual(g: MetricField, point, velocity) -> np.ndarray:
    """Acceleration Gamma^k_ij v^i v^j of the straight coordinate line with velocity v."""
    velocity = np.asarray(velocity, dtype=float)
    return np.einsum("kij,i,j->k", christoffel(g, point), velocity, velocity)


# ============ probe sweeps ============


@dataclass(frozen=True)
class ProbeFailure:
    point: tuple
    message: str


def probe_sweep(points, fn: Callable, label: str):
    """
    Apply ``fn`` to every probe; engine errors at a probe are collected as
    ProbeFailure records instead of aborting the sweep.
    """
    results, failures = [], []
    for p in points:
        p = np.asarray(p, dtype=float)
        try:
            results.append((p, fn(p)))
        except EngineError as e:
            logger.warning("[Probe] %s failed at %s: %s", label, np.round(p, 6).tolist(), e)
            failures.append(ProbeFailure(tuple(float(x) for x in p), str(e)))
    return results, failures


def conformal_flatness(g: MetricField, points, tol: float = WEYL_FLAT_TOL) -> tuple[float, bool]:
    results, failures = probe_sweep(points, lambda p: curvature(g, p).weyl_norm, "weyl")
    if not results:
        raise InsufficientProbesError(f"no probe of {g.name} could be evaluated")
    worst = max(w for _, w in results)
    return worst, worst < tol


def weyl_conformal_covariance_check(g: MetricField, sigma: SmoothField, points) -> float:
    """Max deviation between the (1,3) Weyl tensors of g and e^sigma g."""
    if sigma.num_vars != g.dim:
        raise ChartMismatchError(f"sigma lives on {sigma.num_vars} variables, metric on {g.dim}")
    rescaled = g.conformal(sigma)
    worst = 0.0
    for p in points:
        a = curvature(g, p).weyl_up
        b = curvature(rescaled, p).weyl_up
        worst = max(worst, float(np.max(np.abs(a - b))))
    return worst


# ============ conformal Killing check ============


@dataclass
class KillingVerdict:
    kind: str
    constant: Optional[float]
    max_residual: float
    tol: float
    table: pd.DataFrame
    failures: list = field(default_factory=list)

    @property
    def lambdas(self) -> np.ndarray:
        return self.table["lambda"].to_numpy()

    @property
    def is_killing(self) -> bool:
        return self.kind == "killing"


def lie_derivative_metric(g: MetricField, X: VectorField, p) -> tuple[np.ndarray, np.ndarray]:
    """(L_X g)_ij = X^k d_k g_ij + g_kj d_i X^k + g_ik d_j X^k at p, together with g(p)."""
    _require_same_chart(g.chart, X.chart)
    space = jet_space(g.dim, 1)
    G = g.jets(p, 1)
    XJ = X.jets(p, 1)
    metric = G[..., 0]
    dG = space.gradient(G)[..., 0]
    dX = space.gradient(XJ)[..., 0]
    L = (
        np.einsum("k,kij->ij", XJ[:, 0], dG)
        + np.einsum("kj,ik->ij", metric, dX)
        + np.einsum("ik,jk->ij", metric, dX)
    )
    return L, metric


def conformal_killing_check(g: MetricField, X: VectorField, points, tol: float = KILLING_TOL) -> KillingVerdict:
    points = [np.asarray(p, dtype=float) for p in points]
    if len(points) < MIN_KILLING_PROBES:
        raise InsufficientProbesError(f"need at least {MIN_KILLING_PROBES} probes, got {len(points)}")
    _require_same_chart(g.chart, X.chart)
    upper = np.triu_indices(g.dim)

    def fit(p):
        L, metric = lie_derivative_metric(g, X, p)
        lv, gv = L[upper], metric[upper]
        lam = float(lv @ gv / (gv @ gv))
        residual = float(np.linalg.norm(lv - lam * gv) / np.linalg.norm(gv))
        return lam, residual

    results, failures = probe_sweep(points, fit, f"killing:{X.name}")
    if len(results) < MIN_KILLING_PROBES:
        raise InsufficientProbesError(f"only {len(results)} probes of {X.name} could be evaluated")
    table = pd.DataFrame(
        {
            "point": [tuple(np.round(p, 12)) for p, _ in results],
            "lambda": [r[0] for _, r in results],
            "residual": [r[1] for _, r in results],
        }
    )
    max_residual = float(table["residual"].max())
    lambdas = table["lambda"].to_numpy()
    constant = None
    if max_residual >= tol:
        kind = "none"
    elif np.max(np.abs(lambdas)) < tol:
        kind = "killing"
        constant = 0.0
    elif np.std(lambdas, ddof=1) < tol:
        kind = "homothetic"
        constant = float(np.mean(lambdas))
    else:
        kind = "conformal"
    logger.debug("[Killing] %s on %s: %s (max residual %.3e)", X.name, g.name, kind, max_residual)
    return KillingVerdict(kind, constant, max_residual, tol, table, failures)
