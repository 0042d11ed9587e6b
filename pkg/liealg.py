"""
Matrix Lie algebra computations inside co(1, n+1).

Vectors are written in the null frame (e0, e1, e2, ..., e_{n+1}) where the
form reads 2 x0 x1 + sum_{i>=2} x_i^2 and the grading element is
A = diag(1, -1, 0, ..., 0).  Abstract algebras (no matrix realisation) are
carried by their structure constants c[a, b, c], [e_a, e_b] = c[a, b, :] . e.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import pandas as pd
import scipy.linalg

from smoothfield.errors import EngineError

logger = logging.getLogger("liealg")

CLUSTER_TOL = 1e-8
CONDITION_LIMIT = 1e12
MEMBERSHIP_TOL = 1e-10
CLOSURE_TOL = 1e-9
GRADING_TOL = 1e-8
NULL_LINE_TOL = 1e-8
NULL_LINE_TRIALS = 3
SPECIAL_ALPHAS = (0.5, 1.0, 2.0)


class IllConditionedError(EngineError):
    pass


class SingularMatrixError(EngineError):
    pass


class ComplexSpectrumError(EngineError):
    pass


# ============ frame ============


class MinkowskiFrame:
    def __init__(self, n: int):
        if n < 1:
            raise ValueError(f"frame needs n >= 1, got {n}")
        self.n = n
        self.dim = n + 2
        G = np.eye(self.dim)
        G[0, 0] = G[1, 1] = 0.0
        G[0, 1] = G[1, 0] = 1.0
        self.form = G
        self.grading_element = np.diag([1.0, -1.0] + [0.0] * n)

    @classmethod
    def of_dim(cls, dim: int) -> "MinkowskiFrame":
        return cls(dim - 2)

    def quadratic(self, v) -> float:
        v = np.asarray(v, dtype=float)
        return float(v @ self.form @ v)

    def co_defect(self, X) -> float:
        """Distance of X from co(1, n+1): |X^T G + G X - (2 tr X / dim) G|."""
        X = np.asarray(X, dtype=float)
        G = self.form
        return float(np.abs(X.T @ G + G @ X - (2.0 * np.trace(X) / self.dim) * G).max())

    def so_basis(self) -> list[np.ndarray]:
        # X = G^-1 W with W skew gives X^T G + G X = 0
        G_inv = np.linalg.inv(self.form)
        basis = []
        for i in range(self.dim):
            for j in range(i + 1, self.dim):
                W = np.zeros((self.dim, self.dim))
                W[i, j] = 1.0
                W[j, i] = -1.0
                basis.append(G_inv @ W)
        return basis

    def co_basis(self) -> list[np.ndarray]:
        return self.so_basis() + [np.eye(self.dim)]

    def null_line(self, index: int) -> np.ndarray:
        v = np.zeros(self.dim)
        v[index] = 1.0
        return v

    def __repr__(self):
        return f"MinkowskiFrame(n={self.n})"


# ============ algebras ============


class MatrixAlgebra:
    """
    A finite-dimensional Lie algebra, either spanned by explicit matrices
    (optionally tied to a frame for co(1, n+1) membership checks) or given
    abstractly by structure constants.
    """

    def __init__(
        self,
        basis: Optional[Sequence] = None,
        frame: Optional[MinkowskiFrame] = None,
        structure_constants: Optional[np.ndarray] = None,
        name: str = "g",
    ):
        self.frame = frame
        self.name = name
        if basis is not None:
            self.basis = np.array([np.asarray(b, dtype=float) for b in basis])
            if self.basis.ndim != 3 or self.basis.shape[1] != self.basis.shape[2]:
                raise ValueError(f"{name}: basis must be a list of square matrices")
            m = self.basis.shape[0]
            self._flat = self.basis.reshape(m, -1).T
            rank = np.linalg.matrix_rank(self._flat)
            if rank < m:
                raise ValueError(f"{name}: basis matrices are linearly dependent (rank {rank} < {m})")
            self.structure_constants = self._bracket_table()
        elif structure_constants is not None:
            self.basis = None
            self.structure_constants = np.asarray(structure_constants, dtype=float)
            c = self.structure_constants
            if c.ndim != 3 or not (c.shape[0] == c.shape[1] == c.shape[2]):
                raise ValueError(f"{name}: structure constants must have shape (m, m, m)")
        else:
            raise ValueError(f"{name}: need a basis or structure constants")

    @classmethod
    def from_structure_constants(cls, c, name: str = "g") -> "MatrixAlgebra":
        return cls(structure_constants=c, name=name)

    @classmethod
    def abelian(cls, dim: int) -> "MatrixAlgebra":
        return cls(structure_constants=np.zeros((dim, dim, dim)), name=f"R^{dim}")

    @classmethod
    def from_dict(cls, data: dict, name: str = "g") -> "MatrixAlgebra":
        """{"frame_dim": d, "basis": [...]} or {"structure_constants": [...]}."""
        if "structure_constants" in data:
            return cls.from_structure_constants(data["structure_constants"], name=name)
        if "basis" not in data:
            raise ValueError("algebra document needs 'basis' or 'structure_constants'")
        basis = [np.asarray(b, dtype=float) for b in data["basis"]]
        dim = int(data.get("frame_dim", basis[0].shape[0]))
        if any(b.shape != (dim, dim) for b in basis):
            raise ValueError(f"every basis matrix must be {dim}x{dim}")
        alg = cls(basis, frame=MinkowskiFrame.of_dim(dim), name=name)
        alg.validate()
        return alg

    @property
    def dim(self) -> int:
        return self.structure_constants.shape[0]

    @property
    def matrix_size(self) -> Optional[int]:
        return None if self.basis is None else self.basis.shape[1]

    def coordinates(self, X) -> tuple[np.ndarray, float]:
        """Least-squares coordinates of a matrix in the basis and the residual."""
        if self.basis is None:
            raise ValueError(f"{self.name} has no matrix realisation")
        target = np.asarray(X, dtype=float).reshape(-1)
        coeffs, *_ = np.linalg.lstsq(self._flat, target, rcond=None)
        residual = float(np.abs(self._flat @ coeffs - target).max())
        return coeffs, residual

    def element(self, coeffs) -> np.ndarray:
        return np.einsum("a,aij->ij", np.asarray(coeffs, dtype=float), self.basis)

    def bracket(self, x, y) -> np.ndarray:
        return np.einsum("a,b,abc->c", x, y, self.structure_constants)

    def ad(self, x) -> np.ndarray:
        """Matrix of ad_x on coordinate vectors: column b is [x, e_b]."""
        return np.einsum("a,abc->cb", np.asarray(x, dtype=float), self.structure_constants)

    def _bracket_table(self) -> np.ndarray:
        m = self.basis.shape[0]
        c = np.zeros((m, m, m))
        self._closure = 0.0
        for a in range(m):
            for b in range(a + 1, m):
                comm = self.basis[a] @ self.basis[b] - self.basis[b] @ self.basis[a]
                coeffs, residual = self.coordinates(comm)
                self._closure = max(self._closure, residual)
                c[a, b] = coeffs
                c[b, a] = -coeffs
        return c

    def membership_residual(self) -> float:
        if self.basis is None or self.frame is None:
            return 0.0
        return max(self.frame.co_defect(X) for X in self.basis)

    def closure_residual(self) -> float:
        return getattr(self, "_closure", 0.0)

    def jacobi_residual(self) -> float:
        c = self.structure_constants
        # [[e_a, e_b], e_c] + cyclic
        term = np.einsum("abd,dce->abce", c, c)
        total = term + term.transpose(1, 2, 0, 3) + term.transpose(2, 0, 1, 3)
        return float(np.abs(total).max()) if total.size else 0.0

    def validate(self, membership_tol: float = MEMBERSHIP_TOL, closure_tol: float = CLOSURE_TOL):
        membership = self.membership_residual()
        if membership > membership_tol:
            raise ValueError(f"{self.name}: basis leaves co(1,n+1) (defect {membership:.3e})")
        closure = self.closure_residual()
        if closure > closure_tol:
            raise ValueError(f"{self.name}: span not closed under brackets (residual {closure:.3e})")

    def __repr__(self):
        return f"MatrixAlgebra({self.name}, dim={self.dim})"


def so_algebra(frame: MinkowskiFrame) -> MatrixAlgebra:
    return MatrixAlgebra(frame.so_basis(), frame=frame, name=f"so(1,{frame.n + 1})")


def co_algebra(frame: MinkowskiFrame) -> MatrixAlgebra:
    return MatrixAlgebra(frame.co_basis(), frame=frame, name=f"co(1,{frame.n + 1})")


# ============ spectral helpers ============


def _cluster_eigenvalues(values: np.ndarray, scale: float) -> list[tuple[complex, int]]:
    tol = CLUSTER_TOL * max(1.0, scale)
    clusters: list[list[complex]] = []
    for lam in values:
        for members in clusters:
            if abs(lam - members[0]) < tol:
                members.append(lam)
                break
        else:
            clusters.append([lam])
    return [(complex(np.mean(members)), len(members)) for members in clusters]


def _generalized_eigenspace(M: np.ndarray, lam: complex, mult: int) -> np.ndarray:
    """Orthonormal columns spanning ker (M - lam)^mult."""
    d = M.shape[0]
    if abs(lam.imag) == 0.0:
        shifted = M - lam.real * np.eye(d)
    else:
        shifted = M.astype(complex) - lam * np.eye(d)
    power = np.linalg.matrix_power(shifted, mult)
    _, _, vh = scipy.linalg.svd(power)
    return vh[-mult:].conj().T


def _spectral_data(M: np.ndarray):
    M = np.asarray(M, dtype=float)
    scale = float(np.abs(M).max()) if M.size else 0.0
    clusters = _cluster_eigenvalues(np.linalg.eigvals(M), scale)
    return [(lam, mult, _generalized_eigenspace(M, lam, mult)) for lam, mult in clusters]


def _assemble(spaces: list[np.ndarray], diag: list[complex]) -> np.ndarray:
    V = np.hstack(spaces)
    cond = np.linalg.cond(V)
    if not np.isfinite(cond) or cond > CONDITION_LIMIT:
        raise IllConditionedError(f"eigenvector basis condition {cond:.3e} exceeds {CONDITION_LIMIT:.0e}")
    out = V @ np.diag(diag) @ np.linalg.inv(V)
    return out.real


# ============ Jordan decomposition ============


@dataclass(frozen=True)
class JordanParts:
    B: np.ndarray
    B_s: np.ndarray
    B_u: np.ndarray
    B_h: np.ndarray
    B_e: np.ndarray

    def residuals(self) -> dict[str, float]:
        d = self.B.shape[0]
        scale = max(1.0, float(np.linalg.norm(self.B)))
        eye = np.eye(d)

        def comm(a, b):
            return float(np.linalg.norm(a @ b - b @ a))

        return {
            "reconstruction": float(np.linalg.norm(self.B_h @ self.B_e @ self.B_u - self.B)) / scale,
            "s_u_commute": comm(self.B_s, self.B_u),
            "h_e_commute": comm(self.B_h, self.B_e),
            "s_factor": float(np.linalg.norm(self.B_h @ self.B_e - self.B_s)),
            "unipotent": float(np.linalg.norm(np.linalg.matrix_power(self.B_u - eye, d))),
        }


def jordan_decompose(B) -> JordanParts:
    """B = B_s B_u with B_s = B_h B_e (hyperbolic times elliptic), all commuting."""
    B = np.asarray(B, dtype=float)
    if B.ndim != 2 or B.shape[0] != B.shape[1]:
        raise ValueError(f"need a square matrix, got shape {B.shape}")
    spectral = _spectral_data(B)
    smallest = min(abs(lam) for lam, _, _ in spectral)
    if smallest < CLUSTER_TOL * max(1.0, float(np.abs(B).max())):
        raise SingularMatrixError(f"matrix is not invertible (eigenvalue of modulus {smallest:.3e})")
    spaces = [space for _, _, space in spectral]
    values = [lam for lam, mult, _ in spectral for _ in range(mult)]
    moduli = [abs(lam) for lam in values]
    phases = [lam / abs(lam) for lam in values]
    B_s = _assemble(spaces, values)
    B_h = _assemble(spaces, moduli)
    B_e = _assemble(spaces, phases)
    B_u = np.linalg.solve(B_s, B)
    logger.debug("[Jordan] %dx%d matrix, %d eigenvalue clusters", B.shape[0], B.shape[0], len(spectral))
    return JordanParts(B=B, B_s=B_s, B_u=B_u, B_h=B_h, B_e=B_e)


# ============ graded decompositions ============


@dataclass
class GradedDecomposition:
    derivation_matrix: np.ndarray
    spectrum: list[tuple[float, int]]
    components: dict[float, np.ndarray]
    grading_residual: Optional[float] = None

    @property
    def eigenvalues(self) -> list[float]:
        return [value for value, _ in self.spectrum]

    def component(self, mu: float, tol: float = 1e-6) -> Optional[np.ndarray]:
        for key, basis in self.components.items():
            if abs(key - mu) < tol:
                return basis
        return None

    def dims(self) -> dict[float, int]:
        return {key: basis.shape[1] for key, basis in self.components.items()}

    def table(self) -> pd.DataFrame:
        return pd.DataFrame(
            [{"eigenvalue": value, "multiplicity": mult} for value, mult in self.spectrum]
        )


def _grading_residual(components: dict[float, np.ndarray], c: np.ndarray) -> float:
    worst = 0.0
    keys = list(components)
    for mu in keys:
        for nu in keys:
            target = next((k for k in keys if abs(k - (mu + nu)) < 1e-6), None)
            Q = components[target] if target is not None else None
            for x in components[mu].T:
                for y in components[nu].T:
                    z = np.einsum("a,b,abc->c", x, y, c)
                    if Q is not None:
                        z = z - Q @ (Q.T @ z)
                    worst = max(worst, float(np.linalg.norm(z)))
    return worst


def decompose_derivation(D, structure_constants=None) -> GradedDecomposition:
    """
    Generalized eigenspaces of D (those of its semisimple part).  With
    structure constants the bracket grading [g^mu, g^nu] in g^(mu+nu) is
    measured into ``grading_residual``.
    """
    D = np.asarray(D, dtype=float)
    if D.ndim != 2 or D.shape[0] != D.shape[1]:
        raise ValueError(f"derivation must be square, got shape {D.shape}")
    scale = max(1.0, float(np.abs(D).max()))
    spectrum = []
    components = {}
    for lam, mult, _ in _spectral_data(D):
        if abs(lam.imag) > CLUSTER_TOL * scale:
            raise ComplexSpectrumError(f"semisimple part has non-real eigenvalue {lam:.6g}")
        value = round(lam.real, 10) + 0.0
        components[value] = _generalized_eigenspace(D, complex(value), mult).real
        spectrum.append((value, mult))
    spectrum.sort()
    components = dict(sorted(components.items()))
    residual = None
    if structure_constants is not None:
        residual = _grading_residual(components, np.asarray(structure_constants, dtype=float))
        if residual > GRADING_TOL:
            logger.warning("[Grading] bracket leaves the graded pieces by %.3e", residual)
    return GradedDecomposition(D, spectrum, components, residual)


def eigenspace_decompose(alg: MatrixAlgebra, B=None, derivation=None) -> GradedDecomposition:
    """
    Decompose ``alg`` under ad_B (B a coordinate vector or, for matrix
    algebras, a matrix in the span) or under an outer derivation matrix.
    """
    if derivation is not None:
        D = np.asarray(derivation, dtype=float)
        if D.shape != (alg.dim, alg.dim):
            raise ValueError(f"derivation must be {alg.dim}x{alg.dim}, got {D.shape}")
    elif B is not None:
        B = np.asarray(B, dtype=float)
        if B.ndim == 2:
            coords, residual = alg.coordinates(B)
            if residual > CLOSURE_TOL:
                raise ValueError(f"element is not in the span of {alg.name} (residual {residual:.3e})")
        else:
            coords = B
        D = alg.ad(coords)
    else:
        raise ValueError("need an element B or a derivation matrix")
    decomposition = decompose_derivation(D, alg.structure_constants)
    logger.info("[Grading] %s: spectrum %s", alg.name, decomposition.spectrum)
    return decomposition


def grade_so(frame: MinkowskiFrame) -> tuple[list[np.ndarray], list[np.ndarray], list[np.ndarray]]:
    """Bases of s^-1, s^0, s^1: the ad_A eigenspaces in so(1, n+1)."""
    alg = so_algebra(frame)
    decomposition = eigenspace_decompose(alg, frame.grading_element)
    pieces = []
    for mu in (-1.0, 0.0, 1.0):
        comp = decomposition.component(mu)
        pieces.append([] if comp is None else [alg.element(col) for col in comp.T])
    return tuple(pieces)


def parabolic(frame: MinkowskiFrame, sign: int = 1) -> list[np.ndarray]:
    """p^+ = s^0 + s^1 (sign > 0) or p^- = s^0 + s^-1."""
    s_minus, s_zero, s_plus = grade_so(frame)
    return s_zero + (s_plus if sign > 0 else s_minus)


# ============ spectra and boosts ============


@dataclass(frozen=True)
class SigmaSpectrum:
    alpha: float
    values: list[float]
    multiplicities: list[int]
    special: bool
    branch: str


def sigma_B_spectrum(alpha: float) -> SigmaSpectrum:
    """{-1, 0, 1, alpha-1, alpha, alpha+1} with coincident values merged."""
    alpha = float(alpha)
    merged: dict[float, int] = {}
    for value in (-1.0, 0.0, 1.0, alpha - 1.0, alpha, alpha + 1.0):
        key = next((k for k in merged if abs(k - value) < CLUSTER_TOL), value)
        merged[key] = merged.get(key, 0) + 1
    values = sorted(merged)
    special = any(abs(alpha - a) < CLUSTER_TOL for a in SPECIAL_ALPHAS)
    return SigmaSpectrum(
        alpha=alpha,
        values=values,
        multiplicities=[merged[v] for v in values],
        special=special,
        branch="heisenberg" if special else "conformally_flat",
    )


def boost_subgroup(alpha: float, t: float, n: int) -> np.ndarray:
    """e^{t alpha} diag(e^t, e^-t, 1, ..., 1) in CO(1, n+1)."""
    return np.exp(t * alpha) * np.diag([np.exp(t), np.exp(-t)] + [1.0] * n)


def adjoint_action(g, X) -> np.ndarray:
    g = np.asarray(g, dtype=float)
    return g @ np.asarray(X, dtype=float) @ np.linalg.inv(g)


def grading_action_check(alpha: float, n: int) -> float:
    """
    Worst violation of s^mu(V^nu) in V^(mu+nu) for V = R^{1,n+1} graded by
    B = alpha Id + A.
    """
    frame = MinkowskiFrame(n)
    B = alpha * np.eye(frame.dim) + frame.grading_element
    rep = decompose_derivation(B)
    pieces = dict(zip((-1.0, 0.0, 1.0), grade_so(frame)))
    worst = 0.0
    for mu, matrices in pieces.items():
        for nu, space in rep.components.items():
            target = rep.component(mu + nu)
            for X in matrices:
                for v in space.T:
                    w = X @ v
                    if target is not None:
                        w = w - target @ (target.T @ w)
                    worst = max(worst, float(np.linalg.norm(w)))
    return worst


# ============ null lines and subspaces ============


def _normalize_line(v: np.ndarray, tol: float = NULL_LINE_TOL) -> Optional[np.ndarray]:
    v = np.asarray(v)
    pivot = int(np.argmax(np.abs(v)))
    if abs(v[pivot]) < tol:
        return None
    v = v / v[pivot]
    if np.abs(np.imag(v)).max() > tol:
        return None
    v = np.real(v)
    first = int(np.flatnonzero(np.abs(v) > tol)[0])
    v = v / v[first]
    v[np.abs(v) < tol] = 0.0
    return v


def _is_invariant_null(v: np.ndarray, matrices, frame: MinkowskiFrame, tol: float) -> bool:
    norm2 = float(v @ v)
    if abs(frame.quadratic(v)) > tol * norm2:
        return False
    for X in matrices:
        w = X @ v
        off = w - (v @ w / norm2) * v
        if np.linalg.norm(off) > tol * max(1.0, np.linalg.norm(X)) * np.sqrt(norm2):
            return False
    return True


def _contains_line(lines: list[np.ndarray], v: np.ndarray, tol: float) -> bool:
    return any(np.abs(line - v).max() < tol for line in lines)


def invariant_null_lines(
    matrices: Sequence, frame: MinkowskiFrame, seed: int = 42, tol: float = NULL_LINE_TOL
) -> list[np.ndarray]:
    """
    Null directions v with X v in span(v) for every X, each normalised so its
    first nonzero coordinate is +1.
    """
    matrices = [np.asarray(X, dtype=float) for X in matrices]
    if not matrices:
        raise ValueError("need at least one matrix")
    rng = np.random.default_rng(seed)
    found: Optional[list[np.ndarray]] = None
    for _ in range(NULL_LINE_TRIALS):
        combo = np.einsum("a,aij->ij", rng.normal(size=len(matrices)), np.array(matrices))
        _, vectors = np.linalg.eig(combo)
        lines: list[np.ndarray] = []
        for vec in vectors.T:
            line = _normalize_line(vec, tol)
            if line is None or _contains_line(lines, line, 1e-6):
                continue
            if _is_invariant_null(line, matrices, frame, tol):
                lines.append(line)
        if found is None:
            found = lines
        else:
            found = [line for line in found if _contains_line(lines, line, 1e-6)]
    result = sorted(found, key=lambda v: (int(np.flatnonzero(v)[0]), tuple(v)))
    logger.info("[NullLines] %d invariant null lines for %d matrices", len(result), len(matrices))
    return result


def null_line_stabilizer(frame: MinkowskiFrame, v) -> list[np.ndarray]:
    """Basis of {X in so(1, n+1): X v in span(v)}."""
    v = np.asarray(v, dtype=float)
    projector = np.eye(frame.dim) - np.outer(v, v) / float(v @ v)
    basis = frame.so_basis()
    conditions = np.column_stack([projector @ X @ v for X in basis])
    kernel = scipy.linalg.null_space(conditions)
    return [np.einsum("a,aij->ij", col, np.array(basis)) for col in kernel.T]


def intersect_subspaces(basis_a: Sequence, basis_b: Sequence) -> list[np.ndarray]:
    """Basis of span(basis_a) and span(basis_b) intersected, as matrices."""
    if not basis_a or not basis_b:
        return []
    A = np.column_stack([np.asarray(x, dtype=float).reshape(-1) for x in basis_a])
    Bm = np.column_stack([np.asarray(x, dtype=float).reshape(-1) for x in basis_b])
    kernel = scipy.linalg.null_space(np.hstack([A, -Bm]))
    shape = np.asarray(basis_a[0]).shape
    if kernel.size == 0:
        return []
    vectors = A @ kernel[: A.shape[1]]
    # orthonormalise the span of the intersection vectors
    span = scipy.linalg.orth(vectors)
    return [col.reshape(shape) for col in span.T]
