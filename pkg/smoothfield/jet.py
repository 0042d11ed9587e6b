import itertools
import math
from functools import lru_cache

import numpy as np

from .errors import DomainError, JetOrderError

MAX_ORDER = 3


def multi_indices(num_vars: int, order: int) -> list[tuple[int, ...]]:
    """Exponent tuples of total degree <= order, graded-lexicographic."""
    out = []
    for degree in range(order + 1):
        for combo in itertools.combinations_with_replacement(range(num_vars), degree):
            alpha = [0] * num_vars
            for var in combo:
                alpha[var] += 1
            out.append(tuple(alpha))
    return out


class JetSpace:
    """
    Coefficient layout shared by every jet with the same (num_vars, order).

    Jet arrays keep the coefficients on their last axis, so a (d, d, size)
    array is a matrix of jets; all operations broadcast over the leading axes.
    Lower orders are prefixes of higher ones because the layout is graded.
    """

    def __init__(self, num_vars: int, order: int):
        if num_vars < 1:
            raise ValueError(f"num_vars must be positive, got {num_vars}")
        if order < 0 or order > MAX_ORDER:
            raise JetOrderError(f"jet order {order} outside 0..{MAX_ORDER}")
        self.num_vars = num_vars
        self.order = order
        self.indices = tuple(multi_indices(num_vars, order))
        self.position = {alpha: i for i, alpha in enumerate(self.indices)}
        self.size = len(self.indices)
        self.degree = np.array([sum(alpha) for alpha in self.indices])
        self.factorial = np.array(
            [math.prod(math.factorial(k) for k in alpha) for alpha in self.indices],
            dtype=float,
        )

        left, right, target = [], [], []
        for i, a in enumerate(self.indices):
            for j, b in enumerate(self.indices):
                if self.degree[i] + self.degree[j] > order:
                    continue
                left.append(i)
                right.append(j)
                target.append(self.position[tuple(x + y for x, y in zip(a, b))])
        self._left = np.array(left, dtype=int)
        self._right = np.array(right, dtype=int)
        self._scatter = np.zeros((len(left), self.size))
        self._scatter[np.arange(len(left)), target] = 1.0

        self._diff_tables = []
        if order > 0:
            lower = multi_indices(num_vars, order - 1)
            for var in range(num_vars):
                src, factor = [], []
                for beta in lower:
                    up = list(beta)
                    up[var] += 1
                    src.append(self.position[tuple(up)])
                    factor.append(beta[var] + 1.0)
                self._diff_tables.append((np.array(src, dtype=int), np.array(factor)))

    def __repr__(self):
        return f"JetSpace(num_vars={self.num_vars}, order={self.order})"

    # ============ construction ============

    def zeros(self, shape=()) -> np.ndarray:
        return np.zeros(tuple(shape) + (self.size,))

    def constant(self, value) -> np.ndarray:
        value = np.asarray(value, dtype=float)
        out = self.zeros(value.shape)
        out[..., 0] = value
        return out

    def variable(self, index: int, value: float) -> np.ndarray:
        out = self.constant(value)
        if self.order > 0:
            unit = [0] * self.num_vars
            unit[index] = 1
            out[self.position[tuple(unit)]] = 1.0
        return out

    def identity(self, dim: int) -> np.ndarray:
        return self.constant(np.eye(dim))

    # ============ arithmetic ============

    def mul(self, a, b) -> np.ndarray:
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        return (a[..., self._left] * b[..., self._right]) @ self._scatter

    def einsum(self, subscripts: str, a, b) -> np.ndarray:
        """Tensor contraction of two jet arrays, e.g. einsum("ik,kj->ij", a, b)."""
        inputs, output = subscripts.replace(" ", "").split("->")
        lhs, rhs = inputs.split(",")
        spec = f"{lhs}Z,{rhs}Z->{output}Z"
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        return np.einsum(spec, a[..., self._left], b[..., self._right]) @ self._scatter

    def diff(self, a, var: int) -> np.ndarray:
        """Partial derivative in variable `var`; the result lives one order lower."""
        if self.order == 0:
            raise JetOrderError("cannot differentiate an order-0 jet")
        src, factor = self._diff_tables[var]
        return np.asarray(a)[..., src] * factor

    def gradient(self, a) -> np.ndarray:
        """All first partials stacked on a new leading axis."""
        return np.stack([self.diff(a, var) for var in range(self.num_vars)])

    def truncate(self, a, order: int) -> np.ndarray:
        if order > self.order:
            raise JetOrderError(f"cannot raise jet order {self.order} to {order}")
        return np.asarray(a)[..., : jet_space(self.num_vars, order).size]

    def compose(self, a, series) -> np.ndarray:
        """
        f(a) for a univariate f given by its Taylor coefficients at a's value:
        series[n] = f^(n)(a0) / n!.
        """
        a = np.asarray(a, dtype=float)
        series = np.asarray(series, dtype=float)
        if series.shape[-1] < self.order + 1:
            raise JetOrderError(
                f"series of length {series.shape[-1]} too short for order {self.order}"
            )
        nil = a.copy()
        nil[..., 0] = 0.0
        out = np.zeros(np.broadcast_shapes(a.shape, series.shape[:-1] + (1,)))
        out[..., 0] = series[..., 0]
        power = self.constant(np.ones(a.shape[:-1]))
        for n in range(1, self.order + 1):
            power = self.mul(power, nil)
            out = out + series[..., n, None] * power
        return out

    def power(self, a, exponent: int) -> np.ndarray:
        if exponent < 0:
            return self.reciprocal(self.power(a, -exponent))
        out = self.constant(np.ones(np.shape(a)[:-1]))
        for _ in range(exponent):
            out = self.mul(out, a)
        return out

    def reciprocal(self, a) -> np.ndarray:
        a = np.asarray(a, dtype=float)
        a0 = a[..., 0]
        if np.any(a0 == 0.0):
            raise DomainError("division by zero")
        return self.compose(a, reciprocal_series(a0, self.order))

    def inverse_matrix(self, a) -> np.ndarray:
        """Inverse of a (d, d) matrix of jets via the terminating Neumann series."""
        a = np.asarray(a, dtype=float)
        inv0 = np.linalg.inv(a[..., 0])
        nil = a.copy()
        nil[..., 0] = 0.0
        step = -np.einsum("ik,kjc->ijc", inv0, nil)
        term = self.identity(a.shape[0])
        total = term.copy()
        for _ in range(self.order):
            term = self.einsum("ik,kj->ij", term, step)
            total = total + term
        return np.einsum("ikc,kj->ijc", total, inv0)

    def derivatives(self, a) -> np.ndarray:
        """Coefficients times alpha!, i.e. the partial derivatives themselves."""
        return np.asarray(a) * self.factorial


@lru_cache(maxsize=None)
def jet_space(num_vars: int, order: int) -> JetSpace:
    return JetSpace(num_vars, order)


# ============ univariate Taylor series (coefficients f^(n)(x0)/n!) ============


def exp_series(x0, order):
    x0 = np.asarray(x0, dtype=float)
    e = np.exp(x0)
    return np.stack([e / math.factorial(n) for n in range(order + 1)], axis=-1)


def log_series(x0, order):
    x0 = np.asarray(x0, dtype=float)
    if np.any(x0 <= 0.0):
        raise DomainError(f"log of non-positive value {np.min(x0)}")
    terms = [np.log(x0)]
    for n in range(1, order + 1):
        terms.append((-1.0) ** (n + 1) / (n * x0**n))
    return np.stack(terms, axis=-1)


def sin_series(x0, order):
    x0 = np.asarray(x0, dtype=float)
    cycle = [np.sin(x0), np.cos(x0), -np.sin(x0), -np.cos(x0)]
    return np.stack([cycle[n % 4] / math.factorial(n) for n in range(order + 1)], axis=-1)


def cos_series(x0, order):
    x0 = np.asarray(x0, dtype=float)
    cycle = [np.cos(x0), -np.sin(x0), -np.cos(x0), np.sin(x0)]
    return np.stack([cycle[n % 4] / math.factorial(n) for n in range(order + 1)], axis=-1)


def sqrt_series(x0, order):
    x0 = np.asarray(x0, dtype=float)
    if np.any(x0 < 0.0) or (order > 0 and np.any(x0 == 0.0)):
        raise DomainError(f"sqrt not smooth at {np.min(x0)}")
    terms = []
    binom = 1.0
    for n in range(order + 1):
        terms.append(binom * x0 ** (0.5 - n))
        binom *= (0.5 - n) / (n + 1)
    return np.stack(terms, axis=-1)


def reciprocal_series(x0, order):
    x0 = np.asarray(x0, dtype=float)
    return np.stack([(-1.0) ** n / x0 ** (n + 1) for n in range(order + 1)], axis=-1)


SERIES = {
    "exp": exp_series,
    "log": log_series,
    "sin": sin_series,
    "cos": cos_series,
    "sqrt": sqrt_series,
}


def invert_series(coeffs) -> np.ndarray:
    """
    Reversion of F(x0 + d) = F0 + a1 d + a2 d^2 + a3 d^3.
    Returns b with d = b1 e + b2 e^2 + b3 e^3 where e = F - F0 (b0 = 0).
    """
    coeffs = np.asarray(coeffs, dtype=float)
    order = len(coeffs) - 1
    if order > MAX_ORDER:
        raise JetOrderError(f"series reversion supports order <= {MAX_ORDER}")
    a1 = coeffs[1] if order >= 1 else None
    if order >= 1 and a1 == 0.0:
        raise DomainError("series reversion needs a nonzero first derivative")
    out = np.zeros(order + 1)
    if order >= 1:
        out[1] = 1.0 / a1
    if order >= 2:
        out[2] = -coeffs[2] / a1**3
    if order >= 3:
        out[3] = (2.0 * coeffs[2] ** 2 - a1 * coeffs[3]) / a1**5
    return out


class Jet:
    """Truncated Taylor expansion of a scalar at a point."""

    __slots__ = ("space", "coeffs")

    def __init__(self, space: JetSpace, coeffs):
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape != (space.size,):
            raise ValueError(f"expected {space.size} coefficients, got {coeffs.shape}")
        self.space = space
        self.coeffs = coeffs

    @classmethod
    def constant(cls, value: float, num_vars: int, order: int) -> "Jet":
        space = jet_space(num_vars, order)
        return cls(space, space.constant(value))

    @classmethod
    def variable(cls, index: int, value: float, num_vars: int, order: int) -> "Jet":
        space = jet_space(num_vars, order)
        return cls(space, space.variable(index, value))

    @classmethod
    def from_record(cls, record: dict) -> "Jet":
        return cls(jet_space(record["num_vars"], record["order"]), record["coeffs"])

    @property
    def order(self) -> int:
        return self.space.order

    @property
    def num_vars(self) -> int:
        return self.space.num_vars

    @property
    def value(self) -> float:
        return float(self.coeffs[0])

    def coeff(self, alpha) -> float:
        return float(self.coeffs[self.space.position[tuple(alpha)]])

    def derivative(self, alpha) -> float:
        i = self.space.position[tuple(alpha)]
        return float(self.coeffs[i] * self.space.factorial[i])

    def as_dict(self) -> dict[tuple[int, ...], float]:
        return {alpha: float(c) for alpha, c in zip(self.space.indices, self.coeffs)}

    def to_record(self) -> dict:
        return {"order": self.order, "num_vars": self.num_vars, "coeffs": self.coeffs.tolist()}

    def __repr__(self):
        return f"Jet(order={self.order}, num_vars={self.num_vars}, coeffs={self.coeffs.tolist()})"

    # ============ arithmetic ============

    def _coerce(self, other) -> np.ndarray:
        if isinstance(other, Jet):
            if other.space is not self.space:
                raise ValueError(f"jet spaces differ: {self.space} vs {other.space}")
            return other.coeffs
        return self.space.constant(float(other))

    def __add__(self, other):
        return Jet(self.space, self.coeffs + self._coerce(other))

    __radd__ = __add__

    def __sub__(self, other):
        return Jet(self.space, self.coeffs - self._coerce(other))

    def __rsub__(self, other):
        return Jet(self.space, self._coerce(other) - self.coeffs)

    def __neg__(self):
        return Jet(self.space, -self.coeffs)

    def __mul__(self, other):
        if isinstance(other, Jet):
            return Jet(self.space, self.space.mul(self.coeffs, self._coerce(other)))
        return Jet(self.space, self.coeffs * float(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Jet):
            return self * other.reciprocal()
        if float(other) == 0.0:
            raise DomainError("division by zero")
        return Jet(self.space, self.coeffs / float(other))

    def __rtruediv__(self, other):
        return self.reciprocal() * float(other)

    def __pow__(self, exponent: int):
        if int(exponent) != exponent:
            raise ValueError(f"only integer powers are supported, got {exponent}")
        return Jet(self.space, self.space.power(self.coeffs, int(exponent)))

    def reciprocal(self) -> "Jet":
        return Jet(self.space, self.space.reciprocal(self.coeffs))

    def compose(self, series) -> "Jet":
        return Jet(self.space, self.space.compose(self.coeffs, series))

    def apply(self, name: str) -> "Jet":
        return self.compose(SERIES[name](self.coeffs[0], self.order))

    def exp(self):
        return self.apply("exp")

    def log(self):
        return self.apply("log")

    def sin(self):
        return self.apply("sin")

    def cos(self):
        return self.apply("cos")

    def sqrt(self):
        return self.apply("sqrt")

    def diff(self, var: int) -> "Jet":
        lower = jet_space(self.num_vars, self.order - 1)
        return Jet(lower, self.space.diff(self.coeffs, var))

    def truncate(self, order: int) -> "Jet":
        return Jet(jet_space(self.num_vars, order), self.space.truncate(self.coeffs, order))
