from abc import ABC, abstractmethod
from typing import Callable, Sequence

import numpy as np

from .errors import JetOrderError
from .jet import MAX_ORDER, Jet, jet_space


class SmoothField(ABC):
    """
    A smooth real function on an open set of R^num_vars.

    Implementations return Taylor coefficients in the graded multi-index
    layout of ``jet_space(num_vars, order)``; coefficient alpha is
    d^alpha f(point) / alpha!.
    """

    num_vars: int

    # numpy scalars defer to the field operators below
    __array_ufunc__ = None

    @abstractmethod
    def coeffs(self, point: np.ndarray, order: int) -> np.ndarray:
        pass

    def value(self, point) -> float:
        return float(self.coeffs(np.asarray(point, dtype=float), 0)[0])

    def __call__(self, point) -> float:
        return self.value(point)

    # ============ field algebra ============

    def _lift(self, other) -> "SmoothField":
        if isinstance(other, SmoothField):
            if other.num_vars != self.num_vars:
                raise ValueError(f"fields live on {self.num_vars} and {other.num_vars} variables")
            return other
        return ConstantField(float(other), self.num_vars)

    def __add__(self, other):
        return SumField([self, self._lift(other)])

    __radd__ = __add__

    def __sub__(self, other):
        return SumField([self, ScaledField(-1.0, self._lift(other))])

    def __rsub__(self, other):
        return SumField([self._lift(other), ScaledField(-1.0, self)])

    def __neg__(self):
        return ScaledField(-1.0, self)

    def __mul__(self, other):
        if isinstance(other, SmoothField):
            return ProductField(self, self._lift(other))
        return ScaledField(float(other), self)

    __rmul__ = __mul__

    def exp(self) -> "SmoothField":
        return ExpField(self)


def eval_jet(f: SmoothField, point, order: int) -> Jet:
    """Jet of ``f`` at ``point`` truncated at total degree ``order``."""
    if order < 0 or order > MAX_ORDER:
        raise JetOrderError(f"jet order {order} outside 0..{MAX_ORDER}")
    point = np.asarray(point, dtype=float).reshape(-1)
    if point.shape[0] != f.num_vars:
        raise ValueError(f"point has {point.shape[0]} coordinates, field expects {f.num_vars}")
    return Jet(jet_space(f.num_vars, order), f.coeffs(point, order))


class ConstantField(SmoothField):
    def __init__(self, value: float, num_vars: int):
        self.constant = float(value)
        self.num_vars = num_vars

    def coeffs(self, point, order):
        return jet_space(self.num_vars, order).constant(self.constant)

    def value(self, point):
        return self.constant

    def __repr__(self):
        return f"ConstantField({self.constant})"


class CoordinateField(SmoothField):
    def __init__(self, index: int, num_vars: int):
        if not 0 <= index < num_vars:
            raise ValueError(f"coordinate {index} outside chart of dimension {num_vars}")
        self.index = index
        self.num_vars = num_vars

    def coeffs(self, point, order):
        return jet_space(self.num_vars, order).variable(self.index, point[self.index])

    def value(self, point):
        return float(point[self.index])

    def __repr__(self):
        return f"CoordinateField(x{self.index})"


class SumField(SmoothField):
    def __init__(self, terms: Sequence[SmoothField]):
        self.terms = list(terms)
        self.num_vars = self.terms[0].num_vars

    def coeffs(self, point, order):
        return sum(t.coeffs(point, order) for t in self.terms)

    def value(self, point):
        return sum(t.value(point) for t in self.terms)


class ScaledField(SmoothField):
    def __init__(self, scale: float, field: SmoothField):
        self.scale = float(scale)
        self.field = field
        self.num_vars = field.num_vars

    def coeffs(self, point, order):
        return self.scale * self.field.coeffs(point, order)

    def value(self, point):
        return self.scale * self.field.value(point)


class ProductField(SmoothField):
    def __init__(self, left: SmoothField, right: SmoothField):
        self.left = left
        self.right = right
        self.num_vars = left.num_vars

    def coeffs(self, point, order):
        space = jet_space(self.num_vars, order)
        return space.mul(self.left.coeffs(point, order), self.right.coeffs(point, order))

    def value(self, point):
        return self.left.value(point) * self.right.value(point)


class ExpField(SmoothField):
    def __init__(self, field: SmoothField):
        self.field = field
        self.num_vars = field.num_vars

    def coeffs(self, point, order):
        space = jet_space(self.num_vars, order)
        inner = self.field.coeffs(point, order)
        return Jet(space, inner).exp().coeffs

    def value(self, point):
        return float(np.exp(self.field.value(point)))


# ============ one-variable fields ============


class UnivariateField(SmoothField):
    """A field of one variable; its jets are plain Taylor series."""

    num_vars = 1

    @abstractmethod
    def taylor(self, t: float, order: int) -> np.ndarray:
        """[f(t), f'(t), f''(t)/2, ...] up to ``order``."""

    def coeffs(self, point, order):
        return self.taylor(float(np.asarray(point).reshape(-1)[0]), order)

    def value(self, point):
        return float(self.taylor(float(np.asarray(point).reshape(-1)[0]), 0)[0])


class TaylorFunction(UnivariateField):
    """Wraps ``func(t, order) -> taylor coefficients``."""

    def __init__(self, func: Callable[[float, int], np.ndarray], name: str = "f"):
        self.func = func
        self.name = name

    def taylor(self, t, order):
        return np.asarray(self.func(t, order), dtype=float)

    def __repr__(self):
        return f"TaylorFunction({self.name})"


class ChartField(SmoothField):
    """A univariate field read off coordinate ``var`` of a larger chart."""

    def __init__(self, univariate: UnivariateField, var: int, num_vars: int):
        if not 0 <= var < num_vars:
            raise ValueError(f"coordinate {var} outside chart of dimension {num_vars}")
        self.univariate = univariate
        self.var = var
        self.num_vars = num_vars

    def coeffs(self, point, order):
        space = jet_space(self.num_vars, order)
        series = self.univariate.taylor(float(point[self.var]), order)
        out = space.zeros()
        for n in range(order + 1):
            alpha = [0] * self.num_vars
            alpha[self.var] = n
            out[space.position[tuple(alpha)]] = series[n]
        return out

    def value(self, point):
        return self.univariate.value([point[self.var]])


class RestrictionField(UnivariateField):
    """``t -> field(base_point with coordinate var replaced by t)``."""

    def __init__(self, field: SmoothField, base_point, var: int):
        self.field = field
        self.base_point = np.asarray(base_point, dtype=float)
        self.var = var

    def _point(self, t):
        p = self.base_point.copy()
        p[self.var] = t
        return p

    def taylor(self, t, order):
        space = jet_space(self.field.num_vars, order)
        full = self.field.coeffs(self._point(t), order)
        out = np.zeros(order + 1)
        for n in range(order + 1):
            alpha = [0] * self.field.num_vars
            alpha[self.var] = n
            out[n] = full[space.position[tuple(alpha)]]
        return out

    def value(self, point):
        return self.field.value(self._point(float(np.asarray(point).reshape(-1)[0])))


class DiagonalPullback(SmoothField):
    """Pullback of ``field`` along the linear map p -> scales * p."""

    def __init__(self, field: SmoothField, scales):
        self.field = field
        self.scales = np.asarray(scales, dtype=float)
        self.num_vars = field.num_vars
        if self.scales.shape != (self.num_vars,):
            raise ValueError(f"need {self.num_vars} scales, got {self.scales.shape}")

    def coeffs(self, point, order):
        space = jet_space(self.num_vars, order)
        powers = np.array([np.prod(self.scales ** np.array(a)) for a in space.indices])
        return self.field.coeffs(self.scales * np.asarray(point), order) * powers

    def value(self, point):
        return self.field.value(self.scales * np.asarray(point, dtype=float))
