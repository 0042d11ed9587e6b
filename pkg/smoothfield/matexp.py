import math
from functools import lru_cache

import numpy as np
import scipy.linalg

from .base import UnivariateField
from .jet import MAX_ORDER


class MatrixExpCurve:
    """
    The curve t -> e^{tF}. The k-th derivative is F^k e^{tF}, so Taylor
    coefficients are F^k e^{tF} / k! with e^{tF} from scipy's expm.
    """

    def __init__(self, F):
        F = np.array(F, dtype=float)
        if F.ndim != 2 or F.shape[0] != F.shape[1]:
            raise ValueError(f"matrix exponential curve needs a square matrix, got shape {F.shape}")
        self.F = F
        self.dim = F.shape[0]
        self._powers = [np.eye(self.dim)]
        for _ in range(MAX_ORDER + 1):
            self._powers.append(self._powers[-1] @ F)
        self._expm = lru_cache(maxsize=1024)(self._expm_uncached)

    def _expm_uncached(self, t: float) -> np.ndarray:
        return scipy.linalg.expm(t * self.F)

    def value(self, t: float) -> np.ndarray:
        return self._expm(float(t)).copy()

    def taylor(self, t: float, order: int) -> np.ndarray:
        """Array of shape (order + 1, dim, dim)."""
        E = self._expm(float(t))
        return np.stack([self._powers[k] @ E / math.factorial(k) for k in range(order + 1)])

    def entry(self, i: int, j: int) -> "MatrixExpEntry":
        return MatrixExpEntry(self, i, j)


class MatrixExpEntry(UnivariateField):
    def __init__(self, curve: MatrixExpCurve, i: int, j: int):
        self.curve = curve
        self.i = i
        self.j = j

    def taylor(self, t, order):
        return self.curve.taylor(t, order)[:, self.i, self.j]

    def value(self, point):
        t = float(np.asarray(point).reshape(-1)[0])
        return float(self.curve.value(t)[self.i, self.j])

    def __repr__(self):
        return f"MatrixExpEntry({self.i}, {self.j})"


def matrix_exp_curve(F) -> list[list[MatrixExpEntry]]:
    curve = MatrixExpCurve(F)
    return [[curve.entry(i, j) for j in range(curve.dim)] for i in range(curve.dim)]
