import logging
import math
import threading
from typing import Callable

import numpy as np

from .errors import DomainError, IntegrationError

logger = logging.getLogger("smoothfield.ode")

RK4_STEP = 1e-3
RICHARDSON_TOL = 1e-9
CHUNK_STEPS = 256


def rk4_step(rhs, t: float, y: np.ndarray, h: float) -> np.ndarray:
    k1 = rhs(t, y)
    k2 = rhs(t + 0.5 * h, y + 0.5 * h * k1)
    k3 = rhs(t + 0.5 * h, y + 0.5 * h * k2)
    k4 = rhs(t + h, y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


class GridTrajectory:
    """
    Solution of y' = rhs(t, y), y(t0) = y0 on a fixed RK4 grid t0 + k*step.

    Grid nodes are computed lazily in chunks on both sides of t0 and kept;
    values between nodes take one RK4 substep from the node on the t0 side.
    Every newly integrated chunk, in either direction, is integrated a second
    time with half the step and the two must agree to RICHARDSON_TOL.
    """

    def __init__(
        self,
        rhs: Callable[[float, np.ndarray], np.ndarray],
        t0: float,
        y0,
        step: float = RK4_STEP,
        domain: tuple[float, float] = (-math.inf, math.inf),
        name: str = "trajectory",
    ):
        lo, hi = domain
        if not lo <= t0 <= hi:
            raise DomainError(f"{name}: initial time {t0} outside domain [{lo}, {hi}]")
        self.rhs = rhs
        self.t0 = float(t0)
        self.step = float(step)
        self.domain = (float(lo), float(hi))
        self.name = name
        y0 = np.array(y0, dtype=float)
        self._nodes = {1: [y0], -1: [y0]}
        self._lock = threading.Lock()

    def _max_steps(self, direction: int) -> float:
        bound = self.domain[1] if direction > 0 else self.domain[0]
        if math.isinf(bound):
            return math.inf
        return math.floor(abs(bound - self.t0) / self.step + 1e-9)

    def _extend(self, direction: int, needed: int):
        nodes = self._nodes[direction]
        limit = self._max_steps(direction)
        target = min(needed + CHUNK_STEPS, limit)
        h = direction * self.step
        k = len(nodes) - 1
        start = k
        y = nodes[-1]
        fresh = []
        while k < target:
            y = rk4_step(self.rhs, self.t0 + k * h, y, h)
            if not np.all(np.isfinite(y)):
                raise IntegrationError(f"{self.name}: non-finite state at t={self.t0 + (k + 1) * h}")
            fresh.append(y)
            k += 1
        if not fresh:
            return
        # a chunk is kept only once it passes
        self._richardson(direction, start, nodes[-1], fresh[-1], len(fresh))
        nodes.extend(fresh)
        logger.debug("[ODE] %s extended %+d steps %d -> %d", self.name, direction, start, k)

    def _richardson(self, direction: int, start: int, y_start: np.ndarray, coarse: np.ndarray, steps: int):
        h = direction * self.step / 2.0
        t_start = self.t0 + direction * start * self.step
        y = y_start
        for k in range(2 * steps):
            y = rk4_step(self.rhs, t_start + k * h, y, h)
        scale = max(1.0, float(np.max(np.abs(coarse))))
        gap = float(np.max(np.abs(coarse - y)))
        logger.debug("[ODE] %s Richardson gap %.3e over %d steps", self.name, gap, steps)
        if gap > RICHARDSON_TOL * scale:
            raise IntegrationError(
                f"{self.name}: step {self.step} fails the Richardson check "
                f"(gap {gap:.3e} > {RICHARDSON_TOL * scale:.3e})"
            )

    def __call__(self, t: float) -> np.ndarray:
        t = float(t)
        lo, hi = self.domain
        if not lo <= t <= hi:
            raise DomainError(f"{self.name}: t={t} outside domain [{lo}, {hi}]")
        offset = t - self.t0
        direction = 1 if offset >= 0 else -1
        k = int(math.floor(abs(offset) / self.step))
        nodes = self._nodes[direction]
        if k >= len(nodes):
            with self._lock:
                if k >= len(nodes):
                    self._extend(direction, k)
        k = min(k, len(nodes) - 1)
        t_node = self.t0 + direction * k * self.step
        rest = t - t_node
        if rest == 0.0:
            return nodes[k].copy()
        return rk4_step(self.rhs, t_node, nodes[k], rest)
