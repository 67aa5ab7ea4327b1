"""Numeric primitives shared by the MAC models: the Gaussian Q-function and a
damped fixed-point solver for the coupled (channel-busy, HOL-delay) equations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence, Tuple

PROB_CLAMP = 1.0 - 1e-12


class NonConvergence(RuntimeError):
    def __init__(self, residual: float, iterations: int):
        super().__init__(f"fixed point not converged: residual={residual:.3e} "
                         f"after {iterations} iterations")
        self.residual = residual
        self.iterations = iterations


class DivergenceError(RuntimeError):
    """A fixed-point coordinate became non-finite."""


def q_function(x: float) -> float:
    """Tail probability P[Z > x] of the standard normal."""
    return 0.5 * math.erfc(x / math.sqrt(2.0))


@dataclass(frozen=True)
class FixedPointProblem:
    """x* = map(x*) solved by damped iteration x <- (1-a)x + a*map(x).

    prob_coords lists the coordinates that are probabilities; they are clamped
    into [0, 1-1e-12] after every step so busy-period denominators stay finite.
    """

    residual_map: Callable[[Tuple[float, ...]], Tuple[float, ...]]
    tolerance: float = 1e-9
    max_iters: int = 10000
    damping: float = 0.5
    prob_coords: Tuple[int, ...] = ()

    def __post_init__(self):
        if not (0.0 < self.damping <= 1.0):
            raise ValueError("damping must be in (0, 1]")
        if self.tolerance <= 0:
            raise ValueError("tolerance must be > 0")


@dataclass(frozen=True)
class FixedPointResult:
    x: Tuple[float, ...]
    residual: float
    iterations: int


def _clamp(x: Sequence[float], prob_coords: Sequence[int]) -> Tuple[float, ...]:
    out = list(x)
    for i in prob_coords:
        if out[i] < 0.0:
            out[i] = 0.0
        elif out[i] > PROB_CLAMP:
            out[i] = PROB_CLAMP
    return tuple(out)


def _iterate(problem: FixedPointProblem, init: Sequence[float],
             damping: float) -> FixedPointResult:
    x = _clamp(tuple(float(v) for v in init), problem.prob_coords)
    best = math.inf
    for it in range(1, problem.max_iters + 1):
        fx = problem.residual_map(x)
        if any(not math.isfinite(v) for v in fx):
            raise DivergenceError(f"non-finite iterate {fx} at iteration {it}")
        scale = max(1.0, max(abs(v) for v in x))
        residual = max(abs(a - b) for a, b in zip(fx, x)) / scale
        best = min(best, residual)
        if residual <= problem.tolerance:
            return FixedPointResult(_clamp(fx, problem.prob_coords), residual, it)
        x = _clamp(tuple((1.0 - damping) * a + damping * b for a, b in zip(x, fx)),
                   problem.prob_coords)
    raise NonConvergence(best, problem.max_iters)


def solve_fixed_point(problem: FixedPointProblem,
                      init: Sequence[float]) -> FixedPointResult:
    """Solve the fixed point; on failure retry once with heavy damping (0.1),
    since the busy-period map can oscillate near saturation."""
    try:
        return _iterate(problem, init, problem.damping)
    except NonConvergence:
        if problem.damping <= 0.1:
            raise
        return _iterate(problem, init, 0.1)
