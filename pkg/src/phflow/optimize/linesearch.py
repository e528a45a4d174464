from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

__all__ = ["ArmijoParams", "ArmijoResult", "NotDescentError", "armijo"]


class NotDescentError(ValueError):
    """The search direction does not decrease the objective to first order."""


@dataclass(frozen=True)
class ArmijoParams:
    sigma0: float = 1.0
    factor: float = 0.5
    c1: float = 1e-4
    max_backtracks: int = 20

    def __post_init__(self):
        if not 0 < self.factor < 1:
            raise ValueError("backtracking factor must lie in (0, 1)")
        if not 0 < self.c1 < 1:
            raise ValueError("sufficient-decrease constant must lie in (0, 1)")
        if self.sigma0 <= 0 or self.max_backtracks < 0:
            raise ValueError("invalid initial step or backtrack limit")


@dataclass(frozen=True)
class ArmijoResult:
    sigma: Optional[float]
    value: float
    backtracks: int

    @property
    def accepted(self) -> bool:
        return self.sigma is not None


def armijo(
    evaluate: Callable[[float], float],
    base_cost: float,
    directional_derivative: float,
    params: ArmijoParams = ArmijoParams(),
) -> ArmijoResult:
    """Backtracking line search on ``sigma = sigma0 * factor**j``, ``j = 0..max_backtracks``.

    ``evaluate(sigma)`` may return ``inf`` (or NaN) for points outside the
    objective's domain; those trials are simply rejected. A step that never
    satisfies the sufficient-decrease test yields ``sigma=None``.
    """
    if not directional_derivative < 0:
        raise NotDescentError(f"directional derivative {directional_derivative:g} is not negative")
    sigma = params.sigma0
    for j in range(params.max_backtracks + 1):
        value = evaluate(sigma)
        if math.isfinite(value) and value <= base_cost + params.c1 * sigma * directional_derivative:
            return ArmijoResult(sigma, value, j)
        sigma *= params.factor
    return ArmijoResult(None, base_cost, params.max_backtracks)
