"""Projections onto circulations and the KKT linear-program direction."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve, LinAlgError

from ..mcf_lp.lp import LpProblem, solve_lp
from ..network import Network, check_feasible, incidence

__all__ = ["RankDeficientError", "CirculationProjector", "project_circulation", "KktDirection", "project_kkt_lp"]


class RankDeficientError(np.linalg.LinAlgError):
    pass


class CirculationProjector:
    """Orthogonal projector ``I - A^T (A A^T)^{-1} A`` onto ``{h : A h = 0}``.

    ``A`` must have full row rank; pass the reduced incidence matrix. The
    Cholesky factor is computed once and applied along the last axis of any
    input, so a whole time-sampled signal projects in one call.
    """

    def __init__(self, a_reduced):
        a = np.asarray(a_reduced, dtype=float)
        if a.ndim != 2:
            raise ValueError("expected a matrix")
        gram = a @ a.T
        if a.shape[0] and np.linalg.matrix_rank(a) < a.shape[0]:
            raise RankDeficientError("constraint matrix is rank deficient; use the reduced incidence matrix")
        try:
            self._factor = cho_factor(gram) if a.shape[0] else None
        except LinAlgError:
            raise RankDeficientError("A A^T is not positive definite") from None
        self.a = a

    @classmethod
    def for_network(cls, net: Network) -> "CirculationProjector":
        return cls(incidence(net).reduced)

    def __call__(self, g) -> np.ndarray:
        g = np.asarray(g, dtype=float)
        if self._factor is None:
            return g.copy()
        flat = g.reshape(-1, g.shape[-1])
        y = cho_solve(self._factor, self.a @ flat.T)
        return (flat - (self.a.T @ y).T).reshape(g.shape)


def project_circulation(a_reduced, g) -> np.ndarray:
    return CirculationProjector(a_reduced)(g)


@dataclass(frozen=True)
class KktDirection:
    direction: np.ndarray
    objective: float


def project_kkt_lp(net: Network, x_hat, grad, tol: float = 1e-9) -> KktDirection:
    """Best circulation step inside the box: ``min grad.h`` s.t. ``A h = 0``, ``l - x <= h <= u - x``.

    ``x_hat + direction`` is a feasible flow, and ``objective <= 0`` since
    ``h = 0`` is feasible.
    """
    x_hat = np.asarray(x_hat, dtype=float)
    grad = np.asarray(grad, dtype=float)
    report = check_feasible(net, x_hat, tol=max(tol, 1e-9))
    if not report.feasible:
        raise ValueError(
            f"infeasible flow: conservation residual {report.conservation_residual:g}, "
            f"bound violation {report.bound_violation:g}"
        )
    a = incidence(net).reduced
    lo = np.minimum(net.lower - x_hat, 0.0)
    hi = np.maximum(net.upper - x_hat, 0.0)
    res = solve_lp(LpProblem(grad, a, np.zeros(a.shape[0]), lo, hi))
    if res.status != "optimal":
        raise RuntimeError(f"direction LP returned status {res.status}")
    return KktDirection(res.x, float(grad @ res.x))
