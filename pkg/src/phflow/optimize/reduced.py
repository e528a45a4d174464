"""Reduced objective ``w -> J(S(w), w)`` and its adjoint gradient."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from ..integrate import AdjointTrajectory, TimeGrid, Trajectory, integrate_adjoint, integrate_forward
from ..phs import PhsSystem
from .costs import CostFunctional
from .riesz import h1_inner, riesz_h1

__all__ = ["Controls", "Evaluation", "evaluate", "reduced_cost", "gradient", "fd_gradient_check", "control_inner"]


@dataclass(frozen=True)
class Controls:
    """Control pair ``w = (u, z0)``: an ``(N+1, m)`` input signal and an initial state."""

    u: np.ndarray
    z0: np.ndarray

    def __add__(self, other: "Controls") -> "Controls":
        return Controls(self.u + other.u, self.z0 + other.z0)

    def __mul__(self, s: float) -> "Controls":
        return Controls(s * self.u, s * self.z0)

    __rmul__ = __mul__


@dataclass(frozen=True)
class Evaluation:
    value: float
    trajectory: Trajectory
    adjoint: Optional[AdjointTrajectory] = None
    grad_u: Optional[np.ndarray] = None  # Euclidean, d value / d u_k
    grad_z0: Optional[np.ndarray] = None


def _regularization(grid: TimeGrid, w: Controls, cost: CostFunctional):
    lam, dt = cost.lam, grid.dt
    u = w.u
    if cost.control_norm == "l2":
        val = 0.5 * lam * (dt * np.sum(u[:-1] ** 2) + float(w.z0 @ w.z0))
        gu = np.zeros_like(u)
        gu[:-1] = lam * dt * u[:-1]
        return val, gu, lam * w.z0
    du = np.diff(u, axis=0) / dt
    val = 0.5 * lam * dt * np.sum(du**2)
    gu = np.zeros_like(u)
    gu[1:] += lam * du
    gu[:-1] -= lam * du
    return val, gu, np.zeros_like(w.z0)


def evaluate(sys: PhsSystem, grid: TimeGrid, w: Controls, cost: CostFunctional, with_gradient: bool = True) -> Evaluation:
    """Forward solve, objective value and (optionally) the adjoint sweep.

    Running costs use the left-endpoint rule ``sum_{k<N} dt c(z_k, t_k)``.
    Raises ``BarrierDomainError`` when a state leaves the barrier's domain.
    """
    traj = integrate_forward(sys, grid, w.z0, w.u)
    times = grid.times
    value = grid.dt * float(np.sum(cost.running(traj.states[:-1], times[:-1])))
    value += cost.terminal(traj.states[-1])
    reg_val, reg_u, reg_z0 = _regularization(grid, Controls(traj.controls, w.z0), cost)
    value += reg_val
    if not with_gradient:
        return Evaluation(value, traj)
    adj = integrate_adjoint(sys, grid, traj, cost)
    grad_u = grid.dt * adj.control_density + reg_u
    grad_z0 = adj.costates[0] + reg_z0
    return Evaluation(value, traj, adj, grad_u, grad_z0)


def reduced_cost(sys: PhsSystem, grid: TimeGrid, w: Controls, cost: CostFunctional) -> float:
    return evaluate(sys, grid, w, cost, with_gradient=False).value


def _gradient_from(grid: TimeGrid, w: Controls, cost: CostFunctional, ev: Evaluation) -> Controls:
    dens = ev.adjoint.control_density
    if cost.control_norm == "l2":
        gu = dens.copy()
        gu[:-1] += cost.lam * np.asarray(w.u, dtype=float)[:-1]
        return Controls(gu, ev.grad_z0)
    p = np.zeros_like(dens)
    p[1:-1] = dens[1:-1]
    # the trapezoid weight at t_0 is dt/2
    p[0] = 2.0 * dens[0]
    return Controls(riesz_h1(grid, cost.lam, ev.trajectory.controls, p), ev.grad_z0)


def gradient(sys: PhsSystem, grid: TimeGrid, w: Controls, cost: CostFunctional) -> Controls:
    """Gradient representative of the reduced objective.

    For ``control_norm="l2"`` the input part holds the L2 samples
    ``lam u_k + (adjoint control density)_k`` and the state part
    ``lam z0 + phi_0``. For ``"h1"`` the input part is the weighted-H1 Riesz
    representative, vanishing at ``t = 0``.
    """
    ev = evaluate(sys, grid, w, cost)
    return _gradient_from(grid, w, cost, ev)


def control_inner(grid: TimeGrid, cost: CostFunctional, g: Controls, h: Controls) -> float:
    """Inner product in which :func:`gradient` represents the derivative."""
    if cost.control_norm == "l2":
        ip = grid.dt * float(np.sum(g.u[:-1] * h.u[:-1]))
    else:
        ip = h1_inner(grid, cost.lam, g.u, h.u)
    return ip + float(g.z0 @ h.z0)


def fd_gradient_check(
    sys: PhsSystem,
    grid: TimeGrid,
    w: Controls,
    cost: CostFunctional,
    n_directions: int = 3,
    step: float = 1e-5,
    seed: int = 0,
    project: Optional[Callable[[Controls], Controls]] = None,
) -> float:
    """Worst relative gap between ``<grad, h>`` and central differences along random ``h``.

    ``project`` maps raw random directions into the admissible set (for
    instance circulations with ``u(0) = 0``). Directions default to the input
    signal only for ``h1`` costs and to both parts for ``l2`` costs. For ``h1``
    costs the input directions are discrete Brownian paths from zero: white
    noise barely moves the state, so its differences drown in rounding error.
    Directions are scaled to unit max-norm and differenced with the five-point
    central stencil at spacing ``step``.
    """
    rng = np.random.default_rng(seed)
    g = gradient(sys, grid, w, cost)
    worst = 0.0
    for _ in range(n_directions):
        hu = rng.standard_normal(w.u.shape)
        hz = rng.standard_normal(w.z0.shape) if cost.control_norm == "l2" else np.zeros_like(w.z0)
        if cost.control_norm == "h1":
            hu[0] = 0.0
            hu = np.cumsum(hu, axis=0) * np.sqrt(grid.dt)
        h = Controls(hu, hz)
        if project is not None:
            h = project(h)
        size = max(np.max(np.abs(h.u), initial=0.0), np.max(np.abs(h.z0), initial=0.0))
        if size == 0:
            raise ValueError("degenerate direction (norm 0)")
        h = h * (1.0 / size)

        def at(s):
            return reduced_cost(sys, grid, w + s * h, cost)

        # five-point central stencil: the barrier's curvature near a bound makes
        # the O(step^2) error of the three-point rule visible at 1e-6
        fd = (8.0 * (at(step) - at(-step)) - (at(2 * step) - at(-2 * step))) / (12.0 * step)
        an = control_inner(grid, cost, g, h)
        scale = max(abs(fd), abs(an))
        if scale == 0:
            continue
        worst = max(worst, abs(fd - an) / scale)
    return worst
