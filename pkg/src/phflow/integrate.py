"""Forward integration and the matching discrete adjoint sweep.

The forward scheme is symplectic (partitioned) Euler when the system declares
a two-block split and explicit Euler otherwise. Controls are piecewise
constant on each step using the left sample ``u_k``; the final control sample
is stored but never used.

The adjoint is the exact transpose of the discrete forward map, so
gradients assembled from it are exact gradients of the discretized objective
(left-endpoint rectangle rule for running costs).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from .phs import DimensionError, PhsSystem

__all__ = [
    "IntegrationError",
    "TimeGrid",
    "Trajectory",
    "AdjointTrajectory",
    "CostDerivatives",
    "integrate_forward",
    "integrate_adjoint",
    "energy_drift",
    "write_trajectory_csv",
]


class IntegrationError(ArithmeticError):
    def __init__(self, step: int, message: str = "non-finite state"):
        super().__init__(f"{message} at step {step}")
        self.step = step


@dataclass(frozen=True)
class TimeGrid:
    horizon: float
    steps: int

    def __post_init__(self):
        if int(self.steps) != self.steps or self.steps < 1:
            raise ValueError("steps must be a positive integer")
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")

    @property
    def dt(self) -> float:
        return self.horizon / self.steps

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.steps + 1) * self.dt

    def index_of(self, t: float) -> int:
        k = int(round(t / self.dt))
        if not 0 <= k <= self.steps or abs(k * self.dt - t) > 1e-9 * max(1.0, self.horizon):
            raise ValueError(f"t = {t} is not a grid node")
        return k


@dataclass(frozen=True)
class Trajectory:
    grid: TimeGrid
    states: np.ndarray
    controls: np.ndarray
    scheme: str = "symplectic_euler"
    warnings: tuple[str, ...] = field(default_factory=tuple)


@dataclass(frozen=True)
class AdjointTrajectory:
    """Discrete costates.

    ``costates[k]`` is the sensitivity of the discrete objective to ``z_k``;
    ``costates[0]`` is therefore the initial-condition gradient. ``control_density``
    row ``k < N`` holds the state-cost sensitivity to ``u_k`` divided by ``dt``
    (the L2 gradient density); the last row is zero.
    """

    grid: TimeGrid
    costates: np.ndarray
    control_density: np.ndarray


class CostDerivatives(Protocol):
    def running_grad(self, states: np.ndarray, times: np.ndarray) -> np.ndarray: ...

    def terminal_grad(self, z_final: np.ndarray) -> np.ndarray: ...


def _control_signal(sys: PhsSystem, grid: TimeGrid, u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.ndim == 1:
        u = np.broadcast_to(u, (grid.steps + 1, u.shape[0]))
    if u.shape != (grid.steps + 1, sys.dim_input):
        raise DimensionError(f"control has shape {u.shape}, expected ({grid.steps + 1}, {sys.dim_input})")
    return u


def integrate_forward(sys: PhsSystem, grid: TimeGrid, z0, u) -> Trajectory:
    """Integrate the state from ``z0`` under the sampled control ``u``.

    With ``sys.split = s`` one step reads

        z1_{k+1} = z1_k + dt * f1(z1_k, z2_k, u_k)
        z2_{k+1} = z2_k + dt * f2(z1_{k+1}, z2_k, u_k)

    which for the flow system is ``rho`` first, then ``x`` using the new ``rho``.
    A one-dimensional ``u`` is held constant over the horizon.
    """
    z0 = np.asarray(z0, dtype=float)
    if z0.shape != (sys.dim_state,):
        raise DimensionError(f"initial state has shape {z0.shape}, expected ({sys.dim_state},)")
    u = _control_signal(sys, grid, u)
    n, dt, s = sys.dim_state, grid.dt, sys.split
    states = np.empty((grid.steps + 1, n))
    states[0] = z0
    f = sys.field
    z = z0.copy()
    if s is None:
        for k in range(grid.steps):
            z = z + dt * f(z, u[k])
            states[k + 1] = z
        scheme, warnings = "explicit_euler", ("no two-block split; explicit Euler used",)
    else:
        for k in range(grid.steps):
            z = z.copy()
            z[:s] += dt * f(z, u[k])[:s]
            z[s:] += dt * f(z, u[k])[s:]
            states[k + 1] = z
        scheme, warnings = "symplectic_euler", ()
    if not np.all(np.isfinite(states)):
        bad = int(np.argmax(~np.all(np.isfinite(states), axis=1)))
        raise IntegrationError(bad)
    return Trajectory(grid, states, np.array(u), scheme, warnings)


def integrate_adjoint(sys: PhsSystem, grid: TimeGrid, traj: Trajectory, cost: CostDerivatives) -> AdjointTrajectory:
    """Backward sweep with the transposed linearized forward steps."""
    if traj.grid != grid or traj.states.shape[0] != grid.steps + 1:
        raise ValueError("trajectory was computed on a different grid")
    if not hasattr(cost, "running_grad") or not hasattr(cost, "terminal_grad"):
        raise TypeError("cost must provide running_grad and terminal_grad")
    n, m, dt, s, N = sys.dim_state, sys.dim_input, grid.dt, sys.split, grid.steps
    zs, us = traj.states, traj.controls
    run = np.asarray(cost.running_grad(zs[:-1], grid.times[:-1]), dtype=float)
    lam = np.empty((N + 1, n))
    dens = np.zeros((N + 1, m))
    lam[N] = cost.terminal_grad(zs[N])
    vjp, cvjp = sys.state_vjp, sys.control_vjp
    if s is None:
        for k in range(N - 1, -1, -1):
            nxt = lam[k + 1]
            lam[k] = nxt + dt * vjp(zs[k], us[k], nxt) + dt * run[k]
            dens[k] = cvjp(zs[k], nxt)
    else:
        psi = np.zeros(n)
        for k in range(N - 1, -1, -1):
            nxt = lam[k + 1]
            # second half-step was evaluated at (z1_{k+1}, z2_k)
            mid = zs[k].copy()
            mid[:s] = zs[k + 1, :s]
            psi[:s] = 0.0
            psi[s:] = nxt[s:]
            a2 = vjp(mid, us[k], psi)
            g = cvjp(mid, psi)
            mu1 = nxt[:s] + dt * a2[:s]
            psi[:s] = mu1
            psi[s:] = 0.0
            a1 = vjp(zs[k], us[k], psi)
            g = g + cvjp(zs[k], psi)
            lam[k, :s] = mu1 + dt * a1[:s]
            lam[k, s:] = nxt[s:] + dt * a2[s:] + dt * a1[s:]
            lam[k] += dt * run[k]
            dens[k] = g
    return AdjointTrajectory(grid, lam, dens)


def energy_drift(sys: PhsSystem, traj: Trajectory) -> float:
    """Largest deviation ``|H(z_k) - H(z_0)|`` along the trajectory."""
    z = traj.states
    h = 0.5 * np.einsum("ki,ij,kj->k", z, sys.Q, z)
    return float(np.max(np.abs(h - h[0])))


def write_trajectory_csv(traj: Trajectory, path, include_controls: bool = True) -> None:
    """Write ``t,z_1..z_n[,u_1..u_m]`` rows at 17 significant digits."""
    n = traj.states.shape[1]
    m = traj.controls.shape[1]
    header = ["t"] + [f"z_{i + 1}" for i in range(n)]
    if include_controls:
        header += [f"u_{i + 1}" for i in range(m)]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for k, t in enumerate(traj.grid.times):
            row = [t, *traj.states[k]]
            if include_controls:
                row += list(traj.controls[k])
            w.writerow([format(float(v), ".17g") for v in row])
