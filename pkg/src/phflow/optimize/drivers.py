"""Projected gradient descent drivers for static and dynamic flow problems."""

from __future__ import annotations

import csv
import logging
import math
import os
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..integrate import TimeGrid, Trajectory, integrate_forward
from ..mcf_lp import solve_mcf, worst_case_flow
from ..network import Network, check_feasible
from ..phs import flow_phs
from .costs import BarrierDomainError, BarrierParams, CostFunctional, dynamic_flow_cost, static_linear_cost
from .linesearch import ArmijoParams, NotDescentError, armijo
from .projection import CirculationProjector, project_kkt_lp
from .reduced import Controls, _gradient_from, evaluate, reduced_cost

__all__ = [
    "IterationRecord",
    "OptimizerRun",
    "flow_cost",
    "run_static_kkt",
    "run_static_barrier",
    "run_dynamic",
    "write_run",
    "STATIC_GRID",
]

log = logging.getLogger(__name__)

STATIC_GRID = TimeGrid(1.0, 10)


@dataclass(frozen=True)
class IterationRecord:
    """One accepted gradient step (``iteration`` 0 describes the start).

    ``objective_before``/``objective`` are the optimized objective at the
    old and new iterate under the barrier parameters used for the step;
    ``cost`` is the unnormalized flow cost of the new iterate.
    """

    iteration: int
    cost: float
    objective_before: float
    objective: float
    proj_grad_norm: float
    sigma: float
    alpha: float
    epsilon: float
    backtracks: int = 0


@dataclass
class OptimizerRun:
    mode: str
    network: Network
    grid: TimeGrid
    control: np.ndarray
    trajectory: Trajectory
    termination: str
    history: list[IterationRecord] = field(default_factory=list)

    @property
    def iterations(self) -> int:
        return len(self.history) - 1

    @property
    def costs(self) -> np.ndarray:
        return np.array([r.cost for r in self.history])

    @property
    def final_cost(self) -> float:
        return self.history[-1].cost

    @property
    def flows(self) -> np.ndarray:
        """Edge flows over the grid, shape ``(N+1, N_e)``."""
        return self.trajectory.states[:, self.network.n_nodes :]

    def flow_at(self, t: float) -> np.ndarray:
        return self.flows[self.grid.index_of(t)]


def flow_cost(net: Network, grid: TimeGrid, flows: np.ndarray) -> float:
    """``sum_{k<N} dt c(t_k).x_k`` with the network's own (unnormalized) costs."""
    t = grid.times[:-1]
    return float(grid.dt * np.einsum("ke,ke->", flows[:-1], net.cost_at(t)))


def _static_problem(net: Network, grid: TimeGrid):
    sys = flow_phs(net)
    u = np.zeros((grid.steps + 1, sys.dim_input))
    u[:, : net.n_nodes] = -net.supply
    return sys, u


def _static_controls(net: Network, u: np.ndarray, x_hat: np.ndarray) -> Controls:
    return Controls(u, np.concatenate([np.zeros(net.n_nodes), x_hat]))


def _inside(net: Network, flows, epsilon: float) -> bool:
    """Strictly inside the bounds relaxed by ``epsilon`` (any leading shape)."""
    return bool(np.all(flows < net.upper + epsilon) and np.all(flows > net.lower - epsilon))


def _require_feasible(net: Network, x, tol: float = 1e-9):
    rep = check_feasible(net, x, tol)
    if not rep.feasible:
        raise ValueError(
            f"start flow is infeasible (conservation residual {rep.conservation_residual:g} at node "
            f"{rep.worst_node}, bound violation {rep.bound_violation:g} on edge {rep.worst_edge})"
        )


def run_static_kkt(
    net: Network,
    x0=None,
    eps_stop: float = 1e-6,
    max_iters: int = 10,
    armijo_params: ArmijoParams = ArmijoParams(sigma0=1.0),
    grid: TimeGrid = STATIC_GRID,
) -> OptimizerRun:
    """Gradient descent on the initial flow with the KKT linear program as projection.

    With a linear cost the first LP direction already reaches an optimal
    vertex, so one step suffices. ``x0`` defaults to the worst-case flow.
    """
    if x0 is None:
        x0 = worst_case_flow(net).x
    x = np.array(x0, dtype=float)
    _require_feasible(net, x)
    sys, u = _static_problem(net, grid)
    cost = static_linear_cost(net, horizon=grid.horizon)
    nv = net.n_nodes
    w = _static_controls(net, u, x)
    ev = evaluate(sys, grid, w, cost)
    history = [IterationRecord(0, float(net.cost @ x), ev.value, ev.value, math.nan, 0.0, 0.0, 0.0)]
    termination = "max_iters"
    for it in range(1, max_iters + 1):
        grad = ev.grad_z0[nv:]
        step = project_kkt_lp(net, x, grad)
        norm1 = float(np.sum(np.abs(step.direction)))
        if step.objective >= -eps_stop:
            termination = "tolerance"
            break
        h = step.direction

        def at(sigma):
            return reduced_cost(sys, grid, _static_controls(net, u, x + sigma * h), cost)

        try:
            ls = armijo(at, ev.value, step.objective, armijo_params)
        except NotDescentError:
            termination = "line_search_failure"
            break
        if not ls.accepted:
            termination = "line_search_failure"
            break
        before = ev.value
        x = x + ls.sigma * h
        w = _static_controls(net, u, x)
        ev = evaluate(sys, grid, w, cost)
        history.append(IterationRecord(it, float(net.cost @ x), before, ls.value, norm1, ls.sigma, 0.0, 0.0, ls.backtracks))
    traj = integrate_forward(sys, grid, w.z0, w.u)
    return OptimizerRun("static-kkt", net, grid, x, traj, termination, history)


def run_static_barrier(
    net: Network,
    alpha0: float,
    eps0: float,
    max_iters: int = 300,
    armijo_params: ArmijoParams = ArmijoParams(sigma0=1.0, max_backtracks=20),
    alpha_factor: float = 0.9,
    alpha_min: float = 0.01,
    eps_factor: float = 0.99,
    eps_stop: float = 1e-6,
    x0=None,
    normalize: bool = True,
    grid: TimeGrid = STATIC_GRID,
) -> OptimizerRun:
    """Barrier-augmented gradient descent with the orthogonal circulation projection.

    Starts from the worst-case flow unless ``x0`` is given. After every
    accepted step ``alpha`` and ``epsilon`` follow their geometric schedules.
    """
    if x0 is None:
        x0 = worst_case_flow(net).x
    x = np.array(x0, dtype=float)
    _require_feasible(net, x)
    barrier = BarrierParams(alpha0, eps0, alpha_factor, alpha_min, eps_factor)
    if barrier.epsilon == 0 and np.any((x <= net.lower) | (x >= net.upper)):
        raise ValueError("no interior start: flow touches a bound and epsilon = 0")
    sys, u = _static_problem(net, grid)
    cost = static_linear_cost(net, horizon=grid.horizon, normalize=normalize, barrier=barrier)
    proj = CirculationProjector.for_network(net)
    nv = net.n_nodes

    ev = evaluate(sys, grid, _static_controls(net, u, x), cost)
    history = [IterationRecord(0, float(net.cost @ x), ev.value, ev.value, math.nan, 0.0, barrier.alpha, barrier.epsilon)]
    termination = "max_iters"
    for it in range(1, max_iters + 1):
        g = ev.grad_z0[nv:]
        pg = proj(g)
        norm1 = float(np.sum(np.abs(pg)))
        if norm1 < eps_stop:
            termination = "tolerance"
            break
        d = -pg
        dd = float(g @ d)

        # trial points must also survive the next epsilon decrease
        eps_next = barrier.advance().epsilon

        def at(sigma, cost=cost, eps_next=eps_next):
            trial = x + sigma * d
            if not _inside(net, trial, eps_next):
                return math.inf
            try:
                return reduced_cost(sys, grid, _static_controls(net, u, trial), cost)
            except BarrierDomainError:
                return math.inf

        try:
            ls = armijo(at, ev.value, dd, armijo_params)
        except NotDescentError:
            termination = "line_search_failure"
            break
        if not ls.accepted:
            termination = "line_search_failure"
            break
        x = x + ls.sigma * d
        history.append(
            IterationRecord(
                it, float(net.cost @ x), ev.value, ls.value, norm1, ls.sigma, barrier.alpha, barrier.epsilon, ls.backtracks
            )
        )
        barrier = barrier.advance()
        cost = cost.with_barrier(barrier)
        ev = evaluate(sys, grid, _static_controls(net, u, x), cost)
    w = _static_controls(net, u, x)
    traj = integrate_forward(sys, grid, w.z0, w.u)
    return OptimizerRun("static-barrier", net, grid, x, traj, termination, history)


def run_dynamic(
    net: Network,
    lam: float = 1e-3,
    grid: TimeGrid = TimeGrid(1.0, 1000),
    max_iters: int = 50,
    armijo_params: ArmijoParams = ArmijoParams(sigma0=1000.0, max_backtracks=20),
    alpha0: float = 1.0,
    eps0: float = 1e-3,
    alpha_factor: float = 0.9,
    alpha_min: float = 0.01,
    eps_factor: float = 0.99,
    eps_stop: float = 1e-6,
    x0=None,
    normalize: bool = False,
    u0=None,
) -> OptimizerRun:
    """Optimize the edge input ``u_x(t)`` of the dynamic flow system.

    Admissible inputs are circulations at every grid node with ``u_x(0) = 0``;
    node inputs stay fixed at ``-b``. The gradient is the weighted-H1 Riesz
    representative, projected pointwise in time. ``x0`` defaults to the
    optimal static flow for the costs at ``t = 0``. Costs enter unnormalized
    by default: with ``normalize=True`` the ``lam`` penalty dominates and the
    optimal control no longer switches paths.
    """
    if net.cost_function is None:
        raise ValueError("dynamic optimization needs a network with an EdgeCostFunction")
    nv, ne = net.n_nodes, net.n_edges
    if x0 is None:
        sol = solve_mcf(net.replace(cost=net.cost_at(0.0)))
        if sol.status != "optimal":
            raise ValueError("no feasible start flow")
        x0 = sol.x
    x0 = np.array(x0, dtype=float)
    _require_feasible(net, x0)
    sys = flow_phs(net, dynamic=True)
    proj = CirculationProjector.for_network(net)
    barrier = BarrierParams(alpha0, eps0, alpha_factor, alpha_min, eps_factor)
    cost: CostFunctional = dynamic_flow_cost(net, lam, normalize=normalize, barrier=barrier, horizon=grid.horizon)

    u = np.zeros((grid.steps + 1, nv + ne))
    u[:, :nv] = -net.supply
    if u0 is not None:
        u[:, nv:] = u0
    z0 = np.concatenate([np.zeros(nv), x0])

    ev = evaluate(sys, grid, Controls(u, z0), cost)
    history = [
        IterationRecord(0, flow_cost(net, grid, ev.trajectory.states[:, nv:]), ev.value, ev.value, math.nan, 0.0, barrier.alpha, barrier.epsilon)
    ]
    termination = "max_iters"
    for it in range(1, max_iters + 1):
        g = _gradient_from(grid, Controls(u, z0), cost, ev).u[:, nv:]
        pg = proj(g)
        pg[0] = 0.0
        norm1 = float(grid.dt * np.sum(np.abs(pg)))
        if norm1 < eps_stop:
            termination = "tolerance"
            break
        d = np.zeros_like(u)
        d[:, nv:] = -pg
        dd = float(np.sum(ev.grad_u * d))

        eps_next = barrier.advance().epsilon

        def at(sigma, cost=cost, d=d, eps_next=eps_next):
            try:
                ev_t = evaluate(sys, grid, Controls(u + sigma * d, z0), cost, with_gradient=False)
            except BarrierDomainError:
                return math.inf
            if not _inside(net, ev_t.trajectory.states[:, nv:], eps_next):
                return math.inf
            return ev_t.value

        try:
            ls = armijo(at, ev.value, dd, armijo_params)
        except NotDescentError:
            termination = "line_search_failure"
            break
        if not ls.accepted:
            termination = "line_search_failure"
            break
        u = u + ls.sigma * d
        before = ev.value
        params_used = barrier
        barrier = barrier.advance()
        cost = cost.with_barrier(barrier)
        ev = evaluate(sys, grid, Controls(u, z0), cost)
        history.append(
            IterationRecord(
                it,
                flow_cost(net, grid, ev.trajectory.states[:, nv:]),
                before,
                ls.value,
                norm1,
                ls.sigma,
                params_used.alpha,
                params_used.epsilon,
                ls.backtracks,
            )
        )
        log.debug("dynamic step %d: sigma=%g cost=%.6g", it, ls.sigma, history[-1].cost)
    return OptimizerRun("dynamic", net, grid, u[:, nv:].copy(), ev.trajectory, termination, history)


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def write_run(run: OptimizerRun, out_dir) -> None:
    """Write ``history.csv``, ``flow.csv`` and ``control.csv`` into ``out_dir``."""
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "history.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iter", "cost", "proj_grad_norm", "sigma", "alpha", "eps", "objective_before", "objective", "backtracks"])
        for r in run.history:
            w.writerow(
                [_fmt(r.iteration), _fmt(r.cost), _fmt(r.proj_grad_norm), _fmt(r.sigma), _fmt(r.alpha), _fmt(r.epsilon),
                 _fmt(r.objective_before), _fmt(r.objective), _fmt(r.backtracks)]
            )
    edge_cols = [f"x_{e + 1}" for e in range(run.network.n_edges)]
    times = run.grid.times
    with open(os.path.join(out_dir, "flow.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t"] + edge_cols)
        for k, t in enumerate(times):
            w.writerow([_fmt(t)] + [_fmt(v) for v in run.flows[k]])
    with open(os.path.join(out_dir, "control.csv"), "w", newline="") as fh:
        w = csv.writer(fh)
        if run.control.ndim == 1:
            # static runs optimize the initial flow
            w.writerow(["t"] + edge_cols)
            w.writerow([_fmt(0.0)] + [_fmt(v) for v in run.control])
        else:
            w.writerow(["t"] + [f"u_{e + 1}" for e in range(run.network.n_edges)])
            for k, t in enumerate(times):
                w.writerow([_fmt(t)] + [_fmt(v) for v in run.control[k]])
