"""Cost functionals and the logarithmic barrier on edge flows."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Optional

import numpy as np

from ..network import Network

__all__ = [
    "BarrierDomainError",
    "BarrierParams",
    "barrier_value",
    "barrier_grad",
    "CostFunctional",
    "static_linear_cost",
    "dynamic_flow_cost",
    "tracking_cost",
]


class BarrierDomainError(ValueError):
    def __init__(self, edge: int, message: str = "barrier domain violation"):
        super().__init__(f"{message} on edge {edge + 1}")
        self.edge = edge


@dataclass(frozen=True)
class BarrierParams:
    """Barrier weight ``alpha`` and bound relaxation ``epsilon`` with geometric schedules.

    After every gradient step ``alpha <- max(alpha_factor * alpha, alpha_min)``
    and ``epsilon <- eps_factor * epsilon``.
    """

    alpha: float
    epsilon: float
    alpha_factor: float = 0.9
    alpha_min: float = 0.01
    eps_factor: float = 0.99

    def __post_init__(self):
        if self.alpha < 0 or self.epsilon < 0:
            raise ValueError("alpha and epsilon must be non-negative")
        for q in (self.alpha_factor, self.eps_factor):
            if not 0 < q <= 1:
                raise ValueError("schedule factors must lie in (0, 1]")

    def advance(self) -> "BarrierParams":
        alpha = self.alpha
        if alpha > self.alpha_min:
            alpha = max(self.alpha_factor * alpha, self.alpha_min)
        return replace(self, alpha=alpha, epsilon=self.eps_factor * self.epsilon)


def _barrier_args(x, lower, upper, epsilon):
    x = np.asarray(x, dtype=float)
    hi = upper - x + epsilon
    lo = x - lower + epsilon
    bad = (hi <= 0) | (lo <= 0)
    if np.any(bad):
        # index of the offending edge along the last axis
        edge = int(np.argwhere(bad)[0][-1])
        raise BarrierDomainError(edge)
    return hi, lo


def barrier_value(x, bounds, alpha: float, epsilon: float) -> float:
    """``-alpha * sum_e [ln(u_e - x_e + eps) + ln(x_e - l_e + eps)]``."""
    lower, upper = bounds
    if alpha == 0:
        return 0.0
    hi, lo = _barrier_args(x, lower, upper, epsilon)
    return float(-alpha * np.sum(np.log(hi) + np.log(lo)))


def barrier_grad(x, bounds, alpha: float, epsilon: float) -> np.ndarray:
    lower, upper = bounds
    hi, lo = _barrier_args(x, lower, upper, epsilon)
    return alpha * (1.0 / hi - 1.0 / lo)


StageFn = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class CostFunctional:
    """Discretized ``int c(z, t) dt + c_T(z(T)) + (lam/2) ||w||^2`` plus optional barrier.

    ``running_fn(states, times)`` and ``running_grad_fn`` are vectorized over
    the leading axis. ``control_norm`` chooses the regularization: ``"l2"``
    penalizes ``int |u|^2 + |z0|^2``; ``"h1"`` penalizes ``int |du/dt|^2``
    (forward differences). The barrier, when attached, acts on the state
    entries selected by ``flow_slice``.
    """

    running_fn: Optional[StageFn] = None
    running_grad_fn: Optional[StageFn] = None
    terminal_fn: Optional[Callable[[np.ndarray], float]] = None
    terminal_grad_fn: Optional[Callable[[np.ndarray], np.ndarray]] = None
    lam: float = 0.0
    control_norm: str = "l2"
    barrier: Optional[BarrierParams] = None
    flow_slice: slice = slice(None)
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None
    flavor: str = "custom"

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("regularization weight must be non-negative")
        if self.control_norm not in ("l2", "h1"):
            raise ValueError("control_norm must be 'l2' or 'h1'")
        if (self.running_fn is None) != (self.running_grad_fn is None):
            raise ValueError("running cost and its derivative must be given together")
        if (self.terminal_fn is None) != (self.terminal_grad_fn is None):
            raise ValueError("terminal cost and its derivative must be given together")
        if self.barrier is not None and (self.lower is None or self.upper is None):
            raise ValueError("a barrier needs flow bounds")

    def with_barrier(self, params: Optional[BarrierParams]) -> "CostFunctional":
        return replace(self, barrier=params)

    def _bounds(self):
        return self.lower, self.upper

    def running(self, states: np.ndarray, times: np.ndarray) -> np.ndarray:
        out = np.zeros(len(states))
        if self.running_fn is not None:
            out = out + self.running_fn(states, times)
        if self.barrier is not None and self.barrier.alpha != 0:
            b = self.barrier
            hi, lo = _barrier_args(states[:, self.flow_slice], self.lower, self.upper, b.epsilon)
            out = out - b.alpha * np.sum(np.log(hi) + np.log(lo), axis=1)
        return out

    def running_grad(self, states: np.ndarray, times: np.ndarray) -> np.ndarray:
        out = np.zeros_like(states, dtype=float)
        if self.running_grad_fn is not None:
            out = out + self.running_grad_fn(states, times)
        if self.barrier is not None and self.barrier.alpha != 0:
            b = self.barrier
            out[:, self.flow_slice] += barrier_grad(states[:, self.flow_slice], self._bounds(), b.alpha, b.epsilon)
        return out

    def terminal(self, z: np.ndarray) -> float:
        return 0.0 if self.terminal_fn is None else float(self.terminal_fn(z))

    def terminal_grad(self, z: np.ndarray) -> np.ndarray:
        return np.zeros_like(z, dtype=float) if self.terminal_grad_fn is None else np.asarray(self.terminal_grad_fn(z))

    def self_test(self, dim: int, n_points: int = 5, t: float = 0.0, seed: int = 0, scale: float = 1.0) -> float:
        """Worst relative mismatch between ``running_grad`` and central differences of ``running``."""
        rng = np.random.default_rng(seed)
        worst = 0.0
        h = 1e-6
        times = np.array([t])
        for _ in range(n_points):
            z = scale * rng.standard_normal(dim)
            d = rng.standard_normal(dim)
            fd = (self.running((z + h * d)[None], times)[0] - self.running((z - h * d)[None], times)[0]) / (2 * h)
            an = float(self.running_grad(z[None], times)[0] @ d)
            worst = max(worst, abs(fd - an) / max(1.0, abs(an)))
        return worst


def _flow_index(net: Network) -> slice:
    return slice(net.n_nodes, net.n_nodes + net.n_edges)


def static_linear_cost(
    net: Network,
    horizon: float = 1.0,
    normalize: bool = False,
    barrier: Optional[BarrierParams] = None,
    lam: float = 0.0,
) -> CostFunctional:
    """``(1/T) int c^T x dt``, which equals ``c^T x`` for a constant flow.

    ``normalize`` divides the costs by their maximum so barrier weights are
    comparable across instances.
    """
    c = np.array(net.cost, dtype=float)
    if normalize:
        c = c / np.max(c)
    fs = _flow_index(net)
    n = net.n_nodes + net.n_edges
    grad = np.zeros(n)
    grad[fs] = c / horizon

    def running(states, times):
        return states[:, fs] @ c / horizon

    def running_grad(states, times):
        return np.broadcast_to(grad, states.shape)

    return CostFunctional(
        running,
        running_grad,
        lam=lam,
        control_norm="l2",
        barrier=barrier,
        flow_slice=fs,
        lower=net.lower,
        upper=net.upper,
        flavor="static_linear",
    )


def dynamic_flow_cost(
    net: Network,
    lam: float,
    normalize: bool = False,
    barrier: Optional[BarrierParams] = None,
    horizon: float = 1.0,
) -> CostFunctional:
    """``int sum_e c_e(t) x_e(t) dt + (lam/2) int |du_x/dt|^2 dt`` with time-dependent edge costs."""
    fs = _flow_index(net)
    scale = 1.0
    if normalize:
        fn = net.cost_function
        scale = fn.max_value(horizon) if fn is not None else float(np.max(net.cost))

    def running(states, times):
        return np.einsum("ke,ke->k", states[:, fs], net.cost_at(times)) / scale

    def running_grad(states, times):
        out = np.zeros_like(states, dtype=float)
        out[:, fs] = net.cost_at(times) / scale
        return out

    return CostFunctional(
        running,
        running_grad,
        lam=lam,
        control_norm="h1",
        barrier=barrier,
        flow_slice=fs,
        lower=net.lower,
        upper=net.upper,
        flavor="dynamic_tracking",
    )


def tracking_cost(
    z_des: Callable[[np.ndarray], np.ndarray],
    weight: float = 1.0,
    terminal_weight: float = 0.0,
    horizon: float = 1.0,
    lam: float = 0.0,
    control_norm: str = "l2",
) -> CostFunctional:
    """Quadratic tracking ``(w/2)|z - z_des(t)|^2`` with optional terminal term.

    ``z_des`` maps an array of times to an array of desired states.
    """

    def running(states, times):
        d = states - z_des(times)
        return 0.5 * weight * np.sum(d * d, axis=1)

    def running_grad(states, times):
        return weight * (states - z_des(times))

    terminal = terminal_grad = None
    if terminal_weight:
        t_end = np.array([horizon])

        def terminal(z):
            d = z - z_des(t_end)[0]
            return 0.5 * terminal_weight * float(d @ d)

        def terminal_grad(z):
            return terminal_weight * (z - z_des(t_end)[0])

    return CostFunctional(running, running_grad, terminal, terminal_grad, lam=lam, control_norm=control_norm, flavor="tracking")
