"""Exact minimum-cost-flow oracle by successive shortest paths.

Negative-cost edges are saturated up front so the residual graph starts
without negative cycles; Bellman-Ford then initializes node potentials and
every augmentation runs Dijkstra on reduced costs. Ties are broken by edge
index (adjacency lists are in edge order) and by node id.
"""

from __future__ import annotations

import csv
import heapq
from dataclasses import dataclass

import numpy as np

from ..network import Network
from .lp import LpProblem

__all__ = ["McfSolution", "InfeasibleFlowError", "solve_mcf", "worst_case_flow", "mcf_as_lp", "write_solution_csv"]


class InfeasibleFlowError(ValueError):
    def __init__(self, cut: tuple[int, ...], excess: float):
        super().__init__(
            f"no feasible flow: node set {list(cut)} must ship {excess:g} more units than its outgoing capacity"
        )
        self.cut = cut
        self.excess = excess


@dataclass(frozen=True)
class McfSolution:
    """Oracle result.

    ``potentials`` are node prices ``pi`` with reduced costs
    ``c_e - pi_tail + pi_head``; the last node's price is zero. ``cut``
    (1-based) certifies infeasibility.
    """

    status: str
    x: np.ndarray | None = None
    cost: float = float("nan")
    potentials: np.ndarray | None = None
    reduced_costs: np.ndarray | None = None
    cut: tuple[int, ...] = ()


class _Residual:
    def __init__(self, nv: int, tails, heads, cap, cost):
        self.nv = nv
        self.tails, self.heads = tails, heads
        self.cap, self.cost = cap, cost
        self.x = np.zeros(len(tails))
        # arc id 2e is the forward copy of edge e, 2e+1 the backward copy
        self.out = [[] for _ in range(nv)]
        for e in range(len(tails)):
            self.out[tails[e]].append(2 * e)
            self.out[heads[e]].append(2 * e + 1)

    def arc(self, a: int):
        e = a >> 1
        if a & 1:
            return self.heads[e], self.tails[e], self.x[e], -self.cost[e]
        return self.tails[e], self.heads[e], self.cap[e] - self.x[e], self.cost[e]

    def push(self, a: int, amount: float):
        e = a >> 1
        self.x[e] += -amount if a & 1 else amount

    def bellman_ford(self, init: np.ndarray) -> np.ndarray:
        dist = init.astype(float)
        for _ in range(self.nv):
            changed = False
            for v in range(self.nv):
                for a in self.out[v]:
                    _, w, r, c = self.arc(a)
                    if r > 0 and dist[v] + c < dist[w]:
                        dist[w] = dist[v] + c
                        changed = True
            if not changed:
                return dist
        raise ArithmeticError("negative cycle in residual graph")

    def dijkstra(self, sources, pot):
        dist = np.full(self.nv, np.inf)
        pred = np.full(self.nv, -1, dtype=int)
        heap = []
        for s in sources:
            dist[s] = 0.0
            heap.append((0.0, s))
        heapq.heapify(heap)
        done = np.zeros(self.nv, dtype=bool)
        while heap:
            d, v = heapq.heappop(heap)
            if done[v]:
                continue
            done[v] = True
            for a in self.out[v]:
                _, w, r, c = self.arc(a)
                if r <= 0 or done[w]:
                    continue
                nd = d + c + pot[v] - pot[w]
                if nd < dist[w]:
                    dist[w] = nd
                    pred[w] = a
                    heapq.heappush(heap, (nd, w))
        return dist, pred


def solve_mcf(net: Network) -> McfSolution:
    """Minimum-cost flow for ``net``; raises nothing, reports infeasibility via ``status``."""
    nv = net.n_nodes
    tails, heads = net.tails, net.heads
    lower = np.asarray(net.lower, dtype=float)
    cap = np.asarray(net.upper, dtype=float) - lower
    cost = np.asarray(net.cost, dtype=float)
    a = net.incidence_matrix
    # shift lower bounds to zero
    supply = np.asarray(net.supply, dtype=float) - a @ lower

    g = _Residual(nv, tails, heads, cap, cost)
    neg = cost < 0
    g.x[neg] = cap[neg]
    excess = supply - a @ g.x
    pot = g.bellman_ford(np.zeros(nv))

    while True:
        sources = [v for v in range(nv) if excess[v] > 1e-12]
        if not sources:
            break
        dist, pred = g.dijkstra(sources, pot)
        sinks = [v for v in range(nv) if excess[v] < -1e-12 and np.isfinite(dist[v])]
        if not sinks:
            reach = tuple(int(v) + 1 for v in np.flatnonzero(np.isfinite(dist)))
            return McfSolution("infeasible", cut=reach)
        t = min(sinks, key=lambda v: (dist[v], v))
        pot = pot + np.minimum(dist, dist[t])
        # walk back to the source and find the bottleneck
        path = []
        v = t
        while pred[v] >= 0:
            path.append(pred[v])
            v = g.arc(pred[v])[0]
        s = v
        amount = min(excess[s], -excess[t], min(g.arc(arc)[2] for arc in path))
        for arc in path:
            g.push(arc, amount)
        excess[s] -= amount
        excess[t] += amount

    if np.any(np.abs(excess) > 1e-9):
        return McfSolution("infeasible", cut=tuple(int(v) + 1 for v in np.flatnonzero(excess > 1e-9)))

    # optimal prices from shortest distances in the final residual graph
    d = g.bellman_ford(np.zeros(nv))
    pi = -(d - d[-1])
    x = g.x + lower
    reduced = cost - pi[tails] + pi[heads]
    return McfSolution("optimal", x, float(cost @ x), pi, reduced)


def worst_case_flow(net: Network) -> McfSolution:
    """Feasible flow maximizing ``c.x``; ``cost`` is reported under the original ``c``."""
    sol = solve_mcf(net.replace(cost=-np.asarray(net.cost)))
    if sol.status != "optimal":
        return sol
    return McfSolution(
        "optimal",
        sol.x,
        float(np.asarray(net.cost) @ sol.x),
        -sol.potentials,
        -sol.reduced_costs,
    )


def mcf_as_lp(net: Network) -> LpProblem:
    return LpProblem(net.cost, net.incidence_matrix, net.supply, net.lower, net.upper)


def write_solution_csv(net: Network, sol: McfSolution, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["edge", "tail", "head", "flow", "reduced_cost"])
        for e, (i, j) in enumerate(net.edges):
            w.writerow([e + 1, i + 1, j + 1, format(float(sol.x[e]), ".17g"), format(float(sol.reduced_costs[e]), ".17g")])
