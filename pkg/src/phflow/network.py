"""Directed flow networks: data model, incidence matrices, DIMACS I/O and fixtures.

Node ids are 1-based at every external surface (DIMACS files, CSV output,
fixture definitions) and 0-based inside arrays.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "NetworkError",
    "DimacsError",
    "EdgeCostFunction",
    "Network",
    "IncidenceMatrix",
    "FeasibilityReport",
    "incidence",
    "check_feasible",
    "parse_dimacs",
    "read_dimacs",
    "serialize_dimacs",
    "builtin_instance",
    "BUILTIN_NAMES",
]

FEASIBILITY_TOL = 1e-9


class NetworkError(ValueError):
    """Invalid network data."""


class DimacsError(NetworkError):
    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


# ---------------------------------------------------------------------------
# time-dependent edge costs


_COST_KINDS = ("constant", "linear_in_time", "hat")


@dataclass(frozen=True)
class EdgeCostFunction:
    """Per-edge cost as a function of time.

    ``constant``: ``c_e(t) = intercept_e``.
    ``linear_in_time``: ``c_e(t) = intercept_e + slope_e * t``.
    ``hat``: two affine branches, ``intercept_e + slope_e * t`` for
    ``t < breakpoint`` and ``intercept2_e + slope2_e * t`` afterwards.
    """

    kind: str
    intercept: np.ndarray
    slope: np.ndarray | None = None
    intercept2: np.ndarray | None = None
    slope2: np.ndarray | None = None
    breakpoint: float = 0.5

    def __post_init__(self):
        if self.kind not in _COST_KINDS:
            raise NetworkError(f"unknown cost kind {self.kind!r}")
        ne = len(self.intercept)
        object.__setattr__(self, "intercept", _readonly(self.intercept))
        slope = np.zeros(ne) if self.slope is None else self.slope
        object.__setattr__(self, "slope", _readonly(slope))
        if self.kind == "constant" and np.any(self.slope != 0):
            raise NetworkError("constant cost function with nonzero slope")
        if self.kind == "hat":
            if self.intercept2 is None or self.slope2 is None:
                raise NetworkError("hat cost function needs both branches")
            object.__setattr__(self, "intercept2", _readonly(self.intercept2))
            object.__setattr__(self, "slope2", _readonly(self.slope2))
            left = self.intercept + self.slope * self.breakpoint
            right = self.intercept2 + self.slope2 * self.breakpoint
            if not np.allclose(left, right, rtol=0, atol=1e-12):
                raise NetworkError("hat cost function is discontinuous at its breakpoint")
        for arr in (self.slope, self.intercept2, self.slope2):
            if arr is not None and len(arr) != ne:
                raise NetworkError("cost function parameters differ in length")

    @classmethod
    def constant(cls, values) -> "EdgeCostFunction":
        return cls("constant", np.asarray(values, dtype=float))

    @classmethod
    def linear(cls, intercept, slope) -> "EdgeCostFunction":
        return cls("linear_in_time", np.asarray(intercept, float), np.asarray(slope, float))

    @property
    def n_edges(self) -> int:
        return len(self.intercept)

    def _branches(self, t: np.ndarray):
        if self.kind != "hat":
            return self.intercept, self.slope
        right = (t >= self.breakpoint)[..., None]
        return (
            np.where(right, self.intercept2, self.intercept),
            np.where(right, self.slope2, self.slope),
        )

    def __call__(self, t):
        """Cost vector at time ``t``; an array of times gives shape ``(len(t), N_e)``."""
        t = np.asarray(t, dtype=float)
        a, s = self._branches(t)
        return a + s * t[..., None]

    def integral(self, t0: float, t1: float) -> np.ndarray:
        """Exact per-edge integral of the cost over ``[t0, t1]``."""
        if t1 < t0:
            raise ValueError("t1 < t0")

        def affine(a, s, lo, hi):
            return a * (hi - lo) + 0.5 * s * (hi * hi - lo * lo)

        if self.kind != "hat":
            return affine(self.intercept, self.slope, t0, t1)
        bp = self.breakpoint
        total = np.zeros(self.n_edges)
        if t0 < bp:
            total += affine(self.intercept, self.slope, t0, min(t1, bp))
        if t1 > bp:
            total += affine(self.intercept2, self.slope2, max(t0, bp), t1)
        return total

    def max_value(self, horizon: float) -> float:
        """Largest cost over all edges on ``[0, horizon]`` (affine pieces peak at endpoints)."""
        ts = [0.0, horizon]
        if self.kind == "hat" and 0.0 < self.breakpoint < horizon:
            # continuity makes one evaluation at the breakpoint cover both branches
            ts.append(self.breakpoint)
        return float(np.max(self(np.array(ts))))


def _readonly(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


# ---------------------------------------------------------------------------
# network


@dataclass(frozen=True, eq=False)
class Network:
    """Directed graph with supplies, per-edge costs and flow bounds.

    ``edges`` holds 0-based ``(tail, head)`` pairs. Construction validates
    balance, bounds, self-loops and (undirected) connectivity; instances are
    immutable afterwards.
    """

    node_count: int
    edges: tuple[tuple[int, int], ...]
    supply: np.ndarray
    cost: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    cost_function: EdgeCostFunction | None = None
    name: str = ""
    _incidence: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        nv = int(self.node_count)
        if nv < 1:
            raise NetworkError("network needs at least one node")
        edges = tuple((int(i), int(j)) for i, j in self.edges)
        ne = len(edges)
        object.__setattr__(self, "node_count", nv)
        object.__setattr__(self, "edges", edges)
        for name, size in (("supply", nv), ("cost", ne), ("lower", ne), ("upper", ne)):
            arr = _readonly(getattr(self, name))
            if arr.shape != (size,):
                raise NetworkError(f"{name} has shape {arr.shape}, expected ({size},)")
            if not np.all(np.isfinite(arr)):
                raise NetworkError(f"{name} contains non-finite values")
            object.__setattr__(self, name, arr)
        for e, (i, j) in enumerate(edges):
            if not (0 <= i < nv and 0 <= j < nv):
                raise NetworkError(f"edge {e + 1} ({i + 1},{j + 1}) references a missing node")
            if i == j:
                raise NetworkError(f"edge {e + 1} is a self-loop at node {i + 1}")
        total = float(np.sum(self.supply))
        if abs(total) > FEASIBILITY_TOL * max(1.0, float(np.sum(np.abs(self.supply)))):
            raise NetworkError(f"unbalanced supplies: sum(b) = {total:g}")
        bad = np.flatnonzero(self.lower > self.upper)
        if bad.size:
            raise NetworkError(f"edge {bad[0] + 1} has lower bound above upper bound")
        if self.cost_function is not None and self.cost_function.n_edges != ne:
            raise NetworkError("cost function length does not match edge count")
        if not _connected(nv, edges):
            raise NetworkError("network is not connected")

        a = np.zeros((nv, ne))
        for e, (i, j) in enumerate(edges):
            a[i, e] = 1.0
            a[j, e] = -1.0
        a.setflags(write=False)
        object.__setattr__(self, "_incidence", a)

    @classmethod
    def from_edges(
        cls,
        node_count: int,
        edges: Iterable[tuple[int, int]],
        supply: Sequence[float],
        cost: Sequence[float],
        upper: Sequence[float],
        lower: Sequence[float] | None = None,
        **kwargs,
    ) -> "Network":
        """Build from 1-based ``(tail, head)`` pairs, the numbering used by DIMACS files."""
        zero_based = [(i - 1, j - 1) for i, j in edges]
        if lower is None:
            lower = np.zeros(len(zero_based))
        return cls(node_count, tuple(zero_based), supply, cost, lower, upper, **kwargs)

    @property
    def n_nodes(self) -> int:
        return self.node_count

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def tails(self) -> np.ndarray:
        return np.array([i for i, _ in self.edges], dtype=int)

    @property
    def heads(self) -> np.ndarray:
        return np.array([j for _, j in self.edges], dtype=int)

    @property
    def incidence_matrix(self) -> np.ndarray:
        return self._incidence

    def cost_at(self, t) -> np.ndarray:
        if self.cost_function is None:
            t = np.asarray(t, dtype=float)
            return np.broadcast_to(self.cost, t.shape + (self.n_edges,)).copy()
        return self.cost_function(t)

    def replace(self, **changes) -> "Network":
        fields = dict(
            node_count=self.node_count,
            edges=self.edges,
            supply=self.supply,
            cost=self.cost,
            lower=self.lower,
            upper=self.upper,
            cost_function=self.cost_function,
            name=self.name,
        )
        fields.update(changes)
        return Network(**fields)

    def __eq__(self, other):
        if not isinstance(other, Network):
            return NotImplemented
        return (
            self.node_count == other.node_count
            and self.edges == other.edges
            and np.array_equal(self.supply, other.supply)
            and np.array_equal(self.cost, other.cost)
            and np.array_equal(self.lower, other.lower)
            and np.array_equal(self.upper, other.upper)
        )

    __hash__ = None


def _connected(nv: int, edges) -> bool:
    adj = [[] for _ in range(nv)]
    for i, j in edges:
        adj[i].append(j)
        adj[j].append(i)
    seen = {0}
    stack = [0]
    while stack:
        v = stack.pop()
        for w in adj[v]:
            if w not in seen:
                seen.add(w)
                stack.append(w)
    return len(seen) == nv


@dataclass(frozen=True)
class IncidenceMatrix:
    """Node-arc incidence matrix plus the rows kept for the full-rank variant."""

    entries: np.ndarray
    full_rank_rows: tuple[int, ...]

    @property
    def reduced(self) -> np.ndarray:
        return self.entries[list(self.full_rank_rows)]

    @property
    def drop_row(self) -> int:
        missing = set(range(self.entries.shape[0])) - set(self.full_rank_rows)
        return missing.pop()


def incidence(net: Network) -> IncidenceMatrix:
    """Incidence matrix of ``net``; the reduced form drops the highest-numbered node."""
    return IncidenceMatrix(net.incidence_matrix, tuple(range(net.n_nodes - 1)))


@dataclass(frozen=True)
class FeasibilityReport:
    conservation_residual: float
    worst_node: int
    bound_violation: float
    worst_edge: int
    tol: float

    @property
    def feasible(self) -> bool:
        return self.conservation_residual <= self.tol and self.bound_violation <= self.tol

    def __bool__(self):
        return self.feasible


def check_feasible(net: Network, x, tol: float = FEASIBILITY_TOL) -> FeasibilityReport:
    """Check ``A x = b`` and ``lower <= x <= upper``.

    ``worst_node`` and ``worst_edge`` are 1-based.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (net.n_edges,):
        raise ValueError(f"flow has shape {x.shape}, expected ({net.n_edges},)")
    res = np.abs(net.incidence_matrix @ x - net.supply)
    viol = np.maximum.reduce([net.lower - x, x - net.upper, np.zeros_like(x)])
    i = int(np.argmax(res)) if res.size else 0
    e = int(np.argmax(viol)) if viol.size else 0
    return FeasibilityReport(
        conservation_residual=float(res[i]) if res.size else 0.0,
        worst_node=i + 1,
        bound_violation=float(viol[e]) if viol.size else 0.0,
        worst_edge=e + 1,
        tol=tol,
    )


# ---------------------------------------------------------------------------
# DIMACS min-cost-flow format


def _number(token: str, lineno: int, what: str) -> float:
    try:
        value = float(token)
    except ValueError:
        raise DimacsError(lineno, f"bad {what} {token!r}") from None
    if not np.isfinite(value):
        raise DimacsError(lineno, f"non-finite {what}")
    return value


def _node_id(token: str, lineno: int, nv: int) -> int:
    try:
        v = int(token)
    except ValueError:
        raise DimacsError(lineno, f"bad node id {token!r}") from None
    if not 1 <= v <= nv:
        raise DimacsError(lineno, f"node id {v} out of range 1..{nv}")
    return v - 1


def parse_dimacs(text: str | io.TextIOBase, name: str = "") -> Network:
    """Parse a DIMACS min-cost-flow problem.

    Recognised lines: ``c`` comments, ``p min NODES ARCS``, ``n ID SUPPLY`` and
    ``a TAIL HEAD LOW CAP COST``. Edge order follows the file.
    """
    lines = text.splitlines() if isinstance(text, str) else text.read().splitlines()
    nv = ne = None
    problem_line = 0
    supply = None
    edges, lower, upper, cost = [], [], [], []
    for lineno, raw in enumerate(lines, start=1):
        parts = raw.split()
        if not parts or parts[0] == "c":
            continue
        tag = parts[0]
        if tag == "p":
            if nv is not None:
                raise DimacsError(lineno, f"duplicate problem line (first on line {problem_line})")
            if len(parts) != 4 or parts[1] != "min":
                raise DimacsError(lineno, "expected 'p min NODES ARCS'")
            try:
                nv, ne = int(parts[2]), int(parts[3])
            except ValueError:
                raise DimacsError(lineno, "problem sizes must be integers") from None
            if nv < 1 or ne < 0:
                raise DimacsError(lineno, "invalid problem sizes")
            problem_line = lineno
            supply = np.zeros(nv)
            continue
        if nv is None:
            raise DimacsError(lineno, f"{tag!r} line before problem line")
        if tag == "n":
            if len(parts) != 3:
                raise DimacsError(lineno, "expected 'n ID SUPPLY'")
            supply[_node_id(parts[1], lineno, nv)] += _number(parts[2], lineno, "supply")
        elif tag == "a":
            if len(parts) != 6:
                raise DimacsError(lineno, "expected 'a TAIL HEAD LOW CAP COST'")
            i = _node_id(parts[1], lineno, nv)
            j = _node_id(parts[2], lineno, nv)
            if i == j:
                raise DimacsError(lineno, f"self-loop at node {i + 1}")
            lo = _number(parts[3], lineno, "lower bound")
            cap = _number(parts[4], lineno, "capacity")
            if lo > cap:
                raise DimacsError(lineno, "lower bound exceeds capacity")
            edges.append((i, j))
            lower.append(lo)
            upper.append(cap)
            cost.append(_number(parts[5], lineno, "cost"))
        else:
            raise DimacsError(lineno, f"unknown line type {tag!r}")
    if nv is None:
        raise DimacsError(len(lines), "missing problem line")
    if len(edges) != ne:
        raise DimacsError(problem_line, f"problem line declares {ne} arcs, found {len(edges)}")
    total = float(supply.sum())
    if abs(total) > FEASIBILITY_TOL * max(1.0, float(np.abs(supply).sum())):
        raise DimacsError(problem_line, f"unbalanced supplies: sum = {total:g}")
    return Network(nv, tuple(edges), supply, cost, lower, upper, name=name)


def read_dimacs(path) -> Network:
    with open(path) as fh:
        return parse_dimacs(fh.read(), name=str(path))


def _fmt(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else repr(float(v))


def serialize_dimacs(net: Network) -> str:
    out = [f"c {net.name}" if net.name else "c phflow network", f"p min {net.n_nodes} {net.n_edges}"]
    for v, b in enumerate(net.supply):
        if b != 0:
            out.append(f"n {v + 1} {_fmt(b)}")
    for e, (i, j) in enumerate(net.edges):
        out.append(f"a {i + 1} {j + 1} {_fmt(net.lower[e])} {_fmt(net.upper[e])} {_fmt(net.cost[e])}")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# built-in fixtures

BUILTIN_NAMES = ("fig1", "ep1", "ep2", "ep3", "diamond")

# (tail, head, upper, cost), 1-based, in edge order
_FIG1 = [(1, 2, 4, 1), (1, 4, 4, 4), (2, 3, 3, 1), (3, 1, 2, 2), (3, 4, 3, 1), (4, 5, 3, 1), (5, 1, 1, 1)]

# (tail, head, cost); every edge has bounds [0, 20]
_EP1 = [
    (1, 2, 2), (1, 3, 5), (2, 4, 1), (2, 5, 2), (3, 2, 2), (3, 4, 2), (3, 5, 2), (4, 6, 2),
    (4, 7, 3), (4, 8, 4), (5, 6, 3), (5, 7, 1), (5, 8, 4), (6, 8, 3), (7, 8, 3),
]
_EP2 = [(1, 2, 4), (1, 3, 3), (2, 3, 2), (2, 4, 2), (3, 4, 2), (3, 5, 3), (3, 6, 5), (4, 6, 5), (5, 6, 2)]
_EP3 = [
    (1, 2, 4), (1, 3, 6), (2, 5, 2), (2, 6, 3), (2, 7, 5), (3, 4, 4), (3, 5, 2), (3, 6, 6),
    (3, 9, 3), (4, 6, 1), (4, 9, 4), (5, 4, 3), (5, 7, 3), (5, 8, 5), (6, 8, 3), (6, 10, 4),
    (7, 6, 3), (7, 8, 3), (9, 6, 3), (9, 10, 5),
]
_EP_SUPPLY = {
    "ep1": (20, 0, 20, 0, 0, -10, -10, -20),
    "ep2": (30, 0, 0, -10, -10, -10),
    "ep3": (20, 10, 10, 0, 0, -5, 0, -5, 0, -30),
}
_EP_EDGES = {"ep1": _EP1, "ep2": _EP2, "ep3": _EP3}

_DIAMOND_EDGES = [(1, 2), (1, 3), (2, 4), (3, 4)]


def diamond_cost_function(kind: str = "linear") -> EdgeCostFunction:
    """Time-dependent costs of the four-edge diamond (upper path 1-2-4, lower path 1-3-4)."""
    upper_path = np.array([1.0, 0.0, 1.0, 0.0])
    lower_path = 1.0 - upper_path
    if kind == "linear":
        # upper: 100(1+t), lower: 100(2-t)
        return EdgeCostFunction.linear(100 * upper_path + 200 * lower_path, 100 * upper_path - 100 * lower_path)
    if kind == "hat":
        # upper: 100(1+2t) | 100(1+2(1-t)); lower: 100(2-2t) | 100(2-2(1-t))
        return EdgeCostFunction(
            "hat",
            intercept=100 * upper_path + 200 * lower_path,
            slope=200 * upper_path - 200 * lower_path,
            intercept2=300 * upper_path + 0 * lower_path,
            slope2=-200 * upper_path + 200 * lower_path,
            breakpoint=0.5,
        )
    raise NetworkError(f"unknown diamond cost kind {kind!r}; expected 'linear' or 'hat'")


def builtin_instance(name: str, cost_kind: str = "linear") -> Network:
    """One of the named fixtures: ``fig1``, ``ep1``, ``ep2``, ``ep3``, ``diamond``.

    ``cost_kind`` selects the diamond's time-dependent costs (``linear`` or
    ``hat``); its static ``cost`` vector is the cost at ``t = 0``.
    """
    if name == "fig1":
        return Network.from_edges(
            5,
            [(i, j) for i, j, _, _ in _FIG1],
            supply=(4, -1, -1, -1, -1),
            cost=[c for *_, c in _FIG1],
            upper=[u for _, _, u, _ in _FIG1],
            name="fig1",
        )
    if name in _EP_EDGES:
        data = _EP_EDGES[name]
        return Network.from_edges(
            len(_EP_SUPPLY[name]),
            [(i, j) for i, j, _ in data],
            supply=_EP_SUPPLY[name],
            cost=[c for *_, c in data],
            upper=[20.0] * len(data),
            name=name,
        )
    if name == "diamond":
        fn = diamond_cost_function(cost_kind)
        return Network.from_edges(
            4,
            _DIAMOND_EDGES,
            supply=(4, 0, 0, -4),
            cost=fn(0.0),
            upper=[4.0] * 4,
            cost_function=fn,
            name=f"diamond-{cost_kind}",
        )
    raise NetworkError(f"unknown builtin instance {name!r}; choose from {', '.join(BUILTIN_NAMES)}")
