"""Bounded-variable primal simplex with Bland's rule.

Dense revised simplex for small problems ``min c.x`` s.t. ``A x = b``,
``lower <= x <= upper`` (infinite bounds allowed). Phase one minimizes the
sum of artificial variables; the explicit basis inverse is updated by
elementary pivots and recomputed from scratch every ``refactor_every`` pivots.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["LpProblem", "LpResult", "LpNumericalError", "solve_lp"]


class LpNumericalError(ArithmeticError):
    pass


@dataclass(frozen=True)
class LpProblem:
    c: np.ndarray
    A: np.ndarray
    b: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.c, dtype=float)
        n = c.shape[0]
        a = np.asarray(self.A, dtype=float).reshape(-1, n)
        b = np.asarray(self.b, dtype=float).reshape(-1)
        lo = np.broadcast_to(np.asarray(self.lower, dtype=float), (n,)).copy()
        hi = np.broadcast_to(np.asarray(self.upper, dtype=float), (n,)).copy()
        if a.shape[0] != b.shape[0]:
            raise ValueError("A and b disagree on the number of rows")
        if np.any(lo > hi):
            raise ValueError("lower bound above upper bound")
        if np.any(lo == np.inf) or np.any(hi == -np.inf):
            raise ValueError("bounds must admit a finite value")
        for name, v in (("c", c), ("A", a), ("b", b), ("lower", lo), ("upper", hi)):
            object.__setattr__(self, name, v)

    @property
    def shape(self) -> tuple[int, int]:
        return self.A.shape


@dataclass
class LpResult:
    status: str
    x: np.ndarray | None = None
    objective: float = float("nan")
    duals: np.ndarray | None = None
    iterations: int = 0
    message: str = ""


_AT_LOWER, _AT_UPPER, _FREE, _BASIC = 0, 1, 2, 3


@dataclass
class _State:
    A: np.ndarray
    b: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    x: np.ndarray
    basis: list
    where: np.ndarray
    Binv: np.ndarray = field(init=False)
    pivots: int = 0

    def refactor(self):
        bmat = self.A[:, self.basis]
        try:
            self.Binv = np.linalg.inv(bmat)
        except np.linalg.LinAlgError:
            raise LpNumericalError("singular basis") from None
        nonbasic = self.where != _BASIC
        rhs = self.b - self.A[:, nonbasic] @ self.x[nonbasic]
        self.x[self.basis] = self.Binv @ rhs


def _simplex(st: _State, cost: np.ndarray, tol: float, max_iter: int, refactor_every: int) -> tuple[str, int]:
    m, n = st.A.shape
    for it in range(max_iter):
        y = cost[st.basis] @ st.Binv
        d = cost - y @ st.A
        entering, direction = -1, 0
        # Bland: lowest-index eligible column
        for j in range(n):
            w = st.where[j]
            if w == _BASIC or st.lo[j] == st.hi[j]:
                continue
            if w == _AT_LOWER and d[j] < -tol:
                entering, direction = j, 1
            elif w == _AT_UPPER and d[j] > tol:
                entering, direction = j, -1
            elif w == _FREE and abs(d[j]) > tol:
                entering, direction = j, -1 if d[j] > 0 else 1
            if entering >= 0:
                break
        if entering < 0:
            return "optimal", it
        col = st.Binv @ st.A[:, entering]
        delta = -direction * col
        t_best = np.inf
        leave_pos = -1
        if np.isfinite(st.lo[entering]) and np.isfinite(st.hi[entering]):
            t_best = st.hi[entering] - st.lo[entering]
        for p in range(m):
            bv = st.basis[p]
            if delta[p] < -1e-11:
                if not np.isfinite(st.lo[bv]):
                    continue
                t = max((st.x[bv] - st.lo[bv]) / -delta[p], 0.0)
            elif delta[p] > 1e-11:
                if not np.isfinite(st.hi[bv]):
                    continue
                t = max((st.hi[bv] - st.x[bv]) / delta[p], 0.0)
            else:
                continue
            if t < t_best - 1e-12 or (leave_pos >= 0 and abs(t - t_best) <= 1e-12 and bv < st.basis[leave_pos]):
                t_best, leave_pos = t, p
        if not np.isfinite(t_best):
            return "unbounded", it
        st.x[entering] += direction * t_best
        st.x[st.basis] += delta * t_best
        if leave_pos < 0:
            # bound flip, basis unchanged
            st.where[entering] = _AT_UPPER if direction > 0 else _AT_LOWER
            st.x[entering] = st.hi[entering] if direction > 0 else st.lo[entering]
            continue
        leaving = st.basis[leave_pos]
        if delta[leave_pos] < 0:
            st.where[leaving], st.x[leaving] = _AT_LOWER, st.lo[leaving]
        else:
            st.where[leaving], st.x[leaving] = _AT_UPPER, st.hi[leaving]
        st.basis[leave_pos] = entering
        st.where[entering] = _BASIC
        st.pivots += 1
        if st.pivots % refactor_every == 0:
            st.refactor()
        else:
            piv = col[leave_pos]
            row = st.Binv[leave_pos] / piv
            st.Binv -= np.outer(col, row)
            st.Binv[leave_pos] = row
    return "iteration_limit", max_iter


def _initial_value(lo: float, hi: float) -> tuple[float, int]:
    if np.isfinite(lo):
        return lo, _AT_LOWER
    if np.isfinite(hi):
        return hi, _AT_UPPER
    return 0.0, _FREE


def solve_lp(
    lp: LpProblem,
    tol: float = 1e-9,
    max_iter: int = 50_000,
    refactor_every: int = 50,
) -> LpResult:
    """Solve ``lp``; status is ``optimal``, ``infeasible`` or ``unbounded``.

    Optimal solutions are re-checked against the constraints before they are
    reported, with one refactorization retry on a failed check.
    """
    m, n = lp.shape
    x = np.zeros(n + m)
    where = np.empty(n + m, dtype=int)
    for j in range(n):
        x[j], where[j] = _initial_value(lp.lower[j], lp.upper[j])
    r = lp.b - lp.A @ x[:n]
    sign = np.where(r >= 0, 1.0, -1.0)
    a_full = np.hstack([lp.A, np.diag(sign)])
    lo = np.concatenate([lp.lower, np.zeros(m)])
    hi = np.concatenate([lp.upper, np.full(m, np.inf)])
    x[n:] = np.abs(r)
    where[n:] = _BASIC
    st = _State(a_full, lp.b.copy(), lo, hi, x, list(range(n, n + m)), where)
    st.refactor()

    phase1 = np.concatenate([np.zeros(n), np.ones(m)])
    status, it1 = _simplex(st, phase1, tol, max_iter, refactor_every)
    if status != "optimal":
        return LpResult(status, iterations=it1, message="phase one did not finish")
    scale = 1.0 + np.max(np.abs(lp.b), initial=0.0)
    if np.sum(st.x[n:]) > 1e-8 * scale:
        return LpResult("infeasible", iterations=it1, message=f"artificial sum {np.sum(st.x[n:]):.3g}")

    # drive artificials out of the basis where possible, then pin them at zero
    for p in range(m):
        if st.basis[p] < n:
            continue
        row = st.Binv[p] @ st.A[:, :n]
        for j in range(n):
            if st.where[j] != _BASIC and abs(row[j]) > 1e-9:
                leaving = st.basis[p]
                st.basis[p] = j
                st.where[j] = _BASIC
                st.where[leaving] = _AT_LOWER
                st.x[leaving] = 0.0
                st.refactor()
                break
    st.hi[n:] = 0.0
    st.x[n:] = np.where(st.where[n:] == _BASIC, st.x[n:], 0.0)

    phase2 = np.concatenate([lp.c, np.zeros(m)])
    status, it2 = _simplex(st, phase2, tol, max_iter, refactor_every)
    iters = it1 + it2
    if status != "optimal":
        return LpResult(status, iterations=iters)

    for attempt in range(2):
        sol = st.x[:n].copy()
        resid = np.max(np.abs(lp.A @ sol - lp.b), initial=0.0)
        viol = max(np.max(lp.lower - sol, initial=0.0), np.max(sol - lp.upper, initial=0.0))
        if resid <= tol * scale and viol <= tol * scale:
            break
        if attempt == 0:
            st.refactor()
    else:
        raise LpNumericalError(f"solution fails validation: residual {resid:.3g}, bound violation {viol:.3g}")
    # snap tiny bound violations left by rounding
    sol = np.clip(sol, lp.lower, lp.upper)
    duals = phase2[st.basis] @ st.Binv
    return LpResult("optimal", sol, float(lp.c @ sol), duals, iters)
