"""Gradient identification in the weighted H1 inner product.

On a grid ``t_0..t_N`` the inner product is

    <g, h>_lam = sum_k w_k g_k . h_k + lam * sum_k dt (Dg)_k . (Dh)_k

with trapezoid weights ``w`` and forward differences ``D``. Restricted to
signals vanishing at ``t_0`` its Gram matrix is the central-difference
operator ``I - lam d^2/dt^2`` with a Dirichlet row at ``t = 0`` and a
ghost-point Neumann row at ``t = T``.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import solveh_banded

from ..integrate import TimeGrid

__all__ = ["trapezoid_weights", "h1_inner", "h1_operator", "riesz_h1"]


def trapezoid_weights(grid: TimeGrid) -> np.ndarray:
    w = np.full(grid.steps + 1, grid.dt)
    w[0] = w[-1] = 0.5 * grid.dt
    return w


def h1_inner(grid: TimeGrid, lam: float, g: np.ndarray, h: np.ndarray) -> float:
    g = np.asarray(g, dtype=float)
    h = np.asarray(h, dtype=float)
    w = trapezoid_weights(grid)
    gh = (g * h).reshape(len(g), -1).sum(axis=1)
    dg = np.diff(g, axis=0) / grid.dt
    dh = np.diff(h, axis=0) / grid.dt
    return float(w @ gh + lam * grid.dt * np.sum(dg * dh))


def _bands(grid: TimeGrid, lam: float) -> np.ndarray:
    """Upper-form banded storage of the Gram matrix on nodes ``1..N``."""
    n, dt = grid.steps, grid.dt
    diag = np.full(n, dt + 2.0 * lam / dt)
    diag[-1] = 0.5 * dt + lam / dt
    off = np.full(n, -lam / dt)
    off[0] = 0.0
    return np.vstack([off, diag])


def h1_operator(grid: TimeGrid, lam: float) -> np.ndarray:
    """Dense Gram matrix on nodes ``1..N`` (for inspection and tests)."""
    ab = _bands(grid, lam)
    n = grid.steps
    m = np.diag(ab[1])
    idx = np.arange(n - 1)
    m[idx, idx + 1] = ab[0, 1:]
    m[idx + 1, idx] = ab[0, 1:]
    return m


def riesz_h1(grid: TimeGrid, lam: float, u_signal, p_signal) -> np.ndarray:
    """Solve ``g - lam g'' = -lam u'' + p`` with ``g(0) = 0`` and ``g'(T) = 0``.

    The result satisfies, for every discrete ``h`` with ``h(0) = 0``,

        <g, h>_lam = lam * sum_k dt (Du)_k . (Dh)_k + sum_k w_k p_k . h_k

    i.e. ``g`` represents the functional ``h -> int lam u'.h' + p.h`` in
    the weighted H1 inner product. Signals have shape ``(N+1,)`` or ``(N+1, m)``.
    """
    if lam < 0:
        raise ValueError("lam must be non-negative")
    u = np.asarray(u_signal, dtype=float)
    p = np.asarray(p_signal, dtype=float)
    squeeze = u.ndim == 1
    if squeeze:
        u, p = u[:, None], p[:, None]
    if u.shape != p.shape or u.shape[0] != grid.steps + 1:
        raise ValueError("signals must be sampled on the grid and share a shape")
    dt = grid.dt
    w = trapezoid_weights(grid)
    du = np.diff(u, axis=0) / dt
    # lam * dt * D^T D u, rows 1..N
    reg = np.zeros_like(u)
    reg[1:] += lam * du
    reg[1:-1] -= lam * du[1:]
    rhs = reg[1:] + w[1:, None] * p[1:]
    g = np.zeros_like(u)
    g[1:] = solveh_banded(_bands(grid, lam), rhs, check_finite=False)
    return g[:, 0] if squeeze else g
