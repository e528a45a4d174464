"""Closed-form cost of routing a fixed demand over the cheapest path at every instant."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from ..network import EdgeCostFunction

__all__ = ["switching_breakpoints", "switching_reference_cost", "DIAMOND_PATHS"]

# upper path 1-2-4 and lower path 1-3-4 of the diamond, as 0-based edge indices
DIAMOND_PATHS = ((0, 2), (1, 3))


def _path_coeffs(fn: EdgeCostFunction, path, second: bool):
    idx = list(path)
    if second:
        return float(np.sum(fn.intercept2[idx])), float(np.sum(fn.slope2[idx]))
    return float(np.sum(fn.intercept[idx])), float(np.sum(fn.slope[idx]))


def switching_breakpoints(fn: EdgeCostFunction, paths: Sequence[Sequence[int]], horizon: float = 1.0) -> list[float]:
    """Sorted times in ``[0, horizon]`` where the cost pieces change or two path costs cross."""
    pieces = [(0.0, horizon, False)]
    if fn.kind == "hat" and 0.0 < fn.breakpoint < horizon:
        pieces = [(0.0, fn.breakpoint, False), (fn.breakpoint, horizon, True)]
    points = {0.0, horizon}
    for lo, hi, second in pieces:
        points.update((lo, hi))
        coeffs = [_path_coeffs(fn, p, second) for p in paths]
        for i in range(len(coeffs)):
            for j in range(i + 1, len(coeffs)):
                da = coeffs[i][0] - coeffs[j][0]
                ds = coeffs[i][1] - coeffs[j][1]
                if ds != 0.0:
                    t = -da / ds
                    if lo < t < hi:
                        points.add(t)
    return sorted(points)


def switching_reference_cost(
    fn: EdgeCostFunction,
    paths: Sequence[Sequence[int]] = DIAMOND_PATHS,
    demand: float = 4.0,
    horizon: float = 1.0,
) -> float:
    """``demand * int_0^T min_p sum_{e in p} c_e(t) dt`` integrated piece by piece.

    Between consecutive breakpoints the cheapest path is fixed, so each piece
    is an exact affine integral.
    """
    bps = switching_breakpoints(fn, paths, horizon)
    total = 0.0
    for t0, t1 in zip(bps[:-1], bps[1:]):
        if t1 <= t0:
            continue
        mid = fn(0.5 * (t0 + t1))
        best = min(paths, key=lambda p: float(np.sum(mid[list(p)])))
        total += float(np.sum(fn.integral(t0, t1)[list(best)]))
    return demand * total
