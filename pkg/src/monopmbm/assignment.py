"""Optimal 2D assignment and Murty's k-best enumeration.

Cost matrices have one row per measurement and at least as many columns;
``+inf`` marks a forbidden pairing. Every row must be assigned to a distinct
column.
"""
from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment


class InfeasibleAssignmentError(ValueError):
    """No assignment with finite total cost exists."""


@dataclass(frozen=True)
class Assignment:
    row_to_col: tuple[int, ...]
    total_cost: float

    def __iter__(self):
        return iter(self.row_to_col)


def _as_cost_matrix(c) -> np.ndarray:
    c = np.asarray(c, dtype=float)
    if c.ndim != 2:
        raise ValueError(f"cost matrix must be 2-D, got shape {c.shape}")
    if np.isnan(c).any() or (c == -np.inf).any():
        raise ValueError("cost matrix entries must be finite or +inf")
    return c


def _lap(c: np.ndarray, check: bool = True) -> tuple[np.ndarray, float] | None:
    """Row-to-column solution of ``c`` or None when infeasible."""
    n_rows, n_cols = c.shape
    if n_rows == 0:
        return np.zeros(0, dtype=int), 0.0
    if check and (n_rows > n_cols or not np.isfinite(c).any(axis=1).all()):
        return None
    try:
        rows, cols = linear_sum_assignment(c)
    except ValueError:
        return None
    total = c[rows, cols].sum()
    if not np.isfinite(total):
        return None
    sol = np.empty(n_rows, dtype=int)
    sol[rows] = cols
    return sol, float(total)


def solve_lap(c) -> Assignment:
    c = _as_cost_matrix(c)
    res = _lap(c)
    if res is None:
        raise InfeasibleAssignmentError(f"no finite-cost assignment for a {c.shape} matrix")
    sol, _ = res
    return Assignment(tuple(int(j) for j in sol), float(c[np.arange(c.shape[0]), sol].sum()))


def murty_kbest(c, k: int, max_cost: float = np.inf) -> list[Assignment]:
    """The ``k`` lowest-cost assignments in nondecreasing cost order.

    Assignments costing more than ``max_cost`` are not returned, which lets
    callers stop the enumeration early.

    Murty's partitioning: after popping the best open subproblem, its
    solution is split into disjoint subproblems by successively forbidding
    one of its pairs while fixing all earlier ones. Equal costs are ordered
    lexicographically by ``row_to_col``.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    c = _as_cost_matrix(c)
    first = _lap(c)
    if first is None:
        raise InfeasibleAssignmentError(f"no finite-cost assignment for a {c.shape} matrix")
    n_rows = c.shape[0]
    rows = np.arange(n_rows)

    counter = itertools.count()
    sol, cost = first
    heap = [(cost, tuple(sol.tolist()), next(counter), c, sol)] if cost <= max_cost else []
    found: list[Assignment] = []
    while heap and len(found) < k:
        _, key, _, P, sol = heapq.heappop(heap)
        found.append(Assignment(key, float(c[rows, sol].sum())))
        if len(found) == k:
            break
        P = P.copy()
        for row in range(n_rows):
            col = sol[row]
            child = P.copy()
            child[row, col] = np.inf
            res = _lap(child, check=False) if np.isfinite(child[row]).any() else None
            if res is not None and res[1] <= max_cost:
                csol, ccost = res
                heapq.heappush(heap, (ccost, tuple(csol.tolist()), next(counter), child, csol))
            # fix (row, col) for the remaining subproblems of this node
            keep = P[row, col]
            P[row, :] = np.inf
            P[:, col] = np.inf
            P[row, col] = keep

    found.sort(key=lambda a: (a.total_cost, a.row_to_col))
    return found
