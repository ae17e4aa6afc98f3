"""Exact maximum-weight bipartite matching with unit capacities.

The feasible set is all binary N x K matrices whose row sums and column
sums are at most one, i.e. partial matchings between agents (rows) and
arms (columns).  The solver maximizes the summed weight of selected
edges.  Edges with weight <= 0 are never selected: the empty matching
is feasible, so a non-positive edge can always be dropped without
losing weight, and dropping zero-weight edges keeps the selection
deterministic.  Among equal-weight optima the solver returns the
lexicographically smallest edge set under (row, column) ordering.

The maximization runs as an exact dynamic program over subsets of the
columns that carry at least one positive edge.  For positive-only edge
sets, no optimal solution is a strict subset of another, which makes
the lexicographic tie-break equivalent to preferring, row by row, the
smallest column (with "unassigned" ranked last).  The DP encodes
exactly that preference, so ties resolve without any post-processing.
A brute-force enumerator with the same selection rule serves as an
independent oracle for tests.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, Sequence

__all__ = [
    "Assignment",
    "InstanceTooLargeError",
    "max_weight_matching",
    "brute_force_matching",
    "count_partial_matchings",
    "iter_partial_matchings",
]

Edge = tuple[int, int]
WeightMatrix = Sequence[Sequence[float]]

# The DP enumerates subsets of positive-weight columns.
_MAX_DP_COLUMNS = 16
_MAX_BRUTE_FORCE_MATCHINGS = 1_000_000

_INF = math.inf


class InstanceTooLargeError(ValueError):
    """The instance exceeds the solver's enumeration guard."""


@dataclass(frozen=True)
class Assignment:
    """A partial matching: at most one arm per agent, one agent per arm."""

    n_agents: int
    n_arms: int
    edges: tuple[Edge, ...]

    def __post_init__(self) -> None:
        rows_seen: set[int] = set()
        cols_seen: set[int] = set()
        prev: Edge | None = None
        for n, k in self.edges:
            if not (0 <= n < self.n_agents and 0 <= k < self.n_arms):
                raise ValueError(f"edge ({n}, {k}) out of bounds for {self.n_agents}x{self.n_arms}")
            if n in rows_seen or k in cols_seen:
                raise ValueError(f"edge ({n}, {k}) violates unit capacity")
            if prev is not None and (n, k) <= prev:
                raise ValueError("edges must be sorted by (agent, arm)")
            rows_seen.add(n)
            cols_seen.add(k)
            prev = (n, k)

    @staticmethod
    def empty(n_agents: int, n_arms: int) -> "Assignment":
        return Assignment(n_agents=n_agents, n_arms=n_arms, edges=())

    def arm_of(self, agent: int) -> int | None:
        for n, k in self.edges:
            if n == agent:
                return k
        return None

    def agent_of(self, arm: int) -> int | None:
        for n, k in self.edges:
            if k == arm:
                return n
        return None

    def matrix(self) -> list[list[int]]:
        x = [[0] * self.n_arms for _ in range(self.n_agents)]
        for n, k in self.edges:
            x[n][k] = 1
        return x


def _validate_shape(w: WeightMatrix) -> tuple[int, int]:
    n_rows = len(w)
    if n_rows == 0:
        raise ValueError("weight matrix needs at least one row")
    n_cols = len(w[0])
    if n_cols == 0:
        raise ValueError("weight matrix needs at least one column")
    for i, row in enumerate(w):
        if len(row) != n_cols:
            raise ValueError(f"row {i} has {len(row)} entries, expected {n_cols}")
    return n_rows, n_cols


def _scan_positive(w: WeightMatrix, n_rows: int,
                   n_cols: int) -> tuple[list[int], list[list[tuple[int, float]]]]:
    """Collect strictly positive edges per row; reject inf and NaN.

    Returns the rows holding at least one positive edge and, for each,
    its (column, weight) entries in ascending column order.
    """
    rows: list[int] = []
    per_row: list[list[tuple[int, float]]] = []
    for n in range(n_rows):
        row = w[n]
        entries: list[tuple[int, float]] = []
        for k in range(n_cols):
            wk = row[k]
            if wk > 0.0:
                if wk == _INF:
                    raise ValueError(f"non-finite weight at ({n}, {k})")
                entries.append((k, wk))
            elif wk != wk or wk == -_INF:
                raise ValueError(f"non-finite weight at ({n}, {k})")
        if entries:
            rows.append(n)
            per_row.append(entries)
    return rows, per_row


def _solve_positive(per_row: list[list[tuple[int, float]]]) -> tuple[list[tuple[int, int]], float]:
    """Optimal positive-edge matching over pre-scanned rows.

    ``per_row[i]`` lists (column, weight) candidates of the i-th kept
    row, ascending by column.  Returns selected (row position, column)
    pairs and their summed weight (accumulated in row order).  Backward
    DP over occupied-column subsets; scanning a row's candidates in
    descending column order and replacing on ">=" makes the smallest
    column win ties and any column beat "skip this row", which realizes
    the lexicographic tie-break.
    """
    cols: set[int] = set()
    for entries in per_row:
        for k, _ in entries:
            cols.add(k)
    col_ids = sorted(cols)
    if len(col_ids) > _MAX_DP_COLUMNS:
        raise InstanceTooLargeError(
            f"{len(col_ids)} columns carry positive edges; the subset DP is "
            f"capped at {_MAX_DP_COLUMNS}")
    col_bit = {k: i for i, k in enumerate(col_ids)}
    reduced = [[(col_bit[k], wk) for k, wk in entries] for entries in per_row]

    n_masks = 1 << len(col_ids)
    value = [0.0] * n_masks
    choices: list[list[int]] = []
    for entries in reversed(reduced):
        rev_entries = entries[::-1]
        new_value = [0.0] * n_masks
        choice = [-1] * n_masks
        for mask in range(n_masks):
            best = value[mask]
            pick = -1
            for k, wk in rev_entries:
                if not (mask >> k) & 1:
                    cand = wk + value[mask | (1 << k)]
                    if cand >= best:
                        best = cand
                        pick = k
            new_value[mask] = best
            choice[mask] = pick
        value = new_value
        choices.append(choice)
    choices.reverse()

    mask = 0
    picks: list[tuple[int, int]] = []
    total = 0.0
    for i, entries in enumerate(reduced):
        bit = choices[i][mask]
        if bit >= 0:
            k = col_ids[bit]
            picks.append((i, k))
            mask |= 1 << bit
            for kk, wk in per_row[i]:
                if kk == k:
                    total += wk
                    break
    return picks, total


def max_weight_matching(w: WeightMatrix) -> tuple[Assignment, float]:
    """Maximize the summed weight of a partial matching.

    Returns the optimal assignment and its total weight.  Only strictly
    positive edges are ever selected; ties between optima break toward
    the lexicographically smallest edge set.
    """
    n_rows, n_cols = _validate_shape(w)
    rows, per_row = _scan_positive(w, n_rows, n_cols)

    if not rows:
        return Assignment.empty(n_rows, n_cols), 0.0
    if len(rows) == 1:
        # Single candidate row: best edge, smallest column on ties.
        best_k, best_w = per_row[0][0]
        for k, wk in per_row[0][1:]:
            if wk > best_w:
                best_k, best_w = k, wk
        return Assignment(n_rows, n_cols, ((rows[0], best_k),)), best_w

    picks, total = _solve_positive(per_row)
    edges = tuple((rows[i], k) for i, k in picks)
    return Assignment(n_rows, n_cols, edges), total


def count_partial_matchings(n_rows: int, n_cols: int) -> int:
    """Number of partial matchings in a complete N x K bipartite graph."""
    return sum(math.comb(n_rows, j) * math.comb(n_cols, j) * math.factorial(j)
               for j in range(min(n_rows, n_cols) + 1))


def iter_partial_matchings(n_rows: int, n_cols: int) -> Iterator[tuple[Edge, ...]]:
    """Yield every partial matching as a sorted tuple of (row, col) edges."""
    free = [True] * n_cols

    def recurse(row: int, acc: list[Edge]) -> Iterator[tuple[Edge, ...]]:
        if row == n_rows:
            yield tuple(acc)
            return
        yield from recurse(row + 1, acc)
        for k in range(n_cols):
            if free[k]:
                free[k] = False
                acc.append((row, k))
                yield from recurse(row + 1, acc)
                acc.pop()
                free[k] = True

    yield from recurse(0, [])


def brute_force_matching(w: WeightMatrix) -> tuple[Assignment, float]:
    """Exhaustive oracle: enumerate matchings, keep the best.

    Applies the same selection rule as :func:`max_weight_matching`
    (positive edges only, lexicographic tie-break) but by direct
    enumeration, so it stays an independent cross-check.  Guarded to
    instances with at most a million matchings.
    """
    n_rows, n_cols = _validate_shape(w)
    n_matchings = count_partial_matchings(n_rows, n_cols)
    if n_matchings > _MAX_BRUTE_FORCE_MATCHINGS:
        raise InstanceTooLargeError(
            f"{n_matchings} partial matchings exceed the enumeration guard "
            f"of {_MAX_BRUTE_FORCE_MATCHINGS}")
    for i in range(n_rows):
        for k in range(n_cols):
            if not math.isfinite(w[i][k]):
                raise ValueError(f"non-finite weight at ({i}, {k})")

    best_edges: tuple[Edge, ...] = ()
    best_total = 0.0
    for edges in iter_partial_matchings(n_rows, n_cols):
        if any(w[n][k] <= 0.0 for n, k in edges):
            continue
        total = sum(w[n][k] for n, k in edges)
        if total > best_total or (total == best_total and edges < best_edges):
            best_total = total
            best_edges = edges
    return Assignment(n_rows, n_cols, best_edges), best_total
