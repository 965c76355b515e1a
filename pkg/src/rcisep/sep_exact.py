"""Exact separation of rounded capacity inequalities.

For every M the problem is: over customer subsets S with d(S) >= M*Q + 1,
minimise the support weight crossing S (the depot is fixed outside S).  Small
graphs are solved by enumerating all 2^n subsets with numpy; larger ones by a
depth-first branch-and-bound.  Ties within TIE_TOL go to the
lexicographically smallest sorted vertex tuple.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .errors import SeparationTimeout, ValidationError
from .instances import k_of_set

TIE_TOL = 1e-9
VIOLATION_TOL = 1e-4
ENUM_LIMIT = 20


@dataclass
class SeparationProblem:
    graph: object  # WeightedGraph; demands live on the graph
    capacity: int
    M: int

    def __post_init__(self):
        total = int(self.graph.demands.sum())
        if self.graph.depot != 0 or self.graph.demands[0] != 0:
            raise ValidationError("graph must carry the depot at index 0 with zero demand")
        if self.M < 0 or self.M * self.capacity >= total:
            raise ValidationError(
                f"M={self.M}: no subset has demand above M*Q={self.M * self.capacity} (total {total})"
            )


@dataclass
class SeparationResult:
    M: int
    subset: frozenset
    z: float
    violated: bool
    labels: np.ndarray

    def cut(self, demands, capacity):
        """(S, rhs) of x(delta(S)) >= 2k(S) for the optimal subset."""
        return self.subset, 2 * k_of_set(self.subset, demands, capacity)


def violation(subset, graph, capacity):
    """2k(S) - x(delta(S)); positive when the RCI on S is violated."""
    if not subset:
        raise ValidationError("violation of an empty subset is undefined")
    return 2.0 * k_of_set(subset, graph.demands, capacity) - graph.crossing_weight(subset)


def lex_key(subset):
    return tuple(sorted(subset))


def _result(problem, subset):
    g = problem.graph
    z = g.crossing_weight(subset)
    labels = np.zeros(g.n, dtype=np.int64)
    labels[list(subset)] = 1
    return SeparationResult(problem.M, frozenset(subset), z, z < 2 * (problem.M + 1), labels)


class SubsetTable:
    """Crossing weight and demand of every customer subset, bit i <-> customer i+1."""

    def __init__(self, graph):
        n = graph.n - 1
        if n > 26:
            raise ValidationError(f"enumeration over {n} customers is not supported")
        w = graph.weight_matrix()
        deg = w.sum(axis=1)
        cross = np.zeros(1)
        dem = np.zeros(1, dtype=np.int64)
        for b in range(n):
            v = b + 1
            inner = np.zeros(1)
            for a in range(b):
                inner = np.concatenate([inner, inner + w[v, a + 1]])
            cross = np.concatenate([cross, cross + deg[v] - 2.0 * inner])
            dem = np.concatenate([dem, dem + graph.demands[v]])
        self.n = n
        self.cross = cross
        self.demand = dem

    def best(self, threshold):
        """Lexicographically smallest minimiser among masks with demand > threshold."""
        feasible = self.demand > threshold
        if not feasible.any():
            return None
        vals = np.where(feasible, self.cross, np.inf)
        zmin = vals.min()
        cands = np.flatnonzero(vals <= zmin + TIE_TOL).astype(np.int64)
        chosen = 0
        while True:
            if (cands == chosen).any():
                break
            rest = cands & ~chosen
            low = rest & -rest
            pick = low.min()
            cands = cands[low == pick]
            chosen |= int(pick)
        return frozenset(b + 1 for b in range(self.n) if chosen >> b & 1)


def enumerate_separate(problem, table=None):
    table = SubsetTable(problem.graph) if table is None else table
    subset = table.best(problem.M * problem.capacity)
    return _result(problem, subset)


def branch_and_bound_separate(problem, node_limit=None, time_limit=None):
    """Depth-first search on y_1..y_n (y_0 = 0).

    Lower bound at a node: weight already crossing between fixed vertices, plus
    for each free vertex the cheaper of its weights to the fixed-in and fixed-out
    sides (that edge set is disjoint across free vertices).
    """
    g = problem.graph
    n = g.n
    w = g.weight_matrix()
    demands = g.demands.astype(np.int64)
    threshold = problem.M * problem.capacity
    order = list(range(1, n))
    suffix_demand = np.zeros(n + 1, dtype=np.int64)
    for pos in range(len(order) - 1, -1, -1):
        suffix_demand[pos] = suffix_demand[pos + 1] + demands[order[pos]]

    best = {"z": math.inf, "set": None}
    nodes = 0
    start = time.monotonic()
    to_in = np.zeros(n)
    to_out = w[0].copy()
    inside = []

    def consider(subset, z):
        if z < best["z"] - TIE_TOL or (z <= best["z"] + TIE_TOL and lex_key(subset) < lex_key(best["set"])):
            best["z"], best["set"] = min(z, best["z"]), tuple(subset)

    def dfs(pos, fixed_cross, demand):
        nonlocal nodes
        nodes += 1
        if node_limit is not None and nodes > node_limit:
            raise SeparationTimeout(f"branch-and-bound exceeded {node_limit} nodes")
        if time_limit is not None and nodes % 1024 == 0 and time.monotonic() - start > time_limit:
            raise SeparationTimeout(f"branch-and-bound exceeded {time_limit}s")
        if demand + suffix_demand[pos] <= threshold:
            return
        free = order[pos:]
        bound = fixed_cross + (np.minimum(to_in[free], to_out[free]).sum() if free else 0.0)
        if bound > best["z"] + TIE_TOL:
            return
        if pos == len(order):
            if demand > threshold:
                consider(inside, fixed_cross)
            return
        v = order[pos]
        for take in (True, False):
            if take:
                add = to_out[v]
                to_in[:] += w[v]
                inside.append(v)
                dfs(pos + 1, fixed_cross + add, demand + demands[v])
                inside.pop()
                to_in[:] -= w[v]
            else:
                add = to_in[v]
                to_out[:] += w[v]
                dfs(pos + 1, fixed_cross + add, demand)
                to_out[:] -= w[v]

    dfs(0, 0.0, 0)
    return _result(problem, frozenset(best["set"]))


def exact_separate(problem, method="auto", **limits):
    if method == "auto":
        method = "enumerate" if problem.graph.n - 1 <= ENUM_LIMIT else "bnb"
    if method == "enumerate":
        return enumerate_separate(problem)
    if method == "bnb":
        return branch_and_bound_separate(problem, **limits)
    raise ValidationError(f"unknown exact separation method {method!r}")


def m_range(total_demand, capacity):
    return range(-(-int(total_demand) // int(capacity)))


def exact_separate_all(graph, capacity, method="auto", **limits):
    """One optimal result per M in 0..ceil(d(V_C)/Q)-1, ascending."""
    if method == "auto":
        method = "enumerate" if graph.n - 1 <= ENUM_LIMIT else "bnb"
    table = SubsetTable(graph) if method == "enumerate" else None
    out = []
    for M in m_range(graph.demands.sum(), capacity):
        problem = SeparationProblem(graph, capacity, M)
        if table is not None:
            res = enumerate_separate(problem, table)
        else:
            res = exact_separate(problem, method, **limits)
        out.append((M, res))
    return out


def violated_subsets(results, graph, capacity, tol=VIOLATION_TOL):
    """Distinct optimal subsets whose RCI is violated by more than tol."""
    seen, out = set(), []
    for _, res in results:
        if res.subset in seen:
            continue
        if violation(res.subset, graph, capacity) > tol:
            seen.add(res.subset)
            out.append(res.subset)
    return out


def exact_separator(support, capacity, vehicles=None, method="auto"):
    return violated_subsets(exact_separate_all(support, capacity, method), support, capacity)
