"""Undirected weighted graph with vertex demands (support graphs, coarse levels)."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def edge_key(i, j):
    return (i, j) if i < j else (j, i)


@dataclass(eq=False)
class WeightedGraph:
    """Vertices are 0..n-1; `edges` maps (i, j) with i < j to a weight."""

    demands: np.ndarray
    edges: dict = field(default_factory=dict)
    depot: int = 0

    def __post_init__(self):
        self.demands = np.asarray(self.demands, dtype=np.int64)
        self.edges = {edge_key(int(i), int(j)): float(w) for (i, j), w in sorted(self.edges.items())}

    @property
    def n(self):
        return len(self.demands)

    @property
    def customers(self):
        return [i for i in range(self.n) if i != self.depot]

    def __eq__(self, other):
        if not isinstance(other, WeightedGraph):
            return NotImplemented
        return (
            self.depot == other.depot
            and np.array_equal(self.demands, other.demands)
            and self.edges == other.edges
        )

    def adjacency(self):
        adj = {i: {} for i in range(self.n)}
        for (i, j), w in self.edges.items():
            adj[i][j] = w
            adj[j][i] = w
        return adj

    def weight_matrix(self):
        w = np.zeros((self.n, self.n))
        for (i, j), x in self.edges.items():
            w[i, j] = w[j, i] = x
        return w

    def edge_arrays(self):
        """(src, dst, weight) arrays in sorted edge order."""
        if not self.edges:
            return np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64), np.zeros(0)
        keys = np.array(list(self.edges), dtype=np.int64)
        return keys[:, 0], keys[:, 1], np.array(list(self.edges.values()))

    def crossing_weight(self, subset):
        s = set(subset)
        return float(sum(w for (i, j), w in self.edges.items() if (i in s) != (j in s)))

    def demand_of(self, subset):
        return int(sum(int(self.demands[i]) for i in subset))

    def components(self, vertices=None, min_weight=0.0):
        """Connected components of the subgraph induced by `vertices`."""
        vs = set(range(self.n) if vertices is None else vertices)
        parent = {v: v for v in vs}

        def find(v):
            while parent[v] != v:
                parent[v] = parent[parent[v]]
                v = parent[v]
            return v

        for (i, j), w in self.edges.items():
            if w > min_weight and i in vs and j in vs:
                ri, rj = find(i), find(j)
                if ri != rj:
                    parent[max(ri, rj)] = min(ri, rj)
        groups = {}
        for v in sorted(vs):
            groups.setdefault(find(v), []).append(v)
        return [frozenset(g) for g in groups.values()]
