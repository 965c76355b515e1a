"""Learned RCI separation: predict, coarsen, repeat; then assign and lift.

A CoarseGraph keeps super-vertices keyed by the smallest original vertex id
they contain, so the depot stays 0 and contraction never renumbers anything.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .gnn import FeaturedGraph, predict
from .graph import edge_key
from .sep_exact import VIOLATION_TOL, m_range, violation

GAMMA = 0.75
MAX_ROUNDS = 50
MIN_VERTICES = 3


@dataclass
class CoarseGraph:
    level: int
    demands: dict  # super id -> demand
    adj: dict  # super id -> {neighbour id: weight}
    mapping: dict  # super id -> frozenset of original ids
    depot: int = 0

    @classmethod
    def from_graph(cls, graph):
        adj = {i: {} for i in range(graph.n)}
        for (i, j), w in graph.edges.items():
            adj[i][j] = w
            adj[j][i] = w
        return cls(
            level=0,
            demands={i: int(graph.demands[i]) for i in range(graph.n)},
            adj=adj,
            mapping={i: frozenset([i]) for i in range(graph.n)},
            depot=graph.depot,
        )

    def copy(self):
        return CoarseGraph(
            self.level,
            dict(self.demands),
            {v: dict(nb) for v, nb in self.adj.items()},
            dict(self.mapping),
            self.depot,
        )

    @property
    def ids(self):
        return sorted(self.demands)

    @property
    def n(self):
        return len(self.demands)

    def edges(self):
        return {(u, v): w for u, nb in self.adj.items() for v, w in nb.items() if u < v}

    def crossing_weight(self, selected):
        s = set(selected)
        return float(sum(w for (u, v), w in self.edges().items() if (u in s) != (v in s)))

    def lift(self, selected):
        return frozenset().union(*(self.mapping[v] for v in selected)) if selected else frozenset()

    def featurize(self, capacity, M, vehicles):
        ids = self.ids
        pos = {v: k for k, v in enumerate(ids)}
        edges = {(pos[u], pos[v]): w for (u, v), w in self.edges().items()}
        return FeaturedGraph.build(
            [self.demands[v] for v in ids], edges, capacity, M, vehicles, pos[self.depot], ids
        )

    def check(self, original=None, tol=1e-9):
        """Assert the structural invariants; `original` is the level-0 WeightedGraph."""
        seen = set()
        for v, members in self.mapping.items():
            assert not (members & seen), "mapping overlaps"
            seen |= members
            assert v == min(members), "super id must be its smallest member"
        assert self.depot in self.mapping and self.mapping[self.depot] == frozenset([self.depot])
        for u, nb in self.adj.items():
            for v, w in nb.items():
                assert u != v and self.adj[v][u] == w
        if original is not None:
            assert seen == set(range(original.n)), "mapping must partition the original vertices"
            for v, members in self.mapping.items():
                assert self.demands[v] == original.demand_of(members)
            owner = {o: v for v, members in self.mapping.items() for o in members}
            expect = {}
            for (i, j), w in original.edges.items():
                a, b = owner[i], owner[j]
                if a != b:
                    key = edge_key(a, b)
                    expect[key] = expect.get(key, 0.0) + w
            got = self.edges()
            assert set(got) == set(expect), "coarse edges must match crossing original pairs"
            for key, w in expect.items():
                assert abs(got[key] - w) <= tol * max(1.0, abs(w))


def contraction_probs(p, graph):
    """q_uv = p_u p_v + (1 - p_u)(1 - p_v); zero on depot edges.

    `p` maps super id -> probability (a dict, or an array indexed like graph.ids).
    """
    if not isinstance(p, dict):
        p = dict(zip(graph.ids, np.asarray(p, dtype=float)))
    q = {}
    for (u, v) in graph.edges():
        if graph.depot in (u, v):
            q[(u, v)] = 0.0
        else:
            q[(u, v)] = p[u] * p[v] + (1.0 - p[u]) * (1.0 - p[v])
    return q


def _q_formula(pu, pv):
    return pu * pv + (1.0 - pu) * (1.0 - pv)


def gamma_coarsen(graph, q, gamma=GAMMA, p=None):
    """Contract max-q edges until |V| <= floor(gamma |V_t|) or every q is 0.

    Ties go to the smallest (u, v).  The larger id merges into the smaller.
    With `p` given, q of re-homed edges is recomputed from the survivor's p;
    otherwise a re-homed edge keeps the q it had (an existing survivor edge
    keeps its own).
    """
    if not 0.0 < gamma < 1.0:
        raise ValidationError(f"coarsening ratio must lie in (0, 1), got {gamma}")
    g = graph.copy()
    g.level = graph.level + 1
    target = math.floor(gamma * graph.n)
    qcur = {edge_key(*e): float(v) for e, v in q.items()}
    p = None if p is None else (dict(p) if isinstance(p, dict) else dict(zip(graph.ids, np.asarray(p, float))))
    heap = [(-v, e) for e, v in qcur.items()]
    heapq.heapify(heap)
    while g.n > target:
        while heap:
            negq, e = heap[0]
            if qcur.get(e) == -negq:
                break
            heapq.heappop(heap)
        if not heap or -heap[0][0] <= 0.0:
            break
        _, (keep, gone) = heapq.heappop(heap)
        del qcur[(keep, gone)]
        del g.adj[keep][gone]
        del g.adj[gone][keep]
        for w, x in g.adj.pop(gone).items():
            del g.adj[w][gone]
            old = edge_key(gone, w)
            inherited = qcur.pop(old)
            key = edge_key(keep, w)
            had = w in g.adj[keep]
            g.adj[keep][w] = g.adj[keep].get(w, 0.0) + x
            g.adj[w][keep] = g.adj[keep][w]
            if g.depot in key:
                newq = 0.0
            elif p is not None:
                newq = _q_formula(p[keep], p[w])
            else:
                newq = qcur[key] if had else inherited
            qcur[key] = newq
            heapq.heappush(heap, (-newq, key))
        g.demands[keep] += g.demands.pop(gone)
        g.mapping[keep] = g.mapping[keep] | g.mapping.pop(gone)
        if p is not None:
            p.pop(gone)
    return g


def assign_and_lift(coarse, p):
    """Select super-vertices with p > 1/2 (depot excluded), else the single
    non-depot super-vertex of largest p; return the original customer ids."""
    if not isinstance(p, dict):
        p = dict(zip(coarse.ids, np.asarray(p, dtype=float)))
    cands = [v for v in coarse.ids if v != coarse.depot]
    if not cands:
        return frozenset()
    chosen = [v for v in cands if p[v] > 0.5]
    if not chosen:
        chosen = [max(cands, key=lambda v: (p[v], -v))]
    return coarse.lift(chosen)


def has_contractible_edge(q):
    return any(v > 0.0 for v in q.values())


@dataclass
class CoarseningTrace:
    """Per-M instrumentation from neural_separate."""

    rounds: dict = field(default_factory=dict)  # M -> number of gamma_coarsen calls
    sizes: dict = field(default_factory=dict)  # M -> vertex counts per level
    candidates: dict = field(default_factory=dict)  # M -> lifted subset


def separate_for_m(support, capacity, vehicles, M, params, gamma=GAMMA, max_rounds=MAX_ROUNDS):
    """Coarsen with re-prediction for one M; returns (subset, rounds, sizes)."""
    g = CoarseGraph.from_graph(support)
    sizes = [g.n]
    rounds = 0
    while g.n > MIN_VERTICES and rounds < max_rounds:
        p = predict(params, g.featurize(capacity, M, vehicles))
        q = contraction_probs(p, g)
        if not has_contractible_edge(q):
            break
        g = gamma_coarsen(g, q, gamma, p=p)
        rounds += 1
        sizes.append(g.n)
    p = predict(params, g.featurize(capacity, M, vehicles))
    return assign_and_lift(g, p), rounds, sizes


def neural_separate(support, capacity, vehicles, params, gamma=GAMMA, max_rounds=MAX_ROUNDS,
                    tol=VIOLATION_TOL, trace=None):
    """Violated subsets found by the learned policy, at most one per M.

    `support` should be the augmented support graph (depot joined to every
    customer, zero weight where x is 0).
    """
    found = []
    for M in m_range(support.demands.sum(), capacity):
        s, rounds, sizes = separate_for_m(support, capacity, vehicles, M, params, gamma, max_rounds)
        if trace is not None:
            trace.rounds[M] = rounds
            trace.sizes[M] = sizes
            trace.candidates[M] = s
        if s and s not in found and violation(s, support, capacity) > tol:
            found.append(s)
    return found


def label_probs(coarse, labels):
    """Super-vertex labels from original labels (consistent under teacher forcing)."""
    return {v: float(labels[min(members)]) for v, members in coarse.mapping.items()}


def teacher_forced_levels(support, labels, gamma=GAMMA, max_rounds=MAX_ROUNDS):
    """Coarsening driven by q computed from the exact labels.

    Yields (level graph, super-vertex labels) for level 0 and each coarser
    level, stopping at <= 3 vertices, when no edge has q > 0, or after
    `max_rounds` contractions rounds.
    """
    g = CoarseGraph.from_graph(support)
    rounds = 0
    while True:
        y = label_probs(g, labels)
        yield g, y
        if g.n <= MIN_VERTICES or rounds >= max_rounds:
            return
        q = contraction_probs(y, g)
        if not has_contractible_edge(q):
            return
        g = gamma_coarsen(g, q, gamma, p=y)
        rounds += 1


def teacher_forced_separate(support, labels, gamma=GAMMA, max_rounds=MAX_ROUNDS):
    """Lifted subset when the labels themselves play the policy."""
    *_, (g, y) = teacher_forced_levels(support, labels, gamma, max_rounds)
    return assign_and_lift(g, y)


def round_bound(n_vertices, gamma=GAMMA):
    """ceil(log(|V|/3) / log(1/gamma)) + 1."""
    if n_vertices <= MIN_VERTICES:
        return 1
    return math.ceil(math.log(n_vertices / MIN_VERTICES) / math.log(1.0 / gamma)) + 1
