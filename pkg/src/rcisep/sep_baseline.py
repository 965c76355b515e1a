"""Heuristic RCI separators: connected components and greedy growth."""

from __future__ import annotations

from .sep_exact import VIOLATION_TOL, m_range, violation


def baseline_cap(n_vertices):
    return min(n_vertices, 100)


def connected_components_separate(support, capacity, vehicles=None, max_cuts=None, tol=VIOLATION_TOL):
    """Components of the support graph without the depot, their complements,
    and the union of the components that never touch the depot.

    `support` must be the raw (un-augmented) support graph; zero-weight edges
    are ignored when deciding connectivity.
    """
    customers = support.customers
    comps = support.components(customers, min_weight=0.0)
    all_c = frozenset(customers)
    found, seen = [], set()

    def test(s):
        if s and s not in seen and violation(s, support, capacity) > tol:
            seen.add(s)
            found.append(s)

    for comp in comps:
        test(comp)
        test(all_c - comp)

    touching = {j for (i, j), w in support.edges.items() if i == support.depot and w > 0.0}
    detached = [c for c in comps if not (c & touching)]
    # A detached component has zero crossing weight, so it is violated on its
    # own; the union is still worth testing because its k can be larger.
    if len(detached) >= 2 or (not found and detached):
        test(frozenset().union(*detached))

    cap = baseline_cap(support.n) if max_cuts is None else max_cuts
    return found[:cap]


def greedy_separate(support, capacity, M, tol=VIOLATION_TOL):
    """Grow a set from the most violated singleton until d(S) > M*Q.

    Each step adds the neighbour with the largest drop in crossing weight per
    unit of added demand (ties to the smallest index).  Returns the subset if
    its RCI is violated, else None.
    """
    adj = support.adjacency()
    d = support.demands
    customers = support.customers
    threshold = M * capacity
    start = max(customers, key=lambda i: (violation([i], support, capacity), -i))
    s = {start}
    cross = sum(adj[start].values())
    demand = int(d[start])
    while demand <= threshold:
        best, best_score, best_cross = None, None, None
        frontier = sorted({j for i in s for j in adj[i] if j not in s and j != support.depot})
        for v in frontier:
            inner = sum(w for u, w in adj[v].items() if u in s)
            new_cross = cross + sum(adj[v].values()) - 2.0 * inner
            score = (cross - new_cross) / d[v]
            if best is None or score > best_score + 1e-12:
                best, best_score, best_cross = v, score, new_cross
        if best is None:
            return None
        s.add(best)
        cross = best_cross
        demand += int(d[best])
    s = frozenset(s)
    return s if violation(s, support, capacity) > tol else None


def greedy_separator(support, capacity, vehicles=None, max_cuts=None, tol=VIOLATION_TOL):
    found = []
    for M in m_range(support.demands.sum(), capacity):
        s = greedy_separate(support, capacity, M, tol)
        if s is not None and s not in found:
            found.append(s)
    cap = baseline_cap(support.n) if max_cuts is None else max_cuts
    return found[:cap]
