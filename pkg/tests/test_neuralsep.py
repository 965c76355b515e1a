import math

import numpy as np
import pytest

from rcisep import errors
from rcisep.gnn import GnnParams
from rcisep.graph import WeightedGraph
from rcisep.neuralsep import (
    CoarseGraph,
    CoarseningTrace,
    assign_and_lift,
    contraction_probs,
    gamma_coarsen,
    has_contractible_edge,
    neural_separate,
    round_bound,
    teacher_forced_levels,
    teacher_forced_separate,
)
from rcisep.sep_exact import exact_separate_all, violation


def complete(n, w=1.0, demands=None):
    demands = demands if demands is not None else [0] + [1] * (n - 1)
    return WeightedGraph(demands, {(i, j): w for i in range(n) for j in range(i + 1, n)})


def random_graph(rng, n, p=0.4):
    demands = [0, *rng.integers(1, 40, size=n - 1)]
    edges = {(0, j): float(rng.uniform(0, 1)) for j in range(1, n)}
    edges.update({(i, j): float(rng.uniform(0.05, 1)) for i in range(1, n) for j in range(i + 1, n) if rng.random() < p})
    return WeightedGraph(demands, edges)


def test_contraction_probability_values():
    g = CoarseGraph.from_graph(WeightedGraph([0, 1, 1], {(0, 1): 1.0, (1, 2): 1.0, (0, 2): 1.0}))
    q = contraction_probs({0: 0.9, 1: 0.8, 2: 0.3}, g)
    assert q[(1, 2)] == pytest.approx(0.38)
    assert q[(0, 1)] == 0.0 and q[(0, 2)] == 0.0
    assert contraction_probs({0: 0.0, 1: 1.0, 2: 1.0}, g)[(1, 2)] == 1.0


def test_ten_vertices_become_seven():
    g = CoarseGraph.from_graph(complete(10))
    q = contraction_probs(np.full(10, 0.9), g)
    h = gamma_coarsen(g, q, 0.75)
    assert h.n == 7
    assert h.level == 1
    h.check(complete(10))


def test_parallel_edges_are_summed():
    base = WeightedGraph([0, 1, 1, 1], {(0, 1): 1.0, (1, 2): 1.0, (1, 3): 0.5, (2, 3): 0.5})
    g = CoarseGraph.from_graph(base)
    q = {(0, 1): 0.0, (1, 2): 0.9, (1, 3): 0.1, (2, 3): 0.1}
    h = gamma_coarsen(g, q, 0.75)  # floor(0.75 * 4) = 3: one contraction
    assert h.mapping[1] == {1, 2}
    assert h.edges()[(1, 3)] == 1.0
    h.check(base)


def test_all_zero_q_is_a_no_op():
    g = CoarseGraph.from_graph(complete(6))
    h = gamma_coarsen(g, {e: 0.0 for e in g.edges()}, 0.75)
    assert h.edges() == g.edges() and h.mapping == g.mapping and h.demands == g.demands
    assert not has_contractible_edge({e: 0.0 for e in g.edges()})


@pytest.mark.parametrize("gamma", [0.0, 1.0, -0.2, 1.5])
def test_gamma_range(gamma):
    g = CoarseGraph.from_graph(complete(5))
    with pytest.raises(errors.ValidationError):
        gamma_coarsen(g, contraction_probs(np.full(5, 0.5), g), gamma)


def test_assign_threshold_and_depot_exclusion():
    base = WeightedGraph([0, 1, 1, 1], {(0, 1): 1.0, (1, 2): 1.0, (0, 3): 1.0, (2, 3): 1.0})
    g = gamma_coarsen(CoarseGraph.from_graph(base), {(0, 1): 0, (1, 2): 1.0, (0, 3): 0, (2, 3): 0}, 0.75)
    assert g.ids == [0, 1, 3]
    assert assign_and_lift(g, {0: 0.9, 1: 0.7, 3: 0.2}) == {1, 2}
    assert assign_and_lift(g, {0: 0.9, 1: 0.2, 3: 0.4}) == {3}


def test_invariants_under_random_contractions():
    rng = np.random.default_rng(0)
    contractions = 0
    while contractions < 10_000:
        n = int(rng.integers(4, 40))
        base = random_graph(rng, n, p=float(rng.uniform(0.1, 0.6)))
        g = CoarseGraph.from_graph(base)
        total = sum(g.demands.values())
        while g.n > 3:
            q = {e: (0.0 if 0 in e else float(rng.random())) for e in g.edges()}
            h = gamma_coarsen(g, q, float(rng.uniform(0.3, 0.95)), p=None)
            if h.n == g.n:
                break
            contractions += g.n - h.n
            h.check(base)
            assert sum(h.demands.values()) == total
            assert h.mapping[0] == {0}
            assert all(v == 0.0 for e, v in contraction_probs(rng.random(h.n), h).items() if 0 in e)
            g = h
    assert contractions >= 10_000


def test_teacher_forced_never_merges_across_labels():
    rng = np.random.default_rng(1)
    for _ in range(50):
        base = random_graph(rng, int(rng.integers(5, 25)))
        labels = np.concatenate([[0], rng.integers(0, 2, size=base.n - 1)])
        for g, y in teacher_forced_levels(base, labels):
            for members in g.mapping.values():
                assert len({int(labels[v]) for v in members}) == 1


@pytest.mark.parametrize("seed", range(8))
def test_teacher_forced_recovers_exact_violation(seed):
    rng = np.random.default_rng(seed)
    base = random_graph(rng, 12)
    Q = 80
    for M, res in exact_separate_all(base, Q):
        s = teacher_forced_separate(base, res.labels)
        assert violation(s, base, Q) == pytest.approx(violation(res.subset, base, Q), abs=1e-9)


def test_round_bound_values():
    assert round_bound(50) == 11
    assert round_bound(3) == 1
    assert round_bound(300) == math.ceil(math.log(100) / math.log(4 / 3)) + 1


def test_neural_separate_is_deterministic_and_bounded():
    rng = np.random.default_rng(3)
    base = random_graph(rng, 30)
    Q = 100
    params = GnnParams(seed=0)
    trace = CoarseningTrace()
    a = neural_separate(base, Q, 8, params, trace=trace)
    b = neural_separate(base, Q, 8, params)
    assert a == b
    n_m = math.ceil(base.demands.sum() / Q)
    assert len(a) <= n_m
    assert set(trace.rounds) == set(range(n_m))
    for M, rounds in trace.rounds.items():
        assert rounds <= min(round_bound(base.n), 50)
        assert trace.sizes[M][0] == 30 and len(trace.sizes[M]) == rounds + 1
    for s in a:
        assert 0 not in s and violation(s, base, Q) > 1e-4
