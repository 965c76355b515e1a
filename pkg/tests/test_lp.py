import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linprog

from oracles import edge_list, tableau_simplex
from rcisep import errors
from rcisep.instances import CvrpInstance, generate_random
from rcisep.lp import (
    FORMS,
    LpModel,
    RelaxedSolution,
    build_relaxation,
    emit_rci,
    rci_row,
    solve,
    support_graph,
)


def triangle_instance():
    h = math.sqrt(3) / 2
    coords = [(0.5, h / 3), (0.0, 0.0), (1.0, 0.0), (0.5, h)]
    return CvrpInstance("tri", coords, [0, 4, 4, 4], capacity=10, vehicles=2, cost_scale=1000.0)


def degree_system(inst):
    nv = inst.n_vertices
    edges = edge_list(nv)
    c = np.array([inst.costs[i, j] for i, j in edges])
    A = np.zeros((nv - 1, len(edges)))
    for k, (i, j) in enumerate(edges):
        for v in (i, j):
            if v:
                A[v - 1, k] = 1
    ub = [2.0 if i == 0 else 1.0 for i, _ in edges]
    return c, A, np.full(nv - 1, 2.0), ub


def highs(inst, extra_A=None, extra_b=None):
    c, A, b, ub = degree_system(inst)
    res = linprog(c, A_ub=extra_A, b_ub=extra_b, A_eq=A, b_eq=b, bounds=[(0, u) for u in ub], method="highs")
    return res.fun


def test_counts():
    inst = generate_random(3, 1)
    model = build_relaxation(inst)
    assert model.n_vars == 6
    assert len(model.rows) == 3


def test_triangle_matches_tableau_oracle():
    inst = triangle_instance()
    c, A, b, ub = degree_system(inst)
    expected, _ = tableau_simplex(c, A, b, upper=ub)
    sol = solve(build_relaxation(inst))
    assert sol.objective == pytest.approx(expected, abs=1e-9)


@pytest.mark.parametrize("n,seed", [(5, 0), (8, 1), (12, 2)])
def test_random_matches_tableau_oracle(n, seed):
    inst = generate_random(n, seed)
    c, A, b, ub = degree_system(inst)
    expected, _ = tableau_simplex(c, A, b, upper=ub)
    assert solve(build_relaxation(inst)).objective == pytest.approx(expected, abs=1e-6)


def degree_residuals(sol, n_vertices):
    deg = np.zeros(n_vertices)
    for (i, j), v in zip(sol.edges, sol.x):
        deg[i] += v
        deg[j] += v
    return np.abs(deg[1:] - 2.0)


@pytest.mark.parametrize("seed", range(6))
def test_degree_rows_hold(seed):
    inst = generate_random(15 + seed, seed)
    sol = solve(build_relaxation(inst))
    assert degree_residuals(sol, inst.n_vertices).max() <= 1e-7
    assert (sol.x >= 0).all() and (sol.x <= build_relaxation(inst).upper).all()


def test_satisfied_row_leaves_objective():
    inst = generate_random(12, 4)
    model = build_relaxation(inst)
    first = solve(model)
    idx = model.delta_indices(range(1, inst.n_vertices))
    model.add_row(idx, np.ones(len(idx)), ">=", float(first.x[idx].sum()))
    assert solve(model).objective == pytest.approx(first.objective, abs=1e-9)


def test_cuts_match_highs_and_warm_start_is_cheaper():
    inst = generate_random(14, 9)
    model = build_relaxation(inst)
    solve(model)
    subsets = [frozenset({1, 2, 3}), frozenset(range(4, 9)), frozenset(range(2, 13))]
    rows, rhs = [], []
    for s in subsets:
        emit_rci(s, inst).add_to(model)
        full = rci_row(s, "crossing", inst.demands, inst.capacity, inst.n_vertices)
        a = np.zeros(model.n_vars)
        a[full.indices] = -full.coefs
        rows.append(a)
        rhs.append(-full.rhs)
    warm = solve(model)
    expected = highs(inst, np.array(rows), np.array(rhs))
    assert warm.objective == pytest.approx(expected, abs=1e-6)
    cold_model = build_relaxation(inst)
    for s in subsets:
        emit_rci(s, inst).add_to(cold_model)
    cold = solve(cold_model)
    assert cold.objective == pytest.approx(expected, abs=1e-6)
    assert warm.iterations <= cold.iterations


def test_form_rule():
    inst = generate_random(9, 0)
    assert emit_rci({1, 2, 3}, inst).form == "edges-inside"
    assert emit_rci(set(range(1, 9)), inst).form == "complement"
    with pytest.raises(errors.ValidationError):
        emit_rci(set(), inst)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.data())
def test_forms_agree_on_degree_feasible_points(seed, data):
    """On any x with x(delta(i)) = 2, slack(i) = slack(iii) = slack(ii) / 2."""
    inst = generate_random(7, seed)
    nv = inst.n_vertices
    s = data.draw(st.sets(st.integers(1, nv - 1), min_size=1))
    rng = np.random.default_rng(seed)
    # random convex combination of vertex-feasible points keeps degree rows
    model = build_relaxation(inst)
    model.cost = rng.uniform(0, 10, size=model.n_vars)
    x = solve(model).x
    slacks = {f: rci_row(s, f, inst.demands, inst.capacity, nv).slack(x) for f in FORMS}
    assert slacks["edges-inside"] == pytest.approx(slacks["crossing"] / 2, abs=1e-9)
    assert slacks["complement"] == pytest.approx(slacks["crossing"] / 2, abs=1e-9)


def test_bad_sense_and_empty_model():
    model = LpModel(3, np.zeros((3, 3)))
    with pytest.raises(errors.ValidationError):
        model.add_row([0], [1.0], "<", 1.0)
    with pytest.raises(errors.ValidationError):
        solve(model)


def test_lp_text_mentions_every_row():
    inst = generate_random(5, 0)
    model = build_relaxation(inst)
    emit_rci({1, 2}, inst).add_to(model)
    text = model.to_lp_text()
    assert text.startswith("\\") and text.rstrip().endswith("End")
    assert text.count(" = 2") == 5
    assert "rci_5" in text


def sol_from(edges_values, n_vertices):
    edges = edge_list(n_vertices)
    x = np.array([edges_values.get(e, 0.0) for e in edges])
    return RelaxedSolution(x, 0.0, 0, edges)


def test_support_graph_augmentation():
    inst = generate_random(4, 0)
    sol = sol_from({(0, 2): 2.0, (1, 3): 1.0, (1, 4): 1.0, (3, 4): 1.0}, 5)
    raw = support_graph(sol, inst)
    assert (0, 1) not in raw.edges
    aug = support_graph(sol, inst, augment=True)
    assert aug.edges[(0, 1)] == 0.0
    assert aug.edges[(0, 2)] == 2.0
    comps = sorted(sorted(c) for c in raw.components(raw.customers))
    assert comps == [[1, 3, 4], [2]]


def test_support_of_single_tour_is_the_cycle():
    inst = generate_random(4, 0)
    tour = {(0, 1): 1.0, (1, 2): 1.0, (2, 3): 1.0, (3, 4): 1.0, (0, 4): 1.0}
    g = support_graph(sol_from(tour, 5), inst)
    assert g.edges == tour
    aug = support_graph(sol_from(tour, 5), inst, augment=True)
    assert aug.edges == {**tour, (0, 2): 0.0, (0, 3): 0.0}
