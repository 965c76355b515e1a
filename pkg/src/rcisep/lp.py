"""Two-index LP relaxation of the CVRP with an append-only cut pool.

The solver is a bounded-variable revised simplex.  Every row owns one
auxiliary column (artificial for equalities, slack otherwise), so the
all-auxiliary basis is always available.  With nonnegative costs that basis
is dual feasible, which lets the dual simplex handle both the cold start and
re-optimisation after cuts are appended.  A primal pass cleans up any dual
infeasibility left by round-off.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import LpInfeasibleError, ValidationError
from .graph import WeightedGraph
from .instances import k_of_set

log = logging.getLogger(__name__)

PRIMAL_TOL = 1e-9
DUAL_TOL = 1e-9
PIVOT_TOL = 1e-9
SUPPORT_EPS = 1e-6
BLAND_AFTER = 1000
REFACTOR_EVERY = 50
MAX_PIVOTS = 200_000

AT_LOWER, AT_UPPER, BASIC = 0, 1, 2


@dataclass
class Row:
    indices: np.ndarray
    coefs: np.ndarray
    sense: str  # "=", "<=", ">="
    rhs: float
    name: str = ""

    def activity(self, x):
        return float(np.dot(self.coefs, x[self.indices]))

    def violation(self, x):
        """Amount by which x breaks the row (<= 0 when satisfied)."""
        act = self.activity(x)
        if self.sense == "<=":
            return act - self.rhs
        if self.sense == ">=":
            return self.rhs - act
        return abs(act - self.rhs)


@dataclass
class RelaxedSolution:
    x: np.ndarray
    objective: float
    iterations: int
    edges: list

    @property
    def values(self):
        return {e: float(v) for e, v in zip(self.edges, self.x)}


class LpModel:
    """One variable per undirected edge, degree equalities, and a cut pool."""

    def __init__(self, n_vertices, costs):
        self.n_vertices = n_vertices
        self.edges = [(i, j) for i in range(n_vertices) for j in range(i + 1, n_vertices)]
        self.edge_index = {e: k for k, e in enumerate(self.edges)}
        self.cost = np.array([costs[i][j] for i, j in self.edges], dtype=float)
        self.upper = np.array([2.0 if i == 0 else 1.0 for i, _ in self.edges])
        self.rows = []
        self.n_degree_rows = 0
        # warm-start state: column status and basis (row-position -> column)
        self._status = None
        self._basis = None

    @property
    def n_vars(self):
        return len(self.edges)

    @property
    def cut_rows(self):
        return self.rows[self.n_degree_rows:]

    def add_row(self, indices, coefs, sense, rhs, name=""):
        if sense not in ("=", "<=", ">="):
            raise ValidationError(f"unknown row sense {sense!r}")
        indices = np.asarray(indices, dtype=np.int64)
        order = np.argsort(indices)
        row = Row(indices[order], np.asarray(coefs, dtype=float)[order], sense, float(rhs), name)
        self.rows.append(row)
        return len(self.rows) - 1

    def delta_indices(self, subset):
        s = set(subset)
        return [k for k, (i, j) in enumerate(self.edges) if (i in s) != (j in s)]

    def to_lp_text(self):
        """CPLEX-LP text of the current model, for cross-checking elsewhere."""
        name = [f"x_{i}_{j}" for i, j in self.edges]

        def expr(idx, coef):
            parts = []
            for k, a in zip(idx, coef):
                sign = "-" if a < 0 else "+"
                parts.append(f"{sign} {abs(a):.12g} {name[k]}")
            text = " ".join(parts)
            return text[2:] if text.startswith("+ ") else text

        out = ["\\ two-index CVRP relaxation", "Minimize", " obj: " + expr(range(self.n_vars), self.cost)]
        out.append("Subject To")
        for r, row in enumerate(self.rows):
            label = row.name or f"r{r}"
            out.append(f" {label}: {expr(row.indices, row.coefs)} {row.sense} {row.rhs:.12g}")
        out.append("Bounds")
        out += [f" 0 <= {name[k]} <= {self.upper[k]:.12g}" for k in range(self.n_vars)]
        out.append("End")
        return "\n".join(out) + "\n"


def build_relaxation(instance):
    """Degree rows x(delta({i})) = 2 for every customer; no cuts yet."""
    model = LpModel(instance.n_vertices, instance.costs)
    for i in range(1, instance.n_vertices):
        idx = model.delta_indices([i])
        model.add_row(idx, np.ones(len(idx)), "=", 2.0, name=f"deg_{i}")
    model.n_degree_rows = instance.n_vertices - 1
    return model


class _Simplex:
    """Dense revised simplex over [structural | auxiliary] columns."""

    def __init__(self, model):
        n, m = model.n_vars, len(model.rows)
        self.n, self.m = n, m
        A = np.zeros((m, n + m))
        b = np.empty(m)
        lo = np.zeros(n + m)
        up = np.concatenate([model.upper, np.full(m, np.inf)])
        for r, row in enumerate(model.rows):
            A[r, row.indices] = row.coefs
            b[r] = row.rhs
            A[r, n + r] = -1.0 if row.sense == ">=" else 1.0
            if row.sense == "=":
                up[n + r] = 0.0
        self.A, self.b, self.lo, self.up = A, b, lo, up
        self.c = np.concatenate([model.cost, np.zeros(m)])
        self.pivots = 0

        self.status = np.full(n + m, BASIC, dtype=np.int64)
        if model._basis is None:
            self.status[:n] = np.where(model.cost >= 0, AT_LOWER, AT_UPPER)
            basis = list(range(n, n + m))
        else:
            old = len(model._status)
            self.status[:old] = model._status
            # rows appended since the last solve enter with their aux column basic
            basis = list(model._basis) + list(range(old, n + m))
        self.basis = np.array(basis, dtype=np.int64)
        self._refactor()

    def _refactor(self):
        self.Binv = np.linalg.inv(self.A[:, self.basis])
        self._since_refactor = 0

    def _nonbasic_values(self):
        x = np.where(self.status == AT_UPPER, self.up, self.lo)
        x[self.status == BASIC] = 0.0
        return x

    def primal(self):
        x = self._nonbasic_values()
        xb = self.Binv @ (self.b - self.A @ x)
        x[self.basis] = xb
        return x, xb

    def reduced_costs(self):
        y = self.c[self.basis] @ self.Binv
        return self.c - y @ self.A

    def _pivot(self, r, j, leaving_status):
        col = self.Binv @ self.A[:, j]
        piv = col[r]
        leaving = self.basis[r]
        self.status[leaving] = leaving_status
        self.status[j] = BASIC
        self.basis[r] = j
        self.pivots += 1
        self._since_refactor += 1
        if self._since_refactor >= REFACTOR_EVERY:
            self._refactor()
            return
        self.Binv[r] /= piv
        others = np.arange(self.m) != r
        self.Binv[others] -= np.outer(col[others], self.Binv[r])

    def _movable(self):
        return (self.status != BASIC) & (self.up > self.lo)

    def dual_simplex(self):
        degenerate = 0
        while True:
            if self.pivots > MAX_PIVOTS:
                raise RuntimeError("dual simplex pivot limit exceeded")
            _, xb = self.primal()
            lo_b, up_b = self.lo[self.basis], self.up[self.basis]
            below = lo_b - xb
            above = xb - up_b
            infeas = np.maximum(below, above)
            bad = np.flatnonzero(infeas > PRIMAL_TOL)
            if bad.size == 0:
                return
            bland = degenerate >= BLAND_AFTER
            if bland:
                r = bad[np.argmin(self.basis[bad])]
            else:
                r = bad[np.argmax(infeas[bad])]
            to_lower = below[r] > above[r]
            d = self.reduced_costs()
            alpha = self.Binv[r] @ self.A
            mov = self._movable()
            at_lo = mov & (self.status == AT_LOWER)
            at_up = mov & (self.status == AT_UPPER)
            if to_lower:
                cand = (at_lo & (alpha < -PIVOT_TOL)) | (at_up & (alpha > PIVOT_TOL))
            else:
                cand = (at_lo & (alpha > PIVOT_TOL)) | (at_up & (alpha < -PIVOT_TOL))
            idx = np.flatnonzero(cand)
            if idx.size == 0:
                raise LpInfeasibleError(
                    f"LP infeasible: basic column {self.basis[r]} in row {r} cannot reach its bound",
                    row=int(r),
                )
            dj = np.where(self.status[idx] == AT_LOWER, np.maximum(d[idx], 0.0), np.maximum(-d[idx], 0.0))
            a = np.abs(alpha[idx])
            ratios = dj / a
            if bland:
                best = ratios.min()
                tie = idx[ratios <= best + DUAL_TOL]
                j = int(tie.min())
                step = best
            else:
                # Harris two-pass: widest pivot among near-minimal ratios
                bound = ((dj + DUAL_TOL) / a).min()
                ok = ratios <= bound
                k = np.flatnonzero(ok)[np.argmax(a[ok])]
                j = int(idx[k])
                step = ratios[k]
            degenerate = degenerate + 1 if step <= DUAL_TOL else 0
            self._pivot(r, j, AT_LOWER if to_lower else AT_UPPER)

    def primal_simplex(self):
        degenerate = 0
        while True:
            if self.pivots > MAX_PIVOTS:
                raise RuntimeError("primal simplex pivot limit exceeded")
            d = self.reduced_costs()
            mov = self._movable()
            gain = np.where(self.status == AT_LOWER, -d, d)
            gain[~mov] = 0.0
            cand = np.flatnonzero(gain > DUAL_TOL)
            if cand.size == 0:
                return
            bland = degenerate >= BLAND_AFTER
            j = int(cand.min()) if bland else int(cand[np.argmax(gain[cand])])
            s = 1.0 if self.status[j] == AT_LOWER else -1.0
            _, xb = self.primal()
            col = s * (self.Binv @ self.A[:, j])
            lo_b, up_b = self.lo[self.basis], self.up[self.basis]
            theta = self.up[j] - self.lo[j]
            r, to_lower = -1, True
            for i in np.flatnonzero(np.abs(col) > PIVOT_TOL):
                if col[i] > 0:
                    lim = max(xb[i] - lo_b[i], 0.0) / col[i]
                    low = True
                elif np.isfinite(up_b[i]):
                    lim = max(up_b[i] - xb[i], 0.0) / -col[i]
                    low = False
                else:
                    continue
                if lim < theta - 1e-12 or (bland and r >= 0 and abs(lim - theta) <= 1e-12 and self.basis[i] < self.basis[r]):
                    theta, r, to_lower = lim, i, low
            if not np.isfinite(theta):
                raise RuntimeError("LP unbounded")
            degenerate = degenerate + 1 if theta <= PRIMAL_TOL else 0
            if r < 0:
                self.status[j] = AT_UPPER if self.status[j] == AT_LOWER else AT_LOWER
                self.pivots += 1
            else:
                self._pivot(r, j, AT_LOWER if to_lower else AT_UPPER)


def solve(model):
    """Optimise the current model, warm-starting from the previous basis."""
    if not model.rows:
        raise ValidationError("model has no rows")
    sx = _Simplex(model)
    for _ in range(5):
        sx.dual_simplex()
        sx.primal_simplex()
        _, xb = sx.primal()
        infeas = np.maximum(sx.lo[sx.basis] - xb, xb - sx.up[sx.basis])
        if infeas.max(initial=0.0) <= PRIMAL_TOL:
            break
        sx._refactor()
    x, _ = sx.primal()
    model._status = sx.status.copy()
    model._basis = sx.basis.copy()
    xs = np.clip(x[: sx.n], 0.0, model.upper)
    return RelaxedSolution(
        x=xs,
        objective=float(model.cost @ xs),
        iterations=sx.pivots,
        edges=model.edges,
    )


@dataclass
class Rci:
    """x(delta(S)) >= 2k(S), stored in one of three equivalent row forms."""

    subset: frozenset
    k: int
    form: str  # "edges-inside" (i), "crossing" (ii), "complement" (iii)
    indices: np.ndarray
    coefs: np.ndarray
    sense: str
    rhs: float

    def slack(self, x):
        act = float(np.dot(self.coefs, np.asarray(x)[self.indices]))
        return self.rhs - act if self.sense == "<=" else act - self.rhs

    def add_to(self, model):
        return model.add_row(self.indices, self.coefs, self.sense, self.rhs, name=f"rci_{len(model.rows)}")


FORMS = ("edges-inside", "crossing", "complement")


def rci_row(subset, form, demands, capacity, n_vertices):
    s = frozenset(int(i) for i in subset)
    if not s:
        raise ValidationError("RCI needs a nonempty customer subset")
    if 0 in s:
        raise ValidationError("RCI subsets must not contain the depot")
    k = k_of_set(s, demands, capacity)
    idx, coef = [], []
    pos = 0
    for i in range(n_vertices):
        for j in range(i + 1, n_vertices):
            a = 0.0
            if form == "edges-inside":
                a = 1.0 if (i in s and j in s) else 0.0
            elif form == "crossing":
                a = 1.0 if (i in s) != (j in s) else 0.0
            elif form == "complement":
                if i == 0:
                    a = -0.5 if j in s else 0.5
                elif i not in s and j not in s:
                    a = 1.0
            else:
                raise ValidationError(f"unknown RCI form {form!r}")
            if a:
                idx.append(pos)
                coef.append(a)
            pos += 1
    if form == "edges-inside":
        sense, rhs = "<=", len(s) - k
    elif form == "crossing":
        sense, rhs = ">=", 2 * k
    else:
        sense, rhs = "<=", (n_vertices - 1 - len(s)) - k
    return Rci(s, k, form, np.array(idx, dtype=np.int64), np.array(coef), sense, float(rhs))


def emit_rci(subset, instance, n_vertices=None):
    """Form (i) when |S| <= |V|/2, form (iii) otherwise."""
    n_vertices = instance.n_vertices if n_vertices is None else n_vertices
    if not subset:
        raise ValidationError("RCI needs a nonempty customer subset")
    form = "edges-inside" if 2 * len(subset) <= n_vertices else "complement"
    return rci_row(subset, form, instance.demands, instance.capacity, n_vertices)


def support_graph(solution, instance, augment=False, eps=SUPPORT_EPS):
    """Edges with x > eps; `augment` adds zero-weight depot edges where missing."""
    edges = {e: float(v) for e, v in zip(solution.edges, solution.x) if v > eps}
    if augment:
        for j in range(1, instance.n_vertices):
            edges.setdefault((0, j), 0.0)
    return WeightedGraph(instance.demands, edges)
