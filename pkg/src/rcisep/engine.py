"""Cutting-plane driver, separator registry, and evaluation metrics."""

from __future__ import annotations

import csv
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ValidationError
from .graph import WeightedGraph
from .lp import build_relaxation, emit_rci, solve, support_graph
from .sep_baseline import connected_components_separate, greedy_separator
from .sep_exact import exact_separator, violation

log = logging.getLogger(__name__)

TRACE_HEADER = ["iteration", "lb", "cuts_added", "sep_time_s", "lp_pivots"]
SUMMARY_HEADER = ["instance", "n", "k", "separator", "final_lb", "gap_pct", "iterations", "wall_s", "termination"]
SEPARATORS = ("exact", "components", "greedy", "neural")
LB_TOL = 1e-6


@dataclass
class IterationRecord:
    iteration: int
    lb: float
    cuts_added: int
    sep_time_s: float
    lp_pivots: int


@dataclass
class RunTrace:
    instance: str = ""
    separator: str = ""
    records: list = field(default_factory=list)
    termination: str = ""
    cuts: list = field(default_factory=list)
    wall_s: float = 0.0

    @property
    def final_lb(self):
        return self.records[-1].lb if self.records else float("nan")

    @property
    def iterations(self):
        return len(self.records)

    def is_monotone(self, tol=LB_TOL):
        lbs = [r.lb for r in self.records]
        return all(b >= a - tol for a, b in zip(lbs, lbs[1:]))

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(TRACE_HEADER)
            for r in self.records:
                w.writerow([r.iteration, repr(r.lb), r.cuts_added, repr(r.sep_time_s), r.lp_pivots])

    @staticmethod
    def read_csv(path):
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
        records = [
            IterationRecord(int(r["iteration"]), float(r["lb"]), int(r["cuts_added"]),
                            float(r["sep_time_s"]), int(r["lp_pivots"]))
            for r in rows
        ]
        return records


def default_max_iter(n_customers):
    if n_customers < 300:
        return 200
    if n_customers <= 500:
        return 100
    return 50


def augment(support):
    edges = dict(support.edges)
    for j in support.customers:
        edges.setdefault((0, j), 0.0)
    return WeightedGraph(support.demands, edges)


def make_separator(name, params=None, **options):
    """Callable (raw support graph, Q, K) -> list of customer subsets."""
    if name == "exact":
        return lambda g, q, k: exact_separator(g, q, k, **options)
    if name == "components":
        return lambda g, q, k: connected_components_separate(g, q, k)
    if name == "greedy":
        return lambda g, q, k: greedy_separator(g, q, k)
    if name == "neural":
        if params is None:
            raise ValidationError("the neural separator needs trained parameters (--checkpoint)")
        from .neuralsep import neural_separate

        return lambda g, q, k: neural_separate(augment(g), q, k, params, **options)
    raise ValidationError(f"unknown separator {name!r}; choose from {', '.join(SEPARATORS)}")


def cutting_plane(instance, separator, max_iter=None, time_limit=None, name="", on_separation=None):
    """Solve, separate, append; repeat until no new violated cut or a limit.

    `separator` is a registry name or a callable (support, Q, K) -> subsets.
    `on_separation(iteration, support, solution)` runs before each separation.
    """
    if isinstance(separator, str):
        name = name or separator
        separator = make_separator(separator)
    max_iter = default_max_iter(instance.n_customers) if max_iter is None else max_iter
    trace = RunTrace(instance=instance.name, separator=name)
    model = build_relaxation(instance)
    pool = set()
    start = time.monotonic()
    it = 0
    while True:
        sol = solve(model)
        if trace.records and sol.objective < trace.records[-1].lb - LB_TOL:
            log.warning("LB decreased from %.9g to %.9g", trace.records[-1].lb, sol.objective)
        if it >= max_iter:
            trace.records.append(IterationRecord(it, sol.objective, 0, 0.0, sol.iterations))
            trace.termination = "iteration-limit"
            break
        if time_limit is not None and time.monotonic() - start > time_limit:
            trace.records.append(IterationRecord(it, sol.objective, 0, 0.0, sol.iterations))
            trace.termination = "time-limit"
            break
        support = support_graph(sol, instance)
        if on_separation is not None:
            on_separation(it, support, sol)
        t0 = time.perf_counter()
        subsets = separator(support, instance.capacity, instance.vehicles)
        sep_time = time.perf_counter() - t0
        new = []
        for s in subsets:
            s = frozenset(s)
            if s not in pool and s not in new:
                new.append(s)
        trace.records.append(IterationRecord(it, sol.objective, len(new), sep_time, sol.iterations))
        if not new:
            trace.termination = "no-cuts"
            break
        for s in new:
            rci = emit_rci(s, instance)
            rci.add_to(model)
            pool.add(s)
            trace.cuts.append(rci)
        it += 1
    trace.wall_s = time.monotonic() - start
    return trace


def gap(ub, lb):
    """(UB - LB) / UB * 100."""
    if ub <= 0:
        raise ValidationError(f"UB must be positive, got {ub}")
    if lb > ub + 1e-6:
        raise ValidationError(f"LB {lb} exceeds UB {ub}")
    return (ub - lb) / ub * 100.0


def read_ub_file(path):
    ubs = {}
    for k, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        name, _, value = line.partition(",")
        try:
            ubs[name.strip()] = float(value)
        except ValueError:
            raise ValidationError(f"{path}:{k}: bad UB line {line!r}") from None
    return ubs


def summary_row(instance, trace, ub=None):
    return {
        "instance": instance.name,
        "n": instance.n_customers,
        "k": instance.vehicles,
        "separator": trace.separator,
        "final_lb": trace.final_lb,
        "gap_pct": "" if ub is None else gap(ub, trace.final_lb),
        "iterations": trace.iterations,
        "wall_s": trace.wall_s,
        "termination": trace.termination,
    }


def compare(instances, separators, ubs=None, max_iter=None, time_limit=None, workers=1):
    """Run every (instance, separator) pair; `separators` maps name -> callable."""
    ubs = ubs or {}
    jobs = [(inst, name, sep) for inst in instances for name, sep in separators.items()]

    def run(job):
        inst, name, sep = job
        trace = cutting_plane(inst, sep, max_iter=max_iter, time_limit=time_limit, name=name)
        return summary_row(inst, trace, ubs.get(inst.name))

    if workers <= 1:
        return [run(j) for j in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(run, jobs))


def write_rows(rows, header, path):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=header)
        w.writeheader()
        for r in rows:
            w.writerow(r)


def separation_metrics(dataset, separator, tol=1e-4):
    """Average violation of emitted cuts, cuts per support graph, success rate.

    Samples that share a support graph (one per M) are evaluated once.
    """
    violations, counts, successes = [], [], 0
    for group in dataset.by_graph().values():
        s0 = group[0]
        g = s0.graph()
        subsets = separator(g, s0.capacity, s0.vehicles)
        vs = [violation(s, g, s0.capacity) for s in subsets]
        vs = [v for v in vs if v > tol]
        violations += vs
        counts.append(len(vs))
        successes += bool(vs)
    n = len(counts)
    return {
        "graphs": n,
        "avg_violation": sum(violations) / len(violations) if violations else 0.0,
        "avg_cuts": sum(counts) / n if n else 0.0,
        "total_cuts": sum(counts),
        "success_rate": successes / n if n else 0.0,
    }
