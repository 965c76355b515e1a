"""Exact label collection, dataset files, and imitation training."""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .engine import augment, cutting_plane
from .errors import FormatError, SeparationTimeout, ShapeError, ValidationError
from .gnn import GnnConfig, GnnParams, batch_graphs, forward
from .graph import WeightedGraph
from .neuralsep import (
    GAMMA,
    MAX_ROUNDS,
    MIN_VERTICES,
    CoarseGraph,
    contraction_probs,
    gamma_coarsen,
    has_contractible_edge,
    label_probs,
)
from .sep_exact import (
    ENUM_LIMIT,
    SeparationProblem,
    SubsetTable,
    branch_and_bound_separate,
    enumerate_separate,
    m_range,
    violated_subsets,
)

log = logging.getLogger(__name__)

DATASET_FORMAT = "rcisep-dataset"
DATASET_VERSION = 1


class WeightError(ValueError):
    """A label collection has no positive labels."""


@dataclass(eq=False)
class LabeledSample:
    source: str
    iteration: int
    M: int
    capacity: int
    vehicles: int
    demands: np.ndarray
    edges: dict  # raw support graph, (i, j) -> x
    labels: np.ndarray

    def __post_init__(self):
        self.demands = np.asarray(self.demands, dtype=np.int64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.edges = {(int(i), int(j)): float(w) for (i, j), w in self.edges.items()}

    def graph(self):
        return WeightedGraph(self.demands, self.edges)

    def check(self):
        if self.labels[0] != 0:
            raise ValidationError("depot label must be 0")
        if int(self.demands @ self.labels) < self.M * self.capacity + 1:
            raise ValidationError("labelled set does not exceed M*Q")

    def to_record(self):
        return {
            "source": self.source,
            "iteration": self.iteration,
            "M": self.M,
            "capacity": self.capacity,
            "vehicles": self.vehicles,
            "demands": self.demands.tolist(),
            "edges": [[i, j, w] for (i, j), w in sorted(self.edges.items())],
            "labels": self.labels.tolist(),
        }

    @classmethod
    def from_record(cls, rec):
        return cls(
            source=rec["source"],
            iteration=int(rec["iteration"]),
            M=int(rec["M"]),
            capacity=int(rec["capacity"]),
            vehicles=int(rec["vehicles"]),
            demands=rec["demands"],
            edges={(int(i), int(j)): float(w) for i, j, w in rec["edges"]},
            labels=rec["labels"],
        )

    def __eq__(self, other):
        if not isinstance(other, LabeledSample):
            return NotImplemented
        return self.to_record() == other.to_record()


@dataclass
class Dataset:
    samples: list = field(default_factory=list)

    def __len__(self):
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    def add(self, sample):
        self.samples.append(sample)

    def by_m(self):
        groups = {}
        for s in self.samples:
            groups.setdefault(s.M, []).append(s)
        return dict(sorted(groups.items()))

    def by_graph(self):
        groups = {}
        for s in self.samples:
            groups.setdefault((s.source, s.iteration), []).append(s)
        return groups


def label_support(support, capacity, vehicles, source="", iteration=0, keep_nonviolated=True,
                  node_limit=2_000_000, time_limit=None):
    """Exact optimum for every M on one support graph.

    Returns (samples, violated subsets).  Enumeration up to 20 customers,
    branch-and-bound above; an M that times out is skipped with a warning.
    """
    table = SubsetTable(support) if support.n - 1 <= ENUM_LIMIT else None
    results, samples = [], []
    for M in m_range(support.demands.sum(), capacity):
        problem = SeparationProblem(support, capacity, M)
        try:
            if table is not None:
                res = enumerate_separate(problem, table)
            else:
                res = branch_and_bound_separate(problem, node_limit=node_limit, time_limit=time_limit)
        except SeparationTimeout as exc:
            log.warning("%s iteration %d M=%d skipped: %s", source, iteration, M, exc)
            continue
        results.append((M, res))
        if keep_nonviolated or res.violated:
            samples.append(LabeledSample(source, iteration, M, capacity, vehicles, support.demands,
                                         support.edges, res.labels))
    return samples, violated_subsets(results, support, capacity)


def collect_labels(instances, max_iter=50, keep_nonviolated=True, node_limit=2_000_000, time_limit=None):
    """Cutting-plane runs with the exact separator, recording one sample per M
    per iteration."""
    data = Dataset()
    for inst in instances:
        it_box = {"it": 0}

        def on_separation(it, support, sol):
            it_box["it"] = it

        def recording_separator(support, capacity, vehicles, inst=inst):
            samples, cuts = label_support(support, capacity, vehicles, inst.name, it_box["it"],
                                          keep_nonviolated, node_limit, time_limit)
            data.samples.extend(samples)
            return cuts

        cutting_plane(inst, recording_separator, max_iter=max_iter, name="exact", on_separation=on_separation)
    return data


def positive_weight(samples):
    """(# negative labels) / (# positive labels), pooled over all samples."""
    pos = sum(int(np.sum(s.labels)) for s in samples)
    neg = sum(int(len(s.labels) - np.sum(s.labels)) for s in samples)
    if pos == 0:
        raise WeightError("label collection has no positive labels")
    return neg / pos


def save_dataset(dataset, path):
    with open(path, "w") as fh:
        fh.write(json.dumps({"format": DATASET_FORMAT, "version": DATASET_VERSION}) + "\n")
        for s in dataset:
            fh.write(json.dumps(s.to_record()) + "\n")


def load_dataset(path):
    data = Dataset()
    with open(path) as fh:
        for k, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                if k == 1 and rec.get("format") == DATASET_FORMAT:
                    if rec.get("version") != DATASET_VERSION:
                        raise FormatError(f"line 1: unsupported dataset version {rec.get('version')}")
                    continue
                data.add(LabeledSample.from_record(rec))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                if isinstance(exc, FormatError):
                    raise
                raise FormatError(f"line {k}: malformed sample ({exc})") from None
    return data


@dataclass
class TrainConfig:
    gamma: float = GAMMA
    max_rounds: int = MAX_ROUNDS
    batch_size: int = 16
    epochs: int = 20
    lr: float = 5e-4
    t0: int = 32
    seed: int = 0
    gnn: GnnConfig = field(default_factory=GnnConfig)


@dataclass
class TrainResult:
    params: GnnParams
    step_losses: list
    epoch_losses: list


def m_weights(dataset):
    """Per-M (loss weight |D_M| / sum |D_m|, positive weight rho_M)."""
    groups = dataset.by_m()
    total = sum(len(v) for v in groups.values())
    out = {}
    for M, samples in groups.items():
        try:
            rho = positive_weight(samples)
        except WeightError:
            log.warning("D_%d has no positive labels; dropped", M)
            continue
        if rho == 0.0:
            log.warning("D_%d has only positive labels; rho treated as 1", M)
            rho = 1.0
        out[M] = (len(samples) / total, rho)
    return out


def _batch_loss(params, active, weights):
    fgs, ys, ms = [], [], []
    for item in active:
        g, s = item["graph"], item["sample"]
        fgs.append(g.featurize(s.capacity, s.M, s.vehicles))
        y = label_probs(g, s.labels)
        ys.append([y[v] for v in g.ids])
        ms.append(np.full(g.n, s.M))
    batch, _ = batch_graphs(fgs)
    y = np.concatenate(ys)
    m = np.concatenate(ms)
    pos = np.zeros_like(y)
    neg = np.zeros_like(y)
    for M in np.unique(m):
        sel = m == M
        w, rho = weights[int(M)]
        pos[sel] = w * rho / sel.sum()
        neg[sel] = w / sel.sum()
    p = forward(params, batch)
    return nn.weighted_bce(p, y, pos, neg)


def train(dataset, config=None, params=None, on_epoch=None):
    """Imitation training with teacher-forced coarsening.

    Each batch starts from the level-0 support graphs; after every optimiser
    step each graph is coarsened with q computed from its labels, until it
    has <= 3 vertices, no contractible edge remains, or `max_rounds` is hit.
    """
    config = config or TrainConfig()
    if len(dataset) == 0:
        raise ValidationError("cannot train on an empty dataset")
    weights = m_weights(dataset)
    samples = [s for s in dataset if s.M in weights]
    for s in samples:
        if len(s.labels) != len(s.demands):
            raise ShapeError(f"{s.source}: {len(s.labels)} labels for {len(s.demands)} vertices")
    params = params or GnnParams(config.gnn, seed=config.seed)
    opt = nn.Adam(params.named_parameters(), lr=config.lr, t0=config.t0)
    rng = np.random.default_rng(config.seed)
    step_losses, epoch_losses = [], []
    for epoch in range(config.epochs):
        order = rng.permutation(len(samples))
        losses = []
        for start in range(0, len(order), config.batch_size):
            active = [
                {"graph": CoarseGraph.from_graph(augment(samples[k].graph())), "sample": samples[k], "rounds": 0}
                for k in order[start:start + config.batch_size]
            ]
            while active:
                loss = _batch_loss(params, active, weights)
                opt.zero_grad()
                nn.backward(loss)
                opt.step()
                losses.append(float(loss.data))
                nxt = []
                for item in active:
                    g = item["graph"]
                    if g.n <= MIN_VERTICES or item["rounds"] >= config.max_rounds:
                        continue
                    y = label_probs(g, item["sample"].labels)
                    q = contraction_probs(y, g)
                    if not has_contractible_edge(q):
                        continue
                    item["graph"] = gamma_coarsen(g, q, config.gamma, p=y)
                    item["rounds"] += 1
                    nxt.append(item)
                active = nxt
        step_losses += losses
        epoch_losses.append(float(np.mean(losses)))
        log.info("epoch %d: mean loss %.5f", epoch + 1, epoch_losses[-1])
        if on_epoch is not None:
            on_epoch(epoch, params, epoch_losses[-1])
    return TrainResult(params, step_losses, epoch_losses)
