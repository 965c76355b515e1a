"""Message-passing policy that scores each vertex's membership in the cut set.

Vertex features are (d_i / Q, M / K), edge features are (x_ij,).  Encoders
lift both to the embedding width, five rounds of edge-then-vertex updates
follow, and a sigmoid head produces p_i.  Undirected edges are updated
symmetrically, f_e([h_i, h_j, h_ij]) and f_e([h_j, h_i, h_ij]) averaged, so
the output does not depend on vertex numbering.  Vertices aggregate the mean
of their incident edge embeddings.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import nn
from .errors import ShapeError

VERTEX_FEATURES = 2
EDGE_FEATURES = 1


@dataclass(frozen=True)
class GnnConfig:
    embed: int = 32
    hidden: tuple = (64, 32)
    layers: int = 5
    encoder_hidden: int = 64


class GnnParams:
    def __init__(self, config=None, seed=0):
        self.config = config or GnnConfig()
        c = self.config
        rng = np.random.default_rng(seed)
        h = list(c.hidden)
        self.enc_v = nn.Mlp([VERTEX_FEATURES, c.encoder_hidden, c.embed], rng)
        self.enc_e = nn.Mlp([EDGE_FEATURES, c.encoder_hidden, c.embed], rng)
        self.edge_mlps = [nn.Mlp([3 * c.embed, *h, c.embed], rng) for _ in range(c.layers)]
        self.vertex_mlps = [nn.Mlp([2 * c.embed, *h, c.embed], rng) for _ in range(c.layers)]
        self.head = nn.Mlp([c.embed, *h, 1], rng, output="sigmoid")

    def named_parameters(self):
        groups = {"enc_v": self.enc_v, "enc_e": self.enc_e, "head": self.head}
        for k in range(self.config.layers):
            groups[f"edge{k}"] = self.edge_mlps[k]
            groups[f"vertex{k}"] = self.vertex_mlps[k]
        return {f"{g}.{name}": t for g, m in groups.items() for name, t in m.parameters().items()}

    def save(self, path, meta=None):
        meta = dict(meta or {})
        meta["config"] = asdict(self.config)
        nn.save_checkpoint(self.named_parameters(), path, meta)

    @classmethod
    def load(cls, path):
        doc = nn.read_checkpoint(path)
        cfg = doc.get("meta", {}).get("config", {})
        if "hidden" in cfg:
            cfg["hidden"] = tuple(cfg["hidden"])
        params = cls(GnnConfig(**cfg))
        nn.load_checkpoint(params.named_parameters(), path)
        return params


@dataclass
class FeaturedGraph:
    """Arrays ready for the policy; `ids` maps row i back to a vertex id."""

    vertex_features: np.ndarray  # (n, 2)
    src: np.ndarray
    dst: np.ndarray
    edge_features: np.ndarray  # (E, 1)
    depot: int = 0
    ids: tuple = None

    @property
    def n(self):
        return len(self.vertex_features)

    @classmethod
    def build(cls, demands, edges, capacity, M, vehicles, depot=0, ids=None):
        """`edges` maps (i, j) row positions to x values."""
        demands = np.asarray(demands, dtype=float)
        vf = np.column_stack([demands / capacity, np.full(len(demands), M / vehicles)])
        keys = sorted(edges)
        src = np.array([i for i, _ in keys], dtype=np.int64)
        dst = np.array([j for _, j in keys], dtype=np.int64)
        ef = np.array([[edges[k]] for k in keys], dtype=float).reshape(-1, 1)
        return cls(vf, src, dst, ef, depot, tuple(range(len(demands))) if ids is None else tuple(ids))

    @classmethod
    def from_graph(cls, graph, capacity, M, vehicles):
        return cls.build(graph.demands, graph.edges, capacity, M, vehicles, graph.depot)


def batch_graphs(graphs):
    """Disjoint union of FeaturedGraphs; returns (batched, row offsets)."""
    offsets = np.cumsum([0] + [g.n for g in graphs])
    vf = np.concatenate([g.vertex_features for g in graphs])
    src = np.concatenate([g.src + o for g, o in zip(graphs, offsets)])
    dst = np.concatenate([g.dst + o for g, o in zip(graphs, offsets)])
    ef = np.concatenate([g.edge_features for g in graphs]).reshape(-1, 1)
    return FeaturedGraph(vf, src, dst, ef, 0, tuple(range(len(vf)))), offsets


def forward(params, graph):
    """Differentiable forward pass; returns a Tensor of shape (n,)."""
    if graph.vertex_features.shape[1] != VERTEX_FEATURES or graph.edge_features.shape[1:] != (EDGE_FEATURES,):
        raise ShapeError(
            f"features {graph.vertex_features.shape}/{graph.edge_features.shape} do not match "
            f"({VERTEX_FEATURES}, {EDGE_FEATURES})"
        )
    n = graph.n
    src, dst = graph.src, graph.dst
    agg = nn.mean_aggregator(np.concatenate([src, dst]), n)
    h = params.enc_v(nn.Tensor(graph.vertex_features))
    e = params.enc_e(nn.Tensor(graph.edge_features))
    for f_e, f_v in zip(params.edge_mlps, params.vertex_mlps):
        hs, hd = nn.gather_rows(h, src), nn.gather_rows(h, dst)
        fwd = f_e(nn.concat([hs, hd, e]))
        rev = f_e(nn.concat([hd, hs, e]))
        e = nn.mul(nn.add(fwd, rev), 0.5)
        msg = nn.spmm(agg, nn.concat([e, e], axis=0))
        h = f_v(nn.concat([h, msg]))
    return nn.reshape(params.head(h), (-1,))


def predict(params, graph):
    """p_i for every vertex (depot included) as a numpy array."""
    with nn.no_grad():
        return forward(params, graph).data.copy()
