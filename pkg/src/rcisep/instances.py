"""CVRP instances: validation, CVRPLIB (EUC_2D) I/O and random generation."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import FormatError, ValidationError

_SECTIONS = ("NODE_COORD_SECTION", "DEMAND_SECTION", "DEPOT_SECTION")
_REQUIRED_KEYS = ("DIMENSION", "CAPACITY", "EDGE_WEIGHT_TYPE")
_FLEET_RE = re.compile(r"-k(\d+)\b")
_SCALE_RE = re.compile(r"cost_scale\s*=\s*([0-9.eE+-]+)")


def euclidean_costs(coords, scale=1.0):
    """Rounded (nearest integer) Euclidean distances, optionally scaled first."""
    xy = np.asarray(coords, dtype=float)
    diff = xy[:, None, :] - xy[None, :, :]
    dist = np.sqrt((diff**2).sum(axis=-1)) * scale
    return np.floor(dist + 0.5)


@dataclass(eq=False)
class CvrpInstance:
    """Depot at index 0; `costs` is derived from `coords` and `cost_scale`."""

    name: str
    coords: np.ndarray
    demands: np.ndarray
    capacity: int
    vehicles: int
    cost_scale: float = 1.0
    costs: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        self.coords = np.asarray(self.coords, dtype=float).reshape(-1, 2)
        self.demands = np.asarray(self.demands, dtype=np.int64)
        self.capacity = int(self.capacity)
        self.vehicles = int(self.vehicles)
        if self.costs is None:
            self.costs = euclidean_costs(self.coords, self.cost_scale)
        else:
            self.costs = np.asarray(self.costs, dtype=float)
        self.validate()

    @property
    def n_vertices(self):
        return len(self.demands)

    @property
    def n_customers(self):
        return len(self.demands) - 1

    @property
    def total_demand(self):
        return int(self.demands.sum())

    def validate(self):
        d = self.demands
        if len(self.coords) != len(d):
            raise ValidationError(f"{len(self.coords)} coordinates but {len(d)} demands")
        if len(d) < 2:
            raise ValidationError("instance needs a depot and at least one customer")
        if d[0] != 0:
            raise ValidationError(f"depot demand must be 0, got {d[0]}")
        if (d[1:] < 1).any():
            raise ValidationError("customer demands must be >= 1")
        if self.capacity < 1:
            raise ValidationError("capacity must be positive")
        if d.max() > self.capacity:
            raise ValidationError(f"demand {d.max()} exceeds capacity {self.capacity}")
        if self.vehicles < math.ceil(d.sum() / self.capacity):
            raise ValidationError(
                f"K={self.vehicles} vehicles cannot carry total demand {d.sum()} at Q={self.capacity}"
            )
        c = self.costs
        if c.shape != (len(d), len(d)):
            raise ValidationError(f"cost matrix shape {c.shape} does not match {len(d)} vertices")
        if not np.array_equal(c, c.T) or (np.diag(c) != 0).any() or (c < 0).any():
            raise ValidationError("costs must be symmetric, nonnegative, zero on the diagonal")

    def __eq__(self, other):
        if not isinstance(other, CvrpInstance):
            return NotImplemented
        return (
            self.name == other.name
            and self.capacity == other.capacity
            and self.vehicles == other.vehicles
            and self.cost_scale == other.cost_scale
            and np.array_equal(self.coords, other.coords)
            and np.array_equal(self.demands, other.demands)
            and np.array_equal(self.costs, other.costs)
        )


def k_of_set(subset, demands, capacity):
    """ceil(d(S) / Q): the vehicles a customer subset needs at minimum."""
    subset = list(subset)
    if not subset:
        raise ValidationError("k(S) is undefined for an empty subset")
    total = int(sum(int(demands[i]) for i in subset))
    return -(-total // int(capacity))


def _header_value(line):
    key, _, value = line.partition(":")
    return key.strip().upper(), value.strip()


def parse_cvrplib(text):
    """Parse a CVRPLIB EUC_2D file; the depot is moved to index 0."""
    header = {}
    sections = {name: [] for name in _SECTIONS}
    current = None
    for raw in text.splitlines():
        line = raw.strip()
        if not line:
            continue
        upper = line.upper()
        if upper == "EOF":
            break
        token = upper.split()[0].rstrip(":")
        if token in sections:
            current = token
            continue
        if current is not None and not re.match(r"^[A-Z_]+\s*:", upper):
            sections[current].append(line.split())
            continue
        current = None
        key, value = _header_value(line)
        header[key] = value

    for key in _REQUIRED_KEYS:
        if key not in header:
            raise FormatError(f"missing header key {key}")
    for name in _SECTIONS:
        if not sections[name]:
            raise FormatError(f"missing or empty {name}")
    if header["EDGE_WEIGHT_TYPE"].upper() != "EUC_2D":
        raise FormatError(f"unsupported EDGE_WEIGHT_TYPE {header['EDGE_WEIGHT_TYPE']}")

    dim = int(header["DIMENSION"])
    capacity = int(header["CAPACITY"])
    coords = {}
    for row in sections["NODE_COORD_SECTION"]:
        if len(row) < 3:
            raise FormatError(f"bad NODE_COORD_SECTION line {' '.join(row)!r}")
        coords[int(row[0])] = (float(row[1]), float(row[2]))
    demands = {}
    for row in sections["DEMAND_SECTION"]:
        if len(row) < 2:
            raise FormatError(f"bad DEMAND_SECTION line {' '.join(row)!r}")
        try:
            demands[int(row[0])] = int(row[1])
        except ValueError:
            raise ValueError(f"non-integer demand {row[1]!r} for node {row[0]}") from None
    depots = [int(tok) for row in sections["DEPOT_SECTION"] for tok in row if int(tok) >= 0]
    if len(depots) != 1:
        raise FormatError(f"DEPOT_SECTION must name exactly one depot, got {depots}")
    depot = depots[0]

    ids = sorted(coords)
    if len(ids) != dim or sorted(demands) != ids:
        raise FormatError(f"DIMENSION {dim} does not match the node sections")
    if demands[depot] != 0:
        raise ValidationError(f"depot {depot} has nonzero demand {demands[depot]}")
    order = [depot] + [i for i in ids if i != depot]

    name = header.get("NAME", "unnamed")
    scale = 1.0
    m = _SCALE_RE.search(header.get("COMMENT", ""))
    if m:
        scale = float(m.group(1))
    dem = [demands[i] for i in order]
    m = _FLEET_RE.search(name)
    vehicles = int(m.group(1)) if m else -(-sum(dem) // capacity)
    return CvrpInstance(
        name=name,
        coords=[coords[i] for i in order],
        demands=dem,
        capacity=capacity,
        vehicles=vehicles,
        cost_scale=scale,
    )


def read_cvrplib(path):
    return parse_cvrplib(Path(path).read_text())


def format_cvrplib(instance):
    lines = [f"NAME : {instance.name}"]
    if instance.cost_scale != 1.0:
        # non-standard scale travels in COMMENT, which TSPLIB readers ignore
        lines.append(f"COMMENT : cost_scale={instance.cost_scale!r}")
    lines += [
        "TYPE : CVRP",
        f"DIMENSION : {instance.n_vertices}",
        "EDGE_WEIGHT_TYPE : EUC_2D",
        f"CAPACITY : {instance.capacity}",
        "NODE_COORD_SECTION",
    ]
    lines += [f"{i + 1} {x!r} {y!r}" for i, (x, y) in enumerate(instance.coords.tolist())]
    lines.append("DEMAND_SECTION")
    lines += [f"{i + 1} {d}" for i, d in enumerate(instance.demands.tolist())]
    lines += ["DEPOT_SECTION", "1", "-1", "EOF"]
    return "\n".join(lines) + "\n"


def write_cvrplib(instance, path):
    Path(path).write_text(format_cvrplib(instance))


def generate_random(n, seed, name=None):
    """Uniform unit-square instance with demands in [1, 100] and integer
    costs from 1000x scaled distances.

    Capacity comes from a route-size factor r ~ U[5, 12]: Q = ceil(r * d(V_C) / n),
    and the fleet is the minimum K = ceil(d(V_C) / Q).
    """
    if n < 3:
        raise ValidationError(f"need at least 3 customers, got {n}")
    rng = np.random.default_rng(seed)
    coords = rng.uniform(0.0, 1.0, size=(n + 1, 2))
    demands = np.concatenate([[0], rng.integers(1, 101, size=n)])
    r = rng.uniform(5.0, 12.0)
    total = int(demands.sum())
    capacity = max(math.ceil(r * total / n), int(demands.max()))
    vehicles = -(-total // capacity)
    if name is None:
        name = f"random-n{n}-s{seed}-k{vehicles}"
    return CvrpInstance(
        name=name,
        coords=coords,
        demands=demands,
        capacity=capacity,
        vehicles=vehicles,
        cost_scale=1000.0,
    )
