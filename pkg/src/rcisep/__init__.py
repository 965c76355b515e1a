"""Cutting-plane lower bounds for the CVRP with exact, heuristic and learned
separation of rounded capacity inequalities."""

from .errors import (
    FormatError,
    LpInfeasibleError,
    SeparationTimeout,
    ShapeError,
    StateError,
    ValidationError,
)
from .graph import WeightedGraph
from .instances import CvrpInstance, generate_random, k_of_set, parse_cvrplib, read_cvrplib, write_cvrplib

__version__ = "0.1.0"

__all__ = [
    "CvrpInstance",
    "FormatError",
    "LpInfeasibleError",
    "SeparationTimeout",
    "ShapeError",
    "StateError",
    "ValidationError",
    "WeightedGraph",
    "generate_random",
    "k_of_set",
    "parse_cvrplib",
    "read_cvrplib",
    "write_cvrplib",
]
