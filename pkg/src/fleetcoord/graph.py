"""Proximity-based constraint topology over the fleet.

Vehicles are graph nodes; an edge couples every pair whose rear-axle points
are within the sensing radius ``d_perc``.  The graph is built from a snapshot
of true positions and then held fixed for one whole prediction horizon.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError, ScenarioError


@dataclass(frozen=True)
class ConstraintGraph:
    """Immutable proximity graph: sorted node ids, sorted unordered edges."""

    nodes: tuple[int, ...]
    edges: tuple[tuple[int, int], ...]
    d_perc: float
    d_safe: float
    _adjacency: dict = field(repr=False, compare=False, default_factory=dict)

    def __post_init__(self):
        adjacency = {v: set() for v in self.nodes}
        for i, j in self.edges:
            adjacency[i].add(j)
            adjacency[j].add(i)
        object.__setattr__(self, "_adjacency", adjacency)

    @property
    def num_vehicles(self) -> int:
        return len(self.nodes)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def degree(self, i: int) -> int:
        return len(self._adjacency[i])

    def edges_of(self, i: int) -> tuple[tuple[int, int], ...]:
        return tuple(e for e in self.edges if i in e)


def build_constraint_graph(states, d_perc: float, d_safe: float) -> ConstraintGraph:
    """Build the coupling graph from current vehicle positions.

    ``states`` is either a mapping ``{id: VehicleState}`` or a sequence of
    ``(id, VehicleState)`` pairs.  An edge (i, j) is present exactly when the
    Euclidean distance between the two rear-axle points is <= d_perc.
    """
    if d_safe <= 0 or d_perc <= 0:
        raise ParameterError("d_perc and d_safe must be positive")
    if d_perc < d_safe:
        raise ParameterError(f"d_perc ({d_perc}) must be >= d_safe ({d_safe})")

    if isinstance(states, dict):
        pairs = list(states.items())
    else:
        pairs = list(states)
    if not pairs:
        raise ScenarioError("need at least one vehicle to build a graph")
    ids = [i for i, _ in pairs]
    if len(set(ids)) != len(ids):
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        raise ScenarioError(f"duplicate vehicle id(s) {dupes}")

    ordered = sorted(pairs, key=lambda kv: kv[0])
    nodes = tuple(i for i, _ in ordered)
    pos = np.array([[s.rx, s.ry] for _, s in ordered])

    edges = []
    for a in range(len(nodes)):
        for b in range(a + 1, len(nodes)):
            if np.hypot(*(pos[a] - pos[b])) <= d_perc:
                edges.append((nodes[a], nodes[b]))
    return ConstraintGraph(nodes=nodes, edges=tuple(edges), d_perc=d_perc, d_safe=d_safe)


def neighbors(graph: ConstraintGraph, i: int) -> set[int]:
    """All vehicles sharing a coupling edge with vehicle ``i``."""
    if i not in graph._adjacency:
        raise KeyError(f"unknown vehicle id {i}")
    return set(graph._adjacency[i])
