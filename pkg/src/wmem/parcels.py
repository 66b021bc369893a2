#!/usr/bin/env python3
"""
Cortical parcellation of the source space into K connected parcels.

Seeds are spread by farthest-point sampling; parcels then grow over the
source adjacency graph, always extending the currently smallest parcel, so
every parcel stays connected and sizes stay balanced.
"""

from collections import deque
from dataclasses import dataclass
from typing import Any, Dict, List, Optional

import networkx as nx
import numpy as np
from loguru import logger

from ..errors import ConfigError, DegenerateError, DimensionError, TopologyError
from ..headmodel import SourceSpace


def adjacency_graph(space: SourceSpace) -> nx.Graph:
    graph = nx.Graph()
    graph.add_nodes_from(range(space.n_sources))
    for i, nbrs in enumerate(space.adjacency):
        graph.add_edges_from((i, j) for j in nbrs if j > i)
    return graph


@dataclass
class Parcellation:
    """
    Assignment of sources to K parcels.

    Attributes:
        assignment: (n_sources,) parcel id per source
        n_parcels: K
        seeds: Seed source of every parcel (empty when built from an assignment)
    """

    assignment: np.ndarray
    n_parcels: int
    seeds: Optional[List[int]] = None

    def __post_init__(self):
        self.assignment = np.asarray(self.assignment, dtype=int)
        self.n_parcels = int(self.n_parcels)
        if not 1 <= self.n_parcels <= self.assignment.size:
            raise ConfigError(f"K must be in [1, {self.assignment.size}], got {self.n_parcels}")
        if self.assignment.min() < 0 or self.assignment.max() >= self.n_parcels:
            raise DimensionError("parcel ids must lie in [0, K)")
        if np.unique(self.assignment).size != self.n_parcels:
            raise DimensionError("every parcel needs at least one source")

    @property
    def n_sources(self) -> int:
        return self.assignment.size

    @property
    def members(self) -> List[np.ndarray]:
        return [np.flatnonzero(self.assignment == k) for k in range(self.n_parcels)]

    @property
    def sizes(self) -> np.ndarray:
        return np.bincount(self.assignment, minlength=self.n_parcels)

    def is_connected(self, space: SourceSpace) -> bool:
        """Each parcel induces a connected subgraph of the source adjacency."""
        graph = adjacency_graph(space)
        return all(nx.is_connected(graph.subgraph(m.tolist())) for m in self.members)

    def to_dict(self) -> Dict[str, Any]:
        return {"assignment": self.assignment.tolist(), "n_parcels": self.n_parcels, "seeds": self.seeds}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Parcellation":
        return cls(np.asarray(data["assignment"]), data["n_parcels"], data.get("seeds"))

    @classmethod
    def single(cls, n_sources: int) -> "Parcellation":
        return cls(np.zeros(n_sources, dtype=int), 1, [0])


def farthest_point_seeds(positions: np.ndarray, k: int, first: int) -> List[int]:
    """Greedy farthest-point sampling (Euclidean), ties to the lowest index."""
    seeds = [first]
    dist = np.linalg.norm(positions - positions[first], axis=1)
    while len(seeds) < k:
        dist[seeds] = -1.0
        nxt = int(np.argmax(dist))
        seeds.append(nxt)
        dist = np.minimum(dist, np.linalg.norm(positions - positions[nxt], axis=1))
    return seeds


def parcellate(space: SourceSpace, K: int, seed: int = 0) -> Parcellation:
    """
    Seeded region-growing parcellation.

    Args:
        space: Source space with a connected adjacency graph
        K: Number of parcels (1 <= K <= n_sources)
        seed: Picks the first farthest-point seed

    Returns:
        Parcellation with connected parcels
    """
    n = space.n_sources
    if not 1 <= K <= n:
        raise ConfigError(f"n_parcels: K must be in [1, {n}], got {K}")
    graph = adjacency_graph(space)
    if n > 1 and not nx.is_connected(graph):
        raise TopologyError(
            f"source adjacency graph has {nx.number_connected_components(graph)} components; parcels cannot grow"
        )

    first = int(np.random.default_rng(seed).integers(n))
    seeds = farthest_point_seeds(space.positions, K, first)
    assignment = np.full(n, -1, dtype=int)
    frontiers = []
    sizes = np.zeros(K, dtype=int)
    for k, s in enumerate(seeds):
        assignment[s] = k
        sizes[k] = 1
        frontiers.append(deque(space.adjacency[s] if space.adjacency else []))

    remaining = n - K
    while remaining:
        growable = [k for k in range(K) if frontiers[k]]
        if not growable:
            raise TopologyError("region growing stalled before covering every source")
        k = min(growable, key=lambda c: (sizes[c], c))
        while frontiers[k] and assignment[frontiers[k][0]] >= 0:
            frontiers[k].popleft()
        if not frontiers[k]:
            continue
        node = frontiers[k].popleft()
        assignment[node] = k
        sizes[k] += 1
        remaining -= 1
        frontiers[k].extend(j for j in space.adjacency[node] if assignment[j] < 0)

    parc = Parcellation(assignment, K, seeds)
    median = float(np.median(parc.sizes))
    if parc.sizes.max() > 3 * median:
        raise DegenerateError(f"parcel sizes unbalanced: max {parc.sizes.max()} exceeds 3x the median {median:g}")
    logger.debug(f"Parcellated {n} sources into {K} parcels (sizes {parc.sizes.min()}..{parc.sizes.max()})")
    return parc
