#!/usr/bin/env python3
"""
Correlation graphs between scout time courses and the Kansky indices

    beta  = e / v
    gamma = 2e / (v (v - 1))
    alpha = 2 (e - v + p) / ((v - 1)(v - 2))

with e edges, v vertices and p connected components.
"""

from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np
from loguru import logger

from ..errors import ConfigError, DimensionError, DomainError, UndefinedCorrelationError
from ..headmodel import SourceSpace
from ..inverse_linear import SourceEstimate
from ..utils import parallel_map, write_json, write_matrix_csv
from ..wmem import adjacency_graph
from .scouts import Scout, nearest_sources


DEFAULT_THRESHOLD = 0.7
DEFAULT_MAX_LAG_S = 0.1
TIE_TOLERANCE = 1e-9


# =============================================================================
# Cross-correlation
# =============================================================================

def _pearson(a: np.ndarray, b: np.ndarray) -> float:
    a = a - a.mean()
    b = b - b.mean()
    denom = np.sqrt((a @ a) * (b @ b))
    return float(a @ b / denom) if denom > 0 else 0.0


def cross_correlation(x: np.ndarray, y: np.ndarray, sample_rate: float,
                      max_lag_s: float = DEFAULT_MAX_LAG_S) -> Tuple[float, int]:
    """
    Peak absolute Pearson correlation between x[t] and y[t + lag].

    Args:
        x, y: Equal-length series
        sample_rate: Hz, converts ``max_lag_s`` to samples
        max_lag_s: Largest lag examined in either direction

    Returns:
        (peak |r| in [0, 1], lag in samples); ties go to the smallest |lag|,
        then to the positive lag

    Raises:
        UndefinedCorrelationError: either series has zero variance
    """
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.size != y.size:
        raise DimensionError(f"series lengths differ ({x.size} vs {y.size})")
    max_lag = int(round(max_lag_s * sample_rate))
    if max_lag < 0 or x.size < max(2 * max_lag, 2):
        raise DimensionError(f"series of {x.size} samples is too short for lags up to {max_lag}")
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        raise UndefinedCorrelationError("correlation is undefined for a zero-variance series")

    best_value, best_lag = -1.0, 0
    for lag in sorted(range(-max_lag, max_lag + 1), key=lambda L: (abs(L), -L)):
        if lag >= 0:
            r = abs(_pearson(x[:x.size - lag], y[lag:]))
        else:
            r = abs(_pearson(x[-lag:], y[:y.size + lag]))
        if r > best_value + TIE_TOLERANCE:
            best_value, best_lag = r, lag
    return min(best_value, 1.0), best_lag


# =============================================================================
# Graphs
# =============================================================================

@dataclass
class KanskyIndices:
    """Kansky connectivity indices."""
    beta: float
    gamma: float
    alpha: float

    def to_dict(self) -> Dict[str, float]:
        return {"beta": self.beta, "gamma": self.gamma, "alpha": self.alpha}


@dataclass
class ConnectivityGraph:
    """
    Undirected correlation graph.

    Attributes:
        labels: Vertex names
        correlations: (v, v) peak |r| matrix (NaN where undefined, 1 on the diagonal)
        lags: (v, v) lag in samples at the peak
        threshold: Edge-inclusion threshold on peak |r|
        sample_rate: Hz of the underlying series
    """

    labels: List[str]
    correlations: np.ndarray
    lags: np.ndarray
    threshold: float
    sample_rate: float
    _graph: Optional[nx.Graph] = field(default=None, init=False, repr=False)

    @property
    def graph(self) -> nx.Graph:
        if self._graph is None:
            g = nx.Graph()
            g.add_nodes_from(range(len(self.labels)))
            for i, j in combinations(range(len(self.labels)), 2):
                r = self.correlations[i, j]
                if np.isfinite(r) and r >= self.threshold:
                    g.add_edge(i, j, weight=float(r), lag=int(self.lags[i, j]))
            self._graph = g
        return self._graph

    @property
    def n_vertices(self) -> int:
        return len(self.labels)

    @property
    def n_edges(self) -> int:
        return self.graph.number_of_edges()

    @property
    def subgraph_count(self) -> int:
        return nx.number_connected_components(self.graph) if self.n_vertices else 0

    @property
    def edges(self) -> List[Tuple[int, int]]:
        return sorted(tuple(sorted(e)) for e in self.graph.edges())

    def with_threshold(self, threshold: float) -> "ConnectivityGraph":
        return ConnectivityGraph(self.labels, self.correlations, self.lags, threshold, self.sample_rate)

    def adjacency(self) -> np.ndarray:
        """Weighted adjacency (peak |r| on edges, 0 elsewhere)."""
        A = np.zeros((self.n_vertices, self.n_vertices))
        for i, j in self.edges:
            A[i, j] = A[j, i] = self.correlations[i, j]
        return A

    def to_dict(self) -> Dict[str, Any]:
        data = {
            "vertices": self.labels,
            "edges": [
                {"source": self.labels[i], "target": self.labels[j],
                 "weight": float(self.correlations[i, j]), "lag_s": float(self.lags[i, j] / self.sample_rate)}
                for i, j in self.edges
            ],
            "threshold": self.threshold,
            "e": self.n_edges,
            "v": self.n_vertices,
            "p": self.subgraph_count,
        }
        try:
            data["indices"] = kansky_indices(self).to_dict()
        except DomainError:
            data["indices"] = None
        return data

    def save(self, stem: Path, extra: Optional[Dict[str, Any]] = None) -> Tuple[Path, Path]:
        """Write ``<stem>.json`` (graph + indices) and ``<stem>_adjacency.csv``."""
        stem = Path(stem)
        csv_path = write_matrix_csv(stem.parent / f"{stem.name}_adjacency.csv", self.adjacency(),
                                    row_labels=self.labels, col_labels=self.labels)
        data = self.to_dict()
        data.update(extra or {})
        return write_json(stem.with_suffix(".json"), data), csv_path


def build_graph_from_series(series: Sequence[np.ndarray], labels: Sequence[str], sample_rate: float,
                            threshold: float = DEFAULT_THRESHOLD, max_lag_s: float = DEFAULT_MAX_LAG_S,
                            on_undefined: str = "raise", n_jobs: int = 1) -> ConnectivityGraph:
    """Pairwise peak correlations over the sorted pair list, then thresholding."""
    v = len(series)
    if v < 2:
        raise ConfigError(f"a graph needs at least 2 series, got {v}")
    if threshold < 0:
        raise ConfigError(f"connectivity.threshold: must be >= 0, got {threshold}")
    if on_undefined not in ("raise", "skip"):
        raise ConfigError(f"on_undefined: '{on_undefined}' (valid: raise, skip)")
    pairs = list(combinations(range(v), 2))

    def pair_peak(pair: Tuple[int, int]) -> Tuple[float, int]:
        i, j = pair
        try:
            return cross_correlation(series[i], series[j], sample_rate, max_lag_s)
        except UndefinedCorrelationError:
            if on_undefined == "raise":
                raise
            logger.warning(f"Correlation {labels[i]}-{labels[j]} undefined (zero variance); no edge")
            return float("nan"), 0

    peaks = parallel_map(pair_peak, pairs, n_jobs=n_jobs)
    corr = np.eye(v)
    lags = np.zeros((v, v), dtype=int)
    for (i, j), (r, lag) in zip(pairs, peaks):
        corr[i, j] = corr[j, i] = r
        lags[i, j], lags[j, i] = lag, -lag
    return ConnectivityGraph(list(labels), corr, lags, threshold, sample_rate)


def build_graph(scouts: Sequence[Scout], sample_rate: float, threshold: float = DEFAULT_THRESHOLD,
                max_lag_s: float = DEFAULT_MAX_LAG_S, on_undefined: str = "raise",
                n_jobs: int = 1) -> ConnectivityGraph:
    """
    Inter-scout correlation graph: an edge joins every pair whose peak |r| >= threshold.

    Args:
        scouts: Scouts with extracted series (at least 2)
        sample_rate: Hz
        threshold: Edge-inclusion threshold
        max_lag_s: Lag window of the cross-correlation
        on_undefined: 'raise' or 'skip' pairs with a zero-variance series
        n_jobs: Worker threads for the pairwise correlations

    Returns:
        ConnectivityGraph
    """
    missing = [s.name for s in scouts if s.series is None]
    if missing:
        raise ConfigError(f"scouts {missing} have no extracted series")
    return build_graph_from_series([s.series for s in scouts], [s.name for s in scouts], sample_rate,
                                   threshold, max_lag_s, on_undefined, n_jobs)


def intra_zone_graph(est: SourceEstimate, space: SourceSpace, scout: Scout, n_vertices: int = 15,
                     threshold: float = DEFAULT_THRESHOLD, max_lag_s: float = DEFAULT_MAX_LAG_S,
                     window: Optional[Tuple[float, float]] = None, n_jobs: int = 1) -> ConnectivityGraph:
    """Graph whose vertices are the ``n_vertices`` sources nearest a scout's centre."""
    if n_vertices < 2 or n_vertices > space.n_sources:
        raise ConfigError(f"intra-zone vertex count must be in [2, {space.n_sources}], got {n_vertices}")
    members = nearest_sources(adjacency_graph(space), space, scout.center, n_vertices)
    values = est.window(*window) if window else est.collapse().values
    return build_graph_from_series([values[m] for m in members], [f"{scout.name}:{m}" for m in members],
                                   est.sample_rate, threshold, max_lag_s, on_undefined="skip", n_jobs=n_jobs)


# =============================================================================
# Kansky indices
# =============================================================================

def kansky_from_counts(e: int, v: int, p: int) -> KanskyIndices:
    """Kansky indices from edge, vertex and component counts."""
    if v < 1:
        raise DomainError(f"beta needs v >= 1, got v={v}")
    if v < 2:
        raise DomainError(f"gamma needs v >= 2, got v={v}")
    if v < 3:
        raise DomainError(f"alpha needs v >= 3, got v={v}")
    if e < 0 or e > v * (v - 1) // 2:
        raise DomainError(f"e={e} is impossible for a simple graph on {v} vertices")
    return KanskyIndices(
        beta=e / v,
        gamma=2.0 * e / (v * (v - 1)),
        alpha=2.0 * (e - v + p) / ((v - 1) * (v - 2)),
    )


def kansky_indices(g: ConnectivityGraph) -> KanskyIndices:
    """Kansky indices of a graph (p from its connected components)."""
    return kansky_from_counts(g.n_edges, g.n_vertices, g.subgraph_count)
