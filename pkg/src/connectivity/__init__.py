"""Scouts, correlation graphs and Kansky connectivity indices."""

from .graph import (
    DEFAULT_MAX_LAG_S,
    DEFAULT_THRESHOLD,
    ConnectivityGraph,
    KanskyIndices,
    build_graph,
    build_graph_from_series,
    cross_correlation,
    intra_zone_graph,
    kansky_from_counts,
    kansky_indices,
)
from .scouts import Scout, auto_place_scouts, extract_scout_series, local_maxima, nearest_sources

__all__ = [
    "DEFAULT_MAX_LAG_S",
    "DEFAULT_THRESHOLD",
    "ConnectivityGraph",
    "KanskyIndices",
    "build_graph",
    "build_graph_from_series",
    "cross_correlation",
    "intra_zone_graph",
    "kansky_from_counts",
    "kansky_indices",
    "Scout",
    "auto_place_scouts",
    "extract_scout_series",
    "local_maxima",
    "nearest_sources",
]
