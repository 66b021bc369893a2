#!/usr/bin/env python3
"""
Scouts: regions of interest on the source space and their SVD time courses.
"""

from dataclasses import dataclass, replace
from typing import Any, Dict, List, Optional, Tuple

import networkx as nx
import numpy as np
from loguru import logger

from ..errors import ConfigError, DegenerateError, DimensionError, PlacementError
from ..headmodel import SourceSpace
from ..inverse_linear import SourceEstimate
from ..wmem import adjacency_graph


HEMISPHERES = ("left", "right")


@dataclass
class Scout:
    """
    Region of interest.

    Attributes:
        name: Label such as 'L1' or 'R3'
        members: Source indices (nonempty, unique, sorted)
        hemisphere: 'left' or 'right'
        center: Source the scout was grown from
        series: Extracted time course (None until extraction)
        captured_variance: sigma_1^2 / sum sigma^2 of the extraction
    """

    name: str
    members: List[int]
    hemisphere: str
    center: int
    series: Optional[np.ndarray] = None
    captured_variance: Optional[float] = None

    def __post_init__(self):
        self.members = sorted(int(m) for m in self.members)
        if not self.members or len(set(self.members)) != len(self.members):
            raise ConfigError(f"scout {self.name}: members must be nonempty and unique")
        if self.hemisphere not in HEMISPHERES:
            raise ConfigError(f"scout {self.name}: hemisphere must be one of {HEMISPHERES}")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "members": self.members,
            "hemisphere": self.hemisphere,
            "center": self.center,
            "captured_variance": self.captured_variance,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Scout":
        return cls(data["name"], data["members"], data["hemisphere"], int(data["center"]),
                   captured_variance=data.get("captured_variance"))


# =============================================================================
# Placement
# =============================================================================

def local_maxima(feature: np.ndarray, space: SourceSpace) -> np.ndarray:
    """Sources with positive feature not exceeded by any neighbour."""
    keep = []
    for i, nbrs in enumerate(space.adjacency):
        if feature[i] > 0 and all(feature[i] >= feature[j] for j in nbrs):
            keep.append(i)
    return np.array(keep, dtype=int)


def nearest_sources(graph: nx.Graph, space: SourceSpace, center: int, size: int) -> List[int]:
    """``size`` sources closest to ``center`` by hop count, then distance, then index."""
    hops = nx.single_source_shortest_path_length(graph, center)
    dist = np.linalg.norm(space.positions - space.positions[center], axis=1)
    ranked = sorted(hops, key=lambda s: (hops[s], dist[s], s))
    return sorted(ranked[:size])


def auto_place_scouts(est: SourceEstimate, space: SourceSpace, n_per_hemisphere: int = 5,
                      patch_radius: int = 1, min_separation: Optional[int] = None,
                      window: Optional[Tuple[float, float]] = None,
                      candidates: str = "maxima") -> List[Scout]:
    """
    Place scouts on the strongest activity of each hemisphere.

    Sources are ranked by time-integrated |activity| (ties to the lower
    index) and accepted greedily while at least ``min_separation`` hops from
    every scout already placed. Each scout is its centre plus the sources
    within ``patch_radius`` hops.

    Args:
        est: Source estimate
        space: Source space (hemisphere by sign of x)
        n_per_hemisphere: Scouts per hemisphere
        patch_radius: Hop radius of each patch
        min_separation: Minimum hop distance between centres (default 2 * patch_radius + 1, disjoint patches)
        window: Optional (start_s, end_s) integration window
        candidates: 'maxima' (local maxima only) or 'ranked' (every source, maxima first)

    Returns:
        Scouts named L1..Ln, R1..Rn

    Raises:
        PlacementError: fewer candidates than requested in a hemisphere
    """
    if est.n_sources != space.n_sources:
        raise DimensionError("estimate and source space sizes differ")
    if candidates not in ("maxima", "ranked"):
        raise ConfigError(f"scouts.candidates: '{candidates}' (valid: maxima, ranked)")
    if n_per_hemisphere < 1 or patch_radius < 0:
        raise ConfigError("scouts: n_per_hemisphere must be >= 1 and patch_radius >= 0")
    min_separation = 2 * patch_radius + 1 if min_separation is None else min_separation

    feature = est.integrated_abs(*window) if window else est.integrated_abs()
    if not np.any(feature > 0):
        raise DegenerateError("cannot place scouts on an all-zero estimate")

    graph = adjacency_graph(space)
    maxima = set(local_maxima(feature, space).tolist())
    hemis = space.hemispheres
    scouts: List[Scout] = []
    for hemi in HEMISPHERES:
        pool = [i for i in range(space.n_sources) if hemis[i] == hemi and feature[i] > 0]
        if candidates == "maxima":
            pool = [i for i in pool if i in maxima]
        pool.sort(key=lambda i: (i not in maxima, -feature[i], i))
        centres: List[int] = []
        blocked: set = set()
        for i in pool:
            if len(centres) == n_per_hemisphere:
                break
            if i in blocked:
                continue
            centres.append(i)
            if min_separation > 0:
                near = nx.single_source_shortest_path_length(graph, i, cutoff=min_separation - 1)
                blocked.update(near)
        if len(centres) < n_per_hemisphere:
            raise PlacementError(
                f"{hemi} hemisphere: found {len(centres)} separated {'maxima' if candidates == 'maxima' else 'sources'}, "
                f"{n_per_hemisphere} requested",
                found=len(centres), requested=n_per_hemisphere,
            )
        prefix = hemi[0].upper()
        for rank, c in enumerate(centres, start=1):
            patch = nx.single_source_shortest_path_length(graph, c, cutoff=patch_radius)
            scouts.append(Scout(f"{prefix}{rank}", list(patch), hemi, c))
    logger.debug(f"Placed scouts at {[s.center for s in scouts]}")
    return scouts


# =============================================================================
# Extraction
# =============================================================================

def extract_scout_series(est: SourceEstimate, scout: Scout,
                         window: Optional[Tuple[float, float]] = None) -> Scout:
    """
    First SVD component of the members x time submatrix.

    series = u1^T X (= sigma_1 v1), signed to correlate nonnegatively with
    the member mean.

    Returns:
        Copy of ``scout`` with ``series`` and ``captured_variance`` set
    """
    if max(scout.members) >= est.n_sources or min(scout.members) < 0:
        raise DimensionError(f"scout {scout.name} has members outside the estimate")
    values = est.window(*window) if window else est.collapse().values
    X = values[scout.members]
    if not np.any(X):
        raise DegenerateError(f"scout {scout.name}: all member time courses are zero")
    U, s, Vt = np.linalg.svd(X, full_matrices=False)
    series = s[0] * Vt[0]
    mean = X.mean(axis=0)
    if np.any(mean != mean[0]):
        agreement = (series - series.mean()) @ (mean - mean.mean())
    else:
        agreement = series @ mean
    if agreement < 0:
        series = -series
    captured = float(s[0] ** 2 / np.sum(s ** 2))
    return replace(scout, series=series, captured_variance=captured)
