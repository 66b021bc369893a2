#!/usr/bin/env python3
"""
Active-zone segmentation of source maps and method comparison.

Each source's feature is its time-integrated |activity| over a capture
window; k-means splits the features and every cluster whose centroid exceeds
the grand mean is flagged active. The detection rate is the active fraction.
"""

from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from loguru import logger

from ..errors import ComparisonError, DegenerateError
from ..inverse_linear import SourceEstimate
from ..utils import FLOAT_FORMAT, parallel_map
from .kmeans import kmeans


BEFORE_WINDOW = (-0.130, -0.110)
AFTER_WINDOW = (0.023, 0.043)
TIMELINE_INSTANTS = (0.12, 0.22, 0.33, 0.5)

Window = Tuple[float, float]


@dataclass
class ZoneSegmentation:
    """
    k-means partition of one activity map.

    Attributes:
        labels: Cluster id per source
        k: Cluster count
        centroids: (k,) centroid feature values
        active_cluster_ids: Clusters flagged active
        feature: Per-source time-integrated |activity|
        window: Capture window (s)
    """

    labels: np.ndarray
    k: int
    centroids: np.ndarray
    active_cluster_ids: List[int]
    feature: np.ndarray
    window: Window

    @property
    def n_sources(self) -> int:
        return self.labels.size

    @property
    def active_mask(self) -> np.ndarray:
        return np.isin(self.labels, self.active_cluster_ids)

    @property
    def active_sources(self) -> np.ndarray:
        return np.flatnonzero(self.active_mask)

    @property
    def active_count(self) -> int:
        return int(self.active_mask.sum())

    @property
    def detection_rate(self) -> float:
        return self.active_count / self.n_sources


def format_percent(rate: float) -> str:
    """0.0171 -> '1.71%'"""
    return f"{100.0 * rate:.2f}%"


def timeline_windows(instants: Sequence[float] = TIMELINE_INSTANTS, half_width: float = 0.010) -> Dict[str, Window]:
    """Integration windows of +/- half_width around each capture instant."""
    return {f"t={t:g}s": (t - half_width, t + half_width) for t in instants}


def detect_active_zones(est: SourceEstimate, window: Window = AFTER_WINDOW, k: int = 3,
                        seed: int = 0, max_iter: int = 100) -> ZoneSegmentation:
    """
    Segment one activity map into active / inactive zones.

    Args:
        est: Source estimate
        window: (start_s, end_s) capture window relative to the pulse
        k: k-means cluster count
        seed: k-means seed

    Returns:
        ZoneSegmentation

    Raises:
        DegenerateError: features are all zero or all equal
    """
    feature = est.integrated_abs(*window)
    if not np.any(feature):
        raise DegenerateError(f"{est.method.display_name}: estimate is zero over {window}")
    if np.ptp(feature) == 0:
        raise DegenerateError(f"{est.method.display_name}: every source has the same activity over {window}")
    scaled = feature / feature.max()
    result = kmeans(scaled, k, seed, max_iter)
    centroids = result.centroids[:, 0] * feature.max()
    grand_mean = float(feature.mean())
    active = [c for c in range(k) if centroids[c] > grand_mean and np.any(result.labels == c)]
    return ZoneSegmentation(result.labels, k, centroids, active, feature, tuple(window))


def jaccard(a: np.ndarray, b: np.ndarray) -> float:
    """|A & B| / |A | B|, 1 for two empty sets."""
    sa, sb = set(np.asarray(a).tolist()), set(np.asarray(b).tolist())
    union = sa | sb
    return 1.0 if not union else len(sa & sb) / len(union)


# =============================================================================
# Comparison
# =============================================================================

@dataclass
class ZoneComparison:
    """Per method x window segmentations and cross-method overlaps."""

    segmentations: Dict[str, Dict[str, ZoneSegmentation]]
    windows: Dict[str, Window]
    overlaps: Dict[str, pd.DataFrame] = field(default_factory=dict)

    @property
    def methods(self) -> List[str]:
        return list(self.segmentations)

    def to_dataframe(self) -> pd.DataFrame:
        rows = []
        for method, by_window in self.segmentations.items():
            for name, seg in by_window.items():
                rows.append({
                    "method": method,
                    "window": name,
                    "start_s": seg.window[0],
                    "end_s": seg.window[1],
                    "active_sources": seg.active_count,
                    "n_sources": seg.n_sources,
                    "detection_rate": seg.detection_rate,
                })
        return pd.DataFrame(rows)

    def format_table(self) -> str:
        """Aligned text table: one row per method, one percentage column per window."""
        header = ["Method"] + list(self.windows)
        body = [[m] + [format_percent(self.segmentations[m][w].detection_rate) for w in self.windows]
                for m in self.methods]
        widths = [max(len(r[i]) for r in [header] + body) for i in range(len(header))]
        lines = ["  ".join(cell.ljust(widths[i]) if i == 0 else cell.rjust(widths[i])
                           for i, cell in enumerate(row)) for row in [header] + body]
        rule = "-" * len(lines[0])
        return "\n".join([lines[0], rule] + lines[1:]) + "\n"

    def save(self, out_dir: Path, prefix: str = "zones") -> List[Path]:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        paths = []
        table = out_dir / f"{prefix}.csv"
        self.to_dataframe().to_csv(table, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
        paths.append(table)
        for name, frame in self.overlaps.items():
            path = out_dir / f"{prefix}_overlap_{_slug(name)}.csv"
            frame.to_csv(path, float_format=FLOAT_FORMAT, lineterminator="\n")
            paths.append(path)
        text = out_dir / f"{prefix}.txt"
        text.write_text(self.format_table())
        paths.append(text)
        return paths


def _slug(name: str) -> str:
    return "".join(ch if ch.isalnum() else "_" for ch in name).strip("_")


def compare_methods(estimates: Mapping[str, SourceEstimate], windows: Optional[Mapping[str, Window]] = None,
                    k: int = 3, seed: int = 0, n_jobs: int = 1,
                    max_iter: int = 100) -> ZoneComparison:
    """
    Detection rates per method and window, plus Jaccard overlaps of the active sets.

    Args:
        estimates: Method name -> SourceEstimate (shared geometry and timing)
        windows: Window name -> (start_s, end_s); defaults to before/after the pulse
        k: k-means cluster count
        seed: k-means seed
        n_jobs: Worker threads (one task per method x window)
        max_iter: k-means iteration cap

    Returns:
        ZoneComparison
    """
    if not estimates:
        raise ComparisonError("no estimates to compare")
    windows = dict(windows or {"before": BEFORE_WINDOW, "after": AFTER_WINDOW})
    names = list(estimates)
    reference = estimates[names[0]]
    for name in names[1:]:
        if not reference.same_layout(estimates[name]):
            raise ComparisonError(f"estimate '{name}' does not share geometry/timing with '{names[0]}'")

    tasks = [(m, w) for m in names for w in windows]
    results = parallel_map(lambda t: detect_active_zones(estimates[t[0]], windows[t[1]], k, seed, max_iter),
                           tasks, n_jobs)
    segmentations: Dict[str, Dict[str, ZoneSegmentation]] = {m: {} for m in names}
    for (m, w), seg in zip(tasks, results):
        segmentations[m][w] = seg

    overlaps = {}
    for w in windows:
        frame = pd.DataFrame(np.eye(len(names)), index=names, columns=names)
        for a, b in combinations(names, 2):
            value = jaccard(segmentations[a][w].active_sources, segmentations[b][w].active_sources)
            frame.loc[a, b] = frame.loc[b, a] = value
        overlaps[w] = frame
    logger.debug(f"Compared {len(names)} methods over {len(windows)} windows")
    return ZoneComparison(segmentations, windows, overlaps)
