"""K-means active-zone segmentation and detection rates."""

from .kmeans import KMeansResult, kmeans, kmeans_plus_plus
from .segmentation import (
    AFTER_WINDOW,
    BEFORE_WINDOW,
    TIMELINE_INSTANTS,
    ZoneComparison,
    ZoneSegmentation,
    compare_methods,
    detect_active_zones,
    format_percent,
    jaccard,
    timeline_windows,
)

__all__ = [
    "KMeansResult",
    "kmeans",
    "kmeans_plus_plus",
    "AFTER_WINDOW",
    "BEFORE_WINDOW",
    "TIMELINE_INSTANTS",
    "ZoneComparison",
    "ZoneSegmentation",
    "compare_methods",
    "detect_active_zones",
    "format_percent",
    "jaccard",
    "timeline_windows",
]
