#!/usr/bin/env python3
"""
Sensor and source geometry for the spherical head model.

SensorArray - electrodes on the outer shell
SourceSpace - dipole positions inside the innermost shell, with orientations and a
              neighbour graph used for parcellation and scout growing
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from scipy.spatial import ConvexHull

from ..errors import GeometryError


# =============================================================================
# Enums
# =============================================================================

class Reference(Enum):
    """EEG reference scheme"""
    AVERAGE = "average"
    ELECTRODE = "electrode"


class OrientationMode(Enum):
    """Source orientation handling"""
    FIXED = "fixed"
    FREE = "free"


# =============================================================================
# Sampling helpers
# =============================================================================

GOLDEN_ANGLE = np.pi * (3.0 - np.sqrt(5.0))


def fibonacci_sphere(n_points: int, z_min: float = -1.0) -> np.ndarray:
    """
    Quasi-uniform unit vectors on the sphere cap z >= z_min (golden-spiral sampling).

    Args:
        n_points: Number of points
        z_min: Lowest z coordinate of the cap (-1 covers the whole sphere)

    Returns:
        (n_points, 3) array of unit vectors
    """
    i = np.arange(n_points, dtype=float)
    z = 1.0 - (i + 0.5) * (1.0 - z_min) / n_points
    rho = np.sqrt(np.clip(1.0 - z * z, 0.0, None))
    theta = GOLDEN_ANGLE * i
    return np.column_stack([rho * np.cos(theta), rho * np.sin(theta), z])


def icosphere(subdivisions: int) -> np.ndarray:
    """Unit vectors of a subdivided icosahedron (10 * 4**s + 2 vertices)."""
    t = (1.0 + np.sqrt(5.0)) / 2.0
    verts = [
        (-1, t, 0), (1, t, 0), (-1, -t, 0), (1, -t, 0),
        (0, -1, t), (0, 1, t), (0, -1, -t), (0, 1, -t),
        (t, 0, -1), (t, 0, 1), (-t, 0, -1), (-t, 0, 1),
    ]
    faces = [
        (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
        (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
        (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
        (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
    ]
    points = [np.array(v, dtype=float) / np.linalg.norm(v) for v in verts]
    for _ in range(subdivisions):
        midpoint_cache: Dict[Tuple[int, int], int] = {}
        new_faces = []

        def midpoint(a: int, b: int) -> int:
            key = (min(a, b), max(a, b))
            if key not in midpoint_cache:
                m = points[a] + points[b]
                points.append(m / np.linalg.norm(m))
                midpoint_cache[key] = len(points) - 1
            return midpoint_cache[key]

        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = new_faces
    return np.array(points)


def hull_adjacency(unit_vectors: np.ndarray) -> List[List[int]]:
    """Neighbour lists from the convex-hull triangulation of points on a sphere."""
    hull = ConvexHull(unit_vectors)
    neighbours: List[set] = [set() for _ in range(len(unit_vectors))]
    for simplex in hull.simplices:
        for a in simplex:
            for b in simplex:
                if a != b:
                    neighbours[int(a)].add(int(b))
    return [sorted(n) for n in neighbours]


# =============================================================================
# SensorArray
# =============================================================================

@dataclass
class SensorArray:
    """
    EEG electrodes on the outer shell of the head model.

    Attributes:
        positions: (n_sensors, 3) coordinates in meters
        labels: Unique electrode names
        radius: Outer shell radius every electrode sits on (meters)
        reference: Reference scheme applied to the lead field
        reference_index: Electrode index used when reference is ELECTRODE
    """

    positions: np.ndarray
    labels: List[str]
    radius: float
    reference: Reference = Reference.AVERAGE
    reference_index: int = 0

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float)
        self.reference = Reference(self.reference)
        self.labels = list(self.labels)
        self.validate()

    def validate(self):
        """Check the sensor-array invariants."""
        if self.positions.ndim != 2 or self.positions.shape[1] != 3:
            raise GeometryError(f"sensor positions must be (n, 3), got {self.positions.shape}")
        if self.n_sensors < 2:
            raise GeometryError("at least 2 sensors are required")
        if len(self.labels) != self.n_sensors or len(set(self.labels)) != self.n_sensors:
            raise GeometryError("sensor labels must be unique, one per sensor")
        norms = np.linalg.norm(self.positions, axis=1)
        if np.any(np.abs(norms - self.radius) > 1e-9 * self.radius):
            worst = int(np.argmax(np.abs(norms - self.radius)))
            raise GeometryError(
                f"sensor {self.labels[worst]} lies at {norms[worst]:.6g} m, not on the outer shell ({self.radius} m)"
            )
        if self.reference is Reference.ELECTRODE and not 0 <= self.reference_index < self.n_sensors:
            raise GeometryError(f"reference_index {self.reference_index} out of range")

    @property
    def n_sensors(self) -> int:
        return self.positions.shape[0]

    @property
    def directions(self) -> np.ndarray:
        return self.positions / self.radius

    @classmethod
    def cap(cls, n_sensors: int = 64, radius: float = 0.09, z_min: float = -0.3,
            reference: str = "average", reference_index: int = 0) -> "SensorArray":
        """Electrode cap covering the sphere above z = z_min * radius."""
        directions = fibonacci_sphere(n_sensors, z_min=z_min)
        labels = [f"E{i + 1:03d}" for i in range(n_sensors)]
        return cls(directions * radius, labels, radius, Reference(reference), reference_index)

    def apply_reference(self, data: np.ndarray) -> np.ndarray:
        """Re-reference sensor-space data (rows are sensors)."""
        if self.reference is Reference.AVERAGE:
            return data - data.mean(axis=0, keepdims=True)
        return data - data[self.reference_index:self.reference_index + 1]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "positions": self.positions.tolist(),
            "labels": self.labels,
            "radius": self.radius,
            "reference": self.reference.value,
            "reference_index": self.reference_index,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "SensorArray":
        return cls(
            positions=np.asarray(data["positions"], dtype=float),
            labels=data["labels"],
            radius=float(data["radius"]),
            reference=Reference(data.get("reference", "average")),
            reference_index=int(data.get("reference_index", 0)),
        )


# =============================================================================
# SourceSpace
# =============================================================================

@dataclass
class SourceSpace:
    """
    Dipole sources inside the innermost shell.

    Attributes:
        positions: (n_sources, 3) coordinates in meters
        orientations: (n_sources, 3) unit normals for fixed mode, or None for free
        adjacency: Symmetric neighbour lists over sources
    """

    positions: np.ndarray
    orientations: Optional[np.ndarray]
    adjacency: List[List[int]] = field(default_factory=list)

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float)
        if self.orientations is not None:
            self.orientations = np.asarray(self.orientations, dtype=float)
        self.adjacency = [sorted(int(j) for j in nbrs) for nbrs in self.adjacency]
        self.validate()

    def validate(self, inner_radius: Optional[float] = None):
        """Check source-space invariants; positions are checked against ``inner_radius`` if given."""
        if self.positions.ndim != 2 or self.positions.shape[1] != 3:
            raise GeometryError(f"source positions must be (n, 3), got {self.positions.shape}")
        n = self.n_sources
        if self.orientations is not None:
            if self.orientations.shape != (n, 3):
                raise GeometryError("fixed orientations must be (n_sources, 3)")
            norms = np.linalg.norm(self.orientations, axis=1)
            if np.any(np.abs(norms - 1.0) > 1e-9):
                raise GeometryError("fixed orientations must have unit norm")
        if self.adjacency:
            if len(self.adjacency) != n:
                raise GeometryError("adjacency must list neighbours for every source")
            for i, nbrs in enumerate(self.adjacency):
                for j in nbrs:
                    if not 0 <= j < n or j == i or i not in self.adjacency[j]:
                        raise GeometryError(f"adjacency is not symmetric at sources {i}-{j}")
        if inner_radius is not None:
            norms = np.linalg.norm(self.positions, axis=1)
            if np.any(norms >= inner_radius):
                worst = int(np.argmax(norms))
                raise GeometryError(
                    f"source {worst} at radius {norms[worst]:.6g} m is not strictly inside the innermost shell ({inner_radius} m)"
                )

    @property
    def n_sources(self) -> int:
        return self.positions.shape[0]

    @property
    def orientation_mode(self) -> OrientationMode:
        return OrientationMode.FREE if self.orientations is None else OrientationMode.FIXED

    @property
    def hemispheres(self) -> np.ndarray:
        """'left' for x < 0, 'right' otherwise."""
        return np.where(self.positions[:, 0] < 0.0, "left", "right")

    @classmethod
    def sphere(cls, n_sources: int = 200, radius: float = 0.07, method: str = "fibonacci",
               subdivisions: Optional[int] = None, orientation: str = "fixed") -> "SourceSpace":
        """
        Sources on a sphere surface with outward-normal orientations.

        Args:
            n_sources: Number of sources for Fibonacci sampling
            radius: Sphere radius in meters
            method: 'fibonacci' or 'icosahedral'
            subdivisions: Icosahedron subdivision level (icosahedral only)
            orientation: 'fixed' (outward normals) or 'free'
        """
        if method == "fibonacci":
            directions = fibonacci_sphere(n_sources)
        elif method == "icosahedral":
            if subdivisions is None:
                subdivisions = max(0, int(round(np.log((n_sources - 2) / 10.0) / np.log(4.0))))
            directions = icosphere(subdivisions)
        else:
            raise GeometryError(f"unknown source sampling method '{method}'")
        adjacency = hull_adjacency(directions)
        orientations = directions.copy() if orientation == "fixed" else None
        return cls(directions * radius, orientations, adjacency)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "positions": self.positions.tolist(),
            "orientations": None if self.orientations is None else self.orientations.tolist(),
            "adjacency": self.adjacency,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "SourceSpace":
        orientations = data.get("orientations")
        return cls(
            positions=np.asarray(data["positions"], dtype=float),
            orientations=None if orientations is None else np.asarray(orientations, dtype=float),
            adjacency=data.get("adjacency", []),
        )
