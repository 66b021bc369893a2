#!/usr/bin/env python3
"""
Sensor-space data containers: Recording, Epoch and NoiseCovariance.

Each container validates its invariants on construction and serializes to a
CSV matrix plus a JSON sidecar.
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from ..errors import CovarianceError, DimensionError, RangeError
from ..utils import read_json, read_matrix_csv, sidecar_paths, write_json, write_matrix_csv


Annotation = Tuple[str, int, int]


def _frozen(array: Any, ndmin: int = 2) -> np.ndarray:
    out = np.array(array, dtype=float, ndmin=ndmin)
    out.setflags(write=False)
    return out


# =============================================================================
# Recording
# =============================================================================

@dataclass
class Recording:
    """
    Multichannel sensor time series.

    Attributes:
        data: (n_sensors, n_samples) potentials in volts
        sample_rate: Sampling frequency in Hz
        t0_index: Sample index of the TMS pulse (t = 0)
        annotations: (label, start index, end index) markers
    """

    data: np.ndarray
    sample_rate: float
    t0_index: int = 0
    annotations: List[Annotation] = field(default_factory=list)

    def __post_init__(self):
        self.data = _frozen(self.data)
        self.sample_rate = float(self.sample_rate)
        self.t0_index = int(self.t0_index)
        self.annotations = [(str(a[0]), int(a[1]), int(a[2])) for a in self.annotations]
        self.validate()

    def validate(self):
        if self.n_samples < 2:
            raise DimensionError("a recording needs at least 2 samples")
        if self.sample_rate <= 0:
            raise DimensionError("sample_rate must be > 0")
        if not 0 <= self.t0_index < self.n_samples:
            raise RangeError(f"t0_index {self.t0_index} outside [0, {self.n_samples})")
        if not np.all(np.isfinite(self.data)):
            raise DimensionError("recording contains non-finite samples")

    @property
    def n_sensors(self) -> int:
        return self.data.shape[0]

    @property
    def n_samples(self) -> int:
        return self.data.shape[1]

    @property
    def times(self) -> np.ndarray:
        """Sample times in seconds relative to the pulse."""
        return (np.arange(self.n_samples) - self.t0_index) / self.sample_rate

    def index_of(self, t: float) -> int:
        """Sample index of time ``t`` (seconds relative to the pulse)."""
        return self.t0_index + int(round(t * self.sample_rate))

    def replace(self, data: np.ndarray) -> "Recording":
        """Same timing and annotations, new data."""
        return Recording(data, self.sample_rate, self.t0_index, list(self.annotations))

    def save(self, path: Path, extra: Optional[Dict[str, Any]] = None) -> Path:
        json_path, csv_path = sidecar_paths(path)
        write_matrix_csv(csv_path, self.data)
        meta = {
            "kind": "recording",
            "data_file": csv_path.name,
            "shape": list(self.data.shape),
            "sample_rate": self.sample_rate,
            "t0_index": self.t0_index,
            "annotations": [list(a) for a in self.annotations],
        }
        meta.update(extra or {})
        return write_json(json_path, meta)

    @classmethod
    def load(cls, path: Path) -> "Recording":
        json_path, _ = sidecar_paths(path)
        meta = read_json(json_path)
        data = read_matrix_csv(json_path.parent / meta["data_file"])
        if list(data.shape) != list(meta["shape"]):
            raise DimensionError(f"{json_path}: data shape {data.shape} != declared {meta['shape']}")
        return cls(data, meta["sample_rate"], meta["t0_index"], meta.get("annotations", []))


# =============================================================================
# Epoch
# =============================================================================

@dataclass
class Epoch:
    """
    Pulse-locked segment of a recording.

    Attributes:
        data: (n_sensors, n_samples) potentials
        sample_rate: Hz
        window: (pre_s, post_s) seconds before and after the pulse
    """

    data: np.ndarray
    sample_rate: float
    window: Tuple[float, float] = (2.0, 4.0)

    def __post_init__(self):
        self.data = _frozen(self.data)
        self.sample_rate = float(self.sample_rate)
        self.window = (float(self.window[0]), float(self.window[1]))
        self.validate()

    def validate(self):
        pre_s, post_s = self.window
        if pre_s <= 0 or post_s <= 0:
            raise RangeError(f"epoch window must be positive on both sides, got {self.window}")
        expected = int(round((pre_s + post_s) * self.sample_rate))
        if self.n_samples != expected:
            raise DimensionError(f"epoch has {self.n_samples} samples, window implies {expected}")

    @property
    def n_sensors(self) -> int:
        return self.data.shape[0]

    @property
    def n_samples(self) -> int:
        return self.data.shape[1]

    @property
    def t0_index(self) -> int:
        return int(round(self.window[0] * self.sample_rate))

    @property
    def times(self) -> np.ndarray:
        return (np.arange(self.n_samples) - self.t0_index) / self.sample_rate

    def save(self, path: Path, extra: Optional[Dict[str, Any]] = None) -> Path:
        json_path, csv_path = sidecar_paths(path)
        write_matrix_csv(csv_path, self.data)
        meta = {
            "kind": "epoch",
            "data_file": csv_path.name,
            "shape": list(self.data.shape),
            "sample_rate": self.sample_rate,
            "window": list(self.window),
        }
        meta.update(extra or {})
        return write_json(json_path, meta)

    @classmethod
    def load(cls, path: Path) -> "Epoch":
        json_path, _ = sidecar_paths(path)
        meta = read_json(json_path)
        data = read_matrix_csv(json_path.parent / meta["data_file"])
        if list(data.shape) != list(meta["shape"]):
            raise DimensionError(f"{json_path}: data shape {data.shape} != declared {meta['shape']}")
        return cls(data, meta["sample_rate"], tuple(meta["window"]))


# =============================================================================
# NoiseCovariance
# =============================================================================

@dataclass
class NoiseCovariance:
    """
    Sensor noise covariance.

    Attributes:
        matrix: (n_sensors, n_sensors) symmetric positive semidefinite matrix
        n_samples_used: Samples the estimate was computed from (0 for synthetic)
        regularization_floor: Diagonal loading already included in ``matrix``
    """

    matrix: np.ndarray
    n_samples_used: int = 0
    regularization_floor: float = 0.0

    def __post_init__(self):
        self.matrix = _frozen(self.matrix)
        self.n_samples_used = int(self.n_samples_used)
        self.regularization_floor = float(self.regularization_floor)
        self.validate()

    def validate(self):
        c = self.matrix
        if c.shape[0] != c.shape[1]:
            raise DimensionError(f"covariance must be square, got {c.shape}")
        if not np.all(np.isfinite(c)):
            raise CovarianceError("covariance contains non-finite entries")
        if self.regularization_floor < 0:
            raise CovarianceError("regularization_floor must be >= 0")
        scale = max(float(np.max(np.abs(c))), np.finfo(float).tiny)
        if np.max(np.abs(c - c.T)) > 1e-12 * scale:
            raise CovarianceError("covariance is not symmetric")
        eig_min = float(np.linalg.eigvalsh(c).min())
        if eig_min < -1e-12 * max(float(np.trace(c)), 0.0):
            raise CovarianceError(f"covariance is indefinite (smallest eigenvalue {eig_min:.3g})")

    @property
    def n_sensors(self) -> int:
        return self.matrix.shape[0]

    @classmethod
    def identity(cls, n_sensors: int, variance: float = 1.0) -> "NoiseCovariance":
        return cls(variance * np.eye(n_sensors))

    def save(self, path: Path, extra: Optional[Dict[str, Any]] = None) -> Path:
        json_path, csv_path = sidecar_paths(path)
        write_matrix_csv(csv_path, self.matrix)
        meta = {
            "kind": "noise_covariance",
            "data_file": csv_path.name,
            "shape": list(self.matrix.shape),
            "n_samples_used": self.n_samples_used,
            "regularization_floor": self.regularization_floor,
        }
        meta.update(extra or {})
        return write_json(json_path, meta)

    @classmethod
    def load(cls, path: Path) -> "NoiseCovariance":
        json_path, _ = sidecar_paths(path)
        meta = read_json(json_path)
        matrix = read_matrix_csv(json_path.parent / meta["data_file"])
        return cls(matrix, meta.get("n_samples_used", 0), meta.get("regularization_floor", 0.0))
