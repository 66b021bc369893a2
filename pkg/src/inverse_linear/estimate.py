#!/usr/bin/env python3
"""
SourceEstimate container and kernel application.
"""

from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

import numpy as np

from ..errors import DimensionError, NumericalError, RangeError, ResolutionError
from ..utils import read_json, read_matrix_csv, sidecar_paths, write_json, write_matrix_csv


class Method(Enum):
    """Source localization methods"""
    MNE = "mne"
    DSPM = "dspm"
    SLORETA = "sloreta"
    WMEM = "wmem"

    @property
    def display_name(self) -> str:
        return {"mne": "MNE", "dspm": "dSPM", "sloreta": "sLORETA", "wmem": "wMEM"}[self.value]


class EstimateKind(Enum):
    """What the estimate values measure"""
    AMPLITUDE = "amplitude"      # current (A.m) or normalized statistic, signed
    POWER = "power"              # sLORETA pseudo-statistic phi, nonnegative
    NORM = "norm"                # free-orientation vector norm, nonnegative


@dataclass
class SourceEstimate:
    """
    Source time courses produced by an inverse method.

    Attributes:
        values: (n_sources * n_orient, n_samples) matrix
        method: Method that produced the values
        sample_rate: Hz
        t0_index: Sample index of the pulse
        n_orient: 3 for unreduced free-orientation values, else 1
        kind: AMPLITUDE, POWER or NORM
        provenance: Hashes of the inputs (gain, kernel, epoch, config)
    """

    values: np.ndarray
    method: Method
    sample_rate: float
    t0_index: int = 0
    n_orient: int = 1
    kind: EstimateKind = EstimateKind.AMPLITUDE
    provenance: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.values = np.array(self.values, dtype=float, ndmin=2)
        self.values.setflags(write=False)
        self.method = Method(self.method)
        self.kind = EstimateKind(self.kind)
        self.sample_rate = float(self.sample_rate)
        self.t0_index = int(self.t0_index)
        self.validate()

    def validate(self):
        if not np.all(np.isfinite(self.values)):
            raise NumericalError(f"{self.method.display_name} estimate contains non-finite values")
        if self.n_orient not in (1, 3) or self.values.shape[0] % self.n_orient:
            raise DimensionError(f"estimate rows ({self.values.shape[0]}) do not split into n_orient={self.n_orient}")
        if self.kind is not EstimateKind.AMPLITUDE and np.any(self.values < 0):
            raise NumericalError(f"{self.kind.value} estimate must be nonnegative")
        if not 0 <= self.t0_index < max(self.n_samples, 1):
            raise RangeError(f"t0_index {self.t0_index} outside the estimate")

    @property
    def n_sources(self) -> int:
        return self.values.shape[0] // self.n_orient

    @property
    def n_samples(self) -> int:
        return self.values.shape[1]

    @property
    def times(self) -> np.ndarray:
        return (np.arange(self.n_samples) - self.t0_index) / self.sample_rate

    def collapse(self) -> "SourceEstimate":
        """Per-source vector norm of free-orientation values (no-op for one orientation)."""
        if self.n_orient == 1:
            return self
        blocks = self.values.reshape(self.n_sources, 3, self.n_samples)
        if self.kind is EstimateKind.POWER:
            reduced, kind = blocks.sum(axis=1), EstimateKind.POWER
        else:
            reduced, kind = np.linalg.norm(blocks, axis=1), EstimateKind.NORM
        return SourceEstimate(reduced, self.method, self.sample_rate, self.t0_index, 1, kind,
                              dict(self.provenance))

    def window_indices(self, start_s: float, end_s: float) -> Tuple[int, int]:
        """Half-open sample range [i0, i1) of a window given relative to the pulse."""
        if end_s <= start_s:
            raise RangeError(f"window ({start_s}, {end_s}) must be increasing")
        i0 = self.t0_index + int(round(start_s * self.sample_rate))
        i1 = self.t0_index + int(round(end_s * self.sample_rate))
        if i0 < 0 or i1 > self.n_samples:
            raise RangeError(
                f"window ({start_s}, {end_s}) s -> samples [{i0}, {i1}) outside the estimate (0..{self.n_samples})"
            )
        return i0, max(i1, i0 + 1)

    def window(self, start_s: float, end_s: float) -> np.ndarray:
        """Collapsed values inside a window."""
        i0, i1 = self.window_indices(start_s, end_s)
        return self.collapse().values[:, i0:i1]

    def integrated_abs(self, start_s: Optional[float] = None, end_s: Optional[float] = None) -> np.ndarray:
        """Time-integrated |activity| per source (whole estimate if no window is given)."""
        values = self.collapse().values
        if start_s is not None and end_s is not None:
            i0, i1 = self.window_indices(start_s, end_s)
            values = values[:, i0:i1]
        return np.abs(values).sum(axis=1) / self.sample_rate

    def threshold_percentile(self, values: np.ndarray, percentile: float = 25.0) -> np.ndarray:
        """Display mask: |values| below the given percentile of |values| set to zero."""
        mags = np.abs(values)
        cut = np.percentile(mags, percentile) if mags.size else 0.0
        return np.where(mags >= cut, values, 0.0)

    def same_layout(self, other: "SourceEstimate") -> bool:
        return (self.n_sources == other.n_sources and self.n_samples == other.n_samples
                and self.sample_rate == other.sample_rate and self.t0_index == other.t0_index)

    # -------------------------------------------------------------------------
    # Serialization
    # -------------------------------------------------------------------------

    def save(self, path: Path, extra: Optional[Dict[str, Any]] = None) -> Path:
        json_path, csv_path = sidecar_paths(path)
        write_matrix_csv(csv_path, self.values)
        meta = {
            "kind": "source_estimate",
            "data_file": csv_path.name,
            "shape": list(self.values.shape),
            "method": self.method.value,
            "values_kind": self.kind.value,
            "sample_rate": self.sample_rate,
            "t0_index": self.t0_index,
            "n_orient": self.n_orient,
            "provenance": self.provenance,
        }
        meta.update(extra or {})
        return write_json(json_path, meta)

    @classmethod
    def load(cls, path: Path) -> "SourceEstimate":
        json_path, _ = sidecar_paths(path)
        meta = read_json(json_path)
        values = read_matrix_csv(json_path.parent / meta["data_file"])
        if list(values.shape) != list(meta["shape"]):
            raise DimensionError(f"{json_path}: data shape {values.shape} != declared {meta['shape']}")
        return cls(values, Method(meta["method"]), meta["sample_rate"], meta["t0_index"],
                   meta.get("n_orient", 1), EstimateKind(meta.get("values_kind", "amplitude")),
                   meta.get("provenance", {}))


# =============================================================================
# Kernel application
# =============================================================================

def apply_kernel(K: Any, ep: Any, mode: str = "raw") -> SourceEstimate:
    """
    Apply a linear inverse kernel to an epoch.

    Args:
        K: InverseKernel
        ep: Epoch (or Recording)
        mode: 'raw' (K @ data), 'power' (sLORETA phi per sample) or 'norm'
            (per-source vector norm for free orientations)

    Returns:
        SourceEstimate
    """
    if K.n_sensors != ep.data.shape[0]:
        raise DimensionError(f"kernel expects {K.n_sensors} sensors, epoch has {ep.data.shape[0]}")
    values = K.kernel @ ep.data
    provenance = dict(K.provenance)
    provenance["kernel"] = K.fingerprint()
    est = SourceEstimate(values, K.method, ep.sample_rate, ep.t0_index, K.n_orient,
                         EstimateKind.AMPLITUDE, provenance)
    if mode == "raw":
        return est
    if mode == "norm":
        return est.collapse() if K.n_orient == 3 else SourceEstimate(
            np.abs(values), K.method, ep.sample_rate, ep.t0_index, 1, EstimateKind.NORM, provenance)
    if mode == "power":
        if K.method is not Method.SLORETA:
            raise DimensionError(f"power mode is defined for sLORETA only, not {K.method.display_name}")
        power = SourceEstimate(values ** 2, K.method, ep.sample_rate, ep.t0_index, K.n_orient,
                               EstimateKind.POWER, provenance)
        return power.collapse()
    raise DimensionError(f"unknown apply mode '{mode}' (valid: raw, power, norm)")


def sloreta_power(j: np.ndarray, resolution_diagonal: np.ndarray) -> np.ndarray:
    """phi_i = j_i^2 / Res_ii for MNE currents ``j`` (rows are sources)."""
    j = np.asarray(j, dtype=float)
    r = np.asarray(resolution_diagonal, dtype=float)
    if np.any(r <= 0):
        raise ResolutionError("resolution diagonal must be strictly positive")
    return j ** 2 / (r[:, None] if j.ndim == 2 else r)
