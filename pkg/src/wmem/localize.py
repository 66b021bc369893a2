#!/usr/bin/env python3
"""
Wavelet-domain MEM localization (wMEM).

1. DWT of the epoch and of its pre-pulse baseline
2. Per scale, per channel noise variance from the baseline coefficients,
   shrunk toward the channel median with weight j / j_max
3. Boxes ranked by energy until the requested fraction is covered
4. One MEM solve per selected box in the scale-whitened frame
5. Inverse DWT of the source coefficients gives the source time series
"""

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
from loguru import logger

from ..errors import ConfigError, DimensionError, NumericalError, RangeError
from ..headmodel import GainMatrix
from ..inverse_linear import EstimateKind, Method, SourceEstimate
from ..signal import Epoch, NoiseCovariance
from ..utils import parallel_map
from .mem import DEFAULT_ALPHA, DEFAULT_MAX_ITER, DEFAULT_TOL, MemProblem, MemReferenceLaw
from .parcels import Parcellation
from .wavelet import BoundaryMode, WaveletDecomposition, dwt, dwt_array, max_levels, scales_for_band


@dataclass
class WaveletConfig:
    """wMEM settings."""

    wavelet: str = "db4"
    levels: int = 6
    boundary_mode: str = BoundaryMode.ZERO_PAD.value
    box_selection: float = 0.99
    band: Optional[Tuple[float, float]] = None
    baseline: Tuple[float, float] = (-2.0, -0.005)
    alpha: float = DEFAULT_ALPHA
    max_iter: int = DEFAULT_MAX_ITER
    tol: float = DEFAULT_TOL
    optimizer: str = "newton"
    max_boxes: Optional[int] = None
    n_jobs: int = 1

    def validate(self):
        if not 0 < self.box_selection <= 1:
            raise ConfigError(f"wmem.box_selection: must be in (0, 1], got {self.box_selection}")
        if not 0 < self.alpha < 1:
            raise ConfigError(f"wmem.alpha: must be in (0, 1), got {self.alpha}")
        if self.levels < 1:
            raise ConfigError(f"wmem.levels: must be >= 1, got {self.levels}")
        if self.tol <= 0 or self.max_iter < 1:
            raise ConfigError("wmem.tol must be > 0 and wmem.max_iter >= 1")
        if self.optimizer not in ("newton", "bfgs"):
            raise ConfigError(f"wmem.optimizer: '{self.optimizer}' (valid: newton, bfgs)")
        if self.max_boxes is not None and self.max_boxes < 1:
            raise ConfigError("wmem.max_boxes: must be >= 1")
        BoundaryMode(self.boundary_mode)


@dataclass
class BoxDiagnostic:
    """Outcome of one box solve."""
    scale: int
    box: int
    energy: float
    status: str
    iterations: int = 0
    gradient_norm: float = 0.0
    entropy_drop: float = 0.0
    message: str = ""


@dataclass
class WmemRun:
    """Estimate plus the per-box record of how it was obtained."""
    estimate: SourceEstimate
    diagnostics: List[BoxDiagnostic] = field(default_factory=list)
    scale_noise: Dict[int, List[float]] = field(default_factory=dict)
    scales_used: List[int] = field(default_factory=list)

    def entropy_per_scale(self) -> Dict[int, float]:
        totals: Dict[int, float] = {}
        for d in self.diagnostics:
            totals[d.scale] = totals.get(d.scale, 0.0) + d.entropy_drop
        return totals

    @property
    def n_failed(self) -> int:
        return sum(d.status == "failed" for d in self.diagnostics)

    def write_diagnostics(self, path: Path) -> Path:
        """One JSON object per line, in (scale, box) order."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as f:
            for d in sorted(self.diagnostics, key=lambda d: (d.scale, d.box)):
                f.write(json.dumps(asdict(d), sort_keys=True) + "\n")
        return path


# =============================================================================
# Scale-specific noise
# =============================================================================

def scale_noise_variances(ep: Epoch, dec: WaveletDecomposition, baseline: Tuple[float, float],
                          C_baseline: NoiseCovariance) -> Dict[int, np.ndarray]:
    """
    Per-scale, per-channel noise variance of the DWT coefficients.

    Baseline coefficients give the raw estimate; scales the baseline is too
    short for fall back to the covariance diagonal (an orthonormal transform
    keeps white-noise variance per coefficient). Each scale is then shrunk
    toward its median across channels with weight j / j_max.
    """
    fallback = np.clip(np.diag(np.asarray(C_baseline.matrix)), 0.0, None)
    start_s, end_s = baseline
    i0 = ep.t0_index + int(round(start_s * ep.sample_rate))
    i1 = ep.t0_index + int(round(end_s * ep.sample_rate))
    if i0 < 0 or i1 > ep.t0_index or i1 <= i0:
        raise RangeError(f"wmem.baseline {baseline} must lie inside the pre-pulse part of the epoch")
    segment = ep.data[:, i0:i1]
    base_levels = min(dec.levels, max_levels(segment.shape[1]))
    base = None
    if base_levels >= 1:
        base = dwt_array(segment, ep.sample_rate, dec.wavelet, base_levels, BoundaryMode.PERIODIC.value)

    variances: Dict[int, np.ndarray] = {}
    j_max = dec.n_scales
    for j in dec.scales:
        raw = fallback.copy()
        if base is not None and (j <= base.levels or (j == dec.n_scales and base.levels == dec.levels)):
            coeffs = base.coefficients[j - 1] if j <= base.levels else base.coefficients[-1]
            if dec.is_approximation(j):
                raw = np.var(coeffs, axis=1) if coeffs.shape[1] > 1 else raw
            else:
                raw = np.mean(coeffs ** 2, axis=1)
        else:
            logger.debug(f"Scale {j}: baseline too short, using covariance diagonal")
        weight = j / j_max
        shrunk = (1.0 - weight) * raw + weight * np.median(raw)
        floor = max(float(np.max(shrunk)) * 1e-12, np.finfo(float).tiny)
        variances[j] = np.maximum(shrunk, floor)
    return variances


# =============================================================================
# Box selection
# =============================================================================

def select_boxes(dec: WaveletDecomposition, scales: List[int], fraction: float,
                 max_boxes: Optional[int] = None) -> List[Tuple[int, int, float]]:
    """(scale, box, energy) triples by descending energy until ``fraction`` of the total is covered."""
    boxes = []
    for j in scales:
        energies = np.sum(dec.coefficients[j - 1] ** 2, axis=0)
        boxes.extend((j, k, float(e)) for k, e in enumerate(energies))
    total = sum(b[2] for b in boxes)
    if total <= 0:
        return []
    boxes.sort(key=lambda b: (-b[2], b[0], b[1]))
    chosen, covered = [], 0.0
    for box in boxes:
        if covered >= fraction * total or (max_boxes is not None and len(chosen) >= max_boxes):
            break
        if box[2] <= 0:
            break
        chosen.append(box)
        covered += box[2]
    return chosen


# =============================================================================
# Localization
# =============================================================================

def run_wmem(ep: Epoch, G: GainMatrix, parc: Parcellation, C_baseline: NoiseCovariance,
             config: Optional[WaveletConfig] = None) -> WmemRun:
    """
    wMEM localization with full diagnostics.

    Args:
        ep: Epoch with a pre-pulse baseline
        G: Gain matrix
        parc: Parcellation of G's source space
        C_baseline: Baseline noise covariance (fallback for short baselines)
        config: WaveletConfig

    Returns:
        WmemRun
    """
    config = config or WaveletConfig()
    config.validate()
    if G.n_sensors != ep.n_sensors:
        raise DimensionError(f"gain has {G.n_sensors} sensors, epoch has {ep.n_sensors}")
    if parc.n_sources != G.n_sources:
        raise DimensionError("parcellation does not cover the gain matrix sources")

    dec = dwt(ep, config.wavelet, min(config.levels, max_levels(ep.n_samples)), config.boundary_mode)
    noise = scale_noise_variances(ep, dec, config.baseline, C_baseline)
    scales = dec.scales if config.band is None else scales_for_band(dec, *config.band)
    boxes = select_boxes(dec, scales, config.box_selection, config.max_boxes)
    logger.info(f"wMEM: {len(boxes)} boxes selected over scales {scales}")

    problems = {}
    for j in sorted({b[0] for b in boxes}):
        scale = 1.0 / np.sqrt(noise[j])
        problems[j] = (MemProblem(G.matrix * scale[:, None], parc, 1.0, G.n_orient), scale)

    source_coeffs = [np.zeros((G.n_columns, c.shape[1])) for c in dec.coefficients]

    def solve_box(box: Tuple[int, int, float]) -> BoxDiagnostic:
        j, k, energy = box
        problem, scale = problems[j]
        m = dec.coefficients[j - 1][:, k] * scale
        try:
            law = MemReferenceLaw.from_data(parc, problem.G, m, 1.0, config.alpha)
            sol = problem.solve(m, law, config.max_iter, config.tol, config.optimizer)
        except NumericalError as e:
            logger.warning(f"wMEM box (scale {j}, box {k}) failed and is zeroed: {e}")
            return BoxDiagnostic(j, k, energy, "failed", getattr(e, "iterations", 0),
                                 float(getattr(e, "gradient_norm", float("nan"))), 0.0, str(e))
        source_coeffs[j - 1][:, k] = sol.expected_sources
        return BoxDiagnostic(j, k, energy, "converged", sol.iterations, sol.gradient_norm, sol.entropy_drop)

    diagnostics = parallel_map(solve_box, boxes, n_jobs=config.n_jobs)
    values = dec.reconstruct(source_coeffs) if boxes else np.zeros((G.n_columns, ep.n_samples))

    provenance = {"gain": G.fingerprint(), "n_parcels": parc.n_parcels, "boxes": len(boxes)}
    estimate = SourceEstimate(values, Method.WMEM, ep.sample_rate, ep.t0_index, G.n_orient,
                              EstimateKind.AMPLITUDE, provenance)
    run = WmemRun(estimate, list(diagnostics), {j: v.tolist() for j, v in noise.items()}, scales)
    if run.n_failed:
        logger.warning(f"wMEM: {run.n_failed} of {len(boxes)} boxes failed")
    return run


def wmem_localize(ep: Epoch, G: GainMatrix, parc: Parcellation, C_baseline: NoiseCovariance,
                  config: Optional[WaveletConfig] = None) -> SourceEstimate:
    """wMEM source estimate (see :func:`run_wmem`)."""
    return run_wmem(ep, G, parc, C_baseline, config).estimate
