#!/usr/bin/env python3
"""
Orthogonal discrete wavelet transform of epochs (PyWavelets, periodized).

Scale j = 1..J holds the detail coefficients of band [fs/2^(j+1), fs/2^j];
scale J+1 holds the approximation, band [0, fs/2^(J+1)]. The epoch is extended
to the next power of two first, so every scale has an integer number of
time-frequency boxes and the transform is exactly orthonormal.
"""

from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import pywt
from loguru import logger

from ..errors import ConfigError, DimensionError
from ..signal import Epoch
from ..utils import FLOAT_FORMAT


DEFAULT_WAVELET = "db4"


class BoundaryMode(Enum):
    """How an epoch is extended to a power-of-two length"""
    ZERO_PAD = "zero-pad"
    PERIODIC = "periodic"


def next_power_of_two(n: int) -> int:
    return 1 << max(0, int(n - 1).bit_length())


def max_levels(n_samples: int) -> int:
    """Deepest decomposition allowed for a signal of ``n_samples``."""
    return int(np.floor(np.log2(n_samples))) if n_samples >= 2 else 0


def _extend(data: np.ndarray, length: int, mode: BoundaryMode) -> np.ndarray:
    pad = length - data.shape[-1]
    if pad == 0:
        return np.array(data, dtype=float)
    if mode is BoundaryMode.PERIODIC:
        return np.pad(data, ((0, 0), (0, pad)), mode="wrap")
    return np.pad(data, ((0, 0), (0, pad)), mode="constant")


# =============================================================================
# WaveletDecomposition
# =============================================================================

@dataclass
class WaveletDecomposition:
    """
    Per-channel DWT coefficients.

    Attributes:
        coefficients: Per scale (ascending j, approximation last) a (n_channels, n_boxes(j)) matrix
        sample_rate: Hz of the transformed signal
        n_samples: Length of the signal before extension
        boundary_mode: Extension used to reach a power of two
        wavelet: PyWavelets name of an orthogonal family
        t0_index: Pulse sample of the original epoch
        window: Epoch window, kept so idwt can rebuild the Epoch
    """

    coefficients: List[np.ndarray]
    sample_rate: float
    n_samples: int
    boundary_mode: BoundaryMode = BoundaryMode.ZERO_PAD
    wavelet: str = DEFAULT_WAVELET
    t0_index: int = 0
    window: Optional[Tuple[float, float]] = None

    def __post_init__(self):
        self.coefficients = [np.array(c, dtype=float, ndmin=2) for c in self.coefficients]
        self.boundary_mode = BoundaryMode(self.boundary_mode)
        counts = sum(c.shape[1] for c in self.coefficients)
        if counts != self.padded_length:
            raise DimensionError(f"{counts} coefficients per channel do not tile the padded length {self.padded_length}")

    @property
    def levels(self) -> int:
        return len(self.coefficients) - 1

    @property
    def n_scales(self) -> int:
        return len(self.coefficients)

    @property
    def scales(self) -> List[int]:
        return list(range(1, self.n_scales + 1))

    @property
    def n_channels(self) -> int:
        return self.coefficients[0].shape[0]

    @property
    def padded_length(self) -> int:
        return next_power_of_two(self.n_samples)

    def is_approximation(self, j: int) -> bool:
        return j == self.n_scales

    def band(self, j: int) -> Tuple[float, float]:
        """Frequency band (Hz) of scale j."""
        if not 1 <= j <= self.n_scales:
            raise ConfigError(f"scale {j} outside 1..{self.n_scales}")
        fs = self.sample_rate
        if self.is_approximation(j):
            return 0.0, fs / 2 ** (self.levels + 1)
        return fs / 2 ** (j + 1), fs / 2 ** j

    def center_frequency(self, j: int) -> float:
        low, high = self.band(j)
        return 0.5 * (low + high)

    def box_span(self, j: int) -> int:
        """Padded-signal samples covered by one box of scale j."""
        return 2 ** min(j, self.levels)

    def box_time(self, j: int, k: int) -> float:
        """Centre time (s, relative to the pulse) of box k at scale j."""
        span = self.box_span(j)
        return ((k + 0.5) * span - self.t0_index) / self.sample_rate

    def pywt_order(self, coefficients: Optional[Sequence[np.ndarray]] = None) -> List[np.ndarray]:
        """[A_J, D_J, ..., D_1] as PyWavelets expects."""
        coeffs = list(self.coefficients if coefficients is None else coefficients)
        return [coeffs[-1]] + coeffs[-2::-1]

    def reconstruct(self, coefficients: Sequence[np.ndarray]) -> np.ndarray:
        """Inverse transform of coefficient arrays laid out like this decomposition (rows independent)."""
        signal = pywt.waverec(self.pywt_order(coefficients), self.wavelet, mode="periodization", axis=-1)
        return np.asarray(signal)[..., :self.n_samples]

    def energy(self) -> float:
        return float(sum(np.sum(c ** 2) for c in self.coefficients))


# =============================================================================
# Transforms
# =============================================================================

def _check_wavelet(wavelet: str) -> pywt.Wavelet:
    try:
        w = pywt.Wavelet(wavelet)
    except ValueError as e:
        raise ConfigError(f"wavelet: unknown family '{wavelet}'") from e
    if not w.orthogonal:
        raise ConfigError(f"wavelet: '{wavelet}' is not orthogonal")
    return w


def dwt_array(data: np.ndarray, sample_rate: float, wavelet: str = DEFAULT_WAVELET, levels: int = 6,
              boundary_mode: str = BoundaryMode.ZERO_PAD.value, t0_index: int = 0,
              window: Optional[Tuple[float, float]] = None) -> WaveletDecomposition:
    """DWT of a (n_channels, n_samples) array."""
    data = np.atleast_2d(np.asarray(data, dtype=float))
    n_samples = data.shape[1]
    mode = BoundaryMode(boundary_mode)
    if levels < 1 or levels > max_levels(n_samples):
        raise ConfigError(f"levels: must be in [1, {max_levels(n_samples)}] for {n_samples} samples, got {levels}")
    w = _check_wavelet(wavelet)
    padded = _extend(data, next_power_of_two(n_samples), mode)
    coeffs = pywt.wavedec(padded, w, mode="periodization", level=levels, axis=-1)
    ascending = coeffs[:0:-1] + [coeffs[0]]
    return WaveletDecomposition(ascending, sample_rate, n_samples, mode, wavelet, t0_index, window)


def dwt(ep: Epoch, wavelet: str = DEFAULT_WAVELET, levels: int = 6,
        boundary_mode: str = BoundaryMode.ZERO_PAD.value) -> WaveletDecomposition:
    """
    Per-channel orthogonal DWT of an epoch.

    Args:
        ep: Epoch
        wavelet: Orthogonal PyWavelets family (default Daubechies-4)
        levels: Decomposition depth, at most floor(log2(n_samples))
        boundary_mode: 'zero-pad' or 'periodic' extension to a power of two

    Returns:
        WaveletDecomposition with levels + 1 scales
    """
    return dwt_array(ep.data, ep.sample_rate, wavelet, levels, boundary_mode, ep.t0_index, ep.window)


def idwt(dec: WaveletDecomposition) -> Epoch:
    """Inverse of :func:`dwt`."""
    if dec.window is None:
        raise DimensionError("decomposition carries no epoch window; use WaveletDecomposition.reconstruct")
    return Epoch(dec.reconstruct(dec.coefficients), dec.sample_rate, dec.window)


# =============================================================================
# Multiresolution power and band mapping
# =============================================================================

def multiresolution_power(dec: WaveletDecomposition) -> List[np.ndarray]:
    """Mean over channels of the squared coefficient, per (scale, box)."""
    return [np.mean(c ** 2, axis=0) for c in dec.coefficients]


def power_grid(dec: WaveletDecomposition, power: Optional[List[np.ndarray]] = None) -> np.ndarray:
    """(n_scales, n_finest_boxes) grid, coarse boxes repeated over the fine boxes they span."""
    power = multiresolution_power(dec) if power is None else power
    width = power[0].size
    return np.vstack([np.repeat(p, width // p.size) for p in power])


def write_power_csv(path: Path, dec: WaveletDecomposition, power: Optional[List[np.ndarray]] = None) -> Path:
    """Scale x box CSV grid; rows labelled by band, columns by box centre time."""
    grid = power_grid(dec, power)
    rows = [f"j{j} {dec.band(j)[0]:.4g}-{dec.band(j)[1]:.4g} Hz" for j in dec.scales]
    cols = [f"{dec.box_time(1, k):.6g}" for k in range(grid.shape[1])]
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame(grid, index=rows, columns=cols).to_csv(path, float_format=FLOAT_FORMAT, lineterminator="\n")
    return path


def scales_for_band(dec: WaveletDecomposition, low_hz: float, high_hz: float,
                    min_overlap: float = 0.5) -> List[int]:
    """
    Dyadic scales covering a frequency band.

    A scale is kept when the band overlaps at least ``min_overlap`` of the
    scale's own width; if none qualifies, the single best-overlapping scale is
    used. The mapping is logged since dyadic bands rarely match exactly.
    """
    if not 0 <= low_hz < high_hz:
        raise ConfigError(f"band: need 0 <= low < high, got ({low_hz}, {high_hz})")
    overlaps = {}
    for j in dec.scales:
        lo, hi = dec.band(j)
        overlaps[j] = max(0.0, min(hi, high_hz) - max(lo, low_hz)) / (hi - lo)
    chosen = [j for j, frac in overlaps.items() if frac >= min_overlap]
    if not chosen:
        best = max(overlaps.items(), key=lambda kv: (kv[1], -kv[0]))
        if best[1] == 0.0:
            raise ConfigError(f"band ({low_hz}, {high_hz}) Hz does not overlap any scale")
        chosen = [best[0]]
    covered = [dec.band(j) for j in chosen]
    logger.info(
        f"Band {low_hz}-{high_hz} Hz -> scales {chosen} "
        f"({min(b[0] for b in covered):.4g}-{max(b[1] for b in covered):.4g} Hz)"
    )
    return sorted(chosen)
