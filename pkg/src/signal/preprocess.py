#!/usr/bin/env python3
"""
TMS-EEG preprocessing chain: artifact interpolation, drift high-pass, line
notch, pulse-locked epoching and baseline noise covariance.

All functions take an immutable Recording and return a new one.
"""

from typing import Optional, Tuple

import numpy as np
from loguru import logger
from scipy import signal as sps

from ..errors import ConfigError, InsufficientDataError, RangeError
from ..utils import child_seeds
from .recording import Epoch, NoiseCovariance, Recording


def _check_below_nyquist(name: str, freq: float, sample_rate: float):
    if freq <= 0 or freq >= sample_rate / 2.0:
        raise ConfigError(f"{name}: {freq} Hz must lie in (0, {sample_rate / 2.0}) Hz (Nyquist)")


def artifact_window(rec: Recording, cut_start_ms: float = -5.0, cut_end_ms: float = 10.0) -> Tuple[int, int]:
    """Inclusive sample range [i0, i1] covered by the cut window."""
    if cut_start_ms >= cut_end_ms:
        raise RangeError(f"cut_start_ms ({cut_start_ms}) must be below cut_end_ms ({cut_end_ms})")
    i0 = rec.t0_index + int(round(cut_start_ms * rec.sample_rate / 1000.0))
    i1 = rec.t0_index + int(round(cut_end_ms * rec.sample_rate / 1000.0))
    # the line needs one intact sample on each side
    if i0 < 1 or i1 > rec.n_samples - 2:
        raise RangeError(
            f"cut window [{cut_start_ms}, {cut_end_ms}] ms -> samples [{i0}, {i1}] "
            f"does not fit inside the recording (0..{rec.n_samples - 1})"
        )
    return i0, i1


def interpolate_artifact(rec: Recording, cut_start_ms: float = -5.0, cut_end_ms: float = 10.0,
                         noise_scale: float = 1.0, seed: int = 0) -> Recording:
    """
    Replace the pulse artifact with a straight line plus white noise.

    Per channel, samples i0..i1 become the line joining x[i0 - 1] and x[i1 + 1]
    plus Gaussian noise of std ``noise_scale * std(x[:i0])``. Samples outside
    the window are copied unchanged.

    Args:
        rec: Input recording
        cut_start_ms: Window start relative to the pulse (ms)
        cut_end_ms: Window end relative to the pulse (ms)
        noise_scale: Noise std as a multiple of the pre-cut baseline std
        seed: Seed split into one stream per channel

    Returns:
        New Recording
    """
    if noise_scale < 0:
        raise ConfigError(f"noise_scale: must be >= 0, got {noise_scale}")
    i0, i1 = artifact_window(rec, cut_start_ms, cut_end_ms)
    data = np.array(rec.data)
    left, right = data[:, i0 - 1], data[:, i1 + 1]
    frac = (np.arange(i0, i1 + 1) - (i0 - 1)) / float(i1 + 2 - i0)
    data[:, i0:i1 + 1] = left[:, None] + (right - left)[:, None] * frac[None, :]
    if noise_scale > 0:
        baseline_std = data[:, :i0].std(axis=1)
        for ch, stream in enumerate(child_seeds(seed, rec.n_sensors)):
            noise = np.random.default_rng(stream).standard_normal(i1 - i0 + 1)
            data[ch, i0:i1 + 1] += noise_scale * baseline_std[ch] * noise
    logger.debug(f"Interpolated samples {i0}..{i1} on {rec.n_sensors} channels")
    out = rec.replace(data)
    out.annotations.append(("interpolated", i0, i1))
    return out


def butterworth_highpass(rec: Recording, cutoff_hz: float = 0.5, order: int = 2,
                         zero_phase: bool = True) -> Recording:
    """
    Butterworth high-pass (bilinear transform with pre-warping) on every channel.

    Args:
        rec: Input recording
        cutoff_hz: -3 dB frequency of the single-pass filter
        order: Filter order (>= 1)
        zero_phase: Forward-backward application; False runs a single causal pass

    Returns:
        New Recording
    """
    if order < 1:
        raise ConfigError(f"order: must be >= 1, got {order}")
    _check_below_nyquist("cutoff_hz", cutoff_hz, rec.sample_rate)
    sos = sps.butter(order, cutoff_hz, btype="highpass", fs=rec.sample_rate, output="sos")
    if zero_phase:
        data = sps.sosfiltfilt(sos, rec.data, axis=-1)
    else:
        data = sps.sosfilt(sos, rec.data, axis=-1)
    return rec.replace(data)


def notch_filter(rec: Recording, line_hz: float = 50.0, bandwidth_hz: float = 2.0,
                 zero_phase: bool = True) -> Recording:
    """Second-order IIR notch at ``line_hz`` with quality factor line_hz / bandwidth_hz."""
    _check_below_nyquist("line_hz", line_hz, rec.sample_rate)
    if bandwidth_hz <= 0:
        raise ConfigError(f"bandwidth_hz: must be > 0, got {bandwidth_hz}")
    b, a = sps.iirnotch(line_hz, line_hz / bandwidth_hz, fs=rec.sample_rate)
    if zero_phase:
        data = sps.filtfilt(b, a, rec.data, axis=-1)
    else:
        data = sps.lfilter(b, a, rec.data, axis=-1)
    return rec.replace(data)


def epoch(rec: Recording, pre_s: float = 2.0, post_s: float = 4.0) -> Epoch:
    """Pulse-locked slice of round((pre_s + post_s) * sample_rate) samples."""
    if pre_s <= 0 or post_s <= 0:
        raise RangeError(f"epoch window must be positive on both sides, got ({pre_s}, {post_s})")
    start = rec.t0_index - int(round(pre_s * rec.sample_rate))
    n_samples = int(round((pre_s + post_s) * rec.sample_rate))
    if start < 0 or start + n_samples > rec.n_samples:
        raise RangeError(
            f"epoch window (-{pre_s}, +{post_s}) s needs samples [{start}, {start + n_samples}) "
            f"but the recording has {rec.n_samples}"
        )
    return Epoch(rec.data[:, start:start + n_samples], rec.sample_rate, (pre_s, post_s))


def estimate_noise_covariance(rec: Recording, baseline: Tuple[float, float] = (-2.0, -0.005),
                              regularization_floor: Optional[float] = None) -> NoiseCovariance:
    """
    Sample covariance of the demeaned pre-pulse baseline, diagonally loaded.

    Args:
        rec: Recording (or anything with data, sample_rate and t0_index)
        baseline: (start_s, end_s) relative to the pulse; end_s <= 0
        regularization_floor: Diagonal loading; default 1e-10 * trace / n_sensors

    Returns:
        NoiseCovariance
    """
    start_s, end_s = baseline
    if start_s >= end_s or end_s > 0:
        raise RangeError(f"baseline {baseline} must be an increasing window ending at or before the pulse")
    i0 = rec.t0_index + int(round(start_s * rec.sample_rate))
    i1 = rec.t0_index + int(round(end_s * rec.sample_rate))
    if i0 < 0:
        raise RangeError(f"baseline start {start_s} s precedes the recording")
    segment = np.asarray(rec.data)[:, i0:i1]
    n_sensors, n_used = segment.shape
    if n_used < max(n_sensors, 2):
        raise InsufficientDataError(
            f"baseline has {n_used} samples; at least {max(n_sensors, 2)} are needed for {n_sensors} sensors"
        )
    centred = segment - segment.mean(axis=1, keepdims=True)
    cov = centred @ centred.T / (n_used - 1)
    cov = 0.5 * (cov + cov.T)
    if regularization_floor is None:
        regularization_floor = 1e-10 * float(np.trace(cov)) / n_sensors
    if regularization_floor < 0:
        raise ConfigError(f"regularization_floor: must be >= 0, got {regularization_floor}")
    cov = cov + regularization_floor * np.eye(n_sensors)
    return NoiseCovariance(cov, n_used, regularization_floor)
