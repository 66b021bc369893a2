#!/usr/bin/env python3
"""
Synthetic TMS-EEG recordings from the forward model M(t) = G S(t) + N(t).

Scenario schema (YAML or dict)::

    pulse_time: 3.0            # seconds from recording start to the TMS pulse
    activities:
      - source: 12             # source index
        waveform: sine         # sine | step | noise
        amplitude: 2.0e-8      # A.m (sine/noise: peak/std, step: level)
        frequency: 10.0        # Hz (sine carrier, noise band centre)
        bandwidth: 4.0         # Hz, noise only
        onset: -1.0            # s relative to the pulse (omit = recording start)
        offset: 2.0            # s relative to the pulse (omit = recording end)
        ramp: 0.05             # s cosine taper at both envelope edges
        phase: 0.0             # rad, sine only
        driver: shared-a       # noise only: activities with the same driver share one realization
    artifact:                  # optional sensor-level TMS artifact
      amplitude: 1.0e-4        # V peak at the coil electrode
      start_ms: -5.0
      end_ms: 10.0
      coil_sensor: 0
      spread: 0.5
"""

import hashlib
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
import yaml
from loguru import logger
from scipy import linalg, signal as sps

from ..errors import CovarianceError, ScenarioError
from ..headmodel import GainMatrix, SourceSpace
from ..utils import child_seeds
from .recording import NoiseCovariance, Recording


MIN_SAMPLES = 16


class Waveform(Enum):
    """Source waveform primitives"""
    SINE = "sine"
    STEP = "step"
    NOISE = "noise"


# =============================================================================
# Scenario types
# =============================================================================

@dataclass
class SourceActivity:
    """One source waveform primitive (times in seconds relative to the pulse)."""

    source: int
    waveform: str = Waveform.SINE.value
    amplitude: float = 1e-8
    frequency: float = 10.0
    bandwidth: float = 4.0
    onset: Optional[float] = None
    offset: Optional[float] = None
    ramp: float = 0.0
    phase: float = 0.0
    driver: Optional[str] = None

    def __post_init__(self):
        try:
            Waveform(self.waveform)
        except ValueError:
            raise ScenarioError(
                f"activities: unknown waveform '{self.waveform}' (valid: {[w.value for w in Waveform]})"
            )
        if self.onset is not None and self.offset is not None and self.offset <= self.onset:
            raise ScenarioError(f"activities: offset must follow onset for source {self.source}")
        if self.ramp < 0:
            raise ScenarioError("activities: ramp must be >= 0")


@dataclass
class ArtifactSpec:
    """Biphasic sensor-level transient around the pulse."""

    amplitude: float = 1e-4
    start_ms: float = -5.0
    end_ms: float = 10.0
    coil_sensor: int = 0
    spread: float = 0.5

    def __post_init__(self):
        if self.end_ms <= self.start_ms:
            raise ScenarioError("artifact: end_ms must be greater than start_ms")


@dataclass
class Scenario:
    """Source activity specification for :func:`simulate_recording`."""

    activities: List[SourceActivity] = field(default_factory=list)
    pulse_time: float = 0.0
    artifact: Optional[ArtifactSpec] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "pulse_time": self.pulse_time,
            "activities": [
                {k: v for k, v in asdict(a).items() if v is not None} for a in self.activities
            ],
            "artifact": None if self.artifact is None else asdict(self.artifact),
        }

    @classmethod
    def from_dict(cls, data: Optional[Dict[str, Any]]) -> "Scenario":
        data = data or {}
        try:
            activities = [SourceActivity(**a) for a in data.get("activities") or []]
            artifact = ArtifactSpec(**data["artifact"]) if data.get("artifact") else None
        except TypeError as e:
            raise ScenarioError(f"scenario: {e}") from e
        return cls(activities, float(data.get("pulse_time", 0.0)), artifact)

    @classmethod
    def load(cls, path: Path) -> "Scenario":
        with open(path, "r") as f:
            return cls.from_dict(yaml.safe_load(f))


# =============================================================================
# Waveform synthesis
# =============================================================================

def _envelope(times: np.ndarray, onset: Optional[float], offset: Optional[float], ramp: float) -> np.ndarray:
    start = times[0] if onset is None else onset
    stop = times[-1] + 1.0 if offset is None else offset
    env = ((times >= start) & (times < stop)).astype(float)
    if ramp > 0:
        rise = np.clip((times - start) / ramp, 0.0, 1.0)
        fall = np.clip((stop - times) / ramp, 0.0, 1.0)
        if onset is not None:
            env *= 0.5 - 0.5 * np.cos(np.pi * rise)
        if offset is not None:
            env *= 0.5 - 0.5 * np.cos(np.pi * fall)
    return env


def _driver_seed(seed: int, driver: str) -> np.random.SeedSequence:
    key = int.from_bytes(hashlib.sha256(driver.encode("utf-8")).digest()[:8], "little")
    return np.random.SeedSequence([seed, 1, key])


def band_limited_noise(n_samples: int, sample_rate: float, centre: float, bandwidth: float,
                       seed_seq: np.random.SeedSequence) -> np.ndarray:
    """Unit-variance Gaussian noise band-passed to [centre - bw/2, centre + bw/2]."""
    nyquist = sample_rate / 2.0
    low = max(centre - bandwidth / 2.0, 1e-3)
    high = centre + bandwidth / 2.0
    if high >= nyquist:
        raise ScenarioError(f"noise band up to {high} Hz exceeds Nyquist ({nyquist} Hz)")
    white = np.random.default_rng(seed_seq).standard_normal(n_samples)
    sos = sps.butter(2, [low, high], btype="bandpass", fs=sample_rate, output="sos")
    band = sps.sosfiltfilt(sos, white)
    std = band.std()
    return band / std if std > 0 else band


def source_waveforms(scenario: Scenario, n_sources: int, times: np.ndarray, sample_rate: float,
                     seed: int) -> np.ndarray:
    """Build the (n_sources, n_samples) source matrix S(t) of a scenario."""
    S = np.zeros((n_sources, times.size))
    drivers: Dict[str, np.ndarray] = {}
    for k, act in enumerate(scenario.activities):
        if not 0 <= act.source < n_sources:
            raise ScenarioError(f"activities[{k}].source: index {act.source} outside [0, {n_sources})")
        env = _envelope(times, act.onset, act.offset, act.ramp)
        kind = Waveform(act.waveform)
        if kind is Waveform.STEP:
            wave = np.ones_like(times)
        elif kind is Waveform.SINE:
            t_ref = times if act.onset is None else times - act.onset
            wave = np.sin(2.0 * np.pi * act.frequency * t_ref + act.phase)
        else:
            driver = act.driver or f"activity-{k}"
            if driver not in drivers:
                drivers[driver] = band_limited_noise(times.size, sample_rate, act.frequency,
                                                     act.bandwidth, _driver_seed(seed, driver))
            wave = drivers[driver]
        S[act.source] += act.amplitude * env * wave
    return S


def artifact_waveform(spec: ArtifactSpec, times: np.ndarray, sensor_directions: Optional[np.ndarray],
                      n_sensors: int) -> np.ndarray:
    """Sensor-level biphasic transient (one sine period over the cut window)."""
    start, end = spec.start_ms / 1000.0, spec.end_ms / 1000.0
    u = (times - start) / (end - start)
    shape = np.where((u >= 0) & (u <= 1), np.sin(2.0 * np.pi * u), 0.0)
    if sensor_directions is None:
        gains = np.ones(n_sensors)
    else:
        if not 0 <= spec.coil_sensor < n_sensors:
            raise ScenarioError(f"artifact.coil_sensor {spec.coil_sensor} out of range")
        cosine = sensor_directions @ sensor_directions[spec.coil_sensor]
        gains = (1.0 + spec.spread * cosine) / (1.0 + spec.spread)
    return spec.amplitude * gains[:, None] * shape[None, :]


# =============================================================================
# Simulation
# =============================================================================

def noise_factor(noise: NoiseCovariance) -> np.ndarray:
    """Lower Cholesky factor of a noise covariance; singular or indefinite input is rejected."""
    try:
        return linalg.cholesky(np.asarray(noise.matrix), lower=True)
    except linalg.LinAlgError as e:
        raise CovarianceError(f"noise covariance is not positive definite: {e}") from e


def simulate_recording(G: GainMatrix, scenario: Scenario, noise: Optional[NoiseCovariance],
                       sample_rate: float, duration: float, seed: int) -> Recording:
    """
    Simulate M(t) = G S(t) + N(t), plus the optional TMS artifact.

    Args:
        G: Lead field
        scenario: Source activity specification
        noise: Sensor noise covariance, or None for noiseless data
        sample_rate: Hz
        duration: Seconds
        seed: Master seed; noise is drawn from per-channel streams split from it

    Returns:
        Recording with the pulse at ``scenario.pulse_time``
    """
    n_samples = int(round(duration * sample_rate))
    if n_samples < MIN_SAMPLES:
        raise ScenarioError(f"duration * sample_rate must give >= {MIN_SAMPLES} samples, got {n_samples}")
    t0_index = int(round(scenario.pulse_time * sample_rate))
    if not 0 <= t0_index < n_samples:
        raise ScenarioError(f"pulse_time {scenario.pulse_time} s lies outside the recording")
    times = (np.arange(n_samples) - t0_index) / sample_rate

    S = source_waveforms(scenario, G.n_sources, times, sample_rate, seed)
    if G.n_orient == 3:
        # free orientation: activity along the source's outward direction when known, else z
        moments = np.zeros((G.n_columns, n_samples))
        for p in np.flatnonzero(np.any(S != 0, axis=1)):
            direction = np.array([0.0, 0.0, 1.0])
            if G.source_space is not None:
                pos = G.source_space.positions[p]
                direction = pos / np.linalg.norm(pos) if np.linalg.norm(pos) > 0 else direction
            moments[3 * p:3 * p + 3] = direction[:, None] * S[p][None, :]
        data = G.matrix @ moments
    else:
        data = G.matrix @ S

    annotations = [("pulse", t0_index, t0_index)]
    if scenario.artifact is not None:
        directions = None if G.sensor_array is None else G.sensor_array.directions
        data = data + artifact_waveform(scenario.artifact, times, directions, G.n_sensors)
        annotations.append((
            "artifact",
            max(0, t0_index + int(round(scenario.artifact.start_ms * sample_rate / 1000.0))),
            min(n_samples - 1, t0_index + int(round(scenario.artifact.end_ms * sample_rate / 1000.0))),
        ))

    if noise is not None:
        if noise.n_sensors != G.n_sensors:
            raise CovarianceError("noise covariance size does not match the sensor count")
        L = noise_factor(noise)
        streams = child_seeds(seed, G.n_sensors)
        z = np.vstack([np.random.default_rng(s).standard_normal(n_samples) for s in streams])
        data = data + L @ z

    if G.sensor_array is not None:
        data = G.sensor_array.apply_reference(data)
    logger.debug(f"Simulated {G.n_sensors} x {n_samples} recording at {sample_rate} Hz "
                 f"with {len(scenario.activities)} activities")
    return Recording(data, sample_rate, t0_index, annotations)


def white_noise_for_snr(G: GainMatrix, scenario: Scenario, sample_rate: float, duration: float,
                        seed: int, snr: float) -> NoiseCovariance:
    """White sensor noise whose std gives the requested signal RMS / noise std ratio."""
    clean = simulate_recording(G, Scenario(scenario.activities, scenario.pulse_time, None), None,
                               sample_rate, duration, seed)
    rms = float(np.sqrt(np.mean(clean.data ** 2)))
    if rms == 0:
        raise ScenarioError("cannot scale noise to an SNR for a zero scenario")
    return NoiseCovariance.identity(G.n_sensors, (rms / snr) ** 2)


# =============================================================================
# Preset scenarios
# =============================================================================

def pick_driving_sources(space: SourceSpace, n_per_hemisphere: int, min_z: float = 0.0) -> Dict[str, List[int]]:
    """Well-separated upper sources per hemisphere, chosen by farthest-point sampling."""
    picks: Dict[str, List[int]] = {}
    hemis = space.hemispheres
    for hemi in ("left", "right"):
        candidates = np.flatnonzero((hemis == hemi) & (space.positions[:, 2] > min_z * np.linalg.norm(space.positions, axis=1)))
        if candidates.size < n_per_hemisphere:
            raise ScenarioError(f"only {candidates.size} upper sources in the {hemi} hemisphere")
        pos = space.positions[candidates]
        chosen = [int(np.argmax(pos[:, 2]))]
        dist = np.linalg.norm(pos - pos[chosen[0]], axis=1)
        while len(chosen) < n_per_hemisphere:
            nxt = int(np.argmax(dist))
            chosen.append(nxt)
            dist = np.minimum(dist, np.linalg.norm(pos - pos[nxt], axis=1))
        picks[hemi] = [int(candidates[c]) for c in chosen]
    return picks


def preset_scenario(name: str, space: SourceSpace, pulse_time: float, amplitude: float = 1e-8,
                    n_per_hemisphere: int = 5, artifact_amplitude: Optional[float] = None) -> Scenario:
    """
    Named scenarios used by the pipeline.

    zero          - no activity
    alpha         - one 10 Hz generator over the whole recording
    tms_coupling  - alpha-band drivers on 5 + 5 sources, independent before the
                    pulse and sharing one driver after it, plus an alpha generator
    """
    artifact = ArtifactSpec(amplitude=artifact_amplitude) if artifact_amplitude else None
    if name == "zero":
        return Scenario([], pulse_time, artifact)
    picks = pick_driving_sources(space, n_per_hemisphere)
    alpha_source = picks["right"][0]
    if name == "alpha":
        return Scenario([SourceActivity(alpha_source, "sine", amplitude, 10.0)], pulse_time, artifact)
    if name == "tms_coupling":
        activities = [SourceActivity(alpha_source, "sine", 2.0 * amplitude, 10.0, ramp=0.0)]
        for hemi in ("left", "right"):
            for src in picks[hemi]:
                activities.append(SourceActivity(src, "noise", amplitude, 10.0, 4.0,
                                                 offset=0.0, driver=f"independent-{src}"))
                activities.append(SourceActivity(src, "noise", amplitude, 10.0, 4.0,
                                                 onset=0.0, driver="coupled"))
        return Scenario(activities, pulse_time, artifact)
    raise ScenarioError(f"unknown scenario preset '{name}' (valid: zero, alpha, tms_coupling)")
