"""Synthetic TMS-EEG recordings, preprocessing chain and noise covariance."""

from .preprocess import (
    artifact_window,
    butterworth_highpass,
    epoch,
    estimate_noise_covariance,
    interpolate_artifact,
    notch_filter,
)
from .recording import Epoch, NoiseCovariance, Recording
from .simulate import (
    ArtifactSpec,
    Scenario,
    SourceActivity,
    Waveform,
    preset_scenario,
    simulate_recording,
    white_noise_for_snr,
)

__all__ = [
    "Epoch",
    "NoiseCovariance",
    "Recording",
    "ArtifactSpec",
    "Scenario",
    "SourceActivity",
    "Waveform",
    "preset_scenario",
    "simulate_recording",
    "white_noise_for_snr",
    "artifact_window",
    "butterworth_highpass",
    "epoch",
    "estimate_noise_covariance",
    "interpolate_artifact",
    "notch_filter",
]
