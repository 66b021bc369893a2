import numpy as np
import pytest

from sourceloc.errors import ConfigError, CovarianceError, InsufficientDataError, RangeError, ScenarioError
from sourceloc.signal import (
    Epoch,
    NoiseCovariance,
    Recording,
    Scenario,
    SourceActivity,
    artifact_window,
    butterworth_highpass,
    epoch,
    estimate_noise_covariance,
    interpolate_artifact,
    notch_filter,
    preset_scenario,
    simulate_recording,
    white_noise_for_snr,
)
from sourceloc.signal.simulate import source_waveforms


def _amplitude(x: np.ndarray, freq: float, sample_rate: float) -> float:
    """Amplitude of the ``freq`` component over a whole number of periods."""
    t = np.arange(x.size) / sample_rate
    return float(2.0 * np.abs(np.mean(x * np.exp(-2j * np.pi * freq * t))))


def _sine(freq: float, sample_rate: float, duration: float, amplitude: float = 1.0) -> Recording:
    t = np.arange(int(round(duration * sample_rate))) / sample_rate
    return Recording(amplitude * np.sin(2.0 * np.pi * freq * t)[None, :], sample_rate)


# =============================================================================
# Simulation
# =============================================================================

def test_zero_scenario_without_noise_is_zero(gain):
    rec = simulate_recording(gain, Scenario([], pulse_time=0.5), None, 250.0, 2.0, seed=0)
    assert rec.data.shape == (gain.n_sensors, 500)
    assert not np.any(rec.data)


def test_step_activation_reproduces_the_gain_column(gain):
    scenario = Scenario([SourceActivity(3, "step", amplitude=1.0)], pulse_time=0.0)
    rec = simulate_recording(gain, scenario, None, 100.0, 1.0, seed=0)
    expected = np.repeat(gain.matrix[:, 3:4], rec.n_samples, axis=1)
    assert np.allclose(rec.data, expected, rtol=1e-12, atol=1e-12 * np.abs(expected).max())


def test_alpha_scenario_peaks_at_ten_hertz(gain, space):
    scenario = preset_scenario("alpha", space, pulse_time=1.0)
    rec = simulate_recording(gain, scenario, None, 250.0, 4.0, seed=0)
    channel = int(np.argmax(np.abs(rec.data).max(axis=1)))
    spectrum = np.abs(np.fft.rfft(rec.data[channel]))
    freqs = np.fft.rfftfreq(rec.n_samples, 1.0 / rec.sample_rate)
    assert abs(freqs[np.argmax(spectrum)] - 10.0) <= freqs[1]


def test_simulation_is_seeded(gain, space):
    scenario = preset_scenario("tms_coupling", space, pulse_time=1.0, n_per_hemisphere=3)
    noise = NoiseCovariance.identity(gain.n_sensors, 1e-12)
    a = simulate_recording(gain, scenario, noise, 250.0, 2.0, seed=3)
    b = simulate_recording(gain, scenario, noise, 250.0, 2.0, seed=3)
    c = simulate_recording(gain, scenario, noise, 250.0, 2.0, seed=4)
    assert np.array_equal(a.data, b.data)
    assert not np.array_equal(a.data, c.data)


def test_shared_driver_couples_sources_after_the_pulse(gain, space):
    scenario = preset_scenario("tms_coupling", space, pulse_time=1.0, n_per_hemisphere=2)
    times = (np.arange(500) - 250) / 250.0
    S = source_waveforms(scenario, gain.n_sources, times, 250.0, seed=0)
    sines = {a.source for a in scenario.activities if a.waveform == "sine"}
    driven = sorted({a.source for a in scenario.activities if a.waveform == "noise"} - sines)
    after = S[driven][:, 260:]
    before = S[driven][:, :240]
    assert np.allclose(np.corrcoef(after), 1.0)
    assert np.abs(np.corrcoef(before)[0, 1:]).max() < 0.99


def test_out_of_range_source_is_a_scenario_error(gain):
    scenario = Scenario([SourceActivity(gain.n_sources, "sine")])
    with pytest.raises(ScenarioError):
        simulate_recording(gain, scenario, None, 100.0, 1.0, seed=0)


def test_unknown_waveform_is_a_scenario_error():
    with pytest.raises(ScenarioError):
        SourceActivity(0, "square")


def test_too_short_recording_is_rejected(gain):
    with pytest.raises(ScenarioError):
        simulate_recording(gain, Scenario([]), None, 100.0, 0.1, seed=0)


def test_indefinite_noise_covariance_is_rejected(gain):
    with pytest.raises(CovarianceError):
        NoiseCovariance(np.diag(np.r_[1.0, -1.0, np.ones(gain.n_sensors - 2)]))
    singular = NoiseCovariance(np.zeros((gain.n_sensors, gain.n_sensors)))
    with pytest.raises(CovarianceError):
        simulate_recording(gain, Scenario([]), singular, 100.0, 1.0, seed=0)


def test_white_noise_for_snr_matches_requested_ratio(gain, space):
    scenario = preset_scenario("alpha", space, pulse_time=1.0)
    noise = white_noise_for_snr(gain, scenario, 250.0, 4.0, seed=0, snr=5.0)
    clean = simulate_recording(gain, scenario, None, 250.0, 4.0, seed=0)
    rms = np.sqrt(np.mean(clean.data ** 2))
    assert np.isclose(np.sqrt(noise.matrix[0, 0]), rms / 5.0)
    with pytest.raises(ScenarioError):
        white_noise_for_snr(gain, Scenario([]), 250.0, 4.0, seed=0, snr=5.0)


def test_scenario_round_trips_through_a_dict():
    scenario = Scenario([SourceActivity(4, "noise", 2e-8, 10.0, 4.0, onset=0.0, driver="x")],
                        pulse_time=3.0)
    assert Scenario.from_dict(scenario.to_dict()) == scenario


# =============================================================================
# Artifact interpolation
# =============================================================================

def _noisy_recording(rng, n_sensors=4, sample_rate=1000.0, duration=2.0, t0=1.0) -> Recording:
    data = rng.standard_normal((n_sensors, int(duration * sample_rate)))
    return Recording(data, sample_rate, int(t0 * sample_rate))


def test_interpolation_draws_the_line_between_boundaries(rng):
    rec = _noisy_recording(rng)
    out = interpolate_artifact(rec, -5.0, 10.0, noise_scale=0.0)
    i0, i1 = artifact_window(rec, -5.0, 10.0)
    assert (i0, i1) == (rec.t0_index - 5, rec.t0_index + 10)
    left, right = rec.data[:, i0 - 1], rec.data[:, i1 + 1]
    frac = (np.arange(i0, i1 + 1) - (i0 - 1)) / (i1 + 2 - i0)
    assert np.allclose(out.data[:, i0:i1 + 1], left[:, None] + (right - left)[:, None] * frac[None, :])
    outside = np.r_[0:i0, i1 + 1:rec.n_samples]
    assert np.array_equal(out.data[:, outside], rec.data[:, outside])


def test_equal_boundaries_give_a_constant_segment(rng):
    rec = _noisy_recording(rng)
    data = np.array(rec.data)
    i0, i1 = artifact_window(rec)
    data[:, i0 - 1] = data[:, i1 + 1] = 0.25
    out = interpolate_artifact(rec.replace(data), noise_scale=0.0)
    assert np.all(out.data[:, i0:i1 + 1] == 0.25)


def test_interpolation_removes_a_spike_artifact(rng):
    rec = _noisy_recording(rng)
    data = np.array(rec.data)
    i0, i1 = artifact_window(rec)
    data[:, i0:i1 + 1] += 1000.0 * np.sin(np.linspace(0.0, 2.0 * np.pi, i1 - i0 + 1))[None, :]
    data[:, i0 - 1] = data[:, i1 + 1] = 0.0
    baseline_std = data[:, :i0].std(axis=1)
    assert np.all(np.abs(data[:, i0:i1 + 1]).max(axis=1) >= 100.0 * baseline_std)

    out = interpolate_artifact(rec.replace(data), noise_scale=1.0, seed=0)
    assert np.all(np.abs(out.data[:, i0:i1 + 1]).max(axis=1) <= 5.0 * baseline_std)
    assert ("interpolated", i0, i1) in out.annotations


def test_interpolation_is_seeded(rng):
    rec = _noisy_recording(rng)
    a = interpolate_artifact(rec, seed=1)
    b = interpolate_artifact(rec, seed=1)
    assert np.array_equal(a.data, b.data)


def test_cut_window_outside_the_recording_is_a_range_error(rng):
    rec = Recording(rng.standard_normal((2, 100)), 1000.0, 2)
    with pytest.raises(RangeError):
        interpolate_artifact(rec)
    with pytest.raises(RangeError):
        artifact_window(rec, 10.0, -5.0)


# =============================================================================
# Filters
# =============================================================================

def test_highpass_removes_dc():
    rec = Recording(np.full((1, 6000), 3.0), 100.0)
    out = butterworth_highpass(rec, 0.5, 2, zero_phase=False)
    tail = out.data[0, -1500:]
    assert np.mean(np.abs(tail)) < 1e-6 * 3.0


def test_single_pass_highpass_is_minus_three_db_at_cutoff():
    fs = 100.0
    out = butterworth_highpass(_sine(0.5, fs, 200.0), 0.5, 2, zero_phase=False)
    steady = out.data[0, int(100 * fs):]
    gain_db = 20.0 * np.log10(_amplitude(steady, 0.5, fs))
    assert abs(gain_db - 20.0 * np.log10(np.sqrt(0.5))) <= 0.1


def test_highpass_passes_fifty_hertz_at_five_kilohertz():
    fs = 5000.0
    out = butterworth_highpass(_sine(50.0, fs, 4.0), 0.5, 2)
    middle = out.data[0, int(1 * fs):int(3 * fs)]
    assert abs(_amplitude(middle, 50.0, fs) - 1.0) <= 0.01


def test_cutoff_at_or_above_nyquist_is_a_config_error():
    rec = _sine(10.0, 100.0, 2.0)
    with pytest.raises(ConfigError):
        butterworth_highpass(rec, 50.0)
    with pytest.raises(ConfigError):
        notch_filter(rec, 60.0)
    with pytest.raises(ConfigError):
        butterworth_highpass(rec, 0.5, order=0)


def test_notch_attenuates_the_line_frequency():
    fs = 1000.0
    rec = _sine(50.0, fs, 10.0)
    out = notch_filter(rec, 50.0, 2.0)
    middle = slice(int(3 * fs), int(7 * fs))
    ratio = np.sqrt(np.mean(out.data[0, middle] ** 2)) / np.sqrt(np.mean(rec.data[0, middle] ** 2))
    assert ratio <= 0.032


@pytest.mark.parametrize("freq", [40.0, 60.0])
def test_notch_leaves_neighbouring_frequencies(freq):
    fs = 1000.0
    out = notch_filter(_sine(freq, fs, 10.0), 50.0, 2.0)
    middle = out.data[0, int(3 * fs):int(7 * fs)]
    assert 20.0 * np.log10(_amplitude(middle, freq, fs)) >= -1.0


def test_notch_preserves_alpha_in_a_mixture():
    fs = 1000.0
    mixture = _sine(10.0, fs, 10.0).data + _sine(50.0, fs, 10.0, 2.0).data
    out = notch_filter(Recording(mixture, fs), 50.0, 2.0)
    middle = out.data[0, int(3 * fs):int(7 * fs)]
    assert abs(_amplitude(middle, 10.0, fs) - 1.0) <= 0.01


def test_notch_passes_dc():
    rec = Recording(np.full((2, 2000), 1.5), 1000.0)
    out = notch_filter(rec, 50.0)
    assert np.allclose(out.data, 1.5, rtol=0, atol=1.5e-6)


FILTERS = [
    lambda rec, zero_phase: butterworth_highpass(rec, 0.5, 2, zero_phase=zero_phase),
    lambda rec, zero_phase: notch_filter(rec, 50.0, 2.0, zero_phase=zero_phase),
]


@pytest.mark.parametrize("apply", FILTERS, ids=["highpass", "notch"])
def test_causal_filters_commute_with_a_delay(apply, rng):
    x = rng.standard_normal((2, 3000))
    delayed = np.hstack([np.zeros((2, 250)), x])
    out = apply(Recording(x, 1000.0), False).data
    out_delayed = apply(Recording(delayed, 1000.0), False).data
    assert np.allclose(out_delayed[:, :250], 0.0)
    assert np.allclose(out_delayed[:, 250:], out, rtol=0, atol=1e-12)


@pytest.mark.parametrize("apply", FILTERS, ids=["highpass", "notch"])
def test_zero_phase_filters_commute_with_a_shift_away_from_the_edges(apply, rng):
    x = rng.standard_normal((2, 60000))
    shift, margin = 7000, 15000
    out = apply(Recording(x, 1000.0), True).data
    out_shifted = apply(Recording(x[:, shift:], 1000.0), True).data
    interior = slice(margin, out_shifted.shape[1] - margin)
    assert np.allclose(out_shifted[:, interior], out[:, shift:][:, interior], rtol=0, atol=1e-6)


# =============================================================================
# Epoching and noise covariance
# =============================================================================

def test_epoch_has_the_exact_sample_count(rng):
    rec = Recording(rng.standard_normal((3, 8000)), 1000.0, 3000)
    ep = epoch(rec, 2.0, 4.0)
    assert ep.n_samples == 6000
    assert ep.t0_index == 2000
    assert np.array_equal(ep.data, rec.data[:, 1000:7000])


def test_epoch_beyond_the_recording_is_a_range_error(rng):
    rec = Recording(rng.standard_normal((3, 4000)), 1000.0, 1000)
    with pytest.raises(RangeError):
        epoch(rec, 2.0, 4.0)


def test_noise_covariance_of_white_noise(rng):
    data = 2.0 * rng.standard_normal((4, 6000))
    ep = Epoch(data, 1000.0, (2.0, 4.0))
    cov = estimate_noise_covariance(ep, (-2.0, -0.005))
    assert cov.n_samples_used == 1995
    assert np.allclose(np.diag(cov.matrix), 4.0, rtol=0.1)
    trace = np.trace(cov.matrix - cov.regularization_floor * np.eye(4))
    assert np.isclose(cov.regularization_floor, 1e-10 * trace / 4)


def test_short_baseline_is_insufficient(rng):
    ep = Epoch(rng.standard_normal((64, 600)), 100.0, (2.0, 4.0))
    with pytest.raises(InsufficientDataError):
        estimate_noise_covariance(ep, (-0.5, -0.1))


def test_baseline_after_the_pulse_is_rejected(rng):
    ep = Epoch(rng.standard_normal((4, 600)), 100.0, (2.0, 4.0))
    with pytest.raises(RangeError):
        estimate_noise_covariance(ep, (-1.0, 0.5))


def test_recording_save_load_round_trip(rng, tmp_path):
    rec = Recording(rng.standard_normal((3, 50)), 250.0, 10, [("pulse", 10, 10)])
    rec.save(tmp_path / "rec")
    loaded = Recording.load(tmp_path / "rec.json")
    assert np.array_equal(loaded.data, rec.data)
    assert loaded.t0_index == 10
    assert loaded.annotations == [("pulse", 10, 10)]
