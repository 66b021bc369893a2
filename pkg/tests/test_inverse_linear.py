import numpy as np
import pytest

from sourceloc.errors import ConditioningError, ConfigError, DimensionError, RangeError
from sourceloc.headmodel import SensorArray, SourceSpace, build_spherical_leadfield, depth_weights
from sourceloc.inverse_linear import (
    EstimateKind,
    InverseKernel,
    Method,
    SourceEstimate,
    apply_kernel,
    build_kernel,
    dspm_kernel,
    lambda_from_snr,
    mne_kernel,
    resolution_matrix,
    sloreta_kernel,
    sloreta_power,
)
from sourceloc.signal import Epoch, NoiseCovariance


def _random_spd(rng, n: int) -> np.ndarray:
    A = rng.standard_normal((n, n))
    C = A @ A.T / n + 0.1 * np.eye(n)
    return 0.5 * (C + C.T)


def _random_epoch(rng, n_sensors: int, sample_rate: float = 100.0) -> Epoch:
    return Epoch(rng.standard_normal((n_sensors, 200)), sample_rate, (1.0, 1.0))


# =============================================================================
# Minimum norm
# =============================================================================

@pytest.mark.parametrize("seed", range(20))
def test_mne_matches_stacked_least_squares(seed):
    rng = np.random.default_rng(seed)
    G = rng.standard_normal((8, 20))
    lam = 0.5
    K = mne_kernel(G, np.eye(8), gamma_depth=0.0, lam=lam)
    stacked = np.vstack([G, lam * np.eye(20)])
    target = np.vstack([np.eye(8), np.zeros((20, 8))])
    oracle = np.linalg.lstsq(stacked, target, rcond=None)[0]
    assert np.allclose(K.kernel, oracle, rtol=0, atol=1e-10)
    assert np.array_equal(K.normalization, np.ones(20))


def test_mne_with_depth_weighting_and_full_covariance(rng):
    G = rng.standard_normal((8, 20))
    C = _random_spd(rng, 8)
    lam = 0.3
    K = mne_kernel(G, C, gamma_depth=0.5, lam=lam)
    R = np.diag(depth_weights(G, 0.5))
    explicit = R @ G.T @ np.linalg.inv(G @ R @ G.T + lam ** 2 * C)
    assert np.allclose(K.kernel, explicit, rtol=1e-9, atol=1e-12)


def test_mne_with_tiny_lambda_reproduces_noiseless_data(rng):
    G = rng.standard_normal((8, 20))
    m = G @ rng.standard_normal(20)
    K = mne_kernel(G, np.eye(8), gamma_depth=0.0, lam=1e-6)
    residual = np.linalg.norm(G @ (K.kernel @ m) - m) / np.linalg.norm(m)
    assert residual < 1e-6


def test_rank_deficient_system_is_a_conditioning_error(rng):
    G = rng.standard_normal((8, 3))
    with pytest.raises(ConditioningError) as info:
        mne_kernel(G, np.eye(8), gamma_depth=0.0, lam=1e-9)
    assert info.value.lam == 1e-9
    assert info.value.condition > 1e12


def test_default_lambda_comes_from_snr(gain):
    C = NoiseCovariance.identity(gain.n_sensors, 1e-12)
    K = mne_kernel(gain, C)
    assert np.isclose(K.lam, lambda_from_snr(gain, C, 0.5, 3.0))


def test_lambda_from_snr_formula(rng):
    G = rng.standard_normal((8, 20))
    lam = lambda_from_snr(G, 2.0 * np.eye(8), gamma_depth=0.0, snr=4.0)
    assert np.isclose(lam ** 2, np.sum(G ** 2) / (16.0 * 16.0))
    with pytest.raises(ConfigError):
        lambda_from_snr(G, np.eye(8), snr=0.0)


def test_non_positive_lambda_is_rejected(rng):
    with pytest.raises(ConfigError):
        mne_kernel(rng.standard_normal((8, 20)), np.eye(8), lam=0.0)


def test_mne_currents_have_the_smallest_norm_that_fits(rng):
    G = rng.standard_normal((8, 20))
    m = G @ rng.standard_normal(20)
    j = mne_kernel(G, np.eye(8), gamma_depth=0.0, lam=1e-6).kernel @ m
    null = np.linalg.svd(G)[2][8:]
    assert np.allclose(null @ j, 0.0, atol=1e-8)
    for z in null[:5]:
        other = j + 0.1 * z
        assert np.allclose(G @ other, G @ j)
        assert np.linalg.norm(other) > np.linalg.norm(j)


def test_apply_kernel_is_linear(gain, rng):
    K = mne_kernel(gain, NoiseCovariance.identity(gain.n_sensors))
    a, b = _random_epoch(rng, gain.n_sensors), _random_epoch(rng, gain.n_sensors)
    mixed = Epoch(2.0 * a.data - 3.0 * b.data, a.sample_rate, a.window)
    expected = 2.0 * apply_kernel(K, a).values - 3.0 * apply_kernel(K, b).values
    assert np.allclose(apply_kernel(K, mixed).values, expected)
    silent = Epoch(np.zeros_like(a.data), a.sample_rate, a.window)
    assert not np.any(apply_kernel(K, silent).values)


def test_identity_kernel_returns_the_data(rng):
    ep = _random_epoch(rng, 6)
    K = InverseKernel(np.eye(6), Method.MNE, 1.0, 0.0, np.ones(6))
    assert np.array_equal(apply_kernel(K, ep).values, ep.data)


# =============================================================================
# dSPM and sLORETA
# =============================================================================

def test_dspm_gives_unit_variance_under_noise(gain, rng):
    n = gain.n_sensors
    C = _random_spd(rng, n)
    K = dspm_kernel(gain, NoiseCovariance(C), gamma_depth=0.5)
    noise = np.linalg.cholesky(C) @ rng.standard_normal((n, 20000))
    noise -= noise.mean(axis=0, keepdims=True)
    variance = (K.kernel @ noise).var(axis=1)
    assert np.all((variance > 0.9) & (variance < 1.1))


def test_dspm_gives_unit_variance_across_noise_epochs(gain, rng):
    n = gain.n_sensors
    C = _random_spd(rng, n)
    K = dspm_kernel(gain, NoiseCovariance(C), gamma_depth=0.5)
    chol = np.linalg.cholesky(C)
    samples = []
    for _ in range(2000):
        noise = chol @ rng.standard_normal((n, 20))
        noise -= noise.mean(axis=0, keepdims=True)
        samples.append(apply_kernel(K, Epoch(noise, 100.0, (0.1, 0.1))).values)
    variance = np.stack(samples).var(axis=0).mean(axis=1)
    assert np.all((variance > 0.9) & (variance < 1.1))


@pytest.mark.parametrize("method", [Method.DSPM, Method.SLORETA])
def test_standardized_peak_ignores_data_scale(gain, rng, method):
    K = build_kernel(method, gain, NoiseCovariance.identity(gain.n_sensors))
    ep = _random_epoch(rng, gain.n_sensors)
    peak = np.argmax(np.abs(apply_kernel(K, ep).values), axis=0)
    for scale in (1e-3, 1e3):
        scaled = Epoch(scale * ep.data, ep.sample_rate, ep.window)
        assert np.array_equal(np.argmax(np.abs(apply_kernel(K, scaled).values), axis=0), peak)


@pytest.mark.parametrize("gamma_depth", [0.0, 0.5])
def test_sloreta_has_zero_localization_error(gamma_depth):
    G = build_spherical_leadfield(SensorArray.cap(64), SourceSpace.sphere(200))
    C = NoiseCovariance.identity(G.n_sensors)
    lam = lambda_from_snr(G, C, gamma_depth, 1000.0)
    K = sloreta_kernel(G, C, gamma_depth=gamma_depth, lam=lam)
    response = np.abs(K.kernel @ G.matrix)
    assert np.array_equal(np.argmax(response, axis=0), np.arange(G.n_sources))


def test_sloreta_resolution_diagonal_is_the_normalization(gain):
    K = sloreta_kernel(gain, NoiseCovariance.identity(gain.n_sensors), gamma_depth=0.5)
    res = resolution_matrix(K, gain)
    assert res.shape == (gain.n_sources, gain.n_sources)
    assert np.allclose(np.diag(res), np.sqrt(K.normalization))


def test_sloreta_power_matches_scaled_unweighted_currents(gain, rng):
    C = NoiseCovariance.identity(gain.n_sensors)
    ep = _random_epoch(rng, gain.n_sensors)
    mne = mne_kernel(gain, C, gamma_depth=0.5)
    slor = sloreta_kernel(gain, C, gamma_depth=0.5)
    power = apply_kernel(slor, ep, mode="power")
    assert power.kind is EstimateKind.POWER
    currents = (mne.kernel @ ep.data) / depth_weights(gain, 0.5)[:, None]
    expected = sloreta_power(currents, slor.normalization)
    assert np.allclose(power.values, expected, rtol=1e-9)


def test_power_mode_is_sloreta_only(gain, rng):
    K = mne_kernel(gain, NoiseCovariance.identity(gain.n_sensors))
    with pytest.raises(DimensionError):
        apply_kernel(K, _random_epoch(rng, gain.n_sensors), mode="power")


def test_build_kernel_dispatches_and_rejects_wmem(gain):
    C = NoiseCovariance.identity(gain.n_sensors)
    assert build_kernel("dspm", gain, C).method is Method.DSPM
    with pytest.raises(ConfigError):
        build_kernel("wmem", gain, C)


# =============================================================================
# Applying kernels
# =============================================================================

def test_free_orientation_norm_mode(sensors, rng):
    free_gain = build_spherical_leadfield(sensors, SourceSpace.sphere(20, orientation="free"))
    K = mne_kernel(free_gain, NoiseCovariance.identity(sensors.n_sensors))
    ep = _random_epoch(rng, sensors.n_sensors)
    est = apply_kernel(K, ep, mode="norm")
    raw = (K.kernel @ ep.data).reshape(20, 3, ep.n_samples)
    assert est.kind is EstimateKind.NORM
    assert est.n_orient == 1
    assert np.allclose(est.values, np.linalg.norm(raw, axis=1))


def test_sensor_count_mismatch_is_a_dimension_error(gain, rng):
    K = mne_kernel(gain, NoiseCovariance.identity(gain.n_sensors))
    with pytest.raises(DimensionError):
        apply_kernel(K, _random_epoch(rng, gain.n_sensors - 1))


def test_kernel_save_load_round_trip(gain, tmp_path):
    K = dspm_kernel(gain, NoiseCovariance.identity(gain.n_sensors))
    K.save(tmp_path / "kernel_dspm")
    loaded = InverseKernel.load(tmp_path / "kernel_dspm.json")
    assert loaded.method is Method.DSPM
    assert np.array_equal(loaded.kernel, K.kernel)
    assert np.array_equal(loaded.normalization, K.normalization)
    assert loaded.fingerprint() == K.fingerprint()


# =============================================================================
# SourceEstimate
# =============================================================================

def _constant_estimate(value: float = 2.0) -> SourceEstimate:
    return SourceEstimate(np.full((2, 300), value), Method.MNE, 100.0, t0_index=100)


def test_estimate_windows_and_integration():
    est = _constant_estimate()
    assert est.window(-1.0, 0.0).shape == (2, 100)
    assert np.allclose(est.integrated_abs(0.0, 1.0), 2.0)
    assert np.allclose(est.integrated_abs(), 6.0)
    with pytest.raises(RangeError):
        est.window(-2.0, 0.0)


def test_threshold_percentile_zeroes_small_values():
    est = _constant_estimate()
    masked = est.threshold_percentile(np.array([1.0, -2.0, 3.0, 4.0]), 50.0)
    assert np.array_equal(masked, [0.0, 0.0, 3.0, 4.0])


def test_estimate_save_load_round_trip(tmp_path, rng):
    est = SourceEstimate(rng.standard_normal((4, 50)), Method.SLORETA, 250.0, 10,
                         provenance={"gain": "abc"})
    est.save(tmp_path / "estimate_sloreta")
    loaded = SourceEstimate.load(tmp_path / "estimate_sloreta.json")
    assert np.array_equal(loaded.values, est.values)
    assert loaded.method is Method.SLORETA
    assert loaded.provenance == {"gain": "abc"}
    assert loaded.same_layout(est)
