import numpy as np
import pytest

from sourceloc.errors import ConfigError, GeometryError, SingularSourceError
from sourceloc.headmodel import (
    GainMatrix,
    SensorArray,
    SourceSpace,
    build_spherical_leadfield,
    depth_weights,
    make_shells,
)


def _single_source(position, orientation) -> SourceSpace:
    orientation = np.asarray(orientation, dtype=float)
    return SourceSpace(np.array([position], dtype=float), np.array([orientation / np.linalg.norm(orientation)]))


def test_average_referenced_columns_sum_to_zero(gain):
    sums = np.abs(gain.matrix.sum(axis=0))
    norms = np.linalg.norm(gain.matrix, axis=0)
    assert np.all(sums <= 1e-9 * norms)


def test_centre_dipole_gives_degree_one_pattern(sensors):
    space = _single_source([0.0, 0.0, 0.0], [1.0, 0.0, 0.0])
    G = build_spherical_leadfield(sensors, space)
    column = G.matrix[:, 0]
    pattern = sensors.directions[:, 0] - sensors.directions[:, 0].mean()
    scale = float(column @ pattern / (pattern @ pattern))
    assert scale > 0
    assert np.allclose(column, scale * pattern, rtol=0, atol=1e-10 * np.abs(column).max())


def test_single_shell_radial_dipole_matches_generating_function():
    radius, sigma = 0.09, 0.33
    sensors = SensorArray.cap(32, radius=radius, reference="electrode", reference_index=0)
    space = _single_source([0.0, 0.0, 0.7 * radius], [0.0, 0.0, 1.0])
    G = build_spherical_leadfield(sensors, space, shells=[(radius, sigma)], series_terms=60)

    # sum_{n>=1} (2n + 1) b^(n-1) P_n(x) from the Legendre generating function
    b = 0.7
    x = sensors.directions[:, 2]
    g = 1.0 - 2.0 * b * x + b * b
    series = 2.0 * (x - b) * g ** -1.5 + (g ** -0.5 - 1.0) / b
    oracle = series / (4.0 * np.pi * sigma * radius ** 2)
    oracle = oracle - oracle[0]

    error = np.linalg.norm(G.matrix[:, 0] - oracle) / np.linalg.norm(oracle)
    assert error < 1e-3


def test_superposition(gain, rng):
    s1, s2 = rng.standard_normal((2, gain.n_sources))
    combined = gain.forward(2.0 * s1 - 0.5 * s2)
    assert np.allclose(combined, 2.0 * gain.forward(s1) - 0.5 * gain.forward(s2), rtol=1e-12, atol=0)


def test_doubling_moment_doubles_potentials(sensors):
    space = _single_source([0.01, 0.02, 0.05], [0.3, -0.2, 1.0])
    G = build_spherical_leadfield(sensors, space)
    assert np.allclose(G.forward(np.array([2.0])), 2.0 * G.matrix[:, 0])


def test_radial_dipole_weakens_with_depth(sensors):
    norms = []
    for r in (0.02, 0.04, 0.06, 0.075):
        G = build_spherical_leadfield(sensors, _single_source([0.0, 0.0, r], [0.0, 0.0, 1.0]))
        norms.append(np.linalg.norm(G.matrix))
    assert np.all(np.diff(norms) > 0)


def test_free_orientation_has_three_columns_per_source(sensors):
    space = SourceSpace.sphere(20, orientation="free")
    G = build_spherical_leadfield(sensors, space)
    assert G.n_columns == 60
    assert G.n_sources == 20
    assert G.n_orient == 3


def test_leadfield_is_identical_for_any_worker_count(sensors, space):
    serial = build_spherical_leadfield(sensors, space, n_jobs=1)
    threaded = build_spherical_leadfield(sensors, space, n_jobs=4)
    assert np.array_equal(serial.matrix, threaded.matrix)


def test_source_outside_innermost_shell_is_rejected(sensors):
    space = _single_source([0.0, 0.0, 0.082], [0.0, 0.0, 1.0])
    with pytest.raises(GeometryError, match="innermost shell"):
        build_spherical_leadfield(sensors, space)


def test_sensors_off_the_outer_shell_are_rejected(space):
    sensors = SensorArray.cap(16, radius=0.1)
    with pytest.raises(GeometryError):
        build_spherical_leadfield(sensors, space)


def test_non_increasing_radii_are_rejected():
    with pytest.raises(ConfigError, match="strictly increasing"):
        make_shells([(0.08, 0.33), (0.08, 0.0042), (0.09, 0.33)])
    with pytest.raises(ConfigError):
        make_shells([(0.08, 0.33), (0.09, 0.0)])


def test_series_truncation_below_minimum_is_rejected(sensors, space):
    with pytest.raises(ConfigError, match="series_terms"):
        build_spherical_leadfield(sensors, space, series_terms=10)


def test_depth_weights_by_hand():
    G = np.diag([1.0, 2.0, 3.0])
    assert np.allclose(depth_weights(G, 0.5), [1.0, 0.5, 1.0 / 3.0])


def test_depth_weights_with_zero_exponent_are_ones(gain):
    assert np.array_equal(depth_weights(gain, 0.0), np.ones(gain.n_sources))


def test_depth_weights_scale_homogeneously(rng):
    matrix = rng.standard_normal((6, 9))
    G = GainMatrix.from_array(matrix, "free")
    scaled = matrix.copy()
    scaled[:, 3:6] *= 2.0
    f = depth_weights(G, 0.5)
    f_scaled = depth_weights(GainMatrix.from_array(scaled, "free"), 0.5)
    assert np.isclose(f_scaled[1], f[1] * 2.0 ** -1.0)
    assert np.allclose(np.delete(f_scaled, 1), np.delete(f, 1))


def test_depth_weights_ignore_column_order_within_a_source(rng):
    matrix = rng.standard_normal((6, 9))
    permuted = matrix[:, [2, 0, 1, 3, 5, 4, 8, 7, 6]]
    assert np.allclose(depth_weights(GainMatrix.from_array(matrix, "free")),
                       depth_weights(GainMatrix.from_array(permuted, "free")))


def test_zero_lead_field_cannot_be_depth_weighted():
    G = np.array([[1.0, 0.0], [2.0, 0.0]])
    with pytest.raises(SingularSourceError):
        depth_weights(G, 0.5)
    assert np.array_equal(depth_weights(G, 0.0), [1.0, 1.0])


def test_gain_matrix_save_load_keeps_geometry(gain, tmp_path):
    gain.save(tmp_path / "gain")
    loaded = GainMatrix.load(tmp_path / "gain.json")
    assert np.array_equal(loaded.matrix, gain.matrix)
    assert loaded.sensor_array.labels == gain.sensor_array.labels
    assert loaded.source_space.adjacency == gain.source_space.adjacency
    assert loaded.series_terms == gain.series_terms
    assert loaded.fingerprint() == gain.fingerprint()


def test_icosahedral_sampling_vertex_count():
    space = SourceSpace.sphere(method="icosahedral", subdivisions=2)
    assert space.n_sources == 10 * 4 ** 2 + 2
    assert all(len(n) >= 5 for n in space.adjacency)
