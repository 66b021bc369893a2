import networkx as nx
import numpy as np
import pytest

from sourceloc.connectivity import (
    ConnectivityGraph,
    Scout,
    auto_place_scouts,
    build_graph,
    build_graph_from_series,
    cross_correlation,
    extract_scout_series,
    intra_zone_graph,
    kansky_from_counts,
    kansky_indices,
    nearest_sources,
)
from sourceloc.errors import ConfigError, DegenerateError, DomainError, PlacementError, UndefinedCorrelationError
from sourceloc.inverse_linear import Method, SourceEstimate
from sourceloc.wmem import adjacency_graph


# =============================================================================
# Kansky indices
# =============================================================================

# (e, beta, gamma, alpha) reference rows with p = 1, rounded to two decimals
TEN_SCOUT_TABLE = [
    (21, 2.1, 0.46, 0.33),
    (26, 2.6, 0.57, 0.47),
    (25, 2.5, 0.55, 0.44),
    (27, 2.7, 0.60, 0.50),
    (25, 2.5, 0.55, 0.44),
    (28, 2.8, 0.62, 0.53),
    (33, 3.3, 0.73, 0.667),
    (29, 2.9, 0.64, 0.56),
]

FIFTEEN_VERTEX_TABLE = [
    (58, 3.87, 0.55, 0.48),
    (49, 3.27, 0.47, 0.38),
    (55, 3.66, 0.52, 0.45),
    (55, 3.66, 0.52, 0.45),
    (51, 3.40, 0.49, 0.41),
    (47, 3.13, 0.45, 0.36),
    (53, 3.53, 0.50, 0.43),
    (53, 3.53, 0.50, 0.43),
]


@pytest.mark.parametrize("e, beta, gamma, alpha", TEN_SCOUT_TABLE)
def test_kansky_indices_for_ten_scouts(e, beta, gamma, alpha):
    k = kansky_from_counts(e, 10, 1)
    assert k.beta == pytest.approx(beta, abs=0.01)
    assert k.gamma == pytest.approx(gamma, abs=0.01)
    assert k.alpha == pytest.approx(alpha, abs=0.01)


@pytest.mark.parametrize("e, beta, gamma, alpha", FIFTEEN_VERTEX_TABLE)
def test_kansky_indices_for_fifteen_vertices(e, beta, gamma, alpha):
    k = kansky_from_counts(e, 15, 1)
    assert k.beta == pytest.approx(beta, abs=0.01)
    assert k.gamma == pytest.approx(gamma, abs=0.01)
    assert k.alpha == pytest.approx(alpha, abs=0.01)


def test_complete_graph_has_unit_gamma_and_alpha():
    k = kansky_from_counts(45, 10, 1)
    assert k.gamma == pytest.approx(1.0)
    assert k.alpha == pytest.approx(1.0)


@pytest.mark.parametrize("v", [0, 1, 2])
def test_too_few_vertices_is_a_domain_error(v):
    with pytest.raises(DomainError):
        kansky_from_counts(0, v, 1)


def test_impossible_edge_count_is_a_domain_error():
    with pytest.raises(DomainError):
        kansky_from_counts(46, 10, 1)


# =============================================================================
# Cross-correlation
# =============================================================================

def test_cross_correlation_recovers_a_delay(rng):
    x = rng.standard_normal(1000)
    y = rng.standard_normal(1000)
    y[5:] = x[:-5]
    r, lag = cross_correlation(x, y, 100.0, 0.1)
    assert lag == 5
    assert r == pytest.approx(1.0, abs=1e-12)
    r_back, lag_back = cross_correlation(y, x, 100.0, 0.1)
    assert lag_back == -5
    assert r_back == pytest.approx(r)


def test_equal_peaks_prefer_the_positive_lag():
    t = np.arange(400)
    x = np.sin(2 * np.pi * t / 20.0)
    y = np.cos(2 * np.pi * t / 20.0)
    r, lag = cross_correlation(x, y, 100.0, 0.1)
    assert lag == 5
    assert r == pytest.approx(1.0, abs=1e-9)


def test_anticorrelation_counts_as_correlation(rng):
    x = rng.standard_normal(500)
    r, lag = cross_correlation(x, -2.0 * x, 100.0, 0.05)
    assert lag == 0
    assert r == pytest.approx(1.0)


def test_zero_variance_series_is_undefined(rng):
    with pytest.raises(UndefinedCorrelationError):
        cross_correlation(np.ones(200), rng.standard_normal(200), 100.0)


# =============================================================================
# Graphs
# =============================================================================

def _three_series(rng):
    a = rng.standard_normal(1000)
    return [a, a + 0.1 * rng.standard_normal(1000), rng.standard_normal(1000)]


def test_threshold_decides_edges(rng):
    g = build_graph_from_series(_three_series(rng), ["a", "b", "c"], 100.0, threshold=0.7)
    assert g.edges == [(0, 1)]
    assert (g.n_edges, g.n_vertices, g.subgraph_count) == (1, 3, 2)
    assert kansky_indices(g).alpha == pytest.approx(0.0)
    assert g.with_threshold(0.0).n_edges == 3
    assert g.adjacency()[0, 1] == pytest.approx(g.correlations[0, 1])


def test_undefined_pairs_are_skipped_or_raised(rng):
    series = _three_series(rng) + [np.zeros(1000)]
    with pytest.raises(UndefinedCorrelationError):
        build_graph_from_series(series, list("abcd"), 100.0)
    g = build_graph_from_series(series, list("abcd"), 100.0, on_undefined="skip")
    assert np.isnan(g.correlations[0, 3])
    assert 3 not in {v for e in g.edges for v in e}


def test_graph_is_identical_for_any_worker_count(rng):
    series = [rng.standard_normal(500) for _ in range(6)]
    serial = build_graph_from_series(series, list("abcdef"), 100.0, threshold=0.05, n_jobs=1)
    threaded = build_graph_from_series(series, list("abcdef"), 100.0, threshold=0.05, n_jobs=4)
    assert np.array_equal(serial.correlations, threaded.correlations)
    assert serial.edges == threaded.edges


def test_graph_save_writes_json_and_adjacency(rng, tmp_path):
    g = build_graph_from_series(_three_series(rng), ["a", "b", "c"], 100.0)
    json_path, csv_path = g.save(tmp_path / "connectivity" / "graph_mne_after")
    assert json_path.name == "graph_mne_after.json"
    assert csv_path.name == "graph_mne_after_adjacency.csv"
    assert g.to_dict()["p"] == 2


def test_graph_needs_two_vertices(rng):
    with pytest.raises(ConfigError):
        build_graph_from_series([rng.standard_normal(100)], ["a"], 100.0)


def test_build_graph_needs_extracted_series():
    with pytest.raises(ConfigError):
        build_graph([Scout("L1", [0], "left", 0), Scout("R1", [1], "right", 1)], 100.0)


def test_edges_shrink_as_the_threshold_rises(rng):
    base = rng.standard_normal((3, 600))
    values = rng.standard_normal((6, 3)) @ base + 0.5 * rng.standard_normal((6, 600))
    est = SourceEstimate(values, Method.MNE, 100.0)
    scouts = [extract_scout_series(est, Scout(f"S{i}", [i], "left", i)) for i in range(6)]
    previous = None
    for threshold in np.linspace(0.0, 1.0, 11):
        edges = set(build_graph(scouts, 100.0, threshold=threshold).edges)
        if previous is not None:
            assert edges <= previous
        previous = edges
    assert len(set(build_graph(scouts, 100.0, threshold=0.0).edges)) == 15


# =============================================================================
# Scouts
# =============================================================================

def _peaked_estimate(space, sources, n_samples: int = 200) -> SourceEstimate:
    rng = np.random.default_rng(0)
    values = np.zeros((space.n_sources, n_samples))
    for rank, s in enumerate(sources):
        values[s] = (len(sources) - rank) * (1.0 + 0.1 * rng.standard_normal(n_samples))
    return SourceEstimate(values, Method.MNE, 100.0, t0_index=100)


def _first_source_per_hemisphere(space):
    left = int(np.flatnonzero(space.hemispheres == "left")[0])
    right = int(np.flatnonzero(space.hemispheres == "right")[0])
    return left, right


def test_scouts_sit_on_the_strongest_source_of_each_hemisphere(space):
    left, right = _first_source_per_hemisphere(space)
    est = _peaked_estimate(space, [left, right])
    scouts = auto_place_scouts(est, space, n_per_hemisphere=1, patch_radius=1)
    assert [s.name for s in scouts] == ["L1", "R1"]
    assert [s.center for s in scouts] == [left, right]
    assert set(space.adjacency[left]) | {left} == set(scouts[0].members)


def test_too_few_maxima_is_a_placement_error(space):
    left, right = _first_source_per_hemisphere(space)
    est = _peaked_estimate(space, [left, right])
    with pytest.raises(PlacementError) as info:
        auto_place_scouts(est, space, n_per_hemisphere=2)
    assert (info.value.found, info.value.requested) == (1, 2)


def test_zero_estimate_cannot_host_scouts(space):
    est = SourceEstimate(np.zeros((space.n_sources, 50)), Method.MNE, 100.0)
    with pytest.raises(DegenerateError):
        auto_place_scouts(est, space, n_per_hemisphere=1)


def test_ranked_candidates_keep_scouts_separated(space, rng):
    est = SourceEstimate(rng.standard_normal((space.n_sources, 100)), Method.MNE, 100.0)
    scouts = auto_place_scouts(est, space, n_per_hemisphere=3, patch_radius=0,
                               min_separation=3, candidates="ranked")
    graph = adjacency_graph(space)
    for a in scouts:
        for b in scouts:
            if a.name < b.name and a.hemisphere == b.hemisphere:
                assert nx.shortest_path_length(graph, a.center, b.center) >= 3


def test_svd_series_follows_the_member_mean(space):
    t = np.linspace(0.0, 1.0, 200)
    shape = np.sin(2 * np.pi * 5 * t) + 0.3
    values = np.zeros((space.n_sources, 200))
    weights = np.array([1.0, 2.0, 0.5])
    values[[4, 5, 6]] = weights[:, None] * shape[None, :]
    est = SourceEstimate(values, Method.DSPM, 200.0)
    scout = extract_scout_series(est, Scout("L1", [4, 5, 6], "left", 5))
    assert np.allclose(scout.series, np.linalg.norm(weights) * shape)
    assert scout.captured_variance == pytest.approx(1.0)

    flipped = SourceEstimate(-values, Method.DSPM, 200.0)
    assert np.allclose(extract_scout_series(flipped, Scout("L1", [4, 5, 6], "left", 5)).series,
                       -np.linalg.norm(weights) * shape)


def test_svd_series_ignores_member_order(rng):
    est = SourceEstimate(rng.standard_normal((20, 150)), Method.SLORETA, 100.0)
    members = [3, 8, 11, 15]
    reference = extract_scout_series(est, Scout("L1", members, "left", 3))
    for order in ([15, 3, 11, 8], [8, 15, 3, 11]):
        shuffled = extract_scout_series(est, Scout("L1", order, "left", 3))
        assert shuffled.members == members
        assert np.allclose(shuffled.series, reference.series, rtol=0, atol=1e-10)
        assert shuffled.captured_variance == pytest.approx(reference.captured_variance)


def test_silent_scout_is_degenerate(space):
    est = SourceEstimate(np.zeros((space.n_sources, 50)), Method.MNE, 100.0)
    with pytest.raises(DegenerateError):
        extract_scout_series(est, Scout("L1", [0, 1], "left", 0))


def test_nearest_sources_start_from_the_centre(space):
    members = nearest_sources(adjacency_graph(space), space, 10, 8)
    assert len(members) == 8
    assert 10 in members
    if len(space.adjacency[10]) < 8:
        assert set(space.adjacency[10]) <= set(members)


def test_intra_zone_graph_has_the_requested_vertices(space, rng):
    est = SourceEstimate(rng.standard_normal((space.n_sources, 300)), Method.SLORETA, 100.0, t0_index=100)
    scout = Scout("R1", [20], "right", 20)
    g = intra_zone_graph(est, space, scout, n_vertices=8, window=(0.0, 2.0))
    assert isinstance(g, ConnectivityGraph)
    assert g.n_vertices == 8
    assert all(label.startswith("R1:") for label in g.labels)
    with pytest.raises(ConfigError):
        intra_zone_graph(est, space, scout, n_vertices=1)
