import json

import numpy as np
import pytest
import yaml
from click.testing import CliRunner

from sourceloc.cli import cli
from sourceloc.errors import ComparisonError, ConfigError, FileError
from sourceloc.inverse_linear import Method
from sourceloc.pipeline import (
    analyze_connectivity,
    build_gain,
    build_scenario,
    cmd_compare,
    cmd_connectivity,
    cmd_report,
    cmd_scouts,
    cmd_zones,
    deep_merge,
    load_config,
    preprocess_recording,
)
from sourceloc.pipeline.runner import localize
from sourceloc.signal import simulate_recording, white_noise_for_snr
from sourceloc.signal.simulate import pick_driving_sources

from conftest import SMALL_CONFIG


# =============================================================================
# Configuration
# =============================================================================

def test_defaults_validate():
    config = load_config()
    assert config.inverse.methods == ["mne", "dspm", "sloreta", "wmem"]
    assert config.connectivity.candidates == "ranked"
    assert tuple(config.connectivity.before) == (-1.0, -0.02)
    assert len(config.config_hash()) == 16
    assert config.config_hash() == load_config().config_hash()


def test_user_file_merges_over_defaults(small_config_file):
    config = load_config(small_config_file)
    assert config.geometry.n_sensors == 32
    assert config.preprocess.line_hz == 50.0
    assert config.seed == 7


def test_lambda_alias_round_trips():
    config = load_config(overrides={"inverse": {"lambda": 0.1}})
    assert config.inverse.lam == 0.1
    data = config.to_dict()
    assert data["inverse"]["lambda"] == 0.1
    assert "lam" not in data["inverse"]


@pytest.mark.parametrize("overrides, path", [
    ({"bogus": 1}, "bogus"),
    ({"inverse": {"bogus": 1}}, "inverse.bogus"),
    ({"inverse": {"methods": ["mne", "beamformer"]}}, "inverse.methods"),
    ({"inverse": {"lambda": -1.0}}, "inverse.lambda"),
    ({"preprocess": {"highpass_hz": 600.0}}, "preprocess.highpass_hz"),
    ({"wmem": {"n_parcels": 0}}, "wmem.n_parcels"),
    ({"simulation": {"duration": 4.0}}, "preprocess.epoch_pre_s"),
    ({"simulation": {"preset": "unknown"}}, "simulation.preset"),
])
def test_invalid_values_name_their_field(overrides, path):
    with pytest.raises(ConfigError, match=path.replace(".", r"\.")):
        load_config(overrides=overrides)


def test_missing_config_file_is_a_file_error(tmp_path):
    with pytest.raises(FileError):
        load_config(tmp_path / "absent.yaml")


def test_deep_merge_keeps_untouched_keys():
    merged = deep_merge({"a": {"x": 1, "y": 2}, "b": 3}, {"a": {"y": 5}, "c": 4})
    assert merged == {"a": {"x": 1, "y": 5}, "b": 3, "c": 4}


# =============================================================================
# Coupling raises the inter-zone alpha index
# =============================================================================

def _coupling_scenario(space) -> dict:
    """Independent band-limited drivers before the pulse, one shared driver after it."""
    picks = pick_driving_sources(space, 3)
    activities = []
    for src in picks["left"] + picks["right"]:
        common = {"source": int(src), "waveform": "noise", "amplitude": 1.0e-8,
                  "frequency": 10.0, "bandwidth": 8.0}
        activities.append({**common, "offset": 0.0, "driver": f"independent-{src}"})
        activities.append({**common, "onset": 0.0, "driver": "coupled"})
    return {"activities": activities}


def test_shared_driver_raises_alpha_for_every_method(space):
    overrides = deep_merge(SMALL_CONFIG, {
        "simulation": {"scenario": _coupling_scenario(space), "preset": None},
        "wmem": {"max_boxes": None, "band": [6.0, 14.0]},
        "connectivity": {"min_separation": 3, "candidates": "ranked"},
    })
    config = load_config(overrides=overrides)
    G = build_gain(config)
    scenario = build_scenario(config, G.source_space)
    sim = config.simulation
    noise = white_noise_for_snr(G, scenario, sim.sample_rate, sim.duration, config.seed, sim.snr)
    rec = simulate_recording(G, scenario, noise, sim.sample_rate, sim.duration, config.seed)
    ep, cov = preprocess_recording(config, rec)

    estimates = {m.value: localize(config, m.value, ep, G, cov) for m in Method}
    report = analyze_connectivity(config, estimates, G.source_space)
    assert report.alpha_increase() == {m.value: True for m in Method}


# =============================================================================
# Full report bundle
# =============================================================================

@pytest.fixture(scope="module")
def report_bundle(tmp_path_factory):
    out_dir = tmp_path_factory.mktemp("bundle")
    config = load_config(overrides=SMALL_CONFIG)
    summary = cmd_report(config, out_dir)
    return config, out_dir, summary


def _estimate_paths(out_dir):
    return [out_dir / f"estimate_{m.value}.json" for m in Method]


def test_report_writes_the_whole_bundle(report_bundle):
    _, out_dir, summary = report_bundle
    names = {p.name for p in out_dir.iterdir()}
    for expected in ("config.yaml", "scenario.json", "summary.json", "kansky_inter.csv", "kansky_intra.txt",
                     "zones.csv", "zones.txt", "wmem_power.csv", "wmem_power.svg", "wmem_diagnostics.jsonl",
                     "source_map_sloreta.svg", "estimate_wmem.json", "kernel_dspm.json", "connectivity"):
        assert expected in names
    data = json.loads(summary.read_text())
    assert set(data["alpha_increase"]) == {m.value for m in Method}
    assert len(data["kansky_inter"]) == 2 * len(Method)
    assert {row["v"] for row in data["kansky_inter"]} == {6}
    assert data["config_hash"] == report_bundle[0].config_hash()


def test_report_is_reproducible(report_bundle, tmp_path):
    config, first, _ = report_bundle
    cmd_report(load_config(overrides=SMALL_CONFIG), tmp_path)
    first_files = sorted(p.relative_to(first) for p in first.rglob("*") if p.is_file())
    second_files = sorted(p.relative_to(tmp_path) for p in tmp_path.rglob("*") if p.is_file())
    assert first_files == second_files
    for rel in first_files:
        assert (first / rel).read_bytes() == (tmp_path / rel).read_bytes(), str(rel)


def test_metric_subcommands_reuse_the_bundle(report_bundle, tmp_path):
    config, out_dir, _ = report_bundle
    paths = _estimate_paths(out_dir)
    scouts = cmd_scouts(config, tmp_path, paths[:2])
    assert [p.name for p in scouts] == ["scouts_mne.json", "scouts_dspm.json"]
    report = cmd_connectivity(config, tmp_path, paths)
    assert set(report.inter) == {m.value for m in Method}
    comparison = cmd_zones(config, tmp_path, paths)
    assert len(comparison.to_dataframe()) == len(Method) * len(config.zones.windows())
    assert (tmp_path / "zones.csv").exists()


def test_compare_rejects_estimates_from_another_config(report_bundle, tmp_path):
    config, out_dir, _ = report_bundle
    other = load_config(overrides=deep_merge(SMALL_CONFIG, {"seed": 8}))
    with pytest.raises(ComparisonError):
        cmd_compare(other, tmp_path, _estimate_paths(out_dir))
    with pytest.raises(ComparisonError):
        cmd_compare(config, tmp_path, _estimate_paths(out_dir)[:1])


# =============================================================================
# CLI
# =============================================================================

def test_cli_simulate(small_config_file, tmp_path):
    result = CliRunner().invoke(cli, ["simulate", "--config", str(small_config_file), "--out", str(tmp_path)])
    assert result.exit_code == 0, result.output
    assert (tmp_path / "recording.json").exists()
    assert (tmp_path / "gain.json").exists()
    with open(tmp_path / "config.yaml") as f:
        assert yaml.safe_load(f)["seed"] == 7


def test_cli_rejects_unknown_method(tmp_path):
    result = CliRunner().invoke(cli, ["localize", "--method", "beamformer", "--out", str(tmp_path)])
    assert result.exit_code == 2


def test_cli_missing_epoch_exits_with_file_error_code(small_config_file, tmp_path):
    result = CliRunner().invoke(cli, ["localize", "--method", "mne", "--config", str(small_config_file),
                                      "--out", str(tmp_path)])
    assert result.exit_code == 4


def test_cli_invalid_config_exits_with_config_error_code(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("preprocess:\n  highpass_hz: 600.0\n")
    result = CliRunner().invoke(cli, ["simulate", "--config", str(bad), "--out", str(tmp_path / "run")])
    assert result.exit_code == 2


def test_cli_compare_needs_two_estimates(small_config_file, tmp_path):
    result = CliRunner().invoke(cli, ["compare", "--config", str(small_config_file), "--out", str(tmp_path),
                                      str(tmp_path / "estimate_mne.json")])
    assert result.exit_code == 2


def test_cli_seed_override_changes_the_recording(small_config_file, tmp_path):
    runner = CliRunner()
    for seed in (1, 2):
        result = runner.invoke(cli, ["simulate", "--config", str(small_config_file), "--seed", str(seed),
                                     "--out", str(tmp_path / f"s{seed}")])
        assert result.exit_code == 0, result.output
    a = np.loadtxt(tmp_path / "s1" / "recording.csv", delimiter=",")
    b = np.loadtxt(tmp_path / "s2" / "recording.csv", delimiter=",")
    assert not np.array_equal(a, b)
