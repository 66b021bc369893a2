#!/usr/bin/env python3
"""
Pipeline stages behind the CLI subcommands.

Every stage reads and writes files in one bundle directory and stamps each
JSON it writes with the config hash:

    simulate    gain.{csv,json}  recording.{csv,json}  scenario.json  config.yaml
    preprocess  epoch.{csv,json}  noise_cov.{csv,json}
    localize    estimate_<method>.{csv,json}  (+ kernel_<method>, wMEM diagnostics)
    scouts      scouts_<method>.json
    connectivity  connectivity/  kansky_inter.{csv,txt}  kansky_intra.{csv,txt}
    zones       zones.{csv,txt}  zones_overlap_<window>.csv
    compare     all of connectivity + zones, chord/source-map SVGs, summary.json
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from loguru import logger

from ..connectivity import (
    ConnectivityGraph,
    Scout,
    auto_place_scouts,
    build_graph,
    extract_scout_series,
    intra_zone_graph,
    kansky_indices,
)
from ..errors import ComparisonError, DomainError, ScenarioError, SourceLocError
from ..headmodel import GainMatrix, SensorArray, SourceSpace, build_spherical_leadfield
from ..inverse_linear import Method, SourceEstimate, apply_kernel, build_kernel, lambda_from_snr
from ..signal import (
    Epoch,
    NoiseCovariance,
    Recording,
    Scenario,
    butterworth_highpass,
    epoch,
    estimate_noise_covariance,
    interpolate_artifact,
    notch_filter,
    preset_scenario,
    simulate_recording,
    white_noise_for_snr,
)
from ..utils import FLOAT_FORMAT, child_seeds, hash_array, log_progress, parallel_map, read_json, write_json
from ..wmem import dwt, parcellate, run_wmem, write_power_csv
from ..wmem.wavelet import max_levels
from ..zones import ZoneComparison, compare_methods
from .config import PipelineConfig
from .plots import plot_chord_diagram, plot_power_map, plot_source_map, set_pub_plot_context


GAIN = "gain"
RECORDING = "recording"
SCENARIO = "scenario.json"
EPOCH = "epoch"
NOISE_COV = "noise_cov"
CONFIG_COPY = "config.yaml"
SUMMARY = "summary.json"


def estimate_stem(method: str) -> str:
    return f"estimate_{Method(method).value}"


def stage_seed(seed: int, stage: int) -> int:
    """Independent integer seed for one pipeline stage."""
    return int(child_seeds(seed, stage + 1)[stage].generate_state(1)[0])


def _stamp(config: PipelineConfig, **extra: Any) -> Dict[str, Any]:
    return {"config_hash": config.config_hash(), **extra}


def _check_stamp(path: Path, config: PipelineConfig):
    """Warn when an input file was written under another configuration."""
    found = read_json(Path(path).with_suffix(".json")).get("config_hash")
    if found != config.config_hash():
        logger.warning(f"{path} was written with config {found}, current config is {config.config_hash()}")


# =============================================================================
# Geometry and scenario
# =============================================================================

def build_geometry(config: PipelineConfig) -> Tuple[SensorArray, SourceSpace]:
    g = config.geometry
    outer_radius = float(g.shells[-1][0])
    sensors = SensorArray.cap(g.n_sensors, outer_radius, g.sensor_z_min, g.reference, g.reference_index)
    space = SourceSpace.sphere(g.n_sources, g.source_radius, g.sampling, g.subdivisions, g.orientation)
    return sensors, space


def build_gain(config: PipelineConfig) -> GainMatrix:
    g = config.geometry
    sensors, space = build_geometry(config)
    return build_spherical_leadfield(sensors, space, g.shells, g.series_terms, g.orientation, config.n_jobs)


def build_scenario(config: PipelineConfig, space: SourceSpace) -> Scenario:
    sim = config.simulation
    if sim.scenario_file is not None:
        scenario = Scenario.load(Path(sim.scenario_file))
    elif sim.scenario is not None:
        scenario = Scenario.from_dict(sim.scenario)
    else:
        return preset_scenario(sim.preset, space, sim.pulse_time, sim.amplitude, sim.n_per_hemisphere,
                               sim.artifact_amplitude or None)
    scenario.pulse_time = sim.pulse_time
    for activity in scenario.activities:
        if not 0 <= activity.source < space.n_sources:
            raise ScenarioError(f"simulation.scenario: source {activity.source} outside 0..{space.n_sources - 1}")
    return scenario


def _noise(config: PipelineConfig, G: GainMatrix, scenario: Scenario) -> Optional[NoiseCovariance]:
    sim = config.simulation
    if sim.snr is not None:
        return white_noise_for_snr(G, scenario, sim.sample_rate, sim.duration, config.seed, sim.snr)
    if sim.noise_std:
        return NoiseCovariance.identity(G.n_sensors, sim.noise_std ** 2)
    return None


# =============================================================================
# simulate / preprocess
# =============================================================================

def cmd_simulate(config: PipelineConfig, out_dir: Path) -> Dict[str, Path]:
    """
    Simulate a recording from the configured scenario.

    Returns:
        Paths of the gain, recording, scenario and config files written
    """
    out_dir = Path(out_dir)
    log_progress(1, "Simulate recording", "start")
    G = build_gain(config)
    scenario = build_scenario(config, G.source_space)
    rec = simulate_recording(G, scenario, _noise(config, G, scenario), config.simulation.sample_rate,
                             config.simulation.duration, config.seed)
    paths = {
        "gain": G.save(out_dir / GAIN, extra=_stamp(config)),
        "recording": rec.save(out_dir / RECORDING, extra=_stamp(config, gain=G.fingerprint())),
        "scenario": write_json(out_dir / SCENARIO, _stamp(config, **scenario.to_dict())),
        "config": config.save(out_dir / CONFIG_COPY),
    }
    logger.info(f"Simulated {rec.n_sensors} x {rec.n_samples} recording -> {paths['recording']}")
    log_progress(1, "Simulate recording", "complete")
    return paths


def preprocess_recording(config: PipelineConfig, rec: Recording) -> Tuple[Epoch, NoiseCovariance]:
    """Artifact interpolation, high-pass, notch, epoching and baseline covariance."""
    pp = config.preprocess
    if pp.interpolate:
        rec = interpolate_artifact(rec, pp.cut_start_ms, pp.cut_end_ms, pp.noise_scale, stage_seed(config.seed, 1))
    if pp.highpass:
        rec = butterworth_highpass(rec, pp.highpass_hz, pp.highpass_order, pp.zero_phase)
    if pp.notch:
        rec = notch_filter(rec, pp.line_hz, pp.notch_bandwidth_hz, pp.zero_phase)
    ep = epoch(rec, pp.epoch_pre_s, pp.epoch_post_s)
    cov = estimate_noise_covariance(ep, tuple(pp.baseline), pp.regularization_floor)
    return ep, cov


def cmd_preprocess(config: PipelineConfig, out_dir: Path, recording_path: Optional[Path] = None) -> Dict[str, Path]:
    """Preprocess ``recording_path`` (default: the bundle's recording) into an epoch and noise covariance."""
    out_dir = Path(out_dir)
    recording_path = Path(recording_path or out_dir / RECORDING)
    log_progress(2, "Preprocess", "start")
    rec = Recording.load(recording_path)
    _check_stamp(recording_path, config)
    ep, cov = preprocess_recording(config, rec)
    paths = {
        "epoch": ep.save(out_dir / EPOCH, extra=_stamp(config, recording=hash_array(rec.data))),
        "noise_cov": cov.save(out_dir / NOISE_COV, extra=_stamp(config)),
    }
    log_progress(2, "Preprocess", "complete")
    return paths


# =============================================================================
# localize
# =============================================================================

def localize(config: PipelineConfig, method: str, ep: Epoch, G: GainMatrix,
             cov: NoiseCovariance, out_dir: Optional[Path] = None) -> SourceEstimate:
    """One inverse method on one epoch; wMEM side outputs go to ``out_dir`` when given."""
    method = Method(method)
    inv = config.inverse
    try:
        if method is Method.WMEM:
            parc = parcellate(G.source_space, config.wmem.n_parcels, config.seed)
            run = run_wmem(ep, G, parc, cov, config.wmem.wavelet_config(config.preprocess.baseline, config.n_jobs))
            est = run.estimate
            if out_dir is not None:
                run.write_diagnostics(Path(out_dir) / "wmem_diagnostics.jsonl")
                write_json(Path(out_dir) / "wmem_parcellation.json", _stamp(config, **parc.to_dict()))
                write_json(Path(out_dir) / "wmem_entropy.json", _stamp(
                    config, entropy_per_scale={str(j): v for j, v in run.entropy_per_scale().items()},
                    failed_boxes=run.n_failed, scales_used=run.scales_used))
            return est
        lam = inv.lam if inv.lam is not None else lambda_from_snr(G, cov.matrix, inv.gamma_depth, inv.snr)
        K = build_kernel(method, G, cov.matrix, inv.gamma_depth, lam)
        if out_dir is not None:
            K.save(Path(out_dir) / f"kernel_{method.value}", extra=_stamp(config))
        mode = inv.sloreta_mode if method is Method.SLORETA else "raw"
        return apply_kernel(K, ep, mode)
    except SourceLocError as e:
        e.args = (f"{method.display_name}: {e}",)
        raise


def _sensor_decomposition(config: PipelineConfig, ep: Epoch):
    w = config.wmem
    return dwt(ep, w.wavelet, min(w.levels, max_levels(ep.n_samples)), w.boundary_mode)


def cmd_localize(config: PipelineConfig, method: str, out_dir: Path, epoch_path: Optional[Path] = None,
                 gain_path: Optional[Path] = None, noise_path: Optional[Path] = None,
                 plot: bool = True) -> Path:
    """
    Localize the epoch with one method and write ``estimate_<method>``.

    Returns:
        Path of the estimate JSON sidecar
    """
    out_dir = Path(out_dir)
    method = Method(method)
    epoch_path = Path(epoch_path or out_dir / EPOCH)
    gain_path = Path(gain_path or out_dir / GAIN)
    noise_path = Path(noise_path or out_dir / NOISE_COV)
    log_progress(3, f"Localize ({method.display_name})", "start")
    ep = Epoch.load(epoch_path)
    G = GainMatrix.load(gain_path)
    cov = NoiseCovariance.load(noise_path)
    for path in (epoch_path, gain_path, noise_path):
        _check_stamp(path, config)

    est = localize(config, method, ep, G, cov, out_dir)
    est.provenance.update({"gain": G.fingerprint(), "epoch": hash_array(ep.data),
                           "noise_cov": hash_array(cov.matrix)})
    path = est.save(out_dir / estimate_stem(method.value), extra=_stamp(config))
    if method is Method.WMEM:
        dec = _sensor_decomposition(config, ep)
        write_power_csv(out_dir / "wmem_power.csv", dec)
        if plot:
            plot_power_map(dec, output_path=out_dir / "wmem_power.svg")
    log_progress(3, f"Localize ({method.display_name})", "complete")
    return path


def cmd_localize_all(config: PipelineConfig, out_dir: Path, methods: Optional[Sequence[str]] = None) -> List[Path]:
    """Every configured method, in parallel; figures are drawn afterwards on this thread."""
    methods = list(methods or config.inverse.methods)
    paths = parallel_map(lambda m: cmd_localize(config, m, out_dir, plot=False), methods, n_jobs=config.n_jobs)
    if Method.WMEM.value in methods:
        ep = Epoch.load(Path(out_dir) / EPOCH)
        dec = _sensor_decomposition(config, ep)
        plot_power_map(dec, output_path=Path(out_dir) / "wmem_power.svg")
    return paths


# =============================================================================
# Loading estimates for comparison
# =============================================================================

def load_estimates(config: PipelineConfig, paths: Sequence[Path],
                   require_hash: bool = True) -> Dict[str, SourceEstimate]:
    """
    Load estimates keyed by method name (repeated methods get '-2', '-3', ...).

    Raises:
        FileError: a file is missing
        ComparisonError: a file was written under another configuration, or layouts differ
    """
    expected = config.config_hash()
    estimates: Dict[str, SourceEstimate] = {}
    for path in paths:
        path = Path(path)
        json_path = path if path.suffix == ".json" else path.with_suffix(".json")
        meta = read_json(json_path)
        if require_hash and meta.get("config_hash") != expected:
            raise ComparisonError(
                f"{json_path.name} was produced with config {meta.get('config_hash')}, expected {expected}"
            )
        est = SourceEstimate.load(json_path)
        name, n = est.method.value, 1
        while name in estimates:
            n += 1
            name = f"{est.method.value}-{n}"
        estimates[name] = est
    names = list(estimates)
    for name in names[1:]:
        if not estimates[names[0]].same_layout(estimates[name]):
            raise ComparisonError(f"estimate '{name}' does not share geometry/timing with '{names[0]}'")
    return estimates


def display_name(name: str) -> str:
    base, _, suffix = name.partition("-")
    return Method(base).display_name + (f"-{suffix}" if suffix else "")


# =============================================================================
# scouts / connectivity
# =============================================================================

def place_scouts(config: PipelineConfig, est: SourceEstimate, space: SourceSpace) -> List[Scout]:
    c = config.connectivity
    window = tuple(c.placement_window) if c.placement_window is not None else None
    return auto_place_scouts(est, space, c.n_per_hemisphere, c.patch_radius, c.min_separation, window, c.candidates)


def cmd_scouts(config: PipelineConfig, out_dir: Path, estimate_paths: Sequence[Path]) -> List[Path]:
    """Place scouts on each estimate and write ``scouts_<name>.json``."""
    out_dir = Path(out_dir)
    _, space = build_geometry(config)
    estimates = load_estimates(config, estimate_paths, require_hash=False)
    paths = []
    for name, est in estimates.items():
        scouts = [extract_scout_series(est, s) for s in place_scouts(config, est, space)]
        paths.append(write_json(out_dir / f"scouts_{name}.json",
                                _stamp(config, method=name, scouts=[s.to_dict() for s in scouts])))
    return paths


@dataclass
class ConnectivityReport:
    """Inter-scout and intra-zone graphs per estimate and window, plus the Kansky rows."""

    inter: Dict[str, Dict[str, ConnectivityGraph]] = field(default_factory=dict)
    intra: Dict[str, Dict[str, ConnectivityGraph]] = field(default_factory=dict)
    scouts: Dict[str, List[Scout]] = field(default_factory=dict)

    def kansky_frame(self, scope: str = "inter") -> pd.DataFrame:
        graphs = self.inter if scope == "inter" else self.intra
        rows = []
        for name, by_window in graphs.items():
            for window, g in by_window.items():
                row = {"method": display_name(name), "window": window, "e": g.n_edges, "v": g.n_vertices,
                       "p": g.subgraph_count, "beta": np.nan, "gamma": np.nan, "alpha": np.nan}
                try:
                    row.update(kansky_indices(g).to_dict())
                except DomainError as e:
                    logger.warning(f"{name}/{window}: {e}")
                rows.append(row)
        return pd.DataFrame(rows, columns=["method", "window", "e", "v", "p", "beta", "gamma", "alpha"])

    def format_table(self, scope: str = "inter") -> str:
        """Kansky table with one column per method x window and rows e, v, beta, gamma, alpha."""
        frame = self.kansky_frame(scope)
        header = ["Index"] + [f"{m} {w}" for m, w in zip(frame["method"], frame["window"])]
        body = []
        for key, fmt in (("e", "{:d}"), ("v", "{:d}"), ("beta", "{:.2f}"), ("gamma", "{:.2f}"), ("alpha", "{:.2f}")):
            cells = []
            for value in frame[key]:
                cells.append("nan" if pd.isna(value) else fmt.format(int(value) if fmt == "{:d}" else float(value)))
            body.append([key] + cells)
        widths = [max(len(r[i]) for r in [header] + body) for i in range(len(header))]
        lines = ["  ".join(cell.ljust(widths[i]) if i == 0 else cell.rjust(widths[i])
                           for i, cell in enumerate(row)) for row in [header] + body]
        return "\n".join([lines[0], "-" * len(lines[0])] + lines[1:]) + "\n"

    def alpha_increase(self) -> Dict[str, Optional[bool]]:
        """Per estimate: is the inter-zone alpha after the pulse above alpha before it?"""
        out = {}
        for name, by_window in self.inter.items():
            try:
                out[name] = kansky_indices(by_window["after"]).alpha > kansky_indices(by_window["before"]).alpha
            except (DomainError, KeyError):
                out[name] = None
        return out


def _strongest_scout(est: SourceEstimate, scouts: List[Scout], window: Tuple[float, float]) -> Scout:
    feature = est.integrated_abs(*window)
    return max(scouts, key=lambda s: (feature[s.center], -s.center))


def analyze_connectivity(config: PipelineConfig, estimates: Dict[str, SourceEstimate],
                         space: SourceSpace) -> ConnectivityReport:
    """Scouts per estimate, then before/after inter-scout and intra-zone graphs."""
    c = config.connectivity
    windows = {"before": tuple(c.before), "after": tuple(c.after)}
    report = ConnectivityReport()
    for name, est in estimates.items():
        scouts = place_scouts(config, est, space)
        report.scouts[name] = scouts
        report.inter[name], report.intra[name] = {}, {}
        focus = _strongest_scout(est, scouts, windows["after"])
        for window_name, window in windows.items():
            extracted = [extract_scout_series(est, s, window) for s in scouts]
            report.inter[name][window_name] = build_graph(extracted, est.sample_rate, c.threshold, c.max_lag_s,
                                                          c.on_undefined, config.n_jobs)
            report.intra[name][window_name] = intra_zone_graph(est, space, focus, c.intra_vertices, c.threshold,
                                                               c.max_lag_s, window, config.n_jobs)
        logger.info(f"{display_name(name)}: inter-zone edges before/after = "
                    f"{report.inter[name]['before'].n_edges}/{report.inter[name]['after'].n_edges}")
    return report


def write_connectivity(config: PipelineConfig, report: ConnectivityReport, out_dir: Path,
                       chord_diagrams: bool = True) -> List[Path]:
    out_dir = Path(out_dir)
    graph_dir = out_dir / "connectivity"
    paths: List[Path] = []
    for scope, graphs in (("inter", report.inter), ("intra", report.intra)):
        for name, by_window in graphs.items():
            for window, g in by_window.items():
                stem = graph_dir / f"{scope}_{name}_{window}"
                paths.extend(g.save(stem, extra=_stamp(config, method=name, window=window, scope=scope)))
                if chord_diagrams and scope == "inter":
                    title = f"{display_name(name)} {window}: e={g.n_edges}, v={g.n_vertices}"
                    paths.append(plot_chord_diagram(g, title, graph_dir / f"chord_{name}_{window}.svg"))
        frame = report.kansky_frame(scope)
        csv_path = out_dir / f"kansky_{scope}.csv"
        frame.to_csv(csv_path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
        txt_path = out_dir / f"kansky_{scope}.txt"
        txt_path.write_text(report.format_table(scope))
        paths.extend([csv_path, txt_path])
    for name, scouts in report.scouts.items():
        paths.append(write_json(graph_dir / f"scouts_{name}.json",
                                _stamp(config, method=name, scouts=[s.to_dict() for s in scouts])))
    return paths


def cmd_connectivity(config: PipelineConfig, out_dir: Path, estimate_paths: Sequence[Path]) -> ConnectivityReport:
    """Connectivity graphs and Kansky tables for each estimate."""
    log_progress(4, "Connectivity", "start")
    _, space = build_geometry(config)
    estimates = load_estimates(config, estimate_paths, require_hash=False)
    set_pub_plot_context()
    report = analyze_connectivity(config, estimates, space)
    write_connectivity(config, report, out_dir)
    log_progress(4, "Connectivity", "complete")
    return report


# =============================================================================
# zones
# =============================================================================

def analyze_zones(config: PipelineConfig, estimates: Dict[str, SourceEstimate]) -> ZoneComparison:
    z = config.zones
    return compare_methods(estimates, z.windows(), z.k, config.seed, config.n_jobs, z.max_iter)


def cmd_zones(config: PipelineConfig, out_dir: Path, estimate_paths: Sequence[Path]) -> ZoneComparison:
    """Detection-rate table and active-set overlaps for each estimate."""
    log_progress(5, "Active zones", "start")
    estimates = load_estimates(config, estimate_paths, require_hash=False)
    comparison = analyze_zones(config, estimates)
    comparison.save(Path(out_dir), "zones")
    log_progress(5, "Active zones", "complete")
    return comparison


# =============================================================================
# compare / report
# =============================================================================

def cmd_compare(config: PipelineConfig, out_dir: Path, estimate_paths: Sequence[Path]) -> Path:
    """
    Full comparison bundle for two or more estimates of one configuration.

    Emits connectivity graphs, Kansky tables, the zone table, chord diagrams,
    source maps and ``summary.json``.

    Raises:
        ComparisonError: fewer than 2 estimates, or estimates from another config
        FileError: an estimate file is missing
    """
    out_dir = Path(out_dir)
    if len(estimate_paths) < 2:
        raise ComparisonError(f"compare needs at least 2 estimates, got {len(estimate_paths)}")
    log_progress(6, "Compare methods", "start")
    estimates = load_estimates(config, estimate_paths)
    _, space = build_geometry(config)
    set_pub_plot_context()

    report = analyze_connectivity(config, estimates, space)
    write_connectivity(config, report, out_dir)
    zones = analyze_zones(config, estimates)
    zones.save(out_dir, "zones")

    after = tuple(config.zones.after)
    for name, est in estimates.items():
        shown = est.threshold_percentile(est.integrated_abs(*after), config.inverse.threshold_percentile)
        plot_source_map(space, shown, f"{display_name(name)} {after[0]:g}..{after[1]:g} s",
                        highlight=[s.center for s in report.scouts[name]],
                        output_path=out_dir / f"source_map_{name}.svg")

    zone_frame = zones.to_dataframe()
    summary = _stamp(
        config,
        estimates={name: {"method": est.method.value, "file": Path(p).with_suffix(".json").name,
                          "provenance": est.provenance}
                   for (name, est), p in zip(estimates.items(), estimate_paths)},
        kansky_inter=report.kansky_frame("inter").to_dict(orient="records"),
        kansky_intra=report.kansky_frame("intra").to_dict(orient="records"),
        alpha_increase=report.alpha_increase(),
        scouts={name: [s.to_dict() for s in scouts] for name, scouts in report.scouts.items()},
        zones=zone_frame.to_dict(orient="records"),
        overlaps={w: frame.to_dict() for w, frame in zones.overlaps.items()},
    )
    path = write_json(out_dir / SUMMARY, summary)
    log_progress(6, "Compare methods", "complete")
    return path


def cmd_report(config: PipelineConfig, out_dir: Path) -> Path:
    """simulate -> preprocess -> localize (every method) -> compare, into one bundle."""
    out_dir = Path(out_dir)
    cmd_simulate(config, out_dir)
    cmd_preprocess(config, out_dir)
    estimates = cmd_localize_all(config, out_dir)
    if len(estimates) < 2:
        logger.info("Only one method configured; skipping the comparison")
        log_progress(6, "Compare methods", "skip")
        return estimates[0]
    return cmd_compare(config, out_dir, estimates)
