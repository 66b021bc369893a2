#!/usr/bin/env python3
"""
PipelineConfig - the validated configuration tree shared by every subcommand.

A user YAML file is merged over the packaged ``configs/default.yaml`` and
checked field by field; errors name the dotted path of the offending field.
"""

from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import yaml

from ..errors import ConfigError, FileError
from ..headmodel import DEFAULT_SHELLS, OrientationMode, Reference, make_shells
from ..inverse_linear import Method
from ..utils import hash_payload
from ..wmem import BoundaryMode, WaveletConfig


# =============================================================================
# Constants and Path Configuration
# =============================================================================

SCRIPT_DIR = Path(__file__).parent.resolve()  # src/pipeline/
SRC_DIR = SCRIPT_DIR.parent  # src/
CONFIGS_DIR = SRC_DIR / "configs"
DEFAULT_CONFIG = CONFIGS_DIR / "default.yaml"

SCENARIO_PRESETS = ("zero", "alpha", "tms_coupling")


def _check(condition: bool, path: str, message: str):
    if not condition:
        raise ConfigError(f"{path}: {message}")


def _window(value: Any, path: str) -> Tuple[float, float]:
    try:
        start, end = (float(v) for v in value)
    except (TypeError, ValueError):
        raise ConfigError(f"{path}: must be a [start_s, end_s] pair, got {value!r}")
    _check(end > start, path, f"end must follow start, got {value!r}")
    return start, end


# =============================================================================
# Sections
# =============================================================================

@dataclass
class GeometryConfig:
    """Sensor cap, source space and spherical head model."""

    n_sensors: int = 64
    sensor_z_min: float = -0.3
    reference: str = Reference.AVERAGE.value
    reference_index: int = 0
    n_sources: int = 200
    sampling: str = "fibonacci"
    subdivisions: Optional[int] = None
    source_radius: float = 0.07
    orientation: str = OrientationMode.FIXED.value
    shells: List[List[float]] = field(default_factory=lambda: [list(s) for s in DEFAULT_SHELLS])
    series_terms: int = 60

    def validate(self, path: str = "geometry"):
        _check(self.n_sensors >= 2, f"{path}.n_sensors", f"must be >= 2, got {self.n_sensors}")
        _check(-1.0 <= self.sensor_z_min < 1.0, f"{path}.sensor_z_min", "must be in [-1, 1)")
        _check(self.reference in [r.value for r in Reference], f"{path}.reference",
               f"'{self.reference}' (valid: {[r.value for r in Reference]})")
        _check(0 <= self.reference_index < self.n_sensors, f"{path}.reference_index", "out of range")
        _check(self.n_sources >= 4, f"{path}.n_sources", f"must be >= 4, got {self.n_sources}")
        _check(self.sampling in ("fibonacci", "icosahedral"), f"{path}.sampling",
               f"'{self.sampling}' (valid: fibonacci, icosahedral)")
        _check(self.orientation in [o.value for o in OrientationMode], f"{path}.orientation",
               f"'{self.orientation}' (valid: {[o.value for o in OrientationMode]})")
        try:
            shells = make_shells(self.shells)
        except (ConfigError, TypeError, IndexError, ValueError) as e:
            raise ConfigError(f"{path}.shells: {e}")
        _check(0 < self.source_radius < shells[0].radius, f"{path}.source_radius",
               f"must lie strictly inside the innermost shell ({shells[0].radius} m)")
        _check(self.series_terms >= 20, f"{path}.series_terms", f"must be >= 20, got {self.series_terms}")


@dataclass
class SimulationConfig:
    """Synthetic recording: scenario, timing and sensor noise."""

    preset: Optional[str] = "tms_coupling"
    scenario: Optional[Dict[str, Any]] = None
    scenario_file: Optional[str] = None
    sample_rate: float = 1000.0
    duration: float = 8.0
    pulse_time: float = 3.0
    amplitude: float = 1e-8
    n_per_hemisphere: int = 5
    snr: Optional[float] = 5.0
    noise_std: Optional[float] = None
    artifact_amplitude: Optional[float] = 1e-4

    def validate(self, path: str = "simulation"):
        # scenario_file wins over an inline scenario, which wins over the preset
        _check(not (self.scenario is not None and self.scenario_file is not None), path,
               "set at most one of scenario, scenario_file")
        _check(any(s is not None for s in (self.preset, self.scenario, self.scenario_file)), path,
               "one of preset, scenario, scenario_file must be set")
        if self.preset is not None and self.scenario is None and self.scenario_file is None:
            _check(self.preset in SCENARIO_PRESETS, f"{path}.preset",
                   f"'{self.preset}' (valid: {list(SCENARIO_PRESETS)})")
        _check(self.sample_rate > 0, f"{path}.sample_rate", "must be > 0")
        _check(self.duration * self.sample_rate >= 16, f"{path}.duration", "must give at least 16 samples")
        _check(0 <= self.pulse_time < self.duration, f"{path}.pulse_time", "must lie inside the recording")
        _check(self.amplitude > 0, f"{path}.amplitude", "must be > 0")
        _check(self.n_per_hemisphere >= 1, f"{path}.n_per_hemisphere", "must be >= 1")
        _check(self.snr is None or self.noise_std is None, path, "set at most one of snr, noise_std")
        _check(self.snr is None or self.snr > 0, f"{path}.snr", "must be > 0")
        _check(self.noise_std is None or self.noise_std >= 0, f"{path}.noise_std", "must be >= 0")
        _check(self.artifact_amplitude is None or self.artifact_amplitude >= 0,
               f"{path}.artifact_amplitude", "must be >= 0")


@dataclass
class PreprocessConfig:
    """Artifact interpolation, filters, epoching and the noise covariance."""

    interpolate: bool = True
    cut_start_ms: float = -5.0
    cut_end_ms: float = 10.0
    noise_scale: float = 1.0
    highpass: bool = True
    highpass_hz: float = 0.5
    highpass_order: int = 2
    notch: bool = True
    line_hz: float = 50.0
    notch_bandwidth_hz: float = 2.0
    zero_phase: bool = True
    epoch_pre_s: float = 2.0
    epoch_post_s: float = 4.0
    baseline: List[float] = field(default_factory=lambda: [-2.0, -0.005])
    regularization_floor: Optional[float] = None

    def validate(self, path: str = "preprocess", sample_rate: float = 1000.0):
        _check(self.cut_end_ms > self.cut_start_ms, f"{path}.cut_end_ms", "must follow cut_start_ms")
        _check(self.noise_scale >= 0, f"{path}.noise_scale", "must be >= 0")
        nyquist = sample_rate / 2.0
        _check(0 < self.highpass_hz < nyquist, f"{path}.highpass_hz", f"must be in (0, {nyquist})")
        _check(self.highpass_order >= 1, f"{path}.highpass_order", "must be >= 1")
        _check(0 < self.line_hz < nyquist, f"{path}.line_hz", f"must be in (0, {nyquist})")
        _check(self.notch_bandwidth_hz > 0, f"{path}.notch_bandwidth_hz", "must be > 0")
        _check(self.epoch_pre_s > 0 and self.epoch_post_s > 0, f"{path}.epoch_pre_s",
               "epoch must extend on both sides of the pulse")
        start, end = _window(self.baseline, f"{path}.baseline")
        _check(-self.epoch_pre_s <= start and end <= 0, f"{path}.baseline",
               "must lie inside the pre-pulse part of the epoch")
        _check(self.regularization_floor is None or self.regularization_floor >= 0,
               f"{path}.regularization_floor", "must be >= 0")


@dataclass
class InverseConfig:
    """Linear inverse parameters shared by MNE, dSPM and sLORETA."""

    methods: List[str] = field(default_factory=lambda: [m.value for m in Method])
    lam: Optional[float] = None
    snr: float = 3.0
    gamma_depth: float = 0.5
    sloreta_mode: str = "raw"
    threshold_percentile: float = 25.0

    def validate(self, path: str = "inverse"):
        valid = [m.value for m in Method]
        _check(len(self.methods) >= 1, f"{path}.methods", "at least one method is required")
        for m in self.methods:
            _check(m in valid, f"{path}.methods", f"'{m}' (valid: {valid})")
        _check(len(set(self.methods)) == len(self.methods), f"{path}.methods", "duplicate method")
        _check(self.lam is None or self.lam > 0, f"{path}.lambda", "must be > 0")
        _check(self.snr > 0, f"{path}.snr", "must be > 0")
        _check(self.gamma_depth >= 0, f"{path}.gamma_depth", "must be >= 0")
        _check(self.sloreta_mode in ("raw", "power"), f"{path}.sloreta_mode",
               f"'{self.sloreta_mode}' (valid: raw, power)")
        _check(0 <= self.threshold_percentile < 100, f"{path}.threshold_percentile", "must be in [0, 100)")


@dataclass
class WmemConfig:
    """wMEM: parcellation size plus the wavelet/MEM settings."""

    n_parcels: int = 20
    wavelet: str = "db4"
    levels: int = 6
    boundary_mode: str = BoundaryMode.ZERO_PAD.value
    box_selection: float = 0.99
    band: Optional[List[float]] = None
    alpha: float = 0.5
    max_iter: int = 500
    tol: float = 1e-8
    optimizer: str = "newton"
    max_boxes: Optional[int] = None

    def validate(self, path: str = "wmem", n_sources: int = 200):
        _check(1 <= self.n_parcels <= n_sources, f"{path}.n_parcels", f"must be in [1, {n_sources}]")
        _check(self.boundary_mode in [b.value for b in BoundaryMode], f"{path}.boundary_mode",
               f"'{self.boundary_mode}' (valid: {[b.value for b in BoundaryMode]})")
        if self.band is not None:
            low, high = _window(self.band, f"{path}.band")
            _check(low >= 0, f"{path}.band", "frequencies must be >= 0")
        self.wavelet_config().validate()

    def wavelet_config(self, baseline: Optional[List[float]] = None, n_jobs: int = 1) -> WaveletConfig:
        return WaveletConfig(
            wavelet=self.wavelet,
            levels=self.levels,
            boundary_mode=self.boundary_mode,
            box_selection=self.box_selection,
            band=None if self.band is None else tuple(self.band),
            baseline=tuple(baseline) if baseline is not None else (-2.0, -0.005),
            alpha=self.alpha,
            max_iter=self.max_iter,
            tol=self.tol,
            optimizer=self.optimizer,
            max_boxes=self.max_boxes,
            n_jobs=n_jobs,
        )


@dataclass
class ConnectivityConfig:
    """Scout placement, correlation graphs and the analysis windows."""

    n_per_hemisphere: int = 5
    patch_radius: int = 1
    min_separation: Optional[int] = None
    candidates: str = "ranked"
    placement_window: Optional[List[float]] = None
    threshold: float = 0.7
    max_lag_s: float = 0.1
    before: List[float] = field(default_factory=lambda: [-1.0, -0.02])
    after: List[float] = field(default_factory=lambda: [0.02, 1.0])
    intra_vertices: int = 15
    on_undefined: str = "skip"

    def validate(self, path: str = "connectivity", n_sources: int = 200):
        _check(self.n_per_hemisphere >= 1, f"{path}.n_per_hemisphere", "must be >= 1")
        _check(self.patch_radius >= 0, f"{path}.patch_radius", "must be >= 0")
        _check(self.min_separation is None or self.min_separation >= 0, f"{path}.min_separation", "must be >= 0")
        _check(self.candidates in ("maxima", "ranked"), f"{path}.candidates",
               f"'{self.candidates}' (valid: maxima, ranked)")
        if self.placement_window is not None:
            _window(self.placement_window, f"{path}.placement_window")
        _check(self.threshold >= 0, f"{path}.threshold", "must be >= 0")
        _check(self.max_lag_s >= 0, f"{path}.max_lag_s", "must be >= 0")
        _window(self.before, f"{path}.before")
        _window(self.after, f"{path}.after")
        _check(3 <= self.intra_vertices <= n_sources, f"{path}.intra_vertices", f"must be in [3, {n_sources}]")
        _check(self.on_undefined in ("raise", "skip"), f"{path}.on_undefined",
               f"'{self.on_undefined}' (valid: raise, skip)")


@dataclass
class ZonesConfig:
    """k-means zone detection windows."""

    k: int = 3
    before: List[float] = field(default_factory=lambda: [-0.130, -0.110])
    after: List[float] = field(default_factory=lambda: [0.023, 0.043])
    timeline: List[float] = field(default_factory=lambda: [0.12, 0.22, 0.33, 0.5])
    half_width: float = 0.010
    max_iter: int = 100

    def validate(self, path: str = "zones", n_sources: int = 200):
        _check(1 <= self.k <= n_sources, f"{path}.k", f"must be in [1, {n_sources}]")
        _window(self.before, f"{path}.before")
        _window(self.after, f"{path}.after")
        _check(self.half_width > 0, f"{path}.half_width", "must be > 0")
        _check(self.max_iter >= 1, f"{path}.max_iter", "must be >= 1")

    def windows(self) -> Dict[str, Tuple[float, float]]:
        """before / after plus one window per timeline instant."""
        out = {"before": tuple(self.before), "after": tuple(self.after)}
        for t in self.timeline:
            out[f"t={t:g}s"] = (t - self.half_width, t + self.half_width)
        return out


# =============================================================================
# PipelineConfig
# =============================================================================

SECTIONS = {
    "geometry": GeometryConfig,
    "simulation": SimulationConfig,
    "preprocess": PreprocessConfig,
    "inverse": InverseConfig,
    "wmem": WmemConfig,
    "connectivity": ConnectivityConfig,
    "zones": ZonesConfig,
}

# YAML keys that differ from the attribute name
ALIASES = {"inverse": {"lambda": "lam"}}


@dataclass
class PipelineConfig:
    """Every parameter of a run; one seed governs all random streams."""

    seed: int = 0
    n_jobs: int = 1
    geometry: GeometryConfig = field(default_factory=GeometryConfig)
    simulation: SimulationConfig = field(default_factory=SimulationConfig)
    preprocess: PreprocessConfig = field(default_factory=PreprocessConfig)
    inverse: InverseConfig = field(default_factory=InverseConfig)
    wmem: WmemConfig = field(default_factory=WmemConfig)
    connectivity: ConnectivityConfig = field(default_factory=ConnectivityConfig)
    zones: ZonesConfig = field(default_factory=ZonesConfig)

    def validate(self) -> "PipelineConfig":
        """Check every section; raises ConfigError naming the dotted field path."""
        _check(isinstance(self.seed, int) and self.seed >= 0, "seed", f"must be a nonnegative integer, got {self.seed!r}")
        _check(self.n_jobs >= 1, "n_jobs", "must be >= 1")
        self.geometry.validate()
        n_sources = self.geometry.n_sources
        self.simulation.validate()
        self.preprocess.validate(sample_rate=self.simulation.sample_rate)
        sim = self.simulation
        _check(sim.pulse_time - self.preprocess.epoch_pre_s >= 0
               and sim.pulse_time + self.preprocess.epoch_post_s <= sim.duration,
               "preprocess.epoch_pre_s", "epoch window does not fit inside the simulated recording")
        self.inverse.validate()
        self.wmem.validate(n_sources=n_sources)
        self.connectivity.validate(n_sources=n_sources)
        self.zones.validate(n_sources=n_sources)
        epoch_span = (-self.preprocess.epoch_pre_s, self.preprocess.epoch_post_s)
        for name, (start, end) in [("connectivity.before", self.connectivity.before),
                                   ("connectivity.after", self.connectivity.after),
                                   *[(f"zones.{k}", w) for k, w in self.zones.windows().items()]]:
            _check(epoch_span[0] <= start and end <= epoch_span[1], name,
                   f"window ({start}, {end}) lies outside the epoch {epoch_span}")
        return self

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        for section, aliases in ALIASES.items():
            for key, attr in aliases.items():
                data[section][key] = data[section].pop(attr)
        return data

    @classmethod
    def from_dict(cls, data: Optional[Dict[str, Any]]) -> "PipelineConfig":
        """Build and validate; unknown keys are rejected with their dotted path."""
        data = dict(data or {})
        kwargs: Dict[str, Any] = {}
        top_level = {f.name for f in fields(cls)}
        for key, value in data.items():
            if key not in top_level:
                raise ConfigError(f"{key}: unknown configuration key")
            if key in SECTIONS:
                kwargs[key] = _build_section(key, value)
            else:
                kwargs[key] = value
        return cls(**kwargs).validate()

    def config_hash(self) -> str:
        """16 hex digits identifying this configuration."""
        return hash_payload(self.to_dict())

    def save(self, path: Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w") as f:
            yaml.safe_dump(self.to_dict(), f, default_flow_style=False, sort_keys=True)
        return path


def _build_section(name: str, value: Any):
    section_cls = SECTIONS[name]
    if value is None:
        return section_cls()
    if not isinstance(value, dict):
        raise ConfigError(f"{name}: must be a mapping, got {type(value).__name__}")
    aliases = ALIASES.get(name, {})
    known = {f.name for f in fields(section_cls)}
    kwargs = {}
    for key, item in value.items():
        attr = aliases.get(key, key)
        if attr not in known or (attr != key and attr in value):
            raise ConfigError(f"{name}.{key}: unknown configuration key")
        kwargs[attr] = item
    try:
        return section_cls(**kwargs)
    except TypeError as e:
        raise ConfigError(f"{name}: {e}") from e


# =============================================================================
# Loading
# =============================================================================

def deep_merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    """Recursive dict merge; mappings merge, everything else replaces."""
    out = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = deep_merge(out[key], value)
        else:
            out[key] = value
    return out


def read_yaml(path: Path) -> Dict[str, Any]:
    path = Path(path)
    if not path.exists():
        raise FileError(f"Config file not found: {path}", path=str(path))
    try:
        with open(path, "r") as f:
            data = yaml.safe_load(f)
    except yaml.YAMLError as e:
        raise ConfigError(f"{path}: invalid YAML: {e}") from e

    # Handle empty YAML file
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return data


def load_config(path: Optional[Path] = None, overrides: Optional[Dict[str, Any]] = None) -> PipelineConfig:
    """
    Load the packaged defaults, merge a user file and overrides over them, validate.

    Args:
        path: Optional user YAML file
        overrides: Optional nested dict applied last (e.g. from CLI flags)

    Returns:
        Validated PipelineConfig
    """
    merged = read_yaml(DEFAULT_CONFIG)
    if path is not None:
        merged = deep_merge(merged, read_yaml(path))
    if overrides:
        merged = deep_merge(merged, overrides)
    return PipelineConfig.from_dict(merged)
