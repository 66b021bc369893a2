"""Configuration, stage runners and figures for the command-line pipeline."""

from .config import DEFAULT_CONFIG, PipelineConfig, deep_merge, load_config
from .runner import (
    ConnectivityReport,
    analyze_connectivity,
    analyze_zones,
    build_gain,
    build_geometry,
    build_scenario,
    cmd_compare,
    cmd_connectivity,
    cmd_localize,
    cmd_localize_all,
    cmd_preprocess,
    cmd_report,
    cmd_scouts,
    cmd_simulate,
    cmd_zones,
    load_estimates,
    preprocess_recording,
)

__all__ = [
    "DEFAULT_CONFIG",
    "PipelineConfig",
    "deep_merge",
    "load_config",
    "ConnectivityReport",
    "analyze_connectivity",
    "analyze_zones",
    "build_gain",
    "build_geometry",
    "build_scenario",
    "cmd_compare",
    "cmd_connectivity",
    "cmd_localize",
    "cmd_localize_all",
    "cmd_preprocess",
    "cmd_report",
    "cmd_scouts",
    "cmd_simulate",
    "cmd_zones",
    "load_estimates",
    "preprocess_recording",
]
