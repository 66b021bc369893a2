"""Shared fixtures: a small head model and a pipeline config that runs in seconds."""

from pathlib import Path

import numpy as np
import pytest
import yaml

from sourceloc.headmodel import SensorArray, SourceSpace, build_spherical_leadfield
from sourceloc.pipeline import load_config


# Small enough for every stage to run quickly, large enough for 3 + 3 scouts
SMALL_CONFIG = {
    "seed": 7,
    "geometry": {"n_sensors": 32, "n_sources": 100},
    "simulation": {"sample_rate": 250.0, "n_per_hemisphere": 3},
    "wmem": {"n_parcels": 10, "max_boxes": 200, "tol": 1.0e-6},
    "connectivity": {"n_per_hemisphere": 3, "patch_radius": 0, "min_separation": 2, "intra_vertices": 8},
}


@pytest.fixture(scope="session")
def sensors() -> SensorArray:
    return SensorArray.cap(32)


@pytest.fixture(scope="session")
def space() -> SourceSpace:
    return SourceSpace.sphere(100)


@pytest.fixture(scope="session")
def gain(sensors, space):
    return build_spherical_leadfield(sensors, space)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def small_config():
    return load_config(overrides=SMALL_CONFIG)


@pytest.fixture
def small_config_file(tmp_path) -> Path:
    path = tmp_path / "small.yaml"
    with open(path, "w") as f:
        yaml.safe_dump(SMALL_CONFIG, f)
    return path
