"""Sensor/source geometry, analytic spherical lead field and depth weighting."""

from .geometry import OrientationMode, Reference, SensorArray, SourceSpace, fibonacci_sphere, icosphere
from .leadfield import (
    DEFAULT_SERIES_TERMS,
    DEFAULT_SHELLS,
    GainMatrix,
    Shell,
    build_spherical_leadfield,
    depth_weights,
    make_shells,
    shell_gains,
)

__all__ = [
    "OrientationMode",
    "Reference",
    "SensorArray",
    "SourceSpace",
    "fibonacci_sphere",
    "icosphere",
    "DEFAULT_SERIES_TERMS",
    "DEFAULT_SHELLS",
    "GainMatrix",
    "Shell",
    "build_spherical_leadfield",
    "depth_weights",
    "make_shells",
    "shell_gains",
]
