#!/usr/bin/env python3
"""
Analytic multi-shell spherical lead field and depth weighting.

The potential of a current dipole inside the innermost of N concentric shells
is expanded in Legendre polynomials. Each degree n decouples, so the shells
enter only through a scalar gain g_n obtained by propagating the interface
conditions (continuity of potential and of normal current) from the innermost
interface to the insulating outer surface.
"""

from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from loguru import logger

from ..errors import ConfigError, DimensionError, GeometryError, SingularSourceError
from ..utils import hash_array, parallel_map, read_json, read_matrix_csv, sidecar_paths, write_json, write_matrix_csv
from .geometry import OrientationMode, Reference, SensorArray, SourceSpace


# Brain / skull / scalp
DEFAULT_SHELLS: Tuple[Tuple[float, float], ...] = ((0.08, 0.33), (0.085, 0.0042), (0.09, 0.33))
DEFAULT_SERIES_TERMS = 60
MIN_SERIES_TERMS = 20


@dataclass(frozen=True)
class Shell:
    """One concentric compartment: outer radius (m) and conductivity (S/m)."""
    radius: float
    conductivity: float


def make_shells(shells: Sequence[Any]) -> List[Shell]:
    """Validate and normalise shell specs given as Shell or (radius, conductivity) pairs."""
    out = [s if isinstance(s, Shell) else Shell(float(s[0]), float(s[1])) for s in shells]
    if not out:
        raise ConfigError("shells: at least one shell is required")
    radii = np.array([s.radius for s in out])
    if np.any(radii <= 0) or np.any(np.diff(radii) <= 0):
        raise ConfigError(f"shells: radii must be positive and strictly increasing, got {radii.tolist()}")
    if any(s.conductivity <= 0 for s in out):
        raise ConfigError("shells: conductivities must be > 0")
    return out


# =============================================================================
# GainMatrix
# =============================================================================

@dataclass
class GainMatrix:
    """
    Lead field mapping dipole moments (A.m) to sensor potentials (V).

    Attributes:
        matrix: (n_sensors, n_columns) lead field
        orientation_mode: FIXED (one column per source) or FREE (x, y, z columns per source)
        source_space: Source geometry the columns refer to (optional for synthetic matrices)
        sensor_array: Sensor geometry the rows refer to (optional for synthetic matrices)
        shells: Head-model shells used to compute the matrix
        series_terms: Legendre truncation used
    """

    matrix: np.ndarray
    orientation_mode: OrientationMode = OrientationMode.FIXED
    source_space: Optional[SourceSpace] = None
    sensor_array: Optional[SensorArray] = None
    shells: Optional[List[Shell]] = None
    series_terms: Optional[int] = None

    def __post_init__(self):
        self.matrix = np.array(self.matrix, dtype=float, ndmin=2)
        self.orientation_mode = OrientationMode(self.orientation_mode)
        self.matrix.setflags(write=False)
        self.validate()

    def validate(self):
        """Check the gain-matrix invariants."""
        if not np.all(np.isfinite(self.matrix)):
            raise GeometryError("gain matrix contains non-finite entries")
        if self.orientation_mode is OrientationMode.FREE and self.n_columns % 3:
            raise DimensionError("free-orientation gain matrix needs 3 columns per source")
        if self.sensor_array is not None:
            if self.sensor_array.n_sensors != self.n_sensors:
                raise DimensionError("gain matrix rows do not match the sensor array")
            if self.sensor_array.reference is Reference.AVERAGE:
                sums = np.abs(self.matrix.sum(axis=0))
                norms = np.linalg.norm(self.matrix, axis=0)
                if np.any(sums > 1e-9 * np.maximum(norms, np.finfo(float).tiny)):
                    raise GeometryError("average-referenced gain columns must sum to zero")
        if self.source_space is not None and self.source_space.n_sources != self.n_sources:
            raise DimensionError("gain matrix columns do not match the source space")

    @classmethod
    def from_array(cls, matrix: np.ndarray, orientation_mode: str = "fixed") -> "GainMatrix":
        """Wrap a bare matrix (no geometry)."""
        return cls(np.asarray(matrix, dtype=float), OrientationMode(orientation_mode))

    @property
    def n_sensors(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_columns(self) -> int:
        return self.matrix.shape[1]

    @property
    def n_orient(self) -> int:
        return 3 if self.orientation_mode is OrientationMode.FREE else 1

    @property
    def n_sources(self) -> int:
        return self.n_columns // self.n_orient

    def source_columns(self, source: int) -> slice:
        """Columns belonging to one source."""
        return slice(source * self.n_orient, (source + 1) * self.n_orient)

    def forward(self, sources: np.ndarray) -> np.ndarray:
        """Sensor potentials G @ s."""
        return self.matrix @ np.asarray(sources, dtype=float)

    def fingerprint(self) -> str:
        return hash_array(self.matrix)

    # -------------------------------------------------------------------------
    # Serialization
    # -------------------------------------------------------------------------

    def save(self, path: Path, extra: Optional[Dict[str, Any]] = None) -> Path:
        """Write ``<stem>.csv`` (matrix) and ``<stem>.json`` (metadata + geometry)."""
        json_path, csv_path = sidecar_paths(path)
        write_matrix_csv(csv_path, self.matrix)
        meta = {
            "kind": "gain_matrix",
            "data_file": csv_path.name,
            "shape": list(self.matrix.shape),
            "orientation_mode": self.orientation_mode.value,
            "reference": None if self.sensor_array is None else self.sensor_array.reference.value,
            "shells": None if self.shells is None else [[s.radius, s.conductivity] for s in self.shells],
            "series_terms": self.series_terms,
            "sensors": None if self.sensor_array is None else self.sensor_array.to_dict(),
            "sources": None if self.source_space is None else self.source_space.to_dict(),
            "fingerprint": self.fingerprint(),
        }
        meta.update(extra or {})
        return write_json(json_path, meta)

    @classmethod
    def load(cls, path: Path) -> "GainMatrix":
        """Read a gain matrix pair and re-validate every invariant."""
        json_path, _ = sidecar_paths(path)
        meta = read_json(json_path)
        matrix = read_matrix_csv(json_path.parent / meta["data_file"])
        if list(matrix.shape) != list(meta["shape"]):
            raise DimensionError(f"{json_path}: matrix shape {matrix.shape} != declared {meta['shape']}")
        sensors = SensorArray.from_dict(meta["sensors"]) if meta.get("sensors") else None
        sources = SourceSpace.from_dict(meta["sources"]) if meta.get("sources") else None
        shells = make_shells(meta["shells"]) if meta.get("shells") else None
        if sources is not None and shells is not None:
            sources.validate(inner_radius=shells[0].radius)
        return cls(matrix, OrientationMode(meta["orientation_mode"]), sources, sensors, shells,
                   meta.get("series_terms"))


# =============================================================================
# Spherical expansion
# =============================================================================

def shell_gains(shells: Sequence[Shell], series_terms: int) -> np.ndarray:
    """
    Degree gains g_n (n = 1..series_terms) relating the outer-surface potential
    to the primary infinite-medium term of a dipole in the innermost shell.

    For a single homogeneous sphere g_n = (2n + 1) / n.
    """
    radii = np.array([s.radius for s in shells]) / shells[-1].radius
    sigma = np.array([s.conductivity for s in shells])
    gains = np.empty(series_terms)
    for n in range(1, series_terms + 1):
        state = np.eye(2)
        for k in range(len(shells) - 1):
            rho = radii[k]
            inner = _interface_matrix(n, rho, sigma[k])
            outer = _interface_matrix(n, rho, sigma[k + 1])
            state = np.linalg.solve(outer, inner @ state)
        # outermost surface is insulating: n A_N - (n + 1) B_N = 0
        denom = n * state[0, 0] - (n + 1) * state[1, 0]
        a_inner = -(n * state[0, 1] - (n + 1) * state[1, 1]) / denom
        b_outer = state[1, 0] * a_inner + state[1, 1]
        gains[n - 1] = b_outer * (2 * n + 1) / n
    return gains


def _interface_matrix(n: int, rho: float, sigma: float) -> np.ndarray:
    """Potential and normal current of (A r^n + B r^-(n+1)) at normalised radius rho."""
    return np.array([
        [rho ** n, rho ** -(n + 1)],
        [sigma * n * rho ** (n - 1), -sigma * (n + 1) * rho ** -(n + 2)],
    ])


def legendre_with_derivative(x: np.ndarray, n_max: int) -> Tuple[np.ndarray, np.ndarray]:
    """P_n(x) and P_n'(x) for n = 0..n_max by the three-term recurrences (stable at |x| = 1)."""
    x = np.asarray(x, dtype=float)
    p = np.zeros((n_max + 1,) + x.shape)
    dp = np.zeros_like(p)
    p[0] = 1.0
    if n_max >= 1:
        p[1] = x
        dp[1] = 1.0
    for n in range(2, n_max + 1):
        p[n] = ((2 * n - 1) * x * p[n - 1] - (n - 1) * p[n - 2]) / n
        dp[n] = dp[n - 2] + (2 * n - 1) * p[n - 1]
    return p, dp


def dipole_surface_potential(source_position: np.ndarray, moments: np.ndarray,
                             sensor_directions: np.ndarray, gains: np.ndarray,
                             outer_radius: float, inner_conductivity: float) -> np.ndarray:
    """
    Outer-surface potentials of a dipole for several moment vectors.

    Args:
        source_position: (3,) dipole location in meters
        moments: (m, 3) dipole moments (A.m), one potential column per row
        sensor_directions: (n_sensors, 3) unit vectors of the electrodes
        gains: Degree gains from :func:`shell_gains`
        outer_radius: Outer shell radius (m)
        inner_conductivity: Conductivity of the innermost shell (S/m)

    Returns:
        (n_sensors, m) potentials in volts, unreferenced
    """
    n_terms = len(gains)
    r0 = float(np.linalg.norm(source_position))
    r0_hat = source_position / r0 if r0 > 0 else np.array([0.0, 0.0, 1.0])
    b = r0 / outer_radius
    cos_gamma = np.clip(sensor_directions @ r0_hat, -1.0, 1.0)
    p, dp = legendre_with_derivative(cos_gamma, n_terms)
    orders = np.arange(1, n_terms + 1, dtype=float)
    weights = gains * b ** (orders - 1)
    # sum_n w_n [n P_n (q.r0_hat) + P_n' (q.r_hat - c q.r0_hat)]
    radial_sum = (weights * orders) @ p[1:]
    tangential_sum = weights @ dp[1:]
    q_r0 = moments @ r0_hat
    q_r = sensor_directions @ moments.T
    potentials = (radial_sum[:, None] * q_r0[None, :]
                  + tangential_sum[:, None] * (q_r - cos_gamma[:, None] * q_r0[None, :]))
    return potentials / (4.0 * np.pi * inner_conductivity * outer_radius ** 2)


def build_spherical_leadfield(sensors: SensorArray, sources: SourceSpace,
                              shells: Sequence[Any] = DEFAULT_SHELLS,
                              series_terms: int = DEFAULT_SERIES_TERMS,
                              orientation_mode: Optional[str] = None,
                              n_jobs: int = 1) -> GainMatrix:
    """
    Compute the multi-shell spherical lead field, re-referenced per the sensor array.

    Args:
        sensors: Electrodes on the outer shell
        sources: Dipole positions strictly inside the innermost shell
        shells: Innermost-to-outermost (radius m, conductivity S/m) pairs
        series_terms: Legendre truncation (>= 20)
        orientation_mode: 'fixed' or 'free'; defaults to the source space's mode
        n_jobs: Worker threads; columns are independent so results do not depend on it

    Returns:
        GainMatrix
    """
    shell_list = make_shells(shells)
    if series_terms < MIN_SERIES_TERMS:
        raise ConfigError(f"series_terms: must be >= {MIN_SERIES_TERMS}, got {series_terms}")
    if abs(sensors.radius - shell_list[-1].radius) > 1e-9 * shell_list[-1].radius:
        raise GeometryError(
            f"sensors sit at {sensors.radius} m but the outer shell radius is {shell_list[-1].radius} m"
        )
    sources.validate(inner_radius=shell_list[0].radius)

    mode = OrientationMode(orientation_mode) if orientation_mode else sources.orientation_mode
    if mode is OrientationMode.FIXED and sources.orientations is None:
        raise GeometryError("fixed orientation requested but the source space has free orientations")

    gains = shell_gains(shell_list, series_terms)
    directions = sensors.directions
    outer_radius = shell_list[-1].radius
    sigma_inner = shell_list[0].conductivity
    n_orient = 3 if mode is OrientationMode.FREE else 1

    def source_block(p: int) -> np.ndarray:
        moments = np.eye(3) if n_orient == 3 else sources.orientations[p:p + 1]
        return dipole_surface_potential(sources.positions[p], moments, directions, gains,
                                        outer_radius, sigma_inner)

    logger.debug(f"Lead field: {sensors.n_sensors} sensors x {sources.n_sources} sources, "
                 f"{len(shell_list)} shells, {series_terms} terms")
    blocks = parallel_map(source_block, range(sources.n_sources), n_jobs=n_jobs)
    matrix = np.empty((sensors.n_sensors, sources.n_sources * n_orient))
    for p, block in enumerate(blocks):
        matrix[:, p * n_orient:(p + 1) * n_orient] = block
    matrix = sensors.apply_reference(matrix)
    return GainMatrix(matrix, mode, sources, sensors, shell_list, series_terms)


# =============================================================================
# Depth weighting
# =============================================================================

def depth_weights(G: Any, gamma_depth: float = 0.5) -> np.ndarray:
    """
    Per-source depth weights f_p = (sum of the source's squared column norms)^(-gamma_depth).

    Args:
        G: GainMatrix (or a bare fixed-orientation matrix)
        gamma_depth: Depth-weighting exponent (>= 0)

    Returns:
        (n_sources,) weight vector
    """
    if gamma_depth < 0:
        raise ConfigError(f"gamma_depth: must be >= 0, got {gamma_depth}")
    gain = G if isinstance(G, GainMatrix) else GainMatrix.from_array(G)
    col_norm2 = np.sum(gain.matrix ** 2, axis=0)
    source_norm2 = col_norm2.reshape(gain.n_sources, gain.n_orient).sum(axis=1)
    if gamma_depth == 0:
        return np.ones(gain.n_sources)
    if np.any(source_norm2 == 0):
        bad = np.flatnonzero(source_norm2 == 0).tolist()
        raise SingularSourceError(f"sources {bad[:10]} have all-zero lead fields; cannot depth weight")
    return source_norm2 ** (-gamma_depth)
