#!/usr/bin/env python3
"""
Linear inverse kernels: MNE, dSPM and sLORETA.

All three share one regularized solve

    P = R G^T (G R G^T + lambda^2 C)^-1

with R the diagonal depth-weighting source covariance. dSPM rescales each
source row by its noise-projected standard deviation; sLORETA drops R from
the rows and divides by the square root of the resolution diagonal.
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

import numpy as np
from loguru import logger
from scipy import linalg

from ..errors import ConditioningError, ConfigError, DimensionError, NormalizationError, ResolutionError, SingularSourceError
from ..headmodel import GainMatrix, Reference, depth_weights
from ..signal import NoiseCovariance
from ..utils import hash_array, read_json, read_matrix_csv, sidecar_paths, write_json, write_matrix_csv
from .estimate import Method


MAX_CONDITION = 1e12
DEFAULT_SNR = 3.0


# =============================================================================
# InverseKernel
# =============================================================================

@dataclass
class InverseKernel:
    """
    Linear operator mapping sensor data to source estimates.

    Attributes:
        kernel: (n_sources * n_orient, n_sensors) matrix
        method: MNE, DSPM or SLORETA
        lam: Regularization parameter lambda
        gamma_depth: Depth-weighting exponent used in R
        normalization: Per-source vector applied (v for dSPM, r for sLORETA, ones for MNE)
        n_orient: 1 (fixed) or 3 (free orientation)
        provenance: Fingerprints of the gain matrix and noise covariance
    """

    kernel: np.ndarray
    method: Method
    lam: float
    gamma_depth: float
    normalization: np.ndarray
    n_orient: int = 1
    provenance: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.kernel = np.array(self.kernel, dtype=float, ndmin=2)
        self.kernel.setflags(write=False)
        self.normalization = np.array(self.normalization, dtype=float, ndmin=1)
        self.normalization.setflags(write=False)
        self.method = Method(self.method)
        self.validate()

    def validate(self):
        if self.method is Method.WMEM:
            raise ConfigError("wMEM is not a linear kernel method")
        if not np.all(np.isfinite(self.kernel)):
            raise ConditioningError(f"{self.method.display_name} kernel contains non-finite entries", lam=self.lam)
        if self.kernel.shape[0] % self.n_orient:
            raise DimensionError("kernel rows do not split into whole sources")
        if self.normalization.shape != (self.n_sources,):
            raise DimensionError(f"normalization must have {self.n_sources} entries")
        if self.method is not Method.MNE and np.any(self.normalization <= 0):
            raise NormalizationError(f"{self.method.display_name} normalization must be strictly positive")

    @property
    def n_sensors(self) -> int:
        return self.kernel.shape[1]

    @property
    def n_sources(self) -> int:
        return self.kernel.shape[0] // self.n_orient

    def fingerprint(self) -> str:
        return hash_array(self.kernel)

    def save(self, path: Path, extra: Optional[Dict[str, Any]] = None) -> Path:
        json_path, csv_path = sidecar_paths(path)
        write_matrix_csv(csv_path, self.kernel)
        meta = {
            "kind": "inverse_kernel",
            "data_file": csv_path.name,
            "shape": list(self.kernel.shape),
            "method": self.method.value,
            "lambda": self.lam,
            "gamma_depth": self.gamma_depth,
            "normalization": self.normalization.tolist(),
            "n_orient": self.n_orient,
            "provenance": self.provenance,
            "fingerprint": self.fingerprint(),
        }
        meta.update(extra or {})
        return write_json(json_path, meta)

    @classmethod
    def load(cls, path: Path) -> "InverseKernel":
        json_path, _ = sidecar_paths(path)
        meta = read_json(json_path)
        kernel = read_matrix_csv(json_path.parent / meta["data_file"])
        if list(kernel.shape) != list(meta["shape"]):
            raise DimensionError(f"{json_path}: kernel shape {kernel.shape} != declared {meta['shape']}")
        return cls(kernel, Method(meta["method"]), meta["lambda"], meta["gamma_depth"],
                   np.asarray(meta["normalization"]), meta.get("n_orient", 1), meta.get("provenance", {}))


# =============================================================================
# Shared solve
# =============================================================================

def _as_gain(G: Any) -> GainMatrix:
    return G if isinstance(G, GainMatrix) else GainMatrix.from_array(np.atleast_2d(np.asarray(G, dtype=float)))


def _as_cov(C: Any) -> np.ndarray:
    matrix = C.matrix if isinstance(C, NoiseCovariance) else C
    return np.atleast_2d(np.asarray(matrix, dtype=float))


def _average_referenced(G: GainMatrix) -> bool:
    return G.sensor_array is not None and G.sensor_array.reference is Reference.AVERAGE


def _reference_projector(n: int) -> np.ndarray:
    return np.eye(n) - np.full((n, n), 1.0 / n)


def _noise_in_data_space(G: GainMatrix, C: np.ndarray) -> np.ndarray:
    """Noise covariance as seen by average-referenced data (projected), else unchanged."""
    if not _average_referenced(G):
        return C
    P = _reference_projector(G.n_sensors)
    return P @ C @ P


def lambda_from_snr(G: Any, C: Any, gamma_depth: float = 0.5, snr: float = DEFAULT_SNR) -> float:
    """
    Regularization from an assumed amplitude SNR:
    lambda^2 = trace(G R G^T) / (snr^2 trace(C)).
    """
    if snr <= 0:
        raise ConfigError(f"snr: must be > 0, got {snr}")
    gain = _as_gain(G)
    cov = _noise_in_data_space(gain, _as_cov(C))
    weights = np.repeat(depth_weights(gain, gamma_depth), gain.n_orient)
    signal_trace = float(np.sum(gain.matrix ** 2 * weights[None, :]))
    noise_trace = float(np.trace(cov))
    if signal_trace <= 0:
        raise SingularSourceError("gain matrix is identically zero")
    if noise_trace <= 0:
        raise ConfigError("noise covariance has zero trace; give lambda explicitly")
    return float(np.sqrt(signal_trace / (snr ** 2 * noise_trace)))


def spd_solve(A: np.ndarray, B: np.ndarray, lam: float) -> Tuple[np.ndarray, float]:
    """
    Solve A X = B for symmetric positive-definite A.

    Raises ConditioningError (naming ``lam``) when cond(A) > 1e12; a failed
    Cholesky factorization falls back to an eigenvalue-floored solve.

    Returns:
        (X, condition number of A)
    """
    eig = np.linalg.eigvalsh(A)
    condition = float(eig[-1] / eig[0]) if eig[0] > 0 else float("inf")
    if condition > MAX_CONDITION:
        raise ConditioningError(
            f"G R G^T + lambda^2 C is numerically singular at lambda={lam:.6g} "
            f"(condition {condition:.3g} > {MAX_CONDITION:.0e}); increase lambda",
            lam=lam, condition=condition,
        )
    try:
        factor = linalg.cho_factor(A, lower=True)
        return linalg.cho_solve(factor, B), condition
    except linalg.LinAlgError:
        logger.warning(f"Cholesky failed at lambda={lam:.6g}; using eigenvalue-floored pseudo-solve")
        w, V = np.linalg.eigh(A)
        w = np.maximum(w, eig[-1] / MAX_CONDITION)
        return V @ ((V.T @ B) / w[:, None]), condition


def _regularized_operator(G: GainMatrix, C: np.ndarray, gamma_depth: float, lam: float) -> Tuple[np.ndarray, float]:
    """P = R G^T (G R G^T + lambda^2 C)^-1 together with the system condition number."""
    if lam <= 0 or not np.isfinite(lam):
        raise ConfigError(f"lambda: must be > 0, got {lam}")
    if C.shape != (G.n_sensors, G.n_sensors):
        raise DimensionError(f"noise covariance is {C.shape}, gain matrix has {G.n_sensors} sensors")
    if not np.any(G.matrix):
        raise SingularSourceError("gain matrix is identically zero")
    weights = np.repeat(depth_weights(G, gamma_depth), G.n_orient)
    GR = G.matrix * weights[None, :]
    A = GR @ G.matrix.T + lam ** 2 * C
    if _average_referenced(G):
        # the constant vector is outside every gain column; keep it out of the solve
        n = G.n_sensors
        A = A + (np.trace(A) / n) * np.full((n, n), 1.0 / n)
    A = 0.5 * (A + A.T)
    X, condition = spd_solve(A, GR, lam)
    logger.debug(f"Inverse system: {G.n_sensors} sensors, lambda={lam:.4g}, condition {condition:.3g}")
    return X.T, condition


def _block_trace(diagonal: np.ndarray, n_orient: int) -> np.ndarray:
    return diagonal.reshape(-1, n_orient).sum(axis=1)


def _provenance(G: GainMatrix, C: np.ndarray, condition: float) -> Dict[str, Any]:
    return {"gain": G.fingerprint(), "noise_covariance": hash_array(C), "condition": condition}


def _resolve_lambda(G: GainMatrix, C: np.ndarray, gamma_depth: float, lam: Optional[float]) -> float:
    return lambda_from_snr(G, C, gamma_depth) if lam is None else float(lam)


# =============================================================================
# Kernels
# =============================================================================

def mne_kernel(G: Any, C: Any, gamma_depth: float = 0.5, lam: Optional[float] = None) -> InverseKernel:
    """
    Minimum-norm kernel R G^T (G R G^T + lambda^2 C)^-1.

    Args:
        G: GainMatrix (or bare matrix)
        C: NoiseCovariance (or bare matrix)
        gamma_depth: Depth-weighting exponent (0 disables)
        lam: Regularization; default from :func:`lambda_from_snr` with SNR 3

    Returns:
        InverseKernel with all-ones normalization
    """
    gain = _as_gain(G)
    cov = _noise_in_data_space(gain, _as_cov(C))
    lam = _resolve_lambda(gain, cov, gamma_depth, lam)
    P, condition = _regularized_operator(gain, cov, gamma_depth, lam)
    return InverseKernel(P, Method.MNE, lam, gamma_depth, np.ones(gain.n_sources), gain.n_orient,
                         _provenance(gain, cov, condition))


def dspm_kernel(G: Any, C_n: Any, gamma_depth: float = 0.5, lam: Optional[float] = None) -> InverseKernel:
    """
    Noise-normalized kernel diag(v)^-1/2 P with v_p = (P C_n P^T)_pp.

    The source covariance C_s is the depth-weighted diagonal R; lambda^2
    scales C_n inside the solve. Free orientations use the trace of each
    source's 3x3 block of P C_n P^T.
    """
    gain = _as_gain(G)
    cov = _noise_in_data_space(gain, _as_cov(C_n))
    lam = _resolve_lambda(gain, cov, gamma_depth, lam)
    P, condition = _regularized_operator(gain, cov, gamma_depth, lam)
    row_var = np.einsum("ij,jk,ik->i", P, cov, P)
    v = _block_trace(row_var, gain.n_orient)
    if np.any(v <= 0) or not np.all(np.isfinite(v)):
        bad = np.flatnonzero(~(v > 0)).tolist()
        raise NormalizationError(f"dSPM noise variance is non-positive for sources {bad[:10]}; check the covariance")
    kernel = P / np.sqrt(np.repeat(v, gain.n_orient))[:, None]
    return InverseKernel(kernel, Method.DSPM, lam, gamma_depth, v, gain.n_orient,
                         _provenance(gain, cov, condition))


def sloreta_kernel(G: Any, C: Any, gamma_depth: float = 0.5, lam: Optional[float] = None) -> InverseKernel:
    """
    Resolution-standardized kernel diag(r)^-1/2 P0 with P0 = G^T A^-1 and r the diagonal of P0 G.

    A keeps the depth prior, but P0 drops it from the rows: the prior's factor
    cancels in the standardized estimate, so a noiseless point source peaks at
    its own location for any gamma_depth. Squaring the kernel output of
    unweighted currents gives phi = j^2 / Res_ii. Free orientations use the
    trace of each source's 3x3 block of P0 G.
    """
    gain = _as_gain(G)
    cov = _noise_in_data_space(gain, _as_cov(C))
    lam = _resolve_lambda(gain, cov, gamma_depth, lam)
    P, condition = _regularized_operator(gain, cov, gamma_depth, lam)
    weights = np.repeat(depth_weights(gain, gamma_depth), gain.n_orient)
    P0 = P / weights[:, None]
    res_diag = np.einsum("ij,ji->i", P0, gain.matrix)
    r = _block_trace(res_diag, gain.n_orient)
    if np.any(r <= 0) or not np.all(np.isfinite(r)):
        bad = np.flatnonzero(~(r > 0)).tolist()
        raise ResolutionError(f"resolution diagonal is non-positive for sources {bad[:10]}")
    kernel = P0 / np.sqrt(np.repeat(r, gain.n_orient))[:, None]
    return InverseKernel(kernel, Method.SLORETA, lam, gamma_depth, r, gain.n_orient,
                         _provenance(gain, cov, condition))


def resolution_matrix(K: InverseKernel, G: Any) -> np.ndarray:
    """K G, the resolution matrix of a kernel."""
    return K.kernel @ _as_gain(G).matrix


KERNEL_BUILDERS = {
    Method.MNE: mne_kernel,
    Method.DSPM: dspm_kernel,
    Method.SLORETA: sloreta_kernel,
}


def build_kernel(method: Any, G: Any, C: Any, gamma_depth: float = 0.5, lam: Optional[float] = None) -> InverseKernel:
    """Dispatch to the kernel builder of a linear method."""
    method = Method(method)
    if method not in KERNEL_BUILDERS:
        raise ConfigError(f"method: '{method.value}' has no linear kernel")
    return KERNEL_BUILDERS[method](G, C, gamma_depth, lam)
