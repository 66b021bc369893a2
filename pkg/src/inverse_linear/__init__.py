"""Linear inverse kernels (MNE, dSPM, sLORETA) and source estimates."""

from .estimate import EstimateKind, Method, SourceEstimate, apply_kernel, sloreta_power
from .kernels import (
    DEFAULT_SNR,
    InverseKernel,
    build_kernel,
    dspm_kernel,
    lambda_from_snr,
    mne_kernel,
    resolution_matrix,
    sloreta_kernel,
    spd_solve,
)

__all__ = [
    "EstimateKind",
    "Method",
    "SourceEstimate",
    "apply_kernel",
    "sloreta_power",
    "DEFAULT_SNR",
    "InverseKernel",
    "build_kernel",
    "dspm_kernel",
    "lambda_from_snr",
    "mne_kernel",
    "resolution_matrix",
    "sloreta_kernel",
    "spd_solve",
]
