"""Wavelet-domain Maximum Entropy on the Mean (wMEM) source localization."""

from .localize import BoxDiagnostic, WaveletConfig, WmemRun, run_wmem, scale_noise_variances, select_boxes, wmem_localize
from .mem import MemProblem, MemReferenceLaw, MemSolution, mem_solve
from .parcels import Parcellation, adjacency_graph, farthest_point_seeds, parcellate
from .wavelet import (
    BoundaryMode,
    WaveletDecomposition,
    dwt,
    dwt_array,
    idwt,
    multiresolution_power,
    power_grid,
    scales_for_band,
    write_power_csv,
)

__all__ = [
    "BoxDiagnostic",
    "WaveletConfig",
    "WmemRun",
    "run_wmem",
    "scale_noise_variances",
    "select_boxes",
    "wmem_localize",
    "MemProblem",
    "MemReferenceLaw",
    "MemSolution",
    "mem_solve",
    "Parcellation",
    "adjacency_graph",
    "farthest_point_seeds",
    "parcellate",
    "BoundaryMode",
    "WaveletDecomposition",
    "dwt",
    "dwt_array",
    "idwt",
    "multiresolution_power",
    "power_grid",
    "scales_for_band",
    "write_power_csv",
]
