"""
SourceLoc - EEG source localization toolkit for TMS-EEG

MNE, dSPM, sLORETA and wavelet-domain MEM inverse methods on an analytic
spherical head model, with connectivity, Kansky and active-zone comparisons.
"""

__version__ = "0.1.0"
__author__ = "SourceLoc Team"
__description__ = "EEG source localization toolkit for TMS-EEG"
