"""Range/angle estimation from carrier and backscatter CFR stacks."""

from .common import (
    DegenerateSubspaceError,
    GridSpec,
    NoPeakError,
    RangeAngleEstimate,
    Spectrum2D,
    peaks_1d,
    peaks_2d,
    tdoa_to_range,
)
from .methods import (
    ESTIMATORS,
    cir_first_peak_range,
    cir_spectrum,
    cluster_1d,
    delay_music_spectrum,
    fft2d_estimate,
    fft2d_spectrum,
    jrac_clusters,
    jrac_estimate,
    jrac_heatmap,
    music2d_estimate,
    music2d_spectrum,
    srae_estimate,
)

__all__ = [
    "DegenerateSubspaceError",
    "ESTIMATORS",
    "GridSpec",
    "NoPeakError",
    "RangeAngleEstimate",
    "Spectrum2D",
    "cir_first_peak_range",
    "cir_spectrum",
    "cluster_1d",
    "delay_music_spectrum",
    "fft2d_estimate",
    "fft2d_spectrum",
    "jrac_clusters",
    "jrac_estimate",
    "jrac_heatmap",
    "music2d_estimate",
    "music2d_spectrum",
    "peaks_1d",
    "peaks_2d",
    "srae_estimate",
    "tdoa_to_range",
]
