"""Range/angle estimation and positioning for multi-static backscatter tags."""

from .channel import Scenario, WaveformConfig, room_scenario, simulate
from .estimation import ESTIMATORS, GridSpec, NoPeakError
from .positioning import (
    AngleMeasurement,
    MeasurementSet,
    RangeMeasurement,
    irls_solve,
    ml_gradient_ascent,
    ml_grid_search,
)

__version__ = "0.1.0"

__all__ = [
    "ESTIMATORS",
    "AngleMeasurement",
    "GridSpec",
    "MeasurementSet",
    "NoPeakError",
    "RangeMeasurement",
    "Scenario",
    "WaveformConfig",
    "irls_solve",
    "ml_gradient_ascent",
    "ml_grid_search",
    "room_scenario",
    "simulate",
]
