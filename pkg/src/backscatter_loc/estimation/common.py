"""Search grid, peak picking and TDoA range combination shared by all estimators."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from ..geometry import SPEED_OF_LIGHT


class NoPeakError(RuntimeError):
    """No spectral peak passed the detection threshold (a missed detection)."""


class DegenerateSubspaceError(RuntimeError):
    """The estimated signal subspace fills the whole space; no noise subspace is left."""


@dataclass(frozen=True)
class GridSpec:
    """Delay grid ``N_s i / G_tau`` (samples) and angle grid ``asin(2 j / G_theta)``."""

    n_subcarriers: int
    g_tau: int = 4096
    g_theta: int = 128

    def __post_init__(self):
        if self.g_tau < self.n_subcarriers or self.g_theta < 2:
            raise ValueError("grid too coarse")

    @cached_property
    def taus(self) -> np.ndarray:
        return self.n_subcarriers * np.arange(self.g_tau) / self.g_tau

    @cached_property
    def sin_thetas(self) -> np.ndarray:
        return 2.0 * np.arange(-(self.g_theta // 2), self.g_theta - self.g_theta // 2) / self.g_theta

    @cached_property
    def thetas(self) -> np.ndarray:
        return np.arcsin(self.sin_thetas)

    @property
    def tau_step(self) -> float:
        return self.n_subcarriers / self.g_tau


@dataclass
class Spectrum2D:
    values: np.ndarray  # (len(tau_indices), G_theta), non-negative
    tau_indices: np.ndarray


@dataclass
class RangeAngleEstimate:
    bistatic_range: float  # meters
    azimuth: float | None  # antenna frame, radians; None for range-only methods
    tau_carrier_hat: float  # samples
    tau_backscatter_hat: float
    method: str

    def __post_init__(self):
        if not self.tau_backscatter_hat > self.tau_carrier_hat:
            raise AssertionError("backscatter LoS delay must exceed the carrier LoS delay")


def tdoa_to_range(tau0_true, tau_b_hat, tau0_hat, bandwidth: float) -> float:
    """Bistatic range from the backscatter ToA referenced to the carrier ToA."""
    if bandwidth <= 0:
        raise ValueError("bandwidth must be positive")
    return float(SPEED_OF_LIGHT / bandwidth * (tau0_true + tau_b_hat - tau0_hat))


def peaks_2d(values: np.ndarray, threshold: float):
    """Strict 4-neighbour local maxima with value >= ``threshold``.

    Border cells compare only against the neighbours that exist.
    Returns (row_indices, col_indices) in row-major order.
    """
    v = np.asarray(values)
    mask = v >= threshold
    if v.shape[0] > 1:
        mask[1:] &= v[1:] > v[:-1]
        mask[:-1] &= v[:-1] > v[1:]
    if v.shape[1] > 1:
        mask[:, 1:] &= v[:, 1:] > v[:, :-1]
        mask[:, :-1] &= v[:, :-1] > v[:, 1:]
    return np.nonzero(mask)


def peaks_1d(values: np.ndarray, threshold: float) -> np.ndarray:
    return peaks_2d(np.asarray(values)[:, np.newaxis], threshold)[0]


def normalize(values: np.ndarray) -> np.ndarray:
    top = values.max()
    if not np.isfinite(top) or top <= 0:
        raise NoPeakError("spectrum is identically zero")
    return values / top


def los_peak_2d(spectrum: np.ndarray, taus: np.ndarray, t_min: float, after: float | None = None):
    """Minimum-delay peak of a max-normalized spectrum, optionally strictly after ``after``.

    Returns (tau_index, theta_index); among peaks sharing that delay the largest wins.
    """
    rows, cols = peaks_2d(normalize(spectrum), t_min)
    if after is not None:
        keep = taus[rows] > after
        rows, cols = rows[keep], cols[keep]
    if rows.size == 0:
        raise NoPeakError("no peak above threshold")
    row = rows.min()
    at_row = cols[rows == row]
    return int(row), int(at_row[np.argmax(spectrum[row, at_row])])


def first_peak_1d(spectrum: np.ndarray, taus: np.ndarray, t_min: float, after: float | None = None) -> int:
    idx = peaks_1d(normalize(spectrum), t_min)
    if after is not None:
        idx = idx[taus[idx] > after]
    if idx.size == 0:
        raise NoPeakError("no peak above threshold")
    return int(idx[0])


def check_stacks(h0, hb, grid: GridSpec) -> None:
    for s in (h0, hb):
        if s is not None and s.n_subcarriers != grid.n_subcarriers:
            raise ValueError("stack subcarrier count differs from the grid")
