"""Node geometry, array response and unit conversions.

Positions are plain ``numpy`` arrays of length D (2 or 3). Angles follow the
usual spherical convention: azimuth measured from +x towards +y, elevation
measured from +z (so a 2D deployment has elevation pi/2 everywhere).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0  # m/s


@dataclass(frozen=True)
class Aoa:
    """Angle of arrival in radians."""

    azimuth: float
    elevation: float = np.pi / 2

    def __post_init__(self):
        if not -np.pi <= self.azimuth <= np.pi:
            raise ValueError(f"azimuth {self.azimuth} outside [-pi, pi]")
        if not 0.0 <= self.elevation <= np.pi:
            raise ValueError(f"elevation {self.elevation} outside [0, pi]")


@dataclass(frozen=True)
class ArrayGeometry:
    """Antenna element offsets (meters, relative to element 0) and wavelength."""

    element_offsets: np.ndarray
    wavelength: float

    def __post_init__(self):
        offsets = np.atleast_2d(np.asarray(self.element_offsets, dtype=float))
        if offsets.shape[1] != 3:
            raise ValueError("element offsets must be 3-vectors")
        if not np.allclose(offsets[0], 0.0):
            raise ValueError("element 0 must sit at the array origin")
        if self.wavelength <= 0:
            raise ValueError("wavelength must be positive")
        object.__setattr__(self, "element_offsets", offsets)

    @property
    def n_elements(self) -> int:
        return self.element_offsets.shape[0]

    @classmethod
    def ula(cls, n_elements: int, wavelength: float, spacing: float | None = None):
        """Uniform linear array along the local y-axis (half-wavelength by default)."""
        if spacing is None:
            spacing = wavelength / 2
        offsets = np.zeros((n_elements, 3))
        offsets[:, 1] = spacing * np.arange(n_elements)
        return cls(offsets, wavelength)


@dataclass(frozen=True)
class FrameTransform:
    """Orthonormal map from the antenna frame to the world frame."""

    omega: np.ndarray = field(default_factory=lambda: np.eye(2))

    def __post_init__(self):
        omega = np.asarray(self.omega, dtype=float)
        if omega.ndim != 2 or omega.shape[0] != omega.shape[1]:
            raise ValueError("omega must be square")
        if not np.allclose(omega.T @ omega, np.eye(omega.shape[0]), atol=1e-12):
            raise ValueError("omega must be orthonormal")
        object.__setattr__(self, "omega", omega)

    @classmethod
    def rotation(cls, angle: float):
        c, s = np.cos(angle), np.sin(angle)
        return cls(np.array([[c, -s], [s, c]]))

    def to_world(self, v: np.ndarray) -> np.ndarray:
        return self.omega @ np.asarray(v, dtype=float)

    def to_antenna(self, v: np.ndarray) -> np.ndarray:
        return self.omega.T @ np.asarray(v, dtype=float)


def _as_points(*points):
    arrs = [np.asarray(p, dtype=float) for p in points]
    dims = {a.shape[-1] for a in arrs}
    if len(dims) != 1:
        raise ValueError(f"dimension mismatch: {sorted(dims)}")
    return arrs


def bistatic_range(tag, tx, rx) -> float | np.ndarray:
    """TX -> tag -> RX path length. Broadcasts over leading axes of ``tag``."""
    tag, tx, rx = _as_points(tag, tx, rx)
    return np.linalg.norm(tag - tx, axis=-1) + np.linalg.norm(tag - rx, axis=-1)


def unit_direction(tag, rx) -> np.ndarray:
    """Unit vector pointing from ``rx`` to ``tag``."""
    tag, rx = _as_points(tag, rx)
    diff = tag - rx
    norm = np.linalg.norm(diff)
    if norm == 0.0:
        raise ValueError("tag and rx coincide; direction undefined")
    return diff / norm


def direction_from_aoa(aoa: Aoa, dim: int = 3) -> np.ndarray:
    if dim == 2:
        return np.array([np.cos(aoa.azimuth), np.sin(aoa.azimuth)])
    s = np.sin(aoa.elevation)
    return np.array(
        [s * np.cos(aoa.azimuth), s * np.sin(aoa.azimuth), np.cos(aoa.elevation)]
    )


def aoa_from_direction(u) -> Aoa:
    u = np.asarray(u, dtype=float)
    azimuth = float(np.arctan2(u[1], u[0]))
    if u.shape[0] == 2:
        return Aoa(azimuth)
    elevation = float(np.arccos(np.clip(u[2] / np.linalg.norm(u), -1.0, 1.0)))
    return Aoa(azimuth, elevation)


def steering_vector(array: ArrayGeometry, aoa: Aoa) -> np.ndarray:
    s = np.sin(aoa.elevation)
    k = np.array([np.cos(aoa.azimuth) * s, np.sin(aoa.azimuth) * s, np.cos(aoa.elevation)])
    return np.exp(1j * 2 * np.pi / array.wavelength * (array.element_offsets @ k))


def steering_matrix(array: ArrayGeometry, azimuths, elevation: float = np.pi / 2) -> np.ndarray:
    """Steering vectors for many azimuths at one elevation, shape (N_a, len(azimuths))."""
    az = np.asarray(azimuths, dtype=float)
    s = np.sin(elevation)
    k = np.stack([np.cos(az) * s, np.sin(az) * s, np.full_like(az, np.cos(elevation))])
    return np.exp(1j * 2 * np.pi / array.wavelength * (array.element_offsets @ k))


def range_to_delay(d, bandwidth: float):
    """Meters to bandwidth-normalized delay (samples)."""
    if bandwidth <= 0:
        raise ValueError("bandwidth must be positive")
    if not np.isscalar(d):
        d = np.asarray(d, dtype=float)
    return d * bandwidth / SPEED_OF_LIGHT


def delay_to_range(tau, bandwidth: float):
    """Bandwidth-normalized delay (samples) to meters."""
    if bandwidth <= 0:
        raise ValueError("bandwidth must be positive")
    if not np.isscalar(tau):
        tau = np.asarray(tau, dtype=float)
    return tau * SPEED_OF_LIGHT / bandwidth


def antenna_to_world(t: FrameTransform, v) -> np.ndarray:
    return t.to_world(v)
