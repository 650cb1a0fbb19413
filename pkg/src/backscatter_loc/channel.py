"""Multi-static backscatter OFDM channel simulation.

The carrier channel (TX -> RX) and the two backscatter legs (TX -> tag,
tag -> RX) are built from a LoS path plus single-bounce paths through a
shared set of point scatterers. Channel frequency responses are synthesized
in the factorized form ``H = F(tau) diag(gain) A(theta)^T`` with the
subcarrier rows ordered ``n = -N_s/2 .. N_s/2 - 1``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import (
    SPEED_OF_LIGHT,
    ArrayGeometry,
    FrameTransform,
    aoa_from_direction,
    steering_matrix,
)

# Simulation geometry of the reproduced experiment (meters).
ROOM_TX = ((0.0, 0.0), (0.0, 6.0), (-18.0, 6.0), (-18.0, 0.0))
ROOM_RX = ((-9.0, 3.0),)
ROOM_REGION = ((-18.0, 0.0), (0.0, 6.0))  # (xmin, ymin), (xmax, ymax)

_CARRIER, _TX_TAG, _TAG_RX, _NOISE, _JITTER = range(5)


@dataclass(frozen=True)
class WaveformConfig:
    n_subcarriers: int = 40
    bandwidth: float = 40e6
    center_freq: float = 897.5e6
    shift_freq: float = 45e6
    n_symbols: int = 50

    def __post_init__(self):
        if self.n_subcarriers < 2:
            raise ValueError("need at least two subcarriers")
        if self.bandwidth <= 0:
            raise ValueError("bandwidth must be positive")
        if self.n_symbols < 1:
            raise ValueError("need at least one OFDM symbol")

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.center_freq


@dataclass
class Scenario:
    """Everything needed to synthesize one channel realization."""

    tx_positions: np.ndarray
    rx_positions: np.ndarray
    rx_array: ArrayGeometry
    tags: np.ndarray
    scatterers: np.ndarray
    waveform: WaveformConfig = field(default_factory=WaveformConfig)
    rx_frame: FrameTransform = field(default_factory=FrameTransform)
    snr_db: float = 5.0
    seed: int = 0

    def __post_init__(self):
        self.tx_positions = np.atleast_2d(np.asarray(self.tx_positions, dtype=float))
        self.rx_positions = np.atleast_2d(np.asarray(self.rx_positions, dtype=float))
        dim = self.tx_positions.shape[1]
        self.tags = np.asarray(self.tags, dtype=float).reshape(-1, dim)
        self.scatterers = np.asarray(self.scatterers, dtype=float).reshape(-1, dim)
        if len(self.tx_positions) < 1 or len(self.rx_positions) < 1:
            raise ValueError("need at least one TX and one RX")
        for name in ("rx_positions", "tags", "scatterers"):
            if getattr(self, name).shape[1] != dim:
                raise ValueError(f"{name} dimension differs from tx_positions")
        if self.rx_frame.omega.shape != (dim, dim):
            raise ValueError("rx_frame dimension differs from node positions")

    @property
    def dim(self) -> int:
        return self.tx_positions.shape[1]

    @property
    def n_tx(self) -> int:
        return len(self.tx_positions)

    @property
    def n_rx(self) -> int:
        return len(self.rx_positions)

    @property
    def n_tags(self) -> int:
        return len(self.tags)

    def with_scatterers(self, scatterers, seed: int | None = None) -> "Scenario":
        return replace(
            self,
            scatterers=np.asarray(scatterers, dtype=float),
            seed=self.seed if seed is None else seed,
        )

    def to_dict(self) -> dict:
        return {
            "tx_positions": self.tx_positions.tolist(),
            "rx_positions": self.rx_positions.tolist(),
            "rx_array": {
                "element_offsets": self.rx_array.element_offsets.tolist(),
                "wavelength": self.rx_array.wavelength,
            },
            "rx_frame": self.rx_frame.omega.tolist(),
            "tags": self.tags.tolist(),
            "scatterers": self.scatterers.tolist(),
            "waveform": {
                "n_subcarriers": self.waveform.n_subcarriers,
                "bandwidth": self.waveform.bandwidth,
                "center_freq": self.waveform.center_freq,
                "shift_freq": self.waveform.shift_freq,
                "n_symbols": self.waveform.n_symbols,
            },
            "snr_db": _encode_float(self.snr_db),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        return cls(
            tx_positions=d["tx_positions"],
            rx_positions=d["rx_positions"],
            rx_array=ArrayGeometry(
                np.asarray(d["rx_array"]["element_offsets"]), d["rx_array"]["wavelength"]
            ),
            rx_frame=FrameTransform(np.asarray(d["rx_frame"])),
            tags=d["tags"],
            scatterers=d["scatterers"],
            waveform=WaveformConfig(**d["waveform"]),
            snr_db=_decode_float(d["snr_db"]),
            seed=int(d["seed"]),
        )


def _encode_float(x: float):
    return x if np.isfinite(x) else ("inf" if x > 0 else "-inf")


def _decode_float(x) -> float:
    return float(x)


def tag_grid(region=ROOM_REGION, n_per_axis: int = 5) -> np.ndarray:
    """Regular ``n x n`` tag layout at cell centers of ``region``.

    Alternate rows are shifted by +/- a quarter cell so that no tag lands on
    the region's center, where the receiver of the reference geometry sits.
    """
    (x0, y0), (x1, y1) = region
    wx = (x1 - x0) / n_per_axis
    wy = (y1 - y0) / n_per_axis
    tags = []
    for j in range(n_per_axis):
        shift = wx / 4 if j % 2 == 0 else -wx / 4
        for i in range(n_per_axis):
            tags.append((x0 + (i + 0.5) * wx + shift, y0 + (j + 0.5) * wy))
    return np.array(tags)


def random_points(rng: np.random.Generator, n: int, region=ROOM_REGION) -> np.ndarray:
    lo, hi = (np.asarray(c, dtype=float) for c in region)
    return lo + (hi - lo) * rng.random((n, lo.size))


def room_scenario(
    seed: int = 0,
    n_paths: int = 3,
    snr_db: float = 5.0,
    tags: np.ndarray | None = None,
    waveform: WaveformConfig | None = None,
    n_antennas: int = 4,
    rx_frame: FrameTransform | None = None,
) -> Scenario:
    """Reference geometry: 4 TXs at the room corners, one 4-element ULA RX at the center.

    ``n_paths`` is the number of propagation paths per leg (LoS + ``n_paths-1``
    scatterers, drawn uniformly in the tag region from ``seed``).
    """
    waveform = waveform or WaveformConfig()
    rng = np.random.default_rng(seed)
    return Scenario(
        tx_positions=np.array(ROOM_TX),
        rx_positions=np.array(ROOM_RX),
        rx_array=ArrayGeometry.ula(n_antennas, waveform.wavelength),
        rx_frame=rx_frame or FrameTransform(np.eye(2)),
        tags=tag_grid() if tags is None else tags,
        scatterers=random_points(rng, max(n_paths - 1, 0)),
        waveform=waveform,
        snr_db=snr_db,
        seed=seed,
    )


@dataclass
class PathSet:
    """Propagation paths of one link; path 0 is the LoS (shortest) path."""

    gains: np.ndarray
    delays: np.ndarray  # bandwidth-normalized (samples)
    azimuths: np.ndarray  # antenna frame, radians
    elevations: np.ndarray

    def __post_init__(self):
        self.gains = np.asarray(self.gains, dtype=complex).ravel()
        self.delays = np.asarray(self.delays, dtype=float).ravel()
        self.azimuths = np.asarray(self.azimuths, dtype=float).ravel()
        self.elevations = np.asarray(self.elevations, dtype=float).ravel()
        n = self.gains.size
        if n < 1:
            raise ValueError("a path set needs at least one path")
        if not (self.delays.size == self.azimuths.size == self.elevations.size == n):
            raise ValueError("path parameter lengths differ")
        if self.delays[0] > self.delays.min():
            raise ValueError("path 0 must have the smallest delay")

    def __len__(self) -> int:
        return self.gains.size


@dataclass
class CfrStack:
    """N_sym channel estimates, each an N_s x N_a complex matrix."""

    symbols: np.ndarray
    channel_kind: str
    tx_index: int = 0
    rx_index: int = 0
    tag_index: int | None = None

    def __post_init__(self):
        self.symbols = np.asarray(self.symbols, dtype=complex)
        if self.symbols.ndim != 3:
            raise ValueError("symbols must have shape (N_sym, N_s, N_a)")
        if self.channel_kind not in ("carrier", "backscatter"):
            raise ValueError(f"unknown channel kind {self.channel_kind!r}")

    @property
    def n_symbols(self) -> int:
        return self.symbols.shape[0]

    @property
    def n_subcarriers(self) -> int:
        return self.symbols.shape[1]

    @property
    def n_antennas(self) -> int:
        return self.symbols.shape[2]


def subcarrier_indices(n_s: int) -> np.ndarray:
    return np.arange(-(n_s // 2), n_s - n_s // 2)


def delay_vector(tau, n_s: int) -> np.ndarray:
    """Frequency-domain delay signature ``f(tau)``; shape (N_s,) or (N_s, len(tau))."""
    n = subcarrier_indices(n_s)
    tau = np.asarray(tau, dtype=float)
    return np.exp(-2j * np.pi * np.multiply.outer(n, tau) / n_s)


def _link_rng(scenario: Scenario, kind: int, *indices: int) -> np.random.Generator:
    return np.random.default_rng([scenario.seed, kind, *indices])


def _antenna_aoa(scenario: Scenario, world_dir: np.ndarray):
    aoa = aoa_from_direction(scenario.rx_frame.to_antenna(world_dir))
    return aoa.azimuth, aoa.elevation


def _leg_paths(
    scenario: Scenario, start, end, rng: np.random.Generator, at_rx: bool
) -> PathSet:
    """LoS plus one single-bounce path per scatterer from ``start`` to ``end``."""
    b = scenario.waveform.bandwidth
    start = np.asarray(start, dtype=float)
    end = np.asarray(end, dtype=float)
    origins = [start] + list(scenario.scatterers)
    lengths = [np.linalg.norm(end - start)]
    for s in scenario.scatterers:
        lengths.append(np.linalg.norm(s - start) + np.linalg.norm(end - s))
    lengths = np.array(lengths)
    los = max(lengths[0], 1e-9)
    # 1/length amplitude normalized to a unit-magnitude LoS, uniform phases
    phases = rng.uniform(0.0, 2 * np.pi, lengths.size)
    gains = (los / np.maximum(lengths, 1e-9)) * np.exp(1j * phases)
    az = np.zeros(lengths.size)
    el = np.full(lengths.size, np.pi / 2)
    for k, origin in enumerate(origins):
        direction = origin - end
        if np.linalg.norm(direction) == 0.0:
            continue
        if at_rx:
            az[k], el[k] = _antenna_aoa(scenario, direction)
        else:
            a = aoa_from_direction(direction)
            az[k], el[k] = a.azimuth, a.elevation
    return PathSet(gains, b * lengths / SPEED_OF_LIGHT, az, el)


def carrier_paths(scenario: Scenario, tx_index: int, rx_index: int) -> PathSet:
    rng = _link_rng(scenario, _CARRIER, tx_index, rx_index)
    return _leg_paths(
        scenario, scenario.tx_positions[tx_index], scenario.rx_positions[rx_index], rng, True
    )


def tx_tag_paths(scenario: Scenario, tag_index: int, tx_index: int) -> PathSet:
    rng = _link_rng(scenario, _TX_TAG, tag_index, tx_index)
    return _leg_paths(
        scenario, scenario.tx_positions[tx_index], scenario.tags[tag_index], rng, False
    )


def tag_rx_paths(scenario: Scenario, tag_index: int, rx_index: int) -> PathSet:
    rng = _link_rng(scenario, _TAG_RX, tag_index, rx_index)
    return _leg_paths(
        scenario, scenario.tags[tag_index], scenario.rx_positions[rx_index], rng, True
    )


def build_paths(scenario: Scenario, tag_index: int, tx_index: int, rx_index: int):
    """Carrier, TX->tag and tag->RX path sets for one TX-tag-RX triple."""
    for name, idx, n in (
        ("tag_index", tag_index, scenario.n_tags),
        ("tx_index", tx_index, scenario.n_tx),
        ("rx_index", rx_index, scenario.n_rx),
    ):
        if not 0 <= idx < n:
            raise IndexError(f"{name} {idx} out of range [0, {n})")
    return (
        carrier_paths(scenario, tx_index, rx_index),
        tx_tag_paths(scenario, tag_index, tx_index),
        tag_rx_paths(scenario, tag_index, rx_index),
    )


def compose_backscatter(tx_tag: PathSet, tag_rx: PathSet, waveform: WaveformConfig) -> PathSet:
    """Bistatic paths ``l' = l + L1 m`` of the TX->tag->RX cascade."""
    l1, l2 = len(tx_tag), len(tag_rx)
    shift = np.exp(-2j * np.pi * waveform.shift_freq * tag_rx.delays / waveform.bandwidth)
    gains = np.empty(l1 * l2, dtype=complex)
    delays = np.empty(l1 * l2)
    az = np.empty(l1 * l2)
    el = np.empty(l1 * l2)
    for m in range(l2):
        sl = slice(m * l1, (m + 1) * l1)
        gains[sl] = tx_tag.gains * tag_rx.gains[m] * shift[m]
        delays[sl] = tx_tag.delays + tag_rx.delays[m]
        az[sl] = tag_rx.azimuths[m]
        el[sl] = tag_rx.elevations[m]
    return PathSet(gains, delays, az, el)


def _synthesize(
    paths: PathSet,
    waveform: WaveformConfig,
    array: ArrayGeometry,
    jitter_rng: np.random.Generator | None,
) -> np.ndarray:
    n_s = waveform.n_subcarriers
    f = delay_vector(paths.delays, n_s)  # (N_s, L)
    a = np.stack(
        [steering_matrix(array, [az], el)[:, 0] for az, el in zip(paths.azimuths, paths.elevations)],
        axis=1,
    )  # (N_a, L)
    if jitter_rng is None:
        h = (f * paths.gains) @ a.T
        return np.broadcast_to(h, (waveform.n_symbols,) + h.shape).copy()
    # independent per-symbol phase on every path decorrelates the paths
    psi = jitter_rng.uniform(0.0, 2 * np.pi, (waveform.n_symbols, len(paths)))
    g = paths.gains * np.exp(1j * psi)
    return np.einsum("ml,kl,nl->kmn", f, g, a)


def carrier_cfr(
    paths: PathSet,
    waveform: WaveformConfig,
    array: ArrayGeometry,
    *,
    tx_index: int = 0,
    rx_index: int = 0,
    jitter_rng: np.random.Generator | None = None,
) -> CfrStack:
    """Noiseless carrier CFR, identical across symbols unless gain jitter is enabled."""
    return CfrStack(
        _synthesize(paths, waveform, array, jitter_rng), "carrier", tx_index, rx_index
    )


def backscatter_cfr(
    tx_tag: PathSet,
    tag_rx: PathSet,
    waveform: WaveformConfig,
    array: ArrayGeometry,
    *,
    tx_index: int = 0,
    rx_index: int = 0,
    tag_index: int | None = None,
    jitter_rng: np.random.Generator | None = None,
) -> CfrStack:
    paths = compose_backscatter(tx_tag, tag_rx, waveform)
    return CfrStack(
        _synthesize(paths, waveform, array, jitter_rng),
        "backscatter",
        tx_index,
        rx_index,
        tag_index,
    )


def add_noise(
    cfr: CfrStack,
    snr_db: float,
    rng: np.random.Generator,
    noise_var: float | None = None,
) -> CfrStack:
    """Add circular complex Gaussian noise at the given per-entry SNR.

    ``noise_var`` overrides the SNR-derived variance (useful for a zero signal).
    ``snr_db = inf`` returns an unchanged copy.
    """
    if noise_var is None:
        if np.isnan(snr_db):
            raise ValueError("snr_db must not be NaN")
        if np.isposinf(snr_db):
            return replace(cfr, symbols=cfr.symbols.copy())
        power = np.mean(np.abs(cfr.symbols) ** 2)
        noise_var = power / 10 ** (snr_db / 10)
    shape = cfr.symbols.shape
    noise = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    return replace(cfr, symbols=cfr.symbols + np.sqrt(noise_var / 2) * noise)


@dataclass
class Realization:
    """Noisy channel stacks of one scenario: carriers by (tx, rx), backscatter by (tag, tx, rx)."""

    scenario: Scenario
    carriers: dict
    backscatter: dict


def simulate(
    scenario: Scenario,
    tag_indices=None,
    tx_indices=None,
    rx_indices=None,
    gain_jitter: bool = False,
) -> Realization:
    """Synthesize and add noise to every requested carrier and backscatter stack.

    Random streams are keyed by (scenario.seed, link) so any subset of links
    reproduces the same stacks regardless of generation order.
    """
    tags = range(scenario.n_tags) if tag_indices is None else tag_indices
    txs = range(scenario.n_tx) if tx_indices is None else tx_indices
    rxs = range(scenario.n_rx) if rx_indices is None else rx_indices
    wf, arr = scenario.waveform, scenario.rx_array

    def jitter(*key):
        return _link_rng(scenario, _JITTER, *key) if gain_jitter else None

    carriers = {}
    for i in txs:
        for j in rxs:
            clean = carrier_cfr(
                carrier_paths(scenario, i, j), wf, arr, tx_index=i, rx_index=j,
                jitter_rng=jitter(0, i, j),
            )
            carriers[(i, j)] = add_noise(clean, scenario.snr_db, _link_rng(scenario, _NOISE, 0, i, j))
    backscatter = {}
    for t in tags:
        for j in rxs:
            leg2 = tag_rx_paths(scenario, t, j)
            for i in txs:
                clean = backscatter_cfr(
                    tx_tag_paths(scenario, t, i), leg2, wf, arr,
                    tx_index=i, rx_index=j, tag_index=t, jitter_rng=jitter(1, t, i, j),
                )
                backscatter[(t, i, j)] = add_noise(
                    clean, scenario.snr_db, _link_rng(scenario, _NOISE, 1, t, i, j)
                )
    return Realization(scenario, carriers, backscatter)
