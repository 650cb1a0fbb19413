"""Joint range/angle estimators and a range-only first-peak baseline.

Every estimator works in two halves: the carrier stack gives the LoS delay
``tau0_hat`` and the backscatter stack gives the bistatic LoS delay (strictly
later) plus its angle. The carrier half only depends on the TX-RX link, so
callers that process many tags may compute it once and pass ``tau0_hat``.
"""

from __future__ import annotations

import numpy as np

from ..channel import CfrStack, delay_vector
from ..linalg import angle_kernel, delay_dft, dft2_stack, hermitian_evd, mdl_order
from .common import (
    DegenerateSubspaceError,
    GridSpec,
    NoPeakError,
    RangeAngleEstimate,
    check_stacks,
    first_peak_1d,
    los_peak_2d,
    normalize,
    tdoa_to_range,
)

DEFAULT_BANDWIDTH = 40e6
SPECTRUM_DTYPE = np.complex64
_MUSIC_BATCH = 16


def _ula_steering(n_a: int, sin_thetas: np.ndarray) -> np.ndarray:
    return np.exp(1j * np.pi * np.outer(np.arange(n_a), sin_thetas))


# ---------------------------------------------------------------- 2D FFT


def fft2d_spectrum(stack: CfrStack, grid: GridSpec) -> np.ndarray:
    """Sum over symbols of the oversampled 2D DFT magnitude, shape (G_tau, G_theta)."""
    out = np.zeros((grid.g_tau, grid.g_theta), dtype=np.float32)
    for h in stack.symbols:
        out += np.abs(dft2_stack(h, grid.g_tau, grid.g_theta, SPECTRUM_DTYPE)[0])
    return out


def _fft2d_carrier(h0, grid, t_min):
    row, _ = los_peak_2d(fft2d_spectrum(h0, grid), grid.taus, t_min)
    return grid.taus[row]


def _fft2d_backscatter(hb, grid, t_min, tau0_hat):
    row, col = los_peak_2d(fft2d_spectrum(hb, grid), grid.taus, t_min, after=tau0_hat)
    return grid.taus[row], grid.thetas[col]


# ---------------------------------------------------------------- 2D MUSIC


def music2d_spectrum(stack: CfrStack, grid: GridSpec) -> np.ndarray:
    """2D MUSIC pseudo-spectrum ``1 / |E_N^H u(tau, theta)|^2`` over the full grid."""
    n_sym, n_s, n_a = stack.symbols.shape
    if n_sym < 2:
        raise ValueError("2D MUSIC needs at least two symbols")
    # column-major vec(H) so that u = a (kron) f
    y = stack.symbols.transpose(0, 2, 1).reshape(n_sym, n_s * n_a).T
    r = y @ y.conj().T / n_sym
    evd = hermitian_evd(r)
    k = mdl_order(evd.eigenvalues, n_sym)
    if k >= n_s * n_a:
        raise DegenerateSubspaceError("no noise subspace")
    noise = evd.eigenvectors[:, k:]
    # each noise eigenvector reshaped to N_s x N_a; |e^H u|^2 is the squared 2D DFT magnitude
    basis = noise.T.reshape(-1, n_a, n_s).transpose(0, 2, 1)
    kernel = angle_kernel(n_a, grid.g_theta, SPECTRUM_DTYPE)
    acc = np.zeros((grid.g_tau, 2 * grid.g_theta), dtype=np.float32)  # interleaved re/im squares
    for start in range(0, basis.shape[0], _MUSIC_BATCH):
        delay = delay_dft(basis[start : start + _MUSIC_BATCH], grid.g_tau, SPECTRUM_DTYPE)
        for g in delay.transpose(0, 2, 1):
            parts = (g @ kernel).view(np.float32)
            acc += np.square(parts, out=parts)
    denom = acc.reshape(grid.g_tau, grid.g_theta, 2).sum(axis=2)
    floor = np.float32(1e-12) * max(float(denom.max()), np.finfo(np.float32).tiny)
    return 1.0 / np.maximum(denom, floor)


def _music2d_carrier(h0, grid, t_min):
    row, _ = los_peak_2d(music2d_spectrum(h0, grid), grid.taus, t_min)
    return grid.taus[row]


def _music2d_backscatter(hb, grid, t_min, tau0_hat):
    row, col = los_peak_2d(music2d_spectrum(hb, grid), grid.taus, t_min, after=tau0_hat)
    return grid.taus[row], grid.thetas[col]


# ---------------------------------------------------------------- SRAE


def delay_music_spectrum(stack: CfrStack, grid: GridSpec) -> np.ndarray:
    """Delay-only MUSIC spectrum over the delay grid, max-normalized.

    The N_s x N_s covariance averages ``H H^H`` over symbols; MDL sees
    ``N_sym * N_a`` snapshots (every antenna column of every symbol).
    """
    n_sym, n_s, n_a = stack.symbols.shape
    h = stack.symbols
    r = np.einsum("kma,kna->mn", h, h.conj()) / n_sym
    evd = hermitian_evd(r)
    k = mdl_order(evd.eigenvalues, n_sym * n_a)
    if k >= n_s:
        raise DegenerateSubspaceError("no noise subspace")
    noise = evd.eigenvectors[:, k:]
    proj = dft2_stack(noise.T[:, :, np.newaxis], grid.g_tau, 1)[:, :, 0]
    denom = np.sum(np.abs(proj) ** 2, axis=0)
    spectrum = 1.0 / np.maximum(denom, 1e-12 * denom.max())
    return spectrum / spectrum.max()


def _tap_angle(stack: CfrStack, tau: float, grid: GridSpec) -> float:
    """Angle of the tap at ``tau`` from a rank-1 spatial MUSIC spectrum."""
    n_s = stack.n_subcarriers
    f = delay_vector(tau, n_s)
    x = np.einsum("m,kma->ka", f.conj(), stack.symbols) / n_s  # rows are per-symbol taps
    r = x.T @ x.conj() / stack.n_symbols
    noise = hermitian_evd(r).eigenvectors[:, 1:]
    a = _ula_steering(stack.n_antennas, grid.sin_thetas)
    denom = np.sum(np.abs(noise.conj().T @ a) ** 2, axis=0)
    if denom.size == 0:
        # single antenna: no spatial information
        return float(grid.thetas[grid.g_theta // 2])
    return float(grid.thetas[np.argmax(1.0 / np.maximum(denom, 1e-300))])


def _srae_carrier(h0, grid, t_min):
    return grid.taus[first_peak_1d(delay_music_spectrum(h0, grid), grid.taus, t_min)]


def _srae_backscatter(hb, grid, t_min, tau0_hat):
    idx = first_peak_1d(delay_music_spectrum(hb, grid), grid.taus, t_min, after=tau0_hat)
    tau = grid.taus[idx]
    return tau, _tap_angle(hb, tau, grid)


# ---------------------------------------------------------------- JRAC


def cluster_1d(aggregated) -> list[tuple[int, int]]:
    """Inclusive index intervals of the non-zero support of a 1D profile."""
    t = np.concatenate(([0], (np.asarray(aggregated) != 0).astype(np.int8), [0]))
    b = np.diff(t)
    starts = np.flatnonzero(b == 1)
    stops = np.flatnonzero(b == -1) - 1
    return [(int(s), int(e)) for s, e in zip(starts, stops)]


def jrac_heatmap(stack: CfrStack, grid: GridSpec, tau_indices: np.ndarray) -> np.ndarray:
    """``sum_k |f(tau)^H H_k a*(theta)|^2`` on the selected delay rows, shape (len, G_theta).

    Evaluated as a quadratic form in the per-delay N_a x N_a covariance of the
    delay-filtered symbols, so the cost grows with N_a^2 instead of N_sym.
    """
    g = delay_dft(stack.symbols, grid.g_tau)[:, :, tau_indices]  # (K, N_a, T)
    c = np.einsum("kat,kbt->tab", g, g.conj())
    kernel = angle_kernel(stack.n_antennas, grid.g_theta)
    return np.einsum("aq,taq->tq", kernel, (c @ kernel.conj())).real


def jrac_clusters(stack: CfrStack, grid: GridSpec, t_min: float, t_max: float):
    """Delay/angle cluster peaks of one channel, sorted by delay.

    Returns a list of (tau_index, theta_index, value). Delay truncation and
    clustering run on the full delay axis so truncated islands stay apart.
    Angle clusters sharing one delay cluster are ordered strongest first.
    """
    keep = np.flatnonzero(delay_music_spectrum(stack, grid) >= t_min)
    if keep.size == 0:
        raise NoPeakError("delay truncation left no candidates")
    heat = np.zeros((grid.g_tau, grid.g_theta))
    heat[keep] = jrac_heatmap(stack, grid, keep)
    top = heat.max()
    if top <= 0:
        raise NoPeakError("heatmap is identically zero")
    heat[heat < t_max * top] = 0.0
    delay_clusters = cluster_1d(heat.sum(axis=1))
    angle_clusters = cluster_1d(heat.sum(axis=0))
    found = []
    for d0, d1 in delay_clusters:
        for a0, a1 in angle_clusters:
            block = heat[d0 : d1 + 1, a0 : a1 + 1]
            if not block.any():
                continue
            i, j = np.unravel_index(np.argmax(block), block.shape)
            found.append((d0, -float(block[i, j]), d0 + int(i), a0 + int(j)))
    if not found:
        raise NoPeakError("no non-empty cluster")
    found.sort()
    return [(row, col, -neg) for _, neg, row, col in found]


def _jrac_carrier(h0, grid, t_min, t_max):
    return grid.taus[jrac_clusters(h0, grid, t_min, t_max)[0][0]]


def _jrac_backscatter(hb, grid, t_min, t_max, tau0_hat):
    later = [c for c in jrac_clusters(hb, grid, t_min, t_max) if grid.taus[c[0]] > tau0_hat]
    if not later:
        raise NoPeakError("no backscatter cluster after the carrier delay")
    row, col, _ = later[0]
    return grid.taus[row], grid.thetas[col]


# ---------------------------------------------------------------- first-peak baseline


def cir_spectrum(stack: CfrStack, grid: GridSpec) -> np.ndarray:
    """Symbol-accumulated oversampled CIR magnitude of antenna 0."""
    cir = dft2_stack(stack.symbols[:, :, :1], grid.g_tau, 1, SPECTRUM_DTYPE)[:, :, 0]
    return np.abs(cir).sum(axis=0)


def _cir_carrier(h0, grid, t_min):
    return grid.taus[first_peak_1d(cir_spectrum(h0, grid), grid.taus, t_min)]


def _cir_backscatter(hb, grid, t_min, tau0_hat):
    return grid.taus[first_peak_1d(cir_spectrum(hb, grid), grid.taus, t_min, after=tau0_hat)], None


# ---------------------------------------------------------------- public wrappers


def _run(name, carrier, backscatter, h0, hb, grid, tau0_true, bandwidth, tau0_hat):
    check_stacks(h0, hb, grid)
    if tau0_hat is None:
        if h0 is None:
            raise ValueError("need the carrier stack or a precomputed tau0_hat")
        tau0_hat = carrier(h0)
    tau_b, theta = backscatter(hb, tau0_hat)
    return RangeAngleEstimate(
        bistatic_range=tdoa_to_range(tau0_true, tau_b, tau0_hat, bandwidth),
        azimuth=None if theta is None else float(theta),
        tau_carrier_hat=float(tau0_hat),
        tau_backscatter_hat=float(tau_b),
        method=name,
    )


def fft2d_estimate(h0, hb, grid, tau0_true, t_min=0.3, *, bandwidth=DEFAULT_BANDWIDTH, tau0_hat=None):
    return _run(
        "fft2d",
        lambda h: _fft2d_carrier(h, grid, t_min),
        lambda h, t0: _fft2d_backscatter(h, grid, t_min, t0),
        h0, hb, grid, tau0_true, bandwidth, tau0_hat,
    )


def music2d_estimate(h0, hb, grid, tau0_true, t_min=0.5, *, bandwidth=DEFAULT_BANDWIDTH, tau0_hat=None):
    return _run(
        "music2d",
        lambda h: _music2d_carrier(h, grid, t_min),
        lambda h, t0: _music2d_backscatter(h, grid, t_min, t0),
        h0, hb, grid, tau0_true, bandwidth, tau0_hat,
    )


def srae_estimate(h0, hb, grid, tau0_true, t_min=0.5, *, bandwidth=DEFAULT_BANDWIDTH, tau0_hat=None):
    return _run(
        "srae",
        lambda h: _srae_carrier(h, grid, t_min),
        lambda h, t0: _srae_backscatter(h, grid, t_min, t0),
        h0, hb, grid, tau0_true, bandwidth, tau0_hat,
    )


def jrac_estimate(
    h0, hb, grid, tau0_true, t_min=0.2, t_max=0.6, *, bandwidth=DEFAULT_BANDWIDTH, tau0_hat=None
):
    if not (0 < t_min and 0 < t_max < 1):
        raise ValueError("need 0 < t_min and 0 < t_max < 1")
    return _run(
        "jrac",
        lambda h: _jrac_carrier(h, grid, t_min, t_max),
        lambda h, t0: _jrac_backscatter(h, grid, t_min, t_max, t0),
        h0, hb, grid, tau0_true, bandwidth, tau0_hat,
    )


def cir_first_peak_range(h0, hb, grid, tau0_true, t_min=0.3, *, bandwidth=DEFAULT_BANDWIDTH, tau0_hat=None):
    return _run(
        "cir_first_peak",
        lambda h: _cir_carrier(h, grid, t_min),
        lambda h, t0: _cir_backscatter(h, grid, t_min, t0),
        h0, hb, grid, tau0_true, bandwidth, tau0_hat,
    )


ESTIMATORS = {
    "fft2d": fft2d_estimate,
    "music2d": music2d_estimate,
    "srae": srae_estimate,
    "jrac": jrac_estimate,
    "cir_first_peak": cir_first_peak_range,
}
