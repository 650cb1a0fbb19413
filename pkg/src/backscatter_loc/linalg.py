"""Small dense complex kernels: Hermitian EVD, pseudo-inverse, 2D DFT spectra, MDL."""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np


class EvdResult(NamedTuple):
    eigenvalues: np.ndarray  # real, descending
    eigenvectors: np.ndarray  # columns, unit norm


def _check_hermitian(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    scale = np.linalg.norm(a)
    if np.linalg.norm(a - a.conj().T) > 1e-10 * max(scale, 1e-300):
        raise ValueError("matrix is not Hermitian")
    return a


def hermitian_evd(a, backend: str = "lapack") -> EvdResult:
    """Eigendecomposition of a Hermitian matrix, eigenvalues sorted descending.

    ``backend="lapack"`` calls ``numpy.linalg.eigh``; ``backend="native"`` runs
    the in-package Householder tridiagonalization + implicit QL iteration.
    """
    a = _check_hermitian(a)
    if backend == "lapack":
        w, v = np.linalg.eigh(a)
    elif backend == "native":
        w, v = _householder_ql(a.astype(complex))
    else:
        raise ValueError(f"unknown backend {backend!r}")
    order = np.argsort(w, kind="stable")[::-1]
    return EvdResult(w[order], v[:, order])


def _householder_ql(a: np.ndarray):
    n = a.shape[0]
    t = a.copy()
    q = np.eye(n, dtype=complex)
    for k in range(n - 2):
        x = t[k + 1 :, k]
        xnorm = np.linalg.norm(x)
        if xnorm == 0.0:
            continue
        phase = x[0] / abs(x[0]) if x[0] != 0 else 1.0
        v = x.copy()
        v[0] += phase * xnorm
        v /= np.linalg.norm(v)
        # H = I - 2 v v^H acting on indices k+1..n-1
        t[k + 1 :, :] -= 2.0 * np.outer(v, v.conj() @ t[k + 1 :, :])
        t[:, k + 1 :] -= 2.0 * np.outer(t[:, k + 1 :] @ v, v.conj())
        q[:, k + 1 :] -= 2.0 * np.outer(q[:, k + 1 :] @ v, v.conj())

    d = t.diagonal().real.copy()
    sub = t.diagonal(-1).copy()
    # diagonal unitary similarity making the off-diagonal real and non-negative
    phases = np.ones(n, dtype=complex)
    for k in range(n - 1):
        mag = abs(sub[k])
        phases[k + 1] = phases[k] * (sub[k] / mag if mag > 0 else 1.0)
    z = q * phases[np.newaxis, :]
    e = np.zeros(n)
    e[: n - 1] = np.abs(sub)
    _tql(d, e, z)
    return d, z


def _tql(d: np.ndarray, e: np.ndarray, z: np.ndarray, max_iter: int = 60) -> None:
    """Implicit-shift QL on a real symmetric tridiagonal (in place on d, e, z)."""
    n = d.shape[0]
    eps = np.finfo(float).eps
    for l in range(n):
        it = 0
        while True:
            m = l
            while m < n - 1:
                dd = abs(d[m]) + abs(d[m + 1])
                if abs(e[m]) <= eps * dd:
                    break
                m += 1
            if m == l:
                break
            it += 1
            if it > max_iter:
                raise np.linalg.LinAlgError("QL iteration did not converge")
            g = (d[l + 1] - d[l]) / (2.0 * e[l])
            r = math.hypot(g, 1.0)
            g = d[m] - d[l] + e[l] / (g + math.copysign(r, g))
            s = c = 1.0
            p = 0.0
            underflow = False
            for i in range(m - 1, l - 1, -1):
                f = s * e[i]
                b = c * e[i]
                r = math.hypot(f, g)
                e[i + 1] = r
                if r == 0.0:
                    d[i + 1] -= p
                    e[m] = 0.0
                    underflow = True
                    break
                s = f / r
                c = g / r
                g = d[i + 1] - p
                r = (d[i] - g) * s + 2.0 * c * b
                p = s * r
                d[i + 1] = g + p
                g = c * r - b
                zi = z[:, i].copy()
                z[:, i] = c * zi - s * z[:, i + 1]
                z[:, i + 1] = s * zi + c * z[:, i + 1]
            if underflow:
                continue
            d[l] -= p
            e[l] = g
            e[m] = 0.0


def pseudo_inverse(a, rcond: float = 1e-12, return_rank: bool = False):
    """Moore-Penrose inverse; singular values below ``rcond * s_max`` count as zero."""
    a = np.atleast_2d(np.asarray(a))
    if a.size == 0:
        raise ValueError("empty matrix")
    u, s, vh = np.linalg.svd(a, full_matrices=False)
    keep = s > rcond * s[0] if s[0] > 0 else np.zeros(s.shape, dtype=bool)
    inv = (vh[keep].conj().T / s[keep]) @ u[:, keep].conj().T
    return (inv, int(keep.sum())) if return_rank else inv


def delay_dft(stack, g_tau: int, dtype=np.complex128) -> np.ndarray:
    """Zero-padded DFT along the subcarrier axis of (B, N_s, N_a) data.

    Output ``[b, a, p] = sum_m h_b[m, a] exp(j 2 pi p m / G_tau)`` with
    ``m = -N_s/2 .. N_s/2-1``, i.e. ``f(tau_p)^H h`` for ``tau_p = N_s p / G_tau``.
    """
    stack = np.asarray(stack)
    b, n_s, n_a = stack.shape
    if g_tau < n_s:
        raise ValueError("grid must be at least as fine as the data")
    rows = np.arange(-(n_s // 2), n_s - n_s // 2) % g_tau
    padded = np.zeros((b, n_a, g_tau), dtype=dtype)
    padded[:, :, rows] = stack.transpose(0, 2, 1)
    # ifft with norm="forward" is the unnormalized sum with a positive exponent
    return np.fft.ifft(padded, axis=2, norm="forward").astype(dtype, copy=False)


def angle_kernel(n_a: int, g_theta: int, dtype=np.complex128) -> np.ndarray:
    """Conjugate half-wavelength ULA steering vectors on the sine grid, (N_a, G_theta)."""
    v = 2.0 * np.arange(-(g_theta // 2), g_theta - g_theta // 2) / g_theta
    return np.exp(-1j * np.pi * np.outer(np.arange(n_a), v)).astype(dtype)


def dft2_stack(stack, g_tau: int, g_theta: int, dtype=np.complex128) -> np.ndarray:
    """Zero-padded 2D DFT of a batch of N_s x N_a matrices.

    Output ``[b, p, q] = sum_{m,n} h_b[m, n] exp(j 2 pi p m / G_tau) exp(-j pi n v_q)``
    with ``m = -N_s/2 .. N_s/2-1`` (row order of ``h``) and ``v_q = 2 q' / G_theta``,
    ``q' = -G_theta/2 .. G_theta/2-1``; i.e. the matched filter ``f(tau)^H h a*(theta)``
    of a half-wavelength ULA evaluated on the delay/angle grid.
    """
    stack = np.asarray(stack)
    if stack.ndim == 2:
        stack = stack[np.newaxis]
    n_a = stack.shape[2]
    if g_theta < n_a:
        raise ValueError("grid must be at least as fine as the data")
    delay = delay_dft(stack, g_tau, dtype)
    return np.matmul(delay.transpose(0, 2, 1), angle_kernel(n_a, g_theta, dtype))


def oversampled_dft2(h, g_tau: int, g_theta: int, dtype=np.complex128) -> np.ndarray:
    """Magnitude of the zero-padded 2D DFT of one N_s x N_a matrix (G_tau x G_theta)."""
    h = np.asarray(h)
    if h.ndim != 2:
        raise ValueError("expected a single N_s x N_a matrix")
    return np.abs(dft2_stack(h, g_tau, g_theta, dtype)[0])


def mdl_order(eigenvalues, n_snapshots: int) -> int:
    """Signal-subspace dimension by the Wax-Kailath MDL criterion.

    When there are fewer snapshots than eigenvalues only the leading
    ``n_snapshots`` eigenvalues carry information; the rest are structurally
    zero and are left out of the score. The result is clamped to
    ``1 <= K <= M - 1``.
    """
    lam = np.sort(np.asarray(eigenvalues, dtype=float))[::-1]
    if lam.size == 0:
        raise ValueError("empty eigenvalue list")
    if n_snapshots < 1:
        raise ValueError("need at least one snapshot")
    m_total = lam.size
    m = min(m_total, n_snapshots)
    lam = lam[:m]
    floor = max(lam[0], np.finfo(float).tiny) * 1e-12
    lam = np.maximum(lam, floor)
    log_n = math.log(n_snapshots)
    scores = np.empty(m)
    for k in range(m):
        tail = lam[k:]
        log_ratio = np.mean(np.log(tail)) - math.log(np.mean(tail))
        scores[k] = -(m - k) * n_snapshots * log_ratio + 0.5 * k * (2 * m - k) * log_n
    k_best = int(np.argmin(scores))
    return max(1, min(k_best, m_total - 1))
