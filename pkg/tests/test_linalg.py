import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from backscatter_loc.linalg import (
    dft2_stack,
    hermitian_evd,
    mdl_order,
    oversampled_dft2,
    pseudo_inverse,
)


def random_hermitian(rng, n, scale=1.0):
    a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return scale * (a + a.conj().T) / 2


@pytest.mark.parametrize("backend", ["lapack", "native"])
def test_evd_small_examples(backend):
    w, _ = hermitian_evd(np.eye(3), backend)
    np.testing.assert_allclose(w, [1, 1, 1])
    w, v = hermitian_evd(np.diag([1.0, 3.0]), backend)
    np.testing.assert_allclose(w, [3, 1])
    np.testing.assert_allclose(np.abs(v[:, 0]), [0, 1], atol=1e-15)


@pytest.mark.parametrize("backend", ["lapack", "native"])
@pytest.mark.parametrize("n", [1, 2, 5, 40, 164])
def test_evd_reconstruction_and_orthonormality(backend, n):
    rng = np.random.default_rng(n)
    a = random_hermitian(rng, n)
    w, v = hermitian_evd(a, backend)
    assert np.all(np.diff(w) <= 0)
    recon = v @ np.diag(w) @ v.conj().T
    assert np.linalg.norm(a - recon) / np.linalg.norm(a) < 1e-10
    assert np.linalg.norm(v.conj().T @ v - np.eye(n)) < 1e-9
    assert w.sum() == pytest.approx(np.trace(a).real, rel=1e-9)


def test_native_evd_matches_lapack_eigenvalues():
    rng = np.random.default_rng(7)
    a = random_hermitian(rng, 30)
    np.testing.assert_allclose(hermitian_evd(a, "native")[0], hermitian_evd(a)[0], atol=1e-10)


def test_native_evd_rank_deficient_covariance():
    rng = np.random.default_rng(3)
    y = rng.standard_normal((20, 2)) + 1j * rng.standard_normal((20, 2))
    a = y @ y.conj().T
    w, v = hermitian_evd(a, "native")
    assert np.linalg.norm(a - v @ np.diag(w) @ v.conj().T) < 1e-10 * np.linalg.norm(a)
    assert np.all(np.abs(w[2:]) < 1e-10 * w[0])


def test_evd_rejects_bad_input():
    with pytest.raises(ValueError):
        hermitian_evd(np.zeros((2, 3)))
    with pytest.raises(ValueError):
        hermitian_evd(np.array([[1.0, 2.0], [0.0, 1.0]]))
    with pytest.raises(ValueError):
        hermitian_evd(np.eye(2), backend="magic")


def penrose_errors(a, x):
    return (
        np.linalg.norm(a @ x @ a - a),
        np.linalg.norm(x @ a @ x - x),
        np.linalg.norm((a @ x).conj().T - a @ x),
        np.linalg.norm((x @ a).conj().T - x @ a),
    )


def test_pinv_of_unit_modulus_vector():
    f = np.exp(-2j * np.pi * np.arange(-20, 20) * 0.37 / 40)[:, None]
    fp = pseudo_inverse(f)
    np.testing.assert_allclose(fp, f.conj().T / 40, atol=1e-15)
    assert (fp @ f)[0, 0] == pytest.approx(1.0)


def test_pinv_identity_and_orthonormal_columns():
    np.testing.assert_allclose(pseudo_inverse(np.eye(4)), np.eye(4))
    q, _ = np.linalg.qr(np.random.default_rng(0).standard_normal((6, 3)) + 0j)
    np.testing.assert_allclose(pseudo_inverse(q), q.conj().T, atol=1e-12)


@pytest.mark.parametrize("shape, rank", [((40, 4), 4), ((7, 5), 3), ((3, 8), 2)])
def test_pinv_penrose_conditions(shape, rank):
    rng = np.random.default_rng(sum(shape))
    a = (rng.standard_normal((shape[0], rank)) + 1j * rng.standard_normal((shape[0], rank))) @ (
        rng.standard_normal((rank, shape[1]))
    )
    x, r = pseudo_inverse(a, return_rank=True)
    assert r == rank
    for err in penrose_errors(a, x):
        assert err < 1e-9 * np.linalg.norm(a)


def test_pinv_rejects_empty():
    with pytest.raises(ValueError):
        pseudo_inverse(np.zeros((0, 3)))


def naive_dft2(h, g_tau, g_theta):
    """Direct double sum of the matched-filter spectrum."""
    n_s, n_a = h.shape
    m_idx = np.arange(-(n_s // 2), n_s - n_s // 2)
    out = np.zeros((g_tau, g_theta))
    for p in range(g_tau):
        tau = n_s * p / g_tau
        for qi, q in enumerate(range(-(g_theta // 2), g_theta - g_theta // 2)):
            v = 2 * q / g_theta
            acc = 0j
            for mi, m in enumerate(m_idx):
                for n in range(n_a):
                    acc += h[mi, n] * np.exp(2j * np.pi * tau * m / n_s) * np.exp(-1j * np.pi * v * n)
            out[p, qi] = abs(acc)
    return out


@pytest.mark.parametrize("g_tau, g_theta", [(8, 4), (16, 8), (12, 6)])
def test_dft2_matches_naive_double_loop(g_tau, g_theta):
    rng = np.random.default_rng(g_tau)
    h = rng.standard_normal((8, 4)) + 1j * rng.standard_normal((8, 4))
    np.testing.assert_allclose(oversampled_dft2(h, g_tau, g_theta), naive_dft2(h, g_tau, g_theta), atol=1e-10)


def test_dft2_all_ones_and_zeros():
    s = oversampled_dft2(np.ones((10, 4)), 64, 16)
    assert s.max() == pytest.approx(40.0)
    assert np.unravel_index(np.argmax(s), s.shape) == (0, 8)  # tau = 0, v = 0
    assert not oversampled_dft2(np.zeros((10, 4)), 64, 16).any()


def test_dft2_peak_at_on_grid_path():
    n_s, n_a, g_tau, g_theta = 16, 4, 64, 16
    p0, q0 = 9, 11
    tau0 = n_s * p0 / g_tau
    v0 = 2 * (q0 - g_theta // 2) / g_theta
    f = np.exp(-2j * np.pi * np.arange(-8, 8) * tau0 / n_s)
    a = np.exp(1j * np.pi * np.arange(n_a) * v0)
    s = oversampled_dft2(np.outer(f, a), g_tau, g_theta)
    assert np.unravel_index(np.argmax(s), s.shape) == (p0, q0)
    assert np.sum(s >= s.max() - 1e-9) == 1
    np.testing.assert_allclose(s, naive_dft2(np.outer(f, a), g_tau, g_theta), atol=1e-9)


def test_dft2_batch_equals_single():
    rng = np.random.default_rng(1)
    stack = rng.standard_normal((3, 8, 2)) + 1j * rng.standard_normal((3, 8, 2))
    batch = dft2_stack(stack, 32, 8)
    for k in range(3):
        np.testing.assert_allclose(np.abs(batch[k]), oversampled_dft2(stack[k], 32, 8), atol=1e-12)


def test_dft2_rejects_coarse_grid():
    with pytest.raises(ValueError):
        oversampled_dft2(np.ones((8, 4)), 4, 8)


def mdl_scores(lam, n):
    m = len(lam)
    out = []
    for k in range(m):
        tail = lam[k:]
        geo = math.exp(sum(math.log(x) for x in tail) / len(tail))
        ari = sum(tail) / len(tail)
        out.append(-(m - k) * n * math.log(geo / ari) + 0.5 * k * (2 * m - k) * math.log(n))
    return out


@pytest.mark.parametrize(
    "lam, n, expected",
    [([100, 1, 1, 1], 50, 1), ([5, 5, 5], 50, 1), ([50, 40, 1, 1, 1, 1], 50, 2)],
)
def test_mdl_examples(lam, n, expected):
    assert mdl_order(lam, n) == expected
    direct = int(np.argmin(mdl_scores(lam, n)))
    assert max(1, min(direct, len(lam) - 1)) == expected


@settings(max_examples=50)
@given(st.lists(st.floats(0.01, 1e3), min_size=2, max_size=12), st.integers(12, 500))
def test_mdl_matches_direct_score(lam, n):
    lam = sorted(lam, reverse=True)
    direct = int(np.argmin(mdl_scores(lam, n)))
    assert mdl_order(lam, n) == max(1, min(direct, len(lam) - 1))


def test_mdl_few_snapshots_uses_leading_eigenvalues():
    lam = [100.0, 1.0, 1.1, 0.9] + [0.0] * 20
    assert mdl_order(lam, 4) == 1


def test_mdl_rejects_empty():
    with pytest.raises(ValueError):
        mdl_order([], 10)
