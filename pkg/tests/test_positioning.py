import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from backscatter_loc.channel import ROOM_RX, ROOM_TX
from backscatter_loc.positioning import (
    AngleMeasurement,
    DegenerateRowError,
    MeasurementSet,
    RangeMeasurement,
    UnsolvableGeometryError,
    build_pseudolinear,
    ellipse_seed_points,
    grad_log_likelihood,
    irls_solve,
    log_likelihood,
    log_likelihood_many,
    ml_gradient_ascent,
    ml_grid_search,
)

TX = np.array(ROOM_TX)
RX = np.array(ROOM_RX)


def exact_set(p, tx=TX, rx=RX, angles=True, range_noise=None, sigma=1.0, kappa=1.0):
    p = np.asarray(p, dtype=float)
    noise = np.zeros(len(tx)) if range_noise is None else range_noise
    ranges = [
        RangeMeasurement(np.linalg.norm(p - t) + np.linalg.norm(p - rx[0]) + noise[i], i, 0, sigma)
        for i, t in enumerate(tx)
    ]
    ang = []
    if angles:
        u = (p - rx[0]) / np.linalg.norm(p - rx[0])
        ang = [AngleMeasurement(u, 0, kappa)]
    return MeasurementSet(ranges, ang, tx, rx)


def scalar_log_likelihood(p, m):
    """Term-by-term evaluation with plain floats."""
    total = 0.0
    for r in m.ranges:
        t, x = m.tx_positions[r.tx_index], m.rx_positions[r.rx_index]
        pred = math.dist(p, t) + math.dist(p, x)
        total += -((r.d_hat - pred) ** 2) / (2 * r.sigma**2)
    for a in m.angles:
        x = m.rx_positions[a.rx_index]
        dist = math.dist(p, x)
        total += a.kappa * sum(ui * (pi - xi) / dist for ui, pi, xi in zip(a.u_hat, p, x))
    return total


def test_likelihood_examples():
    # tag on the ellipse: range term vanishes
    m = MeasurementSet([RangeMeasurement(8.0, 0, 0)] * 2, [], [(0.0, 0.0)], [(4.0, 0.0)])
    assert log_likelihood((0.0, 3.0), m) == pytest.approx(0.0, abs=1e-12)
    # direction matches exactly: angle term equals kappa
    m = MeasurementSet([], [AngleMeasurement((0.0, 1.0), 0, 2.5), AngleMeasurement((0.0, 1.0), 0, 2.5)], [(0.0, 0.0)], [(0.0, 0.0)])
    assert log_likelihood((0.0, 4.0), m) == pytest.approx(5.0)
    # one meter off with sigma 0.5
    m = MeasurementSet([RangeMeasurement(9.0, 0, 0, 0.5), RangeMeasurement(8.0, 0, 0)], [], [(0.0, 0.0)], [(4.0, 0.0)])
    assert log_likelihood((0.0, 3.0), m) == pytest.approx(-2.0)


def test_likelihood_singular_at_receiver():
    m = exact_set((-4.0, 2.0))
    with pytest.raises(ValueError):
        log_likelihood(RX[0], m)
    assert np.isnan(log_likelihood_many([RX[0]], m)[0])


def test_likelihood_matches_scalar_oracle():
    rng = np.random.default_rng(0)
    m = exact_set((-5.0, 1.5), range_noise=rng.normal(0, 0.5, 4), kappa=3.0)
    pts = rng.uniform((-18, 0), (0, 6), size=(50, 2))
    np.testing.assert_allclose(log_likelihood_many(pts, m), [scalar_log_likelihood(p, m) for p in pts], rtol=1e-12)


def test_gradient_matches_central_differences():
    rng = np.random.default_rng(1)
    m = exact_set((-7.0, 4.0), range_noise=rng.normal(0, 0.3, 4), kappa=2.0)
    h = 1e-6
    for p in rng.uniform((-18, 0), (0, 6), size=(100, 2)):
        g = grad_log_likelihood(p, m)
        fd = np.array([(log_likelihood(p + h * e, m) - log_likelihood(p - h * e, m)) / (2 * h) for e in np.eye(2)])
        assert np.linalg.norm(g - fd) <= 1e-6 * max(1.0, np.linalg.norm(fd))


def test_angle_gradient_vanishes_along_the_ray():
    u = np.array([0.6, 0.8])
    m = MeasurementSet([], [AngleMeasurement(u, 0), AngleMeasurement(u, 0)], [(0.0, 0.0)], [(0.0, 0.0)])
    for t in (0.5, 2.0, 10.0):
        np.testing.assert_allclose(grad_log_likelihood(t * u, m), 0.0, atol=1e-14)
    g = grad_log_likelihood(np.array([1.0, 0.0]), m)
    assert g @ np.array([1.0, 0.0]) == pytest.approx(0.0, abs=1e-14)  # perpendicular to the position vector


def test_gradient_singular_at_node():
    with pytest.raises(ValueError):
        grad_log_likelihood(TX[0], exact_set((-3.0, 3.0)))


def test_measurement_set_validation():
    with pytest.raises(ValueError):
        MeasurementSet([RangeMeasurement(5.0, 0, 0)], [], TX, RX)
    with pytest.raises(IndexError):
        MeasurementSet([RangeMeasurement(5.0, 9, 0)] * 2, [], TX, RX)
    with pytest.raises(ValueError):
        RangeMeasurement(-1.0, 0, 0)
    with pytest.raises(ValueError):
        AngleMeasurement((1.0, 1.0), 0)


def test_grid_search_is_exhaustive():
    rng = np.random.default_rng(2)
    m = exact_set((-6.1, 2.3), range_noise=rng.normal(0, 0.5, 4))
    region = ((-8.0, 1.0), (-4.0, 4.0))
    est = ml_grid_search(m, region, 0.25, chunk=7)
    best = max(
        ((scalar_log_likelihood((x, y), m), (x, y)) for x in np.arange(-8.0, -3.99, 0.25) for y in np.arange(1.0, 4.01, 0.25)),
        key=lambda t: t[0],
    )
    np.testing.assert_allclose(est.p_hat, best[1])
    assert est.objective == pytest.approx(best[0])
    assert est.iterations == 17 * 13


def test_grid_search_single_cell_and_clipped_region():
    m = exact_set((-6.0, 2.0))
    est = ml_grid_search(m, ((-1.0, 1.0), (-1.0, 1.0)), 0.1)
    np.testing.assert_allclose(est.p_hat, (-1.0, 1.0))
    est = ml_grid_search(m, ((-3.0, 0.0), (0.0, 6.0)), 0.05)
    assert est.p_hat[0] == pytest.approx(-3.0)  # optimum lies outside, answer sits on the nearest edge


def test_grid_search_noiseless_hits_cell():
    est = ml_grid_search(exact_set((-6.0, 2.5)), ((-18.0, 0.0), (0.0, 6.0)), 0.05)
    assert np.linalg.norm(est.p_hat - (-6.0, 2.5)) < 0.05


def test_grid_search_rejects_bad_input():
    m = exact_set((-6.0, 2.0))
    with pytest.raises(ValueError):
        ml_grid_search(m, ((0.0, 0.0), (1.0, 1.0)), 0.0)
    with pytest.raises(ValueError):
        ml_grid_search(m, ((1.0, 0.0), (0.0, 1.0)), 0.1)


def test_ellipse_seeds_three_four_five():
    seeds = ellipse_seed_points(RangeMeasurement(10.0, 0, 0), [(0.0, 0.0)], [(6.0, 0.0)])
    np.testing.assert_allclose(seeds, [(3, 0), (-2, 0), (8, 0), (3, 4), (3, -4)], atol=1e-12)
    for s in seeds[1:]:
        assert math.dist(s, (0, 0)) + math.dist(s, (6, 0)) == pytest.approx(10.0)


def test_ellipse_seeds_degenerate_and_circle():
    seeds = ellipse_seed_points(RangeMeasurement(5.0, 0, 0), [(0.0, 0.0)], [(6.0, 0.0)])
    np.testing.assert_allclose(seeds, [(3, 0), (0, 0), (6, 0), (3, 0), (3, 0)], atol=1e-12)
    seeds = ellipse_seed_points(RangeMeasurement(4.0, 0, 0), [(1.0, 1.0)], [(1.0, 1.0)])
    np.testing.assert_allclose(np.linalg.norm(seeds[1:] - (1, 1), axis=1), 2.0)


def test_gradient_ascent_noiseless():
    for p in [(-4.0, 1.0), (-12.5, 4.5), (-2.0, 5.0)]:
        est = ml_gradient_ascent(exact_set(p))
        assert np.linalg.norm(est.p_hat - p) < 0.1


def test_gradient_ascent_trace_is_monotone():
    rng = np.random.default_rng(3)
    est = ml_gradient_ascent(exact_set((-10.0, 2.0), range_noise=rng.normal(0, 1.0, 4)))
    assert np.all(np.diff(est.trace) > 0)
    assert est.objective == est.trace[-1]


def test_gradient_ascent_single_iteration():
    est = ml_gradient_ascent(exact_set((-10.0, 2.0)), k_max=1)
    assert est.iterations == 1
    with pytest.raises(ValueError):
        ml_gradient_ascent(exact_set((-10.0, 2.0)), k_max=0)


def test_gradient_ascent_all_seeds_singular():
    m = MeasurementSet([], [AngleMeasurement((1.0, 0.0), 0), AngleMeasurement((0.0, 1.0), 0)], [(0.0, 0.0)], [(0.0, 0.0)])
    with pytest.raises(UnsolvableGeometryError):
        ml_gradient_ascent(m, seeds=[(0.0, 0.0)])


def test_pseudolinear_exact_on_noiseless_data():
    p = np.array([-5.0, 2.0])
    m = exact_set(p)
    phi, rhs = build_pseudolinear(m)
    assert phi.shape == (6, 3)
    np.testing.assert_array_equal(rhs[:4], 1.0)
    np.testing.assert_allclose(rhs[4:], RX[0])
    ups = np.concatenate([p, [np.linalg.norm(p - RX[0])]])
    assert np.max(np.abs(phi @ ups - rhs)) < 1e-9
    np.testing.assert_allclose(phi[4:, :2], np.eye(2))
    np.testing.assert_allclose(phi[4:, 2], -m.angles[0].u_hat)


def test_pseudolinear_degenerate_row():
    # d^2 - |tx|^2 + |rx|^2 == 0
    m = MeasurementSet([RangeMeasurement(5.0, 0, 0), RangeMeasurement(6.0, 1, 0)], [], [(5.0, 0.0), (0.0, 0.0)], [(0.0, 0.0)])
    with pytest.raises(DegenerateRowError):
        build_pseudolinear(m)


def test_irls_noiseless_exact():
    rng = np.random.default_rng(4)
    for p in rng.uniform((-17, 0.5), (-1, 5.5), size=(20, 2)):
        assert np.linalg.norm(irls_solve(exact_set(p)).p_hat - p) < 1e-6


def test_irls_ranges_only():
    p = np.array([-7.0, 4.0])
    est = irls_solve(exact_set(p, angles=False))
    assert np.linalg.norm(est.p_hat - p) < 1e-6


def test_irls_downweights_outlier():
    noise = np.array([0.0, 4.0, 0.0, 0.0])
    est = irls_solve(exact_set((-6.0, 2.0), range_noise=noise))
    clean = np.delete(est.weights, 1)
    assert est.weights[1] < 0.1 * np.median(clean)


def test_irls_single_iteration_is_least_squares():
    rng = np.random.default_rng(5)
    m = exact_set((-9.0, 1.0), range_noise=rng.normal(0, 0.3, 4))
    phi, rhs = build_pseudolinear(m)
    ups = np.linalg.lstsq(phi, rhs, rcond=None)[0]
    p1 = ups[:2]
    d2 = ups[2] ** 2 + 2 * RX[0] @ p1 - RX[0] @ RX[0]
    a = np.vstack([np.eye(2), np.ones((1, 2))])
    sq = np.linalg.lstsq(a, np.concatenate([ups[:2] ** 2, [d2]]), rcond=None)[0]
    expected = np.sign(p1) * np.sqrt(np.maximum(sq, 0))
    np.testing.assert_allclose(irls_solve(m, k_iters=1).p_hat, expected, atol=1e-9)


def test_irls_rank_deficient():
    m = MeasurementSet([RangeMeasurement(5.0, 0, 0), RangeMeasurement(5.0, 0, 0)], [], [(0.0, 1.0)], [(3.0, 1.0)])
    with pytest.raises(UnsolvableGeometryError):
        irls_solve(m)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.1, 10.0))
def test_irls_scale_invariance(scale):
    p = np.array([-6.0, 2.0])
    m = exact_set(p * scale, tx=TX * scale, rx=RX * scale)
    np.testing.assert_allclose(irls_solve(m).p_hat, p * scale, rtol=1e-6, atol=1e-6 * scale)
