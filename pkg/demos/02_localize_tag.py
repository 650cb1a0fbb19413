"""
Locating a tag from ranges and one angle
========================================

Bistatic ranges put the tag on ellipses around each transmitter/receiver
pair; the array's angle adds a ray from the receiver. Three solvers turn
these measurements into a position.
"""

import time

import numpy as np

from backscatter_loc import channel, geometry, positioning

tx = np.array(channel.ROOM_TX)
rx = np.array(channel.ROOM_RX)
tag = np.array([-5.3, 1.7])
rng = np.random.default_rng(3)

# noisy ranges (30 cm) and a slightly rotated arrival direction
ranges = [
    positioning.RangeMeasurement(geometry.bistatic_range(tag, t, rx[0]) + 0.3 * rng.standard_normal(), i, 0)
    for i, t in enumerate(tx)
]
u = geometry.unit_direction(tag, rx[0])
c, s = np.cos(0.03), np.sin(0.03)
angles = [positioning.AngleMeasurement(np.array([[c, -s], [s, c]]) @ u, 0)]
m = positioning.MeasurementSet(ranges, angles, tx, rx)

# every range ellipse contributes five starting points for gradient ascent
print("seeds from the first ellipse:\n", positioning.ellipse_seed_points(ranges[0], tx, rx).round(2))

region = ((-19.0, -0.5), (1.0, 6.5))
runs = {
    "ml_grid (5 cm)": lambda: positioning.ml_grid_search(m, region, 0.05),
    "ml_gradient": lambda: positioning.ml_gradient_ascent(m),
    "irls": lambda: positioning.irls_solve(m),
}
print()
for name, run in runs.items():
    t0 = time.perf_counter()
    est = run()
    ms = 1e3 * (time.perf_counter() - t0)
    print(f"{name:15s} p = {est.p_hat.round(3)}  error {np.linalg.norm(est.p_hat - tag):.3f} m  {ms:8.2f} ms")

# IRLS weights: rows that disagree with the rest get pushed toward zero
bad = positioning.MeasurementSet(
    [ranges[0], positioning.RangeMeasurement(ranges[1].d_hat + 4.0, 1, 0), *ranges[2:]], angles, tx, rx
)
est = positioning.irls_solve(bad)
print("\nwith a 4 m outlier on TX 1, IRLS weights:", est.weights.round(4))
print("error", round(float(np.linalg.norm(est.p_hat - tag)), 3), "m")
