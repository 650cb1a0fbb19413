"""
Range and angle of one backscatter link
=======================================

Simulate the carrier and backscatter channels seen by a 4-element array,
then ask every estimator for the tag's bistatic range and arrival angle.
"""

import numpy as np

from backscatter_loc import channel, estimation, geometry, harness

# One deployment: four transmitters on the corners of an 18 x 6 m room,
# a receiver in the middle, a 5 x 5 grid of tags and two scatterers.
scenario = channel.room_scenario(seed=1)
tag, tx = 7, 0

real = channel.simulate(scenario, tag_indices=[tag], tx_indices=[tx])
h0 = real.carriers[(tx, 0)]
hb = real.backscatter[(tag, tx, 0)]
print("carrier stack:", h0.symbols.shape, " backscatter stack:", hb.symbols.shape)

# The carrier's own line-of-sight delay is known from the node layout.
tx_pos, rx_pos = scenario.tx_positions[tx], scenario.rx_positions[0]
tau0 = geometry.range_to_delay(np.linalg.norm(tx_pos - rx_pos), scenario.waveform.bandwidth)

d_true = geometry.bistatic_range(scenario.tags[tag], tx_pos, rx_pos)
az_true = harness.true_azimuth(scenario, tag, 0)
print(f"true range {d_true:.2f} m, true angle {np.degrees(az_true):.1f} deg\n")

grid = estimation.GridSpec(scenario.waveform.n_subcarriers)
for name, fn in estimation.ESTIMATORS.items():
    try:
        est = fn(h0, hb, grid, tau0)
    except estimation.NoPeakError:
        print(f"{name:15s} no peak")
        continue
    angle = "   -   " if est.azimuth is None else f"{np.degrees(est.azimuth):6.1f}"
    print(f"{name:15s} range {est.bistatic_range:6.2f} m  (err {abs(est.bistatic_range - d_true):.2f})  angle {angle}")
