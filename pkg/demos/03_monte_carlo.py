"""
A small Monte-Carlo comparison
==============================

Run a handful of trials on a coarse grid, then summarize range, angle and
position errors per method. The full-size runs use the `backscatter-loc e2e`
command with the default grid.
"""

from backscatter_loc.harness import ExperimentConfig, cdfs_by_method, run_experiment

cfg = ExperimentConfig(
    n_trials=10,
    g_tau=1024,
    g_theta=64,
    estimators=["fft2d", "srae", "jrac", "cir_first_peak"],
    positioners=["irls:jrac", "ml_gradient:jrac", "ml_gradient:jrac:range"],
)
records = run_experiment(cfg)

for metric in ("range_err_m", "angle_err_rad", "pos_err_m"):
    print(f"\n{metric}")
    for name, cdf in cdfs_by_method(records, metric).items():
        if cdf is None:
            print(f"  {name:24s} every attempt failed")
            continue
        print(f"  {name:24s} median {cdf.median:7.3f}  mean {cdf.mean:7.3f}  failures {cdf.failure_rate:5.1%}")
