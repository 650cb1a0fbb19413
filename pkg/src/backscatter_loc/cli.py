"""Command-line entry point: simulate, estimate, localize, e2e, bench, cdf."""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path
from types import SimpleNamespace

import numpy as np

from . import harness
from .channel import simulate
from .dataset import load_dataset, save_dataset
from .estimation import ESTIMATORS
from .geometry import bistatic_range, range_to_delay
from .harness import ExperimentConfig, PositionerSpec


def _load_config(args) -> ExperimentConfig:
    base = json.loads(Path(args.config).read_text()) if args.config else {}
    if args.seed is not None:
        base["seed"] = args.seed
    if args.trials is not None:
        base["n_trials"] = args.trials
    if args.out is not None:
        base["out_dir"] = args.out
    if args.methods:
        estimators, positioners = [], []
        for item in args.methods.split(","):
            (positioners if ":" in item else estimators).append(item.strip())
        base["estimators"] = estimators
        base["positioners"] = positioners
    return ExperimentConfig.from_dict(base)


def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for trial in range(cfg.n_trials):
        scenario = cfg.scenario(trial)
        real = simulate(scenario, tx_indices=cfg.tx_indices, rx_indices=[0], gain_jitter=cfg.gain_jitter)
        stacks = list(real.carriers.values()) + list(real.backscatter.values())
        path = out / f"dataset_{trial:04d}.json"
        save_dataset(path, scenario, stacks)
        print(f"wrote {path} ({len(stacks)} stacks)")
    return 0


MEASUREMENT_COLUMNS = ("tag", "tx", "rx", "method", "d_hat_m", "azimuth_rad", "range_err_m", "failed")


def cmd_estimate(args) -> int:
    cfg = _load_config(args)
    scenario, stacks = load_dataset(args.dataset)
    grid = cfg.grid()
    carriers = {(s.tx_index, s.rx_index): s for s in stacks if s.channel_kind == "carrier"}
    backs = [s for s in stacks if s.channel_kind == "backscatter"]
    bw = scenario.waveform.bandwidth
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "measurements.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MEASUREMENT_COLUMNS)
        for name in cfg.estimators:
            for hb in backs:
                i, j, t = hb.tx_index, hb.rx_index, hb.tag_index
                tx, rx = scenario.tx_positions[i], scenario.rx_positions[j]
                tau0 = range_to_delay(np.linalg.norm(tx - rx), bw)
                try:
                    est = ESTIMATORS[name](
                        carriers[(i, j)], hb, grid, tau0, bandwidth=bw, **cfg.thresholds.get(name, {})
                    )
                except harness.ESTIMATOR_FAILURES:
                    w.writerow((t, i, j, name, "", "", "", 1))
                    continue
                err = float(abs(est.bistatic_range - bistatic_range(scenario.tags[t], tx, rx)))
                az = "" if est.azimuth is None else repr(est.azimuth)
                w.writerow((t, i, j, name, repr(est.bistatic_range), az, repr(err), 0))
    print(f"wrote {path}")
    return 0


def cmd_localize(args) -> int:
    cfg = _load_config(args)
    scenario, _ = load_dataset(args.dataset)
    estimates, tags = {}, set()
    with open(args.measurements, newline="") as fh:
        for row in csv.DictReader(fh):
            t, i = int(row["tag"]), int(row["tx"])
            tags.add(t)
            if int(row["failed"]):
                estimates[(row["method"], t, i)] = None
                continue
            az = float(row["azimuth_rad"]) if row["azimuth_rad"] else None
            estimates[(row["method"], t, i)] = SimpleNamespace(bistatic_range=float(row["d_hat_m"]), azimuth=az)
    specs = cfg.positioners or [PositionerSpec("irls", m) for m in sorted({k[0] for k in estimates})]
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "positions.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("tag", "method", "x", "y", "pos_err_m", "failed"))
        for spec in specs:
            for t in sorted(tags):
                try:
                    sets = harness.measurement_sets(cfg, scenario, estimates, spec, t)
                    est = harness.solve_position(cfg, spec, sets)
                except (ValueError, harness.UnsolvableGeometryError):
                    w.writerow((t, spec.label, "", "", "", 1))
                    continue
                err = float(np.linalg.norm(est.p_hat - scenario.tags[t]))
                w.writerow((t, spec.label, repr(float(est.p_hat[0])), repr(float(est.p_hat[1])), repr(err), 0))
    print(f"wrote {path}")
    return 0


def cmd_e2e(args) -> int:
    cfg = _load_config(args)
    records = harness.run_experiment(cfg, threads=args.threads)
    cdfs = {m: harness.cdfs_by_method(records, m) for m in ("range_err_m", "angle_err_rad", "pos_err_m")}
    summary = harness.emit_results(records, cdfs, None, cfg.out_dir)
    _print_summary(summary)
    return 0


def cmd_bench(args) -> int:
    cfg = _load_config(args)
    bench = harness.bench_runtimes(cfg)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    doc = {"runtimes": bench, "machine": harness.machine_info(), "g_tau": cfg.g_tau, "g_theta": cfg.g_theta}
    (out / "bench.json").write_text(json.dumps(doc, indent=2, sort_keys=True))
    for name, r in bench.items():
        print(f"{name:16s} median {r['median_ns'] / 1e6:10.3f} ms")
    return 0


def cmd_cdf(args) -> int:
    records = harness.read_records_csv(args.records)
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    for metric in ("range_err_m", "angle_err_rad", "pos_err_m"):
        table = harness.cdfs_by_method(records, metric)
        if table:
            harness.write_cdf_csv(table, out / f"cdf_{metric}.csv", metric)
    _print_summary(harness.summarize(records))
    return 0


def _print_summary(summary: dict) -> None:
    for name, entry in summary["methods"].items():
        parts = [f"{k}={v:.4g}" for k, v in sorted(entry.items()) if isinstance(v, float)]
        print(f"{name:28s} " + " ".join(parts))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="backscatter-loc", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", help="JSON experiment config")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--trials", type=int)
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--methods", help="comma list of estimators and/or positioner:estimator[:range]")
        sp.add_argument("--threads", type=int, default=1, help="worker processes for trials")

    sp = sub.add_parser("simulate", help="write channel datasets")
    common(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("estimate", help="dataset -> range/angle measurements CSV")
    common(sp)
    sp.add_argument("dataset")
    sp.set_defaults(func=cmd_estimate)

    sp = sub.add_parser("localize", help="measurements CSV -> positions CSV")
    common(sp)
    sp.add_argument("dataset")
    sp.add_argument("measurements")
    sp.set_defaults(func=cmd_localize)

    sp = sub.add_parser("e2e", help="full Monte-Carlo run -> records.csv, summary.json")
    common(sp)
    sp.set_defaults(func=cmd_e2e)

    sp = sub.add_parser("bench", help="per-method runtime medians")
    common(sp)
    sp.set_defaults(func=cmd_bench)

    sp = sub.add_parser("cdf", help="records.csv -> CDF tables")
    common(sp)
    sp.add_argument("records")
    sp.set_defaults(func=cmd_cdf)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
