"""Monte-Carlo experiments, error CDFs, runtime benchmarks and result files."""

from __future__ import annotations

import csv
import itertools
import json
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .channel import (
    ROOM_REGION,
    ROOM_RX,
    ROOM_TX,
    Scenario,
    WaveformConfig,
    random_points,
    simulate,
    tag_grid,
)
from .estimation import ESTIMATORS, DegenerateSubspaceError, GridSpec, NoPeakError
from .geometry import ArrayGeometry, FrameTransform, bistatic_range, range_to_delay, unit_direction
from .positioning import (
    AngleMeasurement,
    MeasurementSet,
    RangeMeasurement,
    UnsolvableGeometryError,
    irls_solve,
    log_likelihood,
    ml_gradient_ascent,
    ml_grid_search,
)

CSV_COLUMNS = ("trial", "tag", "method", "range_err_m", "angle_err_rad", "pos_err_m", "time_ns", "failed")
ESTIMATOR_FAILURES = (NoPeakError, DegenerateSubspaceError)
POSITIONER_NAMES = ("ml_grid", "ml_gradient", "irls")


class ConfigError(ValueError):
    pass


@dataclass
class PositionerSpec:
    """Which solver runs on which estimator's measurements."""

    name: str
    estimator: str
    use_angles: bool = True

    @property
    def label(self) -> str:
        return f"{self.name}:{self.estimator}" + ("" if self.use_angles else ":range")

    @classmethod
    def parse(cls, text: str) -> "PositionerSpec":
        parts = text.split(":")
        if len(parts) not in (2, 3) or (len(parts) == 3 and parts[2] != "range"):
            raise ConfigError(f"positioner spec {text!r} must look like name:estimator[:range]")
        return cls(parts[0], parts[1], len(parts) == 2)


@dataclass
class ExperimentConfig:
    seed: int = 0
    n_trials: int = 100
    tags_per_trial: int = 1
    tag_layout: str = "grid"  # or "random"
    n_paths: int = 3
    snr_db: float = 5.0
    n_subcarriers: int = 40
    bandwidth: float = 40e6
    center_freq: float = 897.5e6
    shift_freq: float = 45e6
    n_symbols: int = 50
    n_antennas: int = 4
    tx_positions: list = field(default_factory=lambda: [list(p) for p in ROOM_TX])
    rx_positions: list = field(default_factory=lambda: [list(p) for p in ROOM_RX])
    omega: list = field(default_factory=lambda: [[1.0, 0.0], [0.0, 1.0]])
    region: list = field(default_factory=lambda: [list(c) for c in ROOM_REGION])
    tx_subset: list | None = None
    gain_jitter: bool = False
    g_tau: int = 4096
    g_theta: int = 128
    estimators: list = field(default_factory=lambda: list(ESTIMATORS))
    thresholds: dict = field(
        default_factory=lambda: {
            "fft2d": {"t_min": 0.3},
            "music2d": {"t_min": 0.5},
            "srae": {"t_min": 0.5},
            "jrac": {"t_min": 0.2, "t_max": 0.6},
            "cir_first_peak": {"t_min": 0.3},
        }
    )
    positioners: list = field(default_factory=list)
    step_set: list = field(default_factory=lambda: [0.001, 0.01, 0.1, 1.0])
    k_ml: int = 200
    eps_stop: float = 1e-4
    grid_region: list = field(default_factory=lambda: [[-19.0, -0.5], [1.0, 6.5]])
    grid_eps: float = 0.05
    irls_iters: int = 5
    irls_eps: float = 1e-6
    sigma: float = 1.0
    kappa: float = 1.0
    resolve_front_back: bool = True
    bench_calls: int = 20
    bench_warmup: int = 1
    out_dir: str = "results"

    def __post_init__(self):
        self.positioners = [
            p if isinstance(p, PositionerSpec)
            else PositionerSpec.parse(p) if isinstance(p, str)
            else PositionerSpec(**p)
            for p in self.positioners
        ]
        self.validate()

    def validate(self) -> None:
        if self.n_trials < 1:
            raise ConfigError("n_trials must be at least 1")
        if self.tag_layout not in ("grid", "random"):
            raise ConfigError(f"unknown tag_layout {self.tag_layout!r}")
        if not 1 <= self.tags_per_trial <= 25:
            raise ConfigError("tags_per_trial must be in [1, 25]")
        for name in self.estimators:
            if name not in ESTIMATORS:
                raise ConfigError(f"unknown estimator {name!r}")
        for p in self.positioners:
            if p.name not in POSITIONER_NAMES:
                raise ConfigError(f"unknown positioner {p.name!r}")
            if p.estimator not in ESTIMATORS:
                raise ConfigError(f"unknown estimator {p.estimator!r} for {p.name}")
        for name, kw in self.thresholds.items():
            if name not in ESTIMATORS or not set(kw) <= {"t_min", "t_max"}:
                raise ConfigError(f"bad threshold entry {name!r}: {kw!r}")
        if self.bench_warmup < 1 or self.bench_calls < 1:
            raise ConfigError("bench_warmup and bench_calls must be positive")

    @property
    def active_estimators(self) -> list:
        """Requested estimators plus any a positioner depends on, in stable order."""
        needed = set(self.estimators) | {p.estimator for p in self.positioners}
        return [name for name in ESTIMATORS if name in needed]

    @property
    def tx_indices(self) -> list:
        return list(range(len(self.tx_positions))) if self.tx_subset is None else list(self.tx_subset)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["positioners"] = [asdict(p) for p in self.positioners]
        return d

    def waveform(self) -> WaveformConfig:
        return WaveformConfig(
            self.n_subcarriers, self.bandwidth, self.center_freq, self.shift_freq, self.n_symbols
        )

    def grid(self) -> GridSpec:
        return GridSpec(self.n_subcarriers, self.g_tau, self.g_theta)

    def scenario(self, trial: int) -> Scenario:
        """Scenario of one trial: fresh scatterers (and tags, if random) from (seed, trial)."""
        rng = np.random.default_rng([self.seed, trial])
        wf = self.waveform()
        region = tuple(tuple(c) for c in self.region)
        tags = tag_grid(region) if self.tag_layout == "grid" else random_points(rng, 25, region)
        return Scenario(
            tx_positions=np.array(self.tx_positions, dtype=float),
            rx_positions=np.array(self.rx_positions, dtype=float),
            rx_array=ArrayGeometry.ula(self.n_antennas, wf.wavelength),
            rx_frame=FrameTransform(np.array(self.omega, dtype=float)),
            tags=tags,
            scatterers=random_points(rng, max(self.n_paths - 1, 0), region),
            waveform=wf,
            snr_db=self.snr_db,
            seed=int(rng.integers(2**63)),
        )

    def trial_tags(self, trial: int) -> list:
        k = self.tags_per_trial
        return [(trial * k + i) % 25 for i in range(k)]


@dataclass
class TrialRecord:
    trial: int
    tag: int
    method: str
    range_err_m: float = float("nan")
    angle_err_rad: float = float("nan")
    pos_err_m: float = float("nan")
    time_ns: int = 0
    failed: bool = False

    def row(self) -> list:
        return [
            self.trial, self.tag, self.method,
            _fmt(self.range_err_m), _fmt(self.angle_err_rad), _fmt(self.pos_err_m),
            self.time_ns, int(self.failed),
        ]


def _fmt(x: float) -> str:
    return "" if np.isnan(x) else repr(float(x))


# ---------------------------------------------------------------- ground truth


def true_azimuth(scenario: Scenario, tag: int, rx: int) -> float:
    """Antenna-frame azimuth of the tag, folded into the ULA's unambiguous half plane."""
    u = scenario.rx_frame.to_antenna(scenario.tags[tag] - scenario.rx_positions[rx])
    return float(np.arcsin(np.clip(u[1] / np.linalg.norm(u), -1.0, 1.0)))


def direction_hypotheses(theta: float, omega: np.ndarray):
    """World-frame unit vectors for a ULA angle: front (+x) and mirrored back (-x) side."""
    s, c = np.sin(theta), np.cos(theta)
    return omega @ np.array([c, s]), omega @ np.array([-c, s])


# ---------------------------------------------------------------- one trial


def _estimate_links(config, scenario, realization, tags, grid):
    """Run every active estimator on every (tag, tx) link. Returns (records, estimates)."""
    records, estimates = [], {}
    for name in config.active_estimators:
        fn = ESTIMATORS[name]
        kw = config.thresholds.get(name, {})
        for i in config.tx_indices:
            tau0_true = range_to_delay(
                np.linalg.norm(scenario.tx_positions[i] - scenario.rx_positions[0]), config.bandwidth
            )
            tau0_hat = None
            for t in tags:
                t0 = time.perf_counter_ns()
                try:
                    est = fn(
                        realization.carriers[(i, 0)], realization.backscatter[(t, i, 0)], grid,
                        tau0_true, bandwidth=config.bandwidth, tau0_hat=tau0_hat, **kw,
                    )
                except ESTIMATOR_FAILURES:
                    est = None
                elapsed = time.perf_counter_ns() - t0
                if est is not None:
                    tau0_hat = est.tau_carrier_hat
                estimates[(name, t, i)] = est
                if name not in config.estimators:
                    continue
                rec = TrialRecord(0, t, f"{name}@tx{i}", time_ns=elapsed, failed=est is None)
                if est is not None:
                    d_true = bistatic_range(scenario.tags[t], scenario.tx_positions[i], scenario.rx_positions[0])
                    rec.range_err_m = abs(est.bistatic_range - d_true)
                    if est.azimuth is not None:
                        rec.angle_err_rad = abs(est.azimuth - true_azimuth(scenario, t, 0))
                records.append(rec)
    return records, estimates


def measurement_sets(config, scenario, estimates, spec: PositionerSpec, tag: int) -> list:
    """Measurement sets for one tag: one per front/back hypothesis of the RX array."""
    ranges, thetas = [], []
    for i in config.tx_indices:
        est = estimates.get((spec.estimator, tag, i))
        if est is None:
            continue
        ranges.append(RangeMeasurement(est.bistatic_range, i, 0, config.sigma))
        if spec.use_angles and est.azimuth is not None:
            thetas.append(est.azimuth)
    omega = scenario.rx_frame.omega
    sides = [(0,), (0, 1)][bool(thetas) and config.resolve_front_back]
    sets = []
    for side in sides:
        angles = [AngleMeasurement(direction_hypotheses(th, omega)[side], 0, config.kappa) for th in thetas]
        sets.append(MeasurementSet(ranges, angles, scenario.tx_positions, scenario.rx_positions))
    return sets


def solve_position(config, spec: PositionerSpec, sets: list):
    """Run the positioner on every hypothesis and keep the most likely solution."""
    best, best_val = None, -np.inf
    for m in sets:
        if spec.name == "ml_grid":
            est = ml_grid_search(m, config.grid_region, config.grid_eps)
        elif spec.name == "ml_gradient":
            est = ml_gradient_ascent(m, config.step_set, config.k_ml, config.eps_stop)
        else:
            est = irls_solve(m, config.irls_iters, config.irls_eps)
        try:
            val = log_likelihood(est.p_hat, m)
        except ValueError:
            val = -np.inf
        if best is None or val > best_val:
            best, best_val = est, val
    return best


def run_trial(config: ExperimentConfig, trial: int) -> list:
    scenario = config.scenario(trial)
    tags = config.trial_tags(trial)
    realization = simulate(scenario, tags, config.tx_indices, [0], gain_jitter=config.gain_jitter)
    records, estimates = _estimate_links(config, scenario, realization, tags, config.grid())
    for spec in config.positioners:
        for t in tags:
            rec = TrialRecord(0, t, spec.label)
            t0 = time.perf_counter_ns()
            try:
                est = solve_position(config, spec, measurement_sets(config, scenario, estimates, spec, t))
                rec.pos_err_m = float(np.linalg.norm(est.p_hat - scenario.tags[t]))
            except (ValueError, UnsolvableGeometryError):
                rec.failed = True
            rec.time_ns = time.perf_counter_ns() - t0
            records.append(rec)
    for r in records:
        r.trial = trial
    return records


def run_experiment(config: ExperimentConfig, threads: int = 1) -> list:
    """All trials in order; ``threads > 1`` farms trials out to worker processes."""
    trials = range(config.n_trials)
    if threads <= 1:
        out = [run_trial(config, k) for k in trials]
    else:
        with ProcessPoolExecutor(threads) as pool:
            out = list(pool.map(run_trial, itertools.repeat(config), trials))
    return [r for batch in out for r in batch]


# ---------------------------------------------------------------- metrics


@dataclass
class CdfTable:
    values: np.ndarray
    ordinates: np.ndarray
    failure_rate: float
    n_total: int

    @property
    def median(self) -> float:
        return float(np.median(self.values))

    @property
    def mean(self) -> float:
        return float(np.mean(self.values))


def compute_cdf(errors) -> CdfTable:
    """Empirical CDF of the finite errors; NaN/None entries count as failures."""
    e = np.array([np.nan if x is None else x for x in errors], dtype=float)
    if e.size == 0:
        raise ValueError("no errors given")
    ok = np.sort(e[np.isfinite(e)])
    if ok.size == 0:
        raise ValueError("every entry is a failure")
    return CdfTable(ok, np.arange(1, ok.size + 1) / ok.size, 1.0 - ok.size / e.size, int(e.size))


def base_method(label: str) -> str:
    return label.split("@")[0]


def cdfs_by_method(records, metric: str) -> dict:
    """CDF tables of one metric (``range_err_m``, ``angle_err_rad`` or ``pos_err_m``) per method.

    Methods that never produce the metric are left out; methods whose every
    attempt failed map to ``None``.
    """
    groups = {}
    for r in records:
        groups.setdefault(base_method(r.method), []).append(r)
    out = {}
    for name, group in groups.items():
        vals = [getattr(r, metric) for r in group if not r.failed]
        n_failed = len(group) - len(vals)
        if not vals:
            out[name] = None
        elif np.isfinite(vals).any():
            out[name] = compute_cdf(vals + [np.nan] * n_failed)
    return out


# ---------------------------------------------------------------- benchmarks


def _time_calls(fn, calls: int, warmup: int) -> dict:
    for _ in range(warmup):
        fn()
    ns = []
    for _ in range(calls):
        t0 = time.perf_counter_ns()
        fn()
        ns.append(time.perf_counter_ns() - t0)
    return {"median_ns": int(np.median(ns)), "mean_ns": int(np.mean(ns)), "calls": calls}


def bench_runtimes(config: ExperimentConfig, estimators=None, positioners=None) -> dict:
    """Median wall time per call; channel synthesis is done before timing starts.

    Estimators are timed on full carrier + backscatter processing of one
    link. Positioners are timed on the range+angle measurements of one tag,
    with the noise of the configured SNR entering through the estimator.
    """
    estimators = config.estimators if estimators is None else estimators
    positioners = ["ml_grid", "ml_gradient", "irls"] if positioners is None else positioners
    scenario = config.scenario(0)
    tag = config.trial_tags(0)[0]
    realization = simulate(scenario, [tag], [0], [0])
    grid = config.grid()
    tau0_true = range_to_delay(np.linalg.norm(scenario.tx_positions[0] - scenario.rx_positions[0]), config.bandwidth)
    h0, hb = realization.carriers[(0, 0)], realization.backscatter[(tag, 0, 0)]
    out = {}
    for name in estimators:
        fn, kw = ESTIMATORS[name], config.thresholds.get(name, {})

        def call(fn=fn, kw=kw):
            try:
                fn(h0, hb, grid, tau0_true, bandwidth=config.bandwidth, **kw)
            except ESTIMATOR_FAILURES:
                pass

        out[name] = _time_calls(call, config.bench_calls, config.bench_warmup)

    # positioners: ground-truth geometry with a fixed small perturbation
    rng = np.random.default_rng([config.seed, 99])
    p = scenario.tags[tag]
    ranges = [
        RangeMeasurement(bistatic_range(p, scenario.tx_positions[i], scenario.rx_positions[0]) + 0.3 * rng.standard_normal(), i, 0)
        for i in config.tx_indices
    ]
    u = unit_direction(p, scenario.rx_positions[0])
    m = MeasurementSet(ranges, [AngleMeasurement(u, 0)], scenario.tx_positions, scenario.rx_positions)
    solvers = {
        "ml_grid": lambda: ml_grid_search(m, config.grid_region, config.grid_eps),
        "ml_gradient": lambda: ml_gradient_ascent(m, config.step_set, config.k_ml, config.eps_stop),
        "irls": lambda: irls_solve(m, config.irls_iters, config.irls_eps),
    }
    for name in positioners:
        out[name] = _time_calls(solvers[name], config.bench_calls, config.bench_warmup)
    return out


def machine_info() -> dict:
    return {
        "python": platform.python_version(),
        "numpy": np.__version__,
        "machine": platform.machine(),
        "processor": platform.processor(),
        "system": platform.system(),
    }


# ---------------------------------------------------------------- output


def write_records_csv(records, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in records:
            w.writerow(r.row())


def read_records_csv(path) -> list:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(
                TrialRecord(
                    int(row["trial"]), int(row["tag"]), row["method"],
                    float(row["range_err_m"] or "nan"),
                    float(row["angle_err_rad"] or "nan"),
                    float(row["pos_err_m"] or "nan"),
                    int(row["time_ns"]), bool(int(row["failed"])),
                )
            )
    return out


def summarize(records, benchmarks=None) -> dict:
    summary = {"n_records": len(records), "n_trials": len({r.trial for r in records}), "methods": {}}
    for metric in ("range_err_m", "angle_err_rad", "pos_err_m"):
        for name, cdf in cdfs_by_method(records, metric).items():
            entry = summary["methods"].setdefault(name, {})
            if cdf is None:
                entry["failure_rate"] = 1.0
                continue
            entry[f"median_{metric}"] = cdf.median
            entry[f"mean_{metric}"] = cdf.mean
            entry["failure_rate"] = cdf.failure_rate
            entry["count"] = cdf.n_total
    if benchmarks:
        summary["runtimes"] = benchmarks
        summary["machine"] = machine_info()
    return summary


def write_cdf_csv(cdfs: dict, path, metric: str = "") -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("method", "metric", "error", "cdf", "failure_rate"))
        for name, cdf in cdfs.items():
            if cdf is None:
                continue
            for v, o in zip(cdf.values, cdf.ordinates):
                w.writerow((name, metric, repr(float(v)), repr(float(o)), repr(cdf.failure_rate)))


def emit_results(records, cdfs=None, benchmarks=None, out_dir="results") -> dict:
    """Write ``records.csv``, ``summary.json`` and (if given) ``cdf_<metric>.csv`` files.

    ``cdfs`` maps a metric name to the output of :func:`cdfs_by_method`.
    Returns the summary dictionary.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_records_csv(records, out / "records.csv")
    for metric, table in (cdfs or {}).items():
        write_cdf_csv(table, out / f"cdf_{metric}.csv", metric)
    summary = summarize(records, benchmarks)
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True))
    return summary
