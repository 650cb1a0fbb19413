"""Tag positioning from bistatic ranges and world-frame arrival directions.

Two families of solvers:

* maximum likelihood: Gaussian range errors plus von Mises-Fisher direction
  errors, maximized either by exhaustive grid search or by multi-start
  gradient ascent with a discrete line search;
* a pseudo-linear system solved by iteratively reweighted least squares,
  followed by a second least-squares stage that ties the auxiliary
  tag-to-receiver distances back to the position.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .linalg import pseudo_inverse

DEFAULT_STEPS = (0.001, 0.01, 0.1, 1.0)


class DegenerateRowError(ValueError):
    """A range row of the pseudo-linear system has a zero scale factor."""


class UnsolvableGeometryError(RuntimeError):
    pass


@dataclass(frozen=True)
class RangeMeasurement:
    d_hat: float
    tx_index: int
    rx_index: int
    sigma: float = 1.0

    def __post_init__(self):
        if not self.d_hat > 0:
            raise ValueError("range must be positive")
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")


@dataclass(frozen=True)
class AngleMeasurement:
    u_hat: np.ndarray
    rx_index: int
    kappa: float = 1.0

    def __post_init__(self):
        u = np.asarray(self.u_hat, dtype=float)
        if abs(np.linalg.norm(u) - 1.0) > 1e-9:
            raise ValueError("u_hat must be a unit vector")
        if not self.kappa > 0:
            raise ValueError("kappa must be positive")
        object.__setattr__(self, "u_hat", u)


@dataclass
class MeasurementSet:
    ranges: list
    angles: list
    tx_positions: np.ndarray
    rx_positions: np.ndarray

    def __post_init__(self):
        self.tx_positions = np.atleast_2d(np.asarray(self.tx_positions, dtype=float))
        self.rx_positions = np.atleast_2d(np.asarray(self.rx_positions, dtype=float))
        self.ranges = list(self.ranges)
        self.angles = list(self.angles)
        n_tx, n_rx = len(self.tx_positions), len(self.rx_positions)
        for r in self.ranges:
            if not (0 <= r.tx_index < n_tx and 0 <= r.rx_index < n_rx):
                raise IndexError("range measurement refers to an unknown node")
        for a in self.angles:
            if not 0 <= a.rx_index < n_rx:
                raise IndexError("angle measurement refers to an unknown receiver")
            if a.u_hat.shape != (self.dim,):
                raise ValueError("angle dimension differs from node positions")
        if len(self.ranges) + len(self.angles) < self.dim:
            raise ValueError("too few measurements to fix a position")

    @property
    def dim(self) -> int:
        return self.tx_positions.shape[1]

    @property
    def n_rx(self) -> int:
        return len(self.rx_positions)


@dataclass
class PositionEstimate:
    p_hat: np.ndarray
    objective: float  # log-likelihood for ML solvers, weighted residual norm for IRLS
    iterations: int
    method: str
    weights: np.ndarray | None = None
    trace: list = field(default_factory=list)


def _range_arrays(m: MeasurementSet):
    tx = np.array([m.tx_positions[r.tx_index] for r in m.ranges]).reshape(-1, m.dim)
    rx = np.array([m.rx_positions[r.rx_index] for r in m.ranges]).reshape(-1, m.dim)
    d = np.array([r.d_hat for r in m.ranges])
    s = np.array([r.sigma for r in m.ranges])
    return tx, rx, d, s


def _angle_arrays(m: MeasurementSet):
    rx = np.array([m.rx_positions[a.rx_index] for a in m.angles]).reshape(-1, m.dim)
    u = np.array([a.u_hat for a in m.angles]).reshape(-1, m.dim)
    k = np.array([a.kappa for a in m.angles])
    return rx, u, k


def log_likelihood_many(points, m: MeasurementSet) -> np.ndarray:
    """Log-likelihood at each row of ``points`` (NaN where an angle term is singular)."""
    p = np.atleast_2d(np.asarray(points, dtype=float))
    total = np.zeros(len(p))
    tx, rx, d, s = _range_arrays(m)
    for n in range(len(d)):
        resid = d[n] - np.linalg.norm(p - tx[n], axis=1) - np.linalg.norm(p - rx[n], axis=1)
        total -= resid**2 / (2 * s[n] ** 2)
    arx, u, k = _angle_arrays(m)
    with np.errstate(invalid="ignore", divide="ignore"):
        for j in range(len(k)):
            diff = p - arx[j]
            total += k[j] * (diff @ u[j]) / np.linalg.norm(diff, axis=1)
    return total


def log_likelihood(p, m: MeasurementSet) -> float:
    p = np.asarray(p, dtype=float)
    for a in m.angles:
        if np.array_equal(p, m.rx_positions[a.rx_index]):
            raise ValueError("log-likelihood is singular at a receiver position")
    return float(log_likelihood_many(p, m)[0])


def grad_log_likelihood(p, m: MeasurementSet) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    g = np.zeros(m.dim)
    tx, rx, d, s = _range_arrays(m)
    for n in range(len(d)):
        v1, v2 = p - tx[n], p - rx[n]
        n1, n2 = np.linalg.norm(v1), np.linalg.norm(v2)
        if n1 == 0 or n2 == 0:
            raise ValueError("gradient is singular at a node position")
        resid = d[n] - n1 - n2
        g += resid / s[n] ** 2 * (v1 / n1 + v2 / n2)
    arx, u, k = _angle_arrays(m)
    for j in range(len(k)):
        diff = p - arx[j]
        r = np.linalg.norm(diff)
        if r == 0:
            raise ValueError("gradient is singular at a receiver position")
        g += k[j] * (u[j] / r - diff * (diff @ u[j]) / r**3)
    return g


def ml_grid_search(m: MeasurementSet, region, eps: float, chunk: int = 65536) -> PositionEstimate:
    """Exhaustive maximization of the log-likelihood on a grid of pitch ``eps``.

    ``region`` is ``(lower_corner, upper_corner)``. Grid points start at the
    lower corner; singular points are skipped.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    lo, hi = (np.asarray(c, dtype=float) for c in region)
    if lo.shape != (m.dim,) or np.any(hi < lo):
        raise ValueError("region must be a non-empty box in the measurement dimension")
    axes = [lo[i] + eps * np.arange(int(np.floor((hi[i] - lo[i]) / eps + 1e-9)) + 1) for i in range(m.dim)]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, m.dim)
    best_val, best_idx = -np.inf, 0
    for start in range(0, len(mesh), chunk):
        vals = log_likelihood_many(mesh[start : start + chunk], m)
        vals = np.where(np.isnan(vals), -np.inf, vals)
        i = int(np.argmax(vals))
        if vals[i] > best_val:
            best_val, best_idx = float(vals[i]), start + i
    return PositionEstimate(mesh[best_idx].copy(), best_val, len(mesh), "ml_grid")


def _perpendicular(axis: np.ndarray) -> np.ndarray:
    if axis.size == 2:
        return np.array([-axis[1], axis[0]])
    helper = np.eye(axis.size)[np.argmin(np.abs(axis))]
    v = helper - axis * (helper @ axis)
    return v / np.linalg.norm(v)


def ellipse_seed_points(r: RangeMeasurement, tx_positions, rx_positions) -> np.ndarray:
    """Center, vertices and co-vertices of the bistatic-range ellipse, shape (5, D)."""
    f1 = np.asarray(tx_positions, dtype=float)[r.tx_index]
    f2 = np.asarray(rx_positions, dtype=float)[r.rx_index]
    gap = np.linalg.norm(f2 - f1)
    if gap == 0 and r.d_hat == 0:
        raise ValueError("coincident foci with zero range")
    center = (f1 + f2) / 2
    axis = (f2 - f1) / gap if gap > 0 else np.eye(f1.size)[0]
    perp = _perpendicular(axis)
    c = gap / 2
    a = r.d_hat / 2
    if a <= c:
        a, b = c, 0.0
    else:
        b = np.sqrt(a * a - c * c)
    return np.array([center, center - a * axis, center + a * axis, center + b * perp, center - b * perp])


def _ascend(p, m, steps, k_max, eps_stop):
    val = log_likelihood(p, m)
    trace = [val]
    it = 0
    while it < k_max:
        g = grad_log_likelihood(p, m)
        cands = p + np.multiply.outer(steps, g)
        vals = log_likelihood_many(cands, m)
        vals = np.where(np.isnan(vals), -np.inf, vals)
        best = int(np.argmax(vals))
        it += 1
        if not vals[best] > val:
            break  # no step improves the objective
        p_next = cands[best]
        moved = np.linalg.norm(p_next - p)
        p, val = p_next, float(vals[best])
        trace.append(val)
        if moved <= eps_stop:
            break
    return p, val, it, trace


def ml_gradient_ascent(
    m: MeasurementSet,
    step_set=DEFAULT_STEPS,
    k_max: int = 200,
    eps_stop: float = 1e-4,
    seeds=None,
) -> PositionEstimate:
    """Multi-start gradient ascent; 5 ellipse seeds per range measurement.

    Each iteration moves to the best of ``p + mu * grad`` over ``step_set``.
    A run stops when the move is at most ``eps_stop``, after ``k_max``
    updates, or when no step improves the objective.
    """
    steps = np.asarray(step_set, dtype=float)
    if steps.size == 0:
        raise ValueError("step_set must not be empty")
    if k_max < 1:
        raise ValueError("k_max must be at least 1")
    if seeds is None:
        seeds = [s for r in m.ranges for s in ellipse_seed_points(r, m.tx_positions, m.rx_positions)]
        if not m.ranges:
            seeds = [rx + a.u_hat for a in m.angles for rx in [m.rx_positions[a.rx_index]]]
    best = None
    for seed in seeds:
        try:
            p, val, it, trace = _ascend(np.asarray(seed, dtype=float), m, steps, k_max, eps_stop)
        except ValueError:
            continue  # seed sits on a node
        if best is None or val > best.objective:
            best = PositionEstimate(p, val, it, "ml_gradient", trace=trace)
    if best is None:
        raise UnsolvableGeometryError("every seed is singular")
    return best


def build_pseudolinear(m: MeasurementSet):
    """Stacked linear system in ``[p, |p - rx_1|, ..., |p - rx_J|]``."""
    dim, n_rx = m.dim, m.n_rx
    rows, rhs = [], []
    for r in m.ranges:
        tx, rx = m.tx_positions[r.tx_index], m.rx_positions[r.rx_index]
        b = r.d_hat**2 - tx @ tx + rx @ rx
        if b == 0:
            raise DegenerateRowError("range row has zero scale")
        row = np.zeros(dim + n_rx)
        row[:dim] = 2 * (rx - tx)
        row[dim + r.rx_index] = 2 * r.d_hat
        rows.append(row / b)
        rhs.append(1.0)
    for a in m.angles:
        block = np.zeros((dim, dim + n_rx))
        block[:, :dim] = np.eye(dim)
        block[:, dim + a.rx_index] = -a.u_hat
        rows.extend(block)
        rhs.extend(m.rx_positions[a.rx_index])
    return np.array(rows), np.array(rhs)


def irls_solve(m: MeasurementSet, k_iters: int = 5, eps_w: float = 1e-6) -> PositionEstimate:
    if k_iters < 1 or eps_w <= 0:
        raise ValueError("need k_iters >= 1 and eps_w > 0")
    phi, rhs = build_pseudolinear(m)
    w = np.ones(len(rhs))
    for _ in range(k_iters):
        sw = np.sqrt(w)
        pinv, rank = pseudo_inverse(sw[:, None] * phi, return_rank=True)
        if rank < phi.shape[1]:
            raise UnsolvableGeometryError("pseudo-linear system is rank deficient")
        ups = pinv @ (sw * rhs)
        e = np.abs(phi @ ups - rhs)
        w = 1.0 / (e**2 + eps_w)
        w /= w.max()
    dim = m.dim
    p1 = ups[:dim]
    phi2 = np.vstack([np.eye(dim), np.ones((m.n_rx, dim))])
    extra = 2 * m.rx_positions @ p1 - np.sum(m.rx_positions**2, axis=1)
    rhs2 = ups**2 + np.concatenate([np.zeros(dim), extra])
    sq = pseudo_inverse(phi2) @ rhs2
    p = np.where(p1 >= 0, 1.0, -1.0) * np.sqrt(np.maximum(sq, 0.0))
    resid = float(np.linalg.norm(np.sqrt(w) * (phi @ ups - rhs)))
    return PositionEstimate(p, resid, k_iters, "irls", weights=w)


POSITIONERS = {
    "ml_grid": ml_grid_search,
    "ml_gradient": ml_gradient_ascent,
    "irls": irls_solve,
}
