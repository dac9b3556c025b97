"""Monte Carlo drivers and estimators for coalescence, drift and tail behaviour.

Every experiment draws one independent environment per replica, seeded by
``derive_seed(seed, replica_id)``; results are assembled in replica order so
the output does not depend on how replicas are scheduled.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, List, NamedTuple, Optional, Sequence

import numpy as np
from scipy import stats

from . import _kernels as K
from .errors import FitUndefinedError, InvalidArgumentError, SearchExhaustedError
from .exploration import DEFAULT_STEP_CAP, run_kernel
from .field import FieldParams, as_vertex, open_mask
from .successor import DEFAULT_MAX_RADIUS, successor


# -- replica plumbing --------------------------------------------------------

def _shard(fn, params, ids, kwargs):
    return [fn(params.replica(i), **kwargs) for i in ids]


def run_replicas(fn: Callable, params: FieldParams, replicas: int, workers: int = 1, **kwargs) -> list:
    """``[fn(params.replica(r), **kwargs) for r in range(replicas)]``, optionally
    sharded over processes; the result order is always the replica order."""
    ids = list(range(replicas))
    if workers <= 1 or replicas < 2:
        return _shard(fn, params, ids, kwargs)
    chunks = [ids[i::workers] for i in range(workers)]
    out = [None] * replicas
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(_shard, fn, params, chunk, kwargs) for chunk in chunks]
        for chunk, fut in zip(chunks, futures):
            for i, res in zip(chunk, fut.result()):
                out[i] = res
    return out


def mean_se(x) -> tuple[float, float]:
    x = np.asarray(x, dtype=float)
    if x.size < 2:
        return float(x.mean()) if x.size else float("nan"), float("nan")
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(x.size))


def _axis_start(d: int, x: int = 0, level: int = 0):
    return (x,) + (0,) * (d - 2) + (level,)


# -- tail fits ---------------------------------------------------------------

@dataclass
class TailFit:
    thresholds: np.ndarray
    survival: np.ndarray
    slope: float
    intercept: float
    r2: float
    kind: str


def km_survival(times, censored=None):
    """Kaplan-Meier estimate of P(T > t) at the distinct event times."""
    t = np.asarray(times, dtype=float)
    c = np.zeros(t.size, dtype=bool) if censored is None else np.asarray(censored, dtype=bool)
    order = np.argsort(t, kind="stable")
    t, c = t[order], c[order]
    uniq = np.unique(t[~c])
    s = 1.0
    surv = np.empty(uniq.size)
    for i, u in enumerate(uniq):
        at_risk = np.count_nonzero(t >= u)
        deaths = np.count_nonzero((t == u) & ~c)
        s *= 1.0 - deaths / at_risk
        surv[i] = s
    return uniq, surv


def km_at(times, censored, grid) -> np.ndarray:
    uniq, surv = km_survival(times, censored)
    idx = np.searchsorted(uniq, grid, side="right") - 1
    return np.where(idx >= 0, surv[np.clip(idx, 0, None)], 1.0)


def _linfit(x, y):
    slope, intercept, r, _, _ = stats.linregress(x, y)
    return float(slope), float(intercept), float(r * r)


def exp_tail_fit(samples, min_survival: float = 1e-3) -> TailFit:
    """Least-squares line through log P(X >= n) over the integers n where the
    empirical survival is at least ``min_survival``."""
    x = np.asarray(samples)
    if x.size < 1000:
        raise InvalidArgumentError("exp_tail_fit needs at least 1000 samples")
    if np.all(x == x[0]):
        raise FitUndefinedError("all samples are equal")
    xs = np.sort(x)
    grid = np.arange(int(xs[0]), int(xs[-1]) + 1)
    surv = 1.0 - np.searchsorted(xs, grid, side="left") / xs.size
    keep = surv >= min_survival
    grid, surv = grid[keep], surv[keep]
    if grid.size < 3:
        raise FitUndefinedError("fewer than three usable thresholds")
    slope, intercept, r2 = _linfit(grid, np.log(surv))
    return TailFit(grid, surv, slope, intercept, r2, "exp")


def power_tail_fit(samples, t_min: float, t_max: float, censored=None, n_grid: int = 25) -> TailFit:
    """Line through log P(T > t) vs log t on a log-spaced grid over
    [t_min, t_max]; right-censored samples enter through Kaplan-Meier."""
    x = np.asarray(samples, dtype=float)
    if x.size < 1000:
        raise InvalidArgumentError("power_tail_fit needs at least 1000 samples")
    if t_max / t_min < 100:
        raise InvalidArgumentError("t_max / t_min must be at least 100")
    if np.all(x == x[0]):
        raise FitUndefinedError("all samples are equal")
    grid = np.geomspace(t_min, t_max, n_grid)
    surv = km_at(x, censored, grid)
    if np.any(surv <= 0):
        raise FitUndefinedError("survival reaches zero inside the fit range")
    slope, intercept, r2 = _linfit(np.log(grid), np.log(surv))
    return TailFit(grid, surv, slope, intercept, r2, "power")


# -- coalescence -------------------------------------------------------------

@dataclass(frozen=True)
class CoalescenceSample:
    separation: tuple
    T_nu: int
    nu: int
    censored: bool


def coalescence_time(params: FieldParams, u, v, level_cap: int, max_radius: int = DEFAULT_MAX_RADIUS) -> CoalescenceSample:
    u, v = as_vertex(u, params.d), as_vertex(v, params.d)
    keys = np.full(2, K.field_key(params.seed), dtype=np.uint64)
    starts = np.array([u, v], dtype=np.int64)
    T, nu, status = K.coalescence_time_nb(keys, params.p, params.d, starts, int(level_cap), max_radius)
    if status == K.SEARCH_EXHAUSTED:
        raise SearchExhaustedError(u, max_radius)
    sep = tuple(b - a for a, b in zip(u[:-1], v[:-1]))
    return CoalescenceSample(sep, int(T), int(nu), status == K.LEVEL_CAP)


def _coalescence_replica(params, separation, level_cap):
    d = params.d
    return coalescence_time(params, _axis_start(d), _axis_start(d, separation), level_cap)


def coalescence_experiment(params: FieldParams, separation: int, replicas: int, level_cap: int,
                           workers: int = 1) -> List[CoalescenceSample]:
    if params.d not in (2, 3):
        raise InvalidArgumentError("coalescence experiments are meant for d = 2 or 3")
    if separation < 0:
        raise InvalidArgumentError("separation must be >= 0")
    return run_replicas(_coalescence_replica, params, replicas, workers,
                        separation=separation, level_cap=level_cap)


def align_levels(params: FieldParams, u, v, max_steps: int = 10**6):
    """Advance whichever path is lower, on its own, until both sit on one level."""
    u, v = as_vertex(u, params.d), as_vertex(v, params.d)
    for _ in range(max_steps):
        if u[-1] == v[-1]:
            return u, v
        if u[-1] < v[-1]:
            u = successor(params, u)
        else:
            v = successor(params, v)
    raise InvalidArgumentError("levels did not align within max_steps")


class StayCheck(NamedTuple):
    empirical: float
    bound: float
    se: float


def stay_probability_bound(p: float) -> float:
    return 1.0 - (1.0 - p) ** 6 * p ** 3


def _first_difference(params, m):
    d = params.d
    count, tau, tt, ww, rp, status, n, _ = run_kernel(params, [_axis_start(d), _axis_start(d, m)], 1)
    return int(rp[0, 1, 0] - rp[0, 0, 0])


def stay_probability_bound_check(params: FieldParams, m: int, replicas: int, workers: int = 1) -> StayCheck:
    """Estimate P(Z_1 = m | Z_0 = m) from fresh pairs at separation m."""
    if params.d != 2 or m < 1:
        raise InvalidArgumentError("stay-probability check needs d = 2 and m >= 1")
    z1 = np.array(run_replicas(_first_difference, params, replicas, workers, m=m))
    stay = (z1 == m).astype(float)
    est, se = mean_se(stay)
    return StayCheck(est, stay_probability_bound(params.p), se)


# -- martingale / Lyapunov ---------------------------------------------------

@dataclass
class DriftTable:
    j: np.ndarray
    mean: np.ndarray
    se: np.ndarray
    n: np.ndarray

    def within(self, k: float = 3.0) -> np.ndarray:
        return np.abs(self.mean) < k * self.se


def _regen_first_coords(params, separation, j_max):
    d = params.d
    starts = [_axis_start(d)] if separation is None else [_axis_start(d), _axis_start(d, separation)]
    count, tau, tt, ww, rp, status, n, _ = run_kernel(params, starts, j_max)
    x = np.concatenate([[0], rp[:count, 0, 0]])
    return np.diff(x)


def martingale_drift_test(params: FieldParams, separation: Optional[int], j_max: int, replicas: int,
                          workers: int = 1) -> DriftTable:
    """Mean and standard error of the first walker's first-coordinate increment
    between regenerations j-1 and j, for j = 1..j_max.  ``separation=None``
    runs a single walker."""
    if params.d != 2:
        raise InvalidArgumentError("the martingale test is for d = 2")
    inc = np.array(run_replicas(_regen_first_coords, params, replicas, workers,
                                separation=separation, j_max=j_max))
    means = inc.mean(axis=0)
    ses = inc.std(axis=0, ddof=1) / math.sqrt(inc.shape[0])
    return DriftTable(np.arange(1, j_max + 1), means, ses, np.full(j_max, inc.shape[0]))


def lyapunov_f(x) -> float:
    x = np.asarray(x, dtype=float)
    return float(math.sqrt(math.log1p(float(np.dot(x, x)))))


class LyapunovResult(NamedTuple):
    mean: float
    se: float
    ci_low: float
    ci_high: float
    level: float
    raw_mean: float
    raw_se: float


def _lyapunov_increment(params, x):
    start_v = (int(x[0]), int(x[1]), 0)
    count, tau, tt, ww, rp, status, n, _ = run_kernel(params, [(0, 0, 0), start_v], 1)
    z1 = rp[0, 1, :2] - rp[0, 0, :2]
    return lyapunov_f(z1) - lyapunov_f(x), float(z1[0] - x[0]), float(z1[1] - x[1])


def lyapunov_increments(params: FieldParams, x, replicas: int, workers: int = 1) -> np.ndarray:
    """Rows (f(Z_1) - f(Z_0), dz1, dz2) for fresh pairs separated by ``x`` (d = 3)."""
    if params.d != 3:
        raise InvalidArgumentError("the Lyapunov drift test is for d = 3")
    x = tuple(int(c) for c in x)
    if len(x) != 2:
        raise InvalidArgumentError("x must be a 2-vector")
    return np.array(run_replicas(_lyapunov_increment, params, replicas, workers, x=x))


def lyapunov_summary(rows: np.ndarray, level: float = 0.99, control_variate: bool = True) -> LyapunovResult:
    y, dz = rows[:, 0], rows[:, 1:]
    raw_m, raw_se = mean_se(y)
    if control_variate:
        design = np.column_stack([np.ones(y.size), dz])
        coef, *_ = np.linalg.lstsq(design, y, rcond=None)
        resid = y - design @ coef
        s2 = resid @ resid / (y.size - design.shape[1])
        m = float(coef[0])
        se = float(math.sqrt(s2 * np.linalg.inv(design.T @ design)[0, 0]))
    else:
        m, se = raw_m, raw_se
    q = float(stats.norm.ppf(0.5 + level / 2.0))
    return LyapunovResult(m, se, m - q * se, m + q * se, level, raw_m, raw_se)


def lyapunov_drift_test(params: FieldParams, x, replicas: int, level: float = 0.99,
                        control_variate: bool = True, workers: int = 1) -> LyapunovResult:
    """Estimate E[f(Z_1) - f(Z_0)] over fresh pairs separated by ``x`` (d = 3)
    with a two-sided normal confidence interval at ``level``.

    The displacement Z_1 - Z_0 has mean zero (each walker's position at joint
    regenerations is a martingale), so by default it serves as a control
    variate: the estimate is the intercept of the regression of the increment
    on the displacement.  ``raw_mean``/``raw_se`` are the plain sample values.
    """
    return lyapunov_summary(lyapunov_increments(params, x, replicas, workers), level, control_variate)


# -- independent environments ------------------------------------------------

def _independent_run(params_a, params_b, u, v, j_max, step_cap):
    if params_a.d != params_b.d or params_a.p != params_b.p:
        raise InvalidArgumentError("both environments need the same d and p")
    u, v = as_vertex(u, params_a.d), as_vertex(v, params_a.d)
    if u[-1] != v[-1]:
        raise InvalidArgumentError("starts must share a level")
    keys = np.array([K.field_key(params_a.seed), K.field_key(params_b.seed)], dtype=np.uint64)
    starts = np.array([u, v], dtype=np.int64)
    res = K.run_joint_nb(keys, params_a.p, params_a.d, starts, int(j_max), int(step_cap), 1 << 60, False,
                         DEFAULT_MAX_RADIUS)
    if res[5] == K.SEARCH_EXHAUSTED:
        raise SearchExhaustedError(u, DEFAULT_MAX_RADIUS)
    return starts, res


def independent_pair_walk(params_a: FieldParams, params_b: FieldParams, u, v, j_max: int,
                          step_cap: int = DEFAULT_STEP_CAP) -> List[tuple]:
    """One walker per environment moved in tandem; horizontal differences
    (second minus first) at the joint regenerations, starting with j = 0."""
    starts, (count, tau, tt, ww, rp, status, n, _) = _independent_run(params_a, params_b, u, v, j_max, step_cap)
    out = [tuple(int(c) for c in starts[1, :-1] - starts[0, :-1])]
    out.extend(tuple(int(c) for c in rp[j, 1, :-1] - rp[j, 0, :-1]) for j in range(count))
    return out


def independent_increments(params_a: FieldParams, params_b: FieldParams, u, v, j_max: int):
    """Per-walker horizontal displacement blocks between joint regenerations:
    arrays (Da, Db) of shape (count, d-1)."""
    starts, (count, tau, tt, ww, rp, status, n, _) = _independent_run(params_a, params_b, u, v, j_max,
                                                                      DEFAULT_STEP_CAP)
    pa = np.concatenate([starts[None, 0, :-1], rp[:count, 0, :-1]])
    pb = np.concatenate([starts[None, 1, :-1], rp[:count, 1, :-1]])
    return np.diff(pa, axis=0), np.diff(pb, axis=0)


# -- multi-walker coalescing runs --------------------------------------------

@dataclass
class CoalescingRun:
    checkpoints: np.ndarray
    counts: np.ndarray
    alive: np.ndarray
    prev: np.ndarray
    cur: np.ndarray

    def crossings(self, ci: int) -> List[Fraction]:
        """Exact first-coordinate crossing positions (d = 2) of the live paths
        at checkpoint ``ci``."""
        lev = int(self.checkpoints[ci])
        out = []
        for a in np.flatnonzero(self.alive[ci]):
            p0, p1 = self.prev[ci, a], self.cur[ci, a]
            out.append(interpolate_x(p0, p1, lev))
        return out


def interpolate_x(prev, cur, level: int) -> Fraction:
    (x0, l0), (x1, l1) = (int(prev[0]), int(prev[-1])), (int(cur[0]), int(cur[-1]))
    if l1 == l0 or level >= l1:
        return Fraction(x1)
    return Fraction(x0) + Fraction((x1 - x0) * (level - l0), l1 - l0)


def coalescing_run(params: FieldParams, starts, checkpoints, max_radius: int = DEFAULT_MAX_RADIUS) -> CoalescingRun:
    pts = np.asarray([as_vertex(s, params.d) for s in starts], dtype=np.int64).reshape(-1, params.d)
    cps = np.asarray(sorted(int(c) for c in checkpoints), dtype=np.int64)
    counts, alive, prev, cur, status = K.coalescing_run_nb(K.field_key(params.seed), params.p, params.d, pts, cps,
                                                          max_radius)
    if status == K.SEARCH_EXHAUSTED:
        raise SearchExhaustedError(pts[0], max_radius)
    return CoalescingRun(cps, counts, alive, prev, cur)


@dataclass
class ForestCensus:
    d: int
    starts: list
    horizon: int
    checkpoints: np.ndarray
    components: np.ndarray

    @property
    def final(self) -> int:
        return int(self.components[-1])


def census_starts(params: FieldParams, grid_extent: int, box_dims: int = 1):
    """Open vertices at level 0 in a box of side ``grid_extent`` spanning the
    first ``box_dims`` horizontal axes (the others fixed at 0)."""
    d = params.d
    if not 1 <= box_dims <= d - 1:
        raise InvalidArgumentError("box_dims must lie in 1..d-1")
    axes = [np.arange(grid_extent)] * box_dims + [np.zeros(1, dtype=int)] * (d - 1 - box_dims) + [np.zeros(1, dtype=int)]
    grid = np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=1).astype(np.int64)
    return [tuple(int(c) for c in v) for v in grid[open_mask(params, grid)]]


def forest_census(params: FieldParams, d: Optional[int] = None, grid_extent: int = 40, horizon: int = 10**5,
                  n_checkpoints: int = 11, box_dims: int = 1) -> ForestCensus:
    """Count distinct paths (components met so far) crossing each checkpoint
    level for walkers launched from all open vertices of a level-0 box."""
    if d is not None and d != params.d:
        params = FieldParams(d, params.p, params.seed)
    starts = census_starts(params, grid_extent, box_dims)
    inner = np.geomspace(1, horizon, max(n_checkpoints - 1, 1)).round().astype(np.int64)
    cps = np.unique(np.concatenate([[0], inner, [horizon]]))
    if not starts:
        return ForestCensus(params.d, [], horizon, cps, np.zeros(cps.size, dtype=np.int64))
    run = coalescing_run(params, starts, cps)
    return ForestCensus(params.d, starts, horizon, cps, run.counts)


def _census_final(params, grid_extent, horizon, box_dims):
    return forest_census(params, None, grid_extent, horizon, n_checkpoints=2, box_dims=box_dims).final


def census_finals(params: FieldParams, replicas: int, grid_extent: int = 40, horizon: int = 10**5,
                  box_dims: int = 1, workers: int = 1) -> np.ndarray:
    return np.array(run_replicas(_census_final, params, replicas, workers, grid_extent=grid_extent,
                                 horizon=horizon, box_dims=box_dims))


def point_density_curve(params: FieldParams, half_width: int, ts: Sequence[int]) -> np.ndarray:
    """Distinct paths crossing level t per starting vertex, for walkers from
    every vertex (open or closed) of level 0 in [-L, L]."""
    if params.d != 2:
        raise InvalidArgumentError("point density is defined for d = 2")
    starts = np.stack([np.arange(-half_width, half_width + 1), np.zeros(2 * half_width + 1, dtype=np.int64)],
                      axis=1)
    order = np.argsort(ts)
    run = coalescing_run(params, starts, np.asarray(ts)[order])
    dens = np.empty(len(ts))
    dens[order] = run.counts / (2 * half_width + 1)
    return dens


def point_density(params: FieldParams, half_width: int, t: int) -> float:
    return float(point_density_curve(params, half_width, [t])[0])


__all__ = [
    "TailFit", "km_survival", "km_at", "exp_tail_fit", "power_tail_fit", "CoalescenceSample",
    "coalescence_time", "coalescence_experiment", "align_levels", "StayCheck", "stay_probability_bound",
    "stay_probability_bound_check", "DriftTable", "martingale_drift_test", "lyapunov_f", "LyapunovResult",
    "lyapunov_drift_test", "lyapunov_increments", "lyapunov_summary", "independent_pair_walk", "independent_increments", "CoalescingRun", "coalescing_run",
    "interpolate_x", "ForestCensus", "census_starts", "forest_census", "census_finals", "point_density",
    "point_density_curve", "run_replicas", "mean_se",
]
