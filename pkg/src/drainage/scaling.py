"""Diffusive rescaling of lattice paths and Brownian-web counting diagnostics.

A lattice point (x, l) of a d = 2 path maps to (x / (n sigma0), l / (n^2 gamma0)).
Query times are snapped to the nearest lattice level, so all position
comparisons are exact on rationals built from integer knots.

Two routes compute the counting variables.  ``eta_count``/``eta_hat_count``
work on an explicit ``ScaledEnsemble``; ``e1_diagnostic``/``b1_diagnostic``
build the relevant start set straight from the environment and run the
coalescing kernel, which is what makes n = 100 affordable.
"""
from __future__ import annotations

import bisect
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize_scalar

from . import _kernels as K
from .analysis import coalescing_run, interpolate_x, mean_se, run_replicas
from .errors import InvalidArgumentError, SearchExhaustedError
from .field import FieldParams
from .successor import DEFAULT_MAX_RADIUS, PathRecord


@dataclass(frozen=True)
class ScalingConstants:
    gamma0: float
    sigma0: float
    p: float
    d: int
    gamma0_se: float = float("nan")
    sigma0_se: float = float("nan")
    mean_dx: float = float("nan")
    mean_dx_se: float = float("nan")
    n_increments: int = 0

    def __post_init__(self):
        if not self.gamma0 > 0 or not self.sigma0 > 0:
            raise InvalidArgumentError("gamma0 and sigma0 must be positive")


def _sd_se(x: np.ndarray) -> float:
    """Delta-method standard error of the sample standard deviation."""
    s2 = x.var(ddof=1)
    m4 = np.mean((x - x.mean()) ** 4)
    return float(math.sqrt(max(m4 - s2 * s2, 0.0) / (4.0 * s2 * x.size)))


def regeneration_increments(params: FieldParams, replicas: int, j_per_replica: int,
                            max_radius: int = DEFAULT_MAX_RADIUS):
    """Single-walker (level, first-coordinate) increments between consecutive
    regenerations, one environment per replica; arrays of shape (replicas, j)."""
    keys = np.array([K.field_key(params.replica(r).seed) for r in range(replicas)], dtype=np.uint64)
    dT, dX, status = K.regen_single_batch_nb(keys, params.p, params.d, int(j_per_replica), max_radius)
    if status == K.SEARCH_EXHAUSTED:
        raise SearchExhaustedError((0,) * params.d, max_radius)
    return dT, dX


def estimate_constants(params: FieldParams, replicas: int, j_per_replica: int) -> ScalingConstants:
    if params.d != 2:
        raise InvalidArgumentError("scaling constants are estimated for d = 2")
    if replicas * j_per_replica < 1000:
        raise InvalidArgumentError("at least 1000 increments are needed")
    dT, dX = regeneration_increments(params, replicas, j_per_replica)
    t = dT.ravel().astype(float)
    x = dX.ravel().astype(float)
    g, g_se = mean_se(t)
    mx, mx_se = mean_se(x)
    return ScalingConstants(g, float(x.std(ddof=1)), params.p, params.d, g_se, _sd_se(x), mx, mx_se, t.size)


# -- scaled paths ------------------------------------------------------------

@dataclass(frozen=True)
class ScaledPath:
    """Piecewise-linear path through (time, position) knots.  Before the first
    knot it is undefined; past the last knot it is held constant."""
    times: Tuple[float, ...]
    positions: Tuple[float, ...]
    lattice: Optional[Tuple[Tuple[int, int], ...]] = None

    def __post_init__(self):
        if len(self.times) == 0 or len(self.times) != len(self.positions):
            raise InvalidArgumentError("times and positions must be non-empty and of equal length")
        if any(b <= a for a, b in zip(self.times, self.times[1:])):
            raise InvalidArgumentError("knot times must be strictly increasing")

    @property
    def start_time(self) -> float:
        return self.times[0]

    def at(self, t: float) -> float:
        """Position at max(t, start_time)."""
        return float(np.interp(max(t, self.times[0]), self.times, self.positions))

    @property
    def start_level(self) -> int:
        return self.lattice[0][1]

    @property
    def end_level(self) -> int:
        return self.lattice[-1][1]

    def lattice_x_at(self, level: int) -> Fraction:
        """Exact first coordinate of the interpolated lattice path at ``level``."""
        levels = [k[1] for k in self.lattice]
        if not levels[0] <= level <= levels[-1]:
            raise InvalidArgumentError(f"level {level} outside [{levels[0]}, {levels[-1]}]")
        i = bisect.bisect_left(levels, level)
        if levels[i] == level:
            return Fraction(self.lattice[i][0])
        return interpolate_x(self.lattice[i - 1], self.lattice[i], level)


@dataclass(frozen=True)
class ScaledEnsemble:
    n: int
    constants: ScalingConstants
    paths: Tuple[ScaledPath, ...]

    @property
    def x_scale(self) -> float:
        return self.n * self.constants.sigma0

    @property
    def t_scale(self) -> float:
        return self.n * self.n * self.constants.gamma0

    def snap(self, s: float) -> int:
        return snap_level(s, self.t_scale)


def snap_level(s: float, t_scale: float) -> int:
    """Nearest lattice level to scaled time ``s`` (halves round up)."""
    return int(math.floor(s * t_scale + 0.5))


def rescale(paths: Sequence[PathRecord], n: int, constants: ScalingConstants) -> ScaledEnsemble:
    if n < 1:
        raise InvalidArgumentError("n must be >= 1")
    xs, ts = n * constants.sigma0, n * n * constants.gamma0
    out = []
    for rec in paths:
        verts = list(rec.steps)
        if not verts or tuple(verts[0]) != tuple(rec.start):
            verts.insert(0, rec.start)
        knots = tuple((int(v[0]), int(v[-1])) for v in verts)
        out.append(ScaledPath(tuple(l / ts for _, l in knots), tuple(x / xs for x, _ in knots), knots))
    return ScaledEnsemble(n, constants, tuple(out))


def _scaled_bound(v: float, xs: float) -> Fraction:
    return Fraction(v) * Fraction(xs)


def _crossings(ens: ScaledEnsemble, L0: int, L1: int):
    """(x at L0, x at L1) as exact lattice rationals for paths alive across [L0, L1]."""
    for path in ens.paths:
        if path.start_level <= L0 and path.end_level >= L1:
            yield path.lattice_x_at(L0), path.lattice_x_at(L1)


def eta_count(ens: ScaledEnsemble, t0: float, t: float, a: float, b: float) -> int:
    """Distinct positions at t0+t of paths born by t0 that cross [a, b] at t0."""
    if not t > 0 or not a < b:
        raise InvalidArgumentError("need t > 0 and a < b")
    L0, L1 = ens.snap(t0), ens.snap(t0 + t)
    lo, hi = _scaled_bound(a, ens.x_scale), _scaled_bound(b, ens.x_scale)
    return len({x1 for x0, x1 in _crossings(ens, L0, L1) if lo <= x0 <= hi})


def eta_hat_count(ens: ScaledEnsemble, t0: float, t: float, a: float, b: float) -> int:
    """Distinct positions in (a, b) at t0+t reached by paths alive at t0."""
    if not t > 0 or not a < b:
        raise InvalidArgumentError("need t > 0 and a < b")
    L0, L1 = ens.snap(t0), ens.snap(t0 + t)
    lo, hi = _scaled_bound(a, ens.x_scale), _scaled_bound(b, ens.x_scale)
    return len({x1 for _, x1 in _crossings(ens, L0, L1) if lo < x1 < hi})


# -- path metric -------------------------------------------------------------

def _piece_sup(g, lo: float, hi: float) -> float:
    grid = np.linspace(lo, hi, 17)
    vals = [g(s) for s in grid]
    k = int(np.argmax(vals))
    best = vals[k]
    a, b = grid[max(k - 1, 0)], grid[min(k + 1, len(grid) - 1)]
    if b > a:
        res = minimize_scalar(lambda s: -g(s), bounds=(a, b), method="bounded", options={"xatol": 1e-12})
        best = max(best, -float(res.fun))
    return best


def path_distance(p1: ScaledPath, p2: ScaledPath) -> float:
    """tanh-compactified distance between two paths with start times.

    Both paths are held at their starting position before they start and at
    their last position after their final knot.  The sup is taken over the
    union of both knot sets (plus t = 0) and refined inside each linear piece
    by a bounded scalar search, since the maximum need not sit on a knot.
    """
    s0 = min(p1.start_time, p2.start_time)
    knots = sorted({t for t in p1.times + p2.times + (0.0,) if t >= s0})

    def g(t):
        return abs(math.tanh(p1.at(t)) - math.tanh(p2.at(t))) / (1.0 + abs(t))

    best = max(g(t) for t in knots)
    for lo, hi in zip(knots, knots[1:]):
        best = max(best, _piece_sup(g, lo, hi))
    return max(abs(math.tanh(p1.start_time) - math.tanh(p2.start_time)), best)


# -- fast routes -------------------------------------------------------------

def default_band(p: float) -> int:
    """Levels below a cut scanned for edges that jump over it.  A jump longer
    than B needs an all-closed forward ball of about B^2 sites."""
    return max(4, math.ceil(math.sqrt(45.0 / -math.log1p(-p))))


def crossing_starts(params: FieldParams, x_lo: int, x_hi: int, cut: int, band: Optional[int] = None):
    if params.d != 2:
        raise InvalidArgumentError("crossing starts are built for d = 2")
    band = default_band(params.p) if band is None else band
    src, dst, status = K.crossing_starts_nb(K.field_key(params.seed), params.p, int(x_lo), int(x_hi), int(cut),
                                            int(band), DEFAULT_MAX_RADIUS)
    if status == K.SEARCH_EXHAUSTED:
        raise SearchExhaustedError((x_lo, cut), DEFAULT_MAX_RADIUS)
    return src, dst


def _count_in(run, ci, lo, hi, closed):
    xs = run.crossings(ci)
    return len({x for x in xs if (lo <= x <= hi if closed else lo < x < hi)})


@dataclass
class E1Result:
    mean: float
    se: float
    target: float
    counts: np.ndarray
    levels: Tuple[int, int]


def _e1_replica(params, xs, L0, L1, a, b, margin):
    lo, hi = _scaled_bound(a, xs), _scaled_bound(b, xs)
    x_lo, x_hi = math.floor(lo) - margin, math.ceil(hi) + margin
    src, _ = crossing_starts(params, x_lo, x_hi, L0)
    if src.shape[0] == 0:
        return 0
    run = coalescing_run(params, src, [L1])
    return _count_in(run, 0, lo, hi, closed=False)


def e1_diagnostic(params: FieldParams, n: int, constants: ScalingConstants, t: float, a: float = 0.0,
                  b: float = 1.0, replicas: int = 100, t0: float = 0.0, margin_sd: float = 6.0,
                  workers: int = 1) -> E1Result:
    """Sample mean of eta-hat over replicas against (b-a)/sqrt(pi t).

    Paths are started from everything crossing level t0 within ``margin_sd``
    standard deviations (at scaled time t) of (a, b)."""
    if params.d != 2:
        raise InvalidArgumentError("E1 diagnostic is defined for d = 2")
    xs, ts = n * constants.sigma0, n * n * constants.gamma0
    L0, L1 = snap_level(t0, ts), snap_level(t0 + t, ts)
    if L1 <= L0:
        raise InvalidArgumentError("t is below lattice resolution at this n")
    margin = int(math.ceil(margin_sd * xs * math.sqrt(t))) + 1
    counts = np.array(run_replicas(_e1_replica, params, replicas, workers, xs=xs, L0=L0, L1=L1, a=a, b=b,
                                   margin=margin))
    m, se = mean_se(counts)
    return E1Result(m, se, (b - a) / math.sqrt(math.pi * t), counts, (L0, L1))


@dataclass
class B1Table:
    epsilons: np.ndarray
    grid_sup: np.ndarray
    se: np.ndarray
    argmax: List[Tuple[float, float]]
    probs: np.ndarray
    grid_shape: Tuple[int, int]


def _b1_replica(params, xs, ts, t, epsilons, a_grid, t0_grid):
    band = default_band(params.p)
    out = np.zeros((len(t0_grid), len(a_grid), len(epsilons)), dtype=bool)
    for i, t0 in enumerate(t0_grid):
        L0, L1 = snap_level(t0, ts), snap_level(t0 + t, ts)
        for j, a in enumerate(a_grid):
            for k, eps in enumerate(epsilons):
                lo, hi = _scaled_bound(a, xs), _scaled_bound(a + eps, xs)
                src, dst = crossing_starts(params, math.floor(lo) - band, math.ceil(hi) + band, L0, band)
                keep = [q for q in range(src.shape[0]) if lo <= interpolate_x(src[q], dst[q], L0) <= hi]
                if len(keep) < 2:
                    continue
                run = coalescing_run(params, src[keep], [L1])
                out[i, j, k] = len(set(run.crossings(0))) >= 2
    return out


def b1_diagnostic(params: FieldParams, n: int, t: float, epsilons: Sequence[float], replicas: int,
                  constants: Optional[ScalingConstants] = None, grid: Tuple[int, int] = (20, 20),
                  workers: int = 1) -> B1Table:
    """Grid-sup over (a, t0) in the unit square of P(eta(t0, t; a, a+eps) >= 2).

    The sup is taken over ``grid`` = (number of a values, number of t0 values)
    equally spaced points; its standard error is that of the maximizing point.
    """
    if params.d != 2:
        raise InvalidArgumentError("B1 diagnostic is defined for d = 2")
    if constants is None:
        constants = estimate_constants(params.with_seed(params.seed ^ 0xB1), 200, 50)
    xs, ts = n * constants.sigma0, n * n * constants.gamma0
    a_grid = np.arange(grid[0]) / grid[0]
    t0_grid = np.arange(grid[1]) / grid[1]
    eps = [float(e) for e in epsilons]
    hits = np.array(run_replicas(_b1_replica, params, replicas, workers, xs=xs, ts=ts, t=t, epsilons=eps,
                                 a_grid=a_grid, t0_grid=t0_grid))
    probs = hits.mean(axis=0)
    flat = probs.reshape(-1, len(eps))
    best = flat.argmax(axis=0)
    sup = flat[best, np.arange(len(eps))]
    se = np.sqrt(sup * (1 - sup) / replicas)
    where = [(float(a_grid[b % grid[0]]), float(t0_grid[b // grid[0]])) for b in best]
    return B1Table(np.array(eps), sup, se, where, probs, grid)


__all__ = [
    "ScalingConstants", "estimate_constants", "regeneration_increments", "ScaledPath", "ScaledEnsemble",
    "rescale", "snap_level", "eta_count", "eta_hat_count", "path_distance", "default_band", "crossing_starts",
    "E1Result", "e1_diagnostic", "B1Table", "b1_diagnostic",
]
