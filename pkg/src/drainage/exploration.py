"""Joint exploration of k paths with history sets and regeneration times.

Walkers on the lowest level move (all of them when levels tie); everything
examined so far that lies strictly above the lowest level forms the history.
A step after which the history is empty is a regeneration.

Two routes are provided.  ``JointState``/``step_joint`` keep the history as an
explicit vertex set and are meant for inspection and tests.  The run
functions use the numba kernel, which only tracks the highest level reached by
any explored ball (see ``_kernels.run_joint_nb``); the two agree step by step.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Set

import numpy as np

from . import _kernels as K
from .errors import BudgetExhaustedError, InvalidArgumentError, SearchExhaustedError
from .field import FieldParams, Vertex, as_vertex
from .successor import DEFAULT_MAX_RADIUS, _l1_sphere, successor_with_radius

DEFAULT_STEP_CAP = 1_000_000


@dataclass
class JointState:
    positions: List[Vertex]
    history: Set[Vertex] = field(default_factory=set)
    n: int = 0
    last_radii: List[int] = field(default_factory=list)

    @property
    def min_level(self) -> int:
        return min(v[-1] for v in self.positions)

    @property
    def height(self) -> int:
        """L: top of the history measured from the lowest walker (0 if empty)."""
        if not self.history:
            return 0
        return max(w[-1] for w in self.history) - self.min_level

    @property
    def regenerated(self) -> bool:
        return not self.history

    def shifted(self):
        """Positions and history relative to the lowest walker (first among ties)."""
        lowest = min(self.positions, key=lambda v: v[-1])
        sub = lambda w: tuple(a - b for a, b in zip(w, lowest))
        return [sub(v) for v in self.positions], {sub(w) for w in self.history}


@dataclass(frozen=True)
class RegenerationRecord:
    j: int
    tau_steps: int
    T_time: int
    width: int
    positions_at_regen: tuple


@dataclass(frozen=True)
class DifferenceSample:
    j: int
    z: tuple


def _check_starts(starts, d) -> List[Vertex]:
    pts = [as_vertex(s, d) for s in starts]
    if not pts:
        raise InvalidArgumentError("at least one start vertex is required")
    if len({v[-1] for v in pts}) != 1:
        raise InvalidArgumentError("all starts must share the last coordinate (level)")
    if len(set(pts)) != len(pts):
        raise InvalidArgumentError("starts must be pairwise distinct")
    return pts


def init_joint(params: FieldParams, starts: Sequence) -> JointState:
    return JointState(positions=_check_starts(starts, params.d))


def _ball_above(center: Vertex, r: int, floor: int):
    """Vertices w with |w - center|_1 <= r and w(d) > floor."""
    d = len(center)
    for dh in range(max(floor - center[-1] + 1, -r), r + 1):
        for rr in range(0, r - abs(dh) + 1):
            for off in _l1_sphere(d - 1, rr):
                yield tuple(c + o for c, o in zip(center[:-1], off)) + (center[-1] + dh,)


def step_joint(state: JointState, params: FieldParams, max_radius: int = DEFAULT_MAX_RADIUS,
               successor_fn: Optional[Callable] = None) -> JointState:
    """One joint move, updating ``state`` in place (and returning it).

    ``successor_fn(v) -> (h(v), radius)`` replaces the field's own successor,
    e.g. to run the same dynamics in a transformed environment.
    """
    succ = successor_fn or (lambda v: successor_with_radius(params, v, max_radius))
    m = state.min_level
    moves = {}
    for v in state.positions:
        if v[-1] == m and v not in moves:
            moves[v] = succ(v)
    new_positions = [moves[v][0] if v in moves else v for v in state.positions]
    new_min = min(v[-1] for v in new_positions)
    history = {w for w in state.history if w[-1] > new_min}
    for v, (_, r) in moves.items():
        history.update(_ball_above(v, r, new_min))
    state.last_radii = [moves[v][1] if v in moves else 0 for v in state.positions]
    state.positions = new_positions
    state.history = history
    state.n += 1
    return state


def run_explicit(params: FieldParams, starts, j_max: int, step_cap: int = DEFAULT_STEP_CAP,
                 successor_fn: Optional[Callable] = None) -> List[RegenerationRecord]:
    """Reference route: regenerations found with explicit history sets."""
    state = init_joint(params, starts)
    base = state.min_level
    records: List[RegenerationRecord] = []
    width = 0
    while len(records) < j_max:
        if state.n >= step_cap:
            raise BudgetExhaustedError(f"step cap {step_cap} reached", records)
        step_joint(state, params, successor_fn=successor_fn)
        width += sum(state.last_radii)
        if state.regenerated:
            records.append(RegenerationRecord(len(records) + 1, state.n, state.min_level - base, width,
                                              tuple(state.positions)))
            width = 0
    return records


def _keys_for(params: FieldParams, k: int, seeds: Optional[Sequence[int]] = None) -> np.ndarray:
    if seeds is None:
        return np.full(k, K.field_key(params.seed), dtype=np.uint64)
    return np.array([K.field_key(s) for s in seeds], dtype=np.uint64)


def run_kernel(params: FieldParams, starts, j_max: int, step_cap: int = DEFAULT_STEP_CAP,
               level_cap: int = 1 << 60, stop_on_absorb: bool = False, seeds=None,
               max_radius: int = DEFAULT_MAX_RADIUS):
    """Thin wrapper over the kernel returning raw arrays and the status code."""
    pts = np.asarray(_check_starts(starts, params.d), dtype=np.int64)
    keys = _keys_for(params, len(pts), seeds)
    return K.run_joint_nb(keys, params.p, params.d, pts, int(j_max), int(step_cap), int(level_cap),
                          bool(stop_on_absorb), int(max_radius))


def _records(count, tau, tt, ww, rp) -> List[RegenerationRecord]:
    return [RegenerationRecord(j + 1, int(tau[j]), int(tt[j]), int(ww[j]),
                               tuple(tuple(int(c) for c in v) for v in rp[j]))
            for j in range(count)]


def run_until_regenerations(params: FieldParams, starts, j_max: int, step_cap: int = DEFAULT_STEP_CAP,
                            max_radius: int = DEFAULT_MAX_RADIUS) -> List[RegenerationRecord]:
    if j_max < 1:
        raise InvalidArgumentError("j_max must be >= 1")
    count, tau, tt, ww, rp, status, n, _ = run_kernel(params, starts, j_max, step_cap, max_radius=max_radius)
    records = _records(count, tau, tt, ww, rp)
    if status == K.STEP_CAP:
        raise BudgetExhaustedError(f"step cap {step_cap} reached after {count} regenerations", records)
    if status == K.SEARCH_EXHAUSTED:
        raise SearchExhaustedError(starts[0], max_radius)
    return records


def difference_chain(params: FieldParams, u, v, j_max: int, step_cap: int = DEFAULT_STEP_CAP) -> List[DifferenceSample]:
    """Horizontal difference (second walker minus first) at regenerations.

    Sample j=0 is the starting difference; sampling stops once the walkers
    coincide, the absorbing state.
    """
    u, v = as_vertex(u, params.d), as_vertex(v, params.d)
    count, tau, tt, ww, rp, status, n, _ = run_kernel(params, [u, v], j_max, step_cap, stop_on_absorb=True)
    samples = [DifferenceSample(0, tuple(b - a for a, b in zip(u[:-1], v[:-1])))]
    for j in range(count):
        samples.append(DifferenceSample(j + 1, tuple(int(x) for x in rp[j, 1, :-1] - rp[j, 0, :-1])))
    if status == K.STEP_CAP:
        raise BudgetExhaustedError(f"step cap {step_cap} reached", samples)
    return samples
