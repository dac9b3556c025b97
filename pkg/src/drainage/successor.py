"""Successor rule of the drainage network and path iteration.

``successor(u)`` is the open vertex v with v(d) > u(d) minimizing ``|u - v|_1``;
equal-distance candidates are ranked by their uniform value (smallest wins),
then by lexicographic coordinates (a probability ~2^-53 fallback).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import List

import numpy as np

from . import _kernels as K
from .errors import InvalidArgumentError, OracleWindowTooSmallError, SearchExhaustedError
from .field import FieldParams, Vertex, as_vertex, uniforms_at

DEFAULT_MAX_RADIUS = 10_000


@dataclass(frozen=True)
class Shell:
    center: Vertex
    radius: int
    members: List[Vertex]


@dataclass
class PathRecord:
    start: Vertex
    steps: List[Vertex] = field(default_factory=list)
    step_radii: List[int] = field(default_factory=list)

    @property
    def end(self) -> Vertex:
        return self.steps[-1]

    def as_array(self) -> np.ndarray:
        return np.asarray(self.steps, dtype=np.int64)


def _l1_sphere(m: int, r: int):
    """All integer vectors of length m with L1 norm exactly r."""
    if m == 1:
        yield from ((-r,), (r,)) if r else ((0,),)
        return
    for a in range(-r, r + 1):
        for rest in _l1_sphere(m - 1, r - abs(a)):
            yield (a,) + rest


def forward_shell(center, k: int, d: int) -> Shell:
    """Vertices w with |w - center|_1 = k and w(d) > center(d), lexicographically."""
    if k <= 0:
        raise InvalidArgumentError(f"shell radius must be >= 1, got {k}")
    c = as_vertex(center, d)
    members = []
    for dh in range(1, k + 1):
        for off in _l1_sphere(d - 1, k - dh):
            members.append(tuple(ci + oi for ci, oi in zip(c[:-1], off)) + (c[-1] + dh,))
    members.sort()
    return Shell(c, k, members)


def _buffers(d):
    return np.empty(d, np.int64), np.empty(d, np.int64), np.empty(d, np.int64)


def successor_with_radius(params: FieldParams, u, max_radius: int = DEFAULT_MAX_RADIUS):
    vertex = as_vertex(u, params.d)
    out, w, odo = _buffers(params.d)
    r = K.successor_nb(K.field_key(params.seed), params.p, np.asarray(vertex, np.int64),
                       params.d, max_radius, out, w, odo)
    if r < 0:
        raise SearchExhaustedError(vertex, max_radius)
    return tuple(int(c) for c in out), int(r)


def successor(params: FieldParams, u, max_radius: int = DEFAULT_MAX_RADIUS) -> Vertex:
    """h(u): defined for every u, open or closed."""
    return successor_with_radius(params, u, max_radius)[0]


@lru_cache(maxsize=32)
def _forward_ball(d: int, R: int) -> np.ndarray:
    grids = np.meshgrid(*[np.arange(-R, R + 1)] * (d - 1), np.arange(1, R + 1), indexing="ij")
    offs = np.stack([g.ravel() for g in grids], axis=1)
    offs = offs[np.abs(offs).sum(axis=1) <= R]
    offs.setflags(write=False)
    return offs


def successor_bruteforce(params: FieldParams, u, window_radius: int) -> Vertex:
    """Test oracle: scan the whole forward L1 ball and apply the three
    conditions literally (vectorized over the ball)."""
    vertex = np.asarray(as_vertex(u, params.d), dtype=np.int64)
    d = params.d
    R = int(window_radius)
    cand = _forward_ball(d, R) + vertex
    vals = uniforms_at(params, cand)
    is_open = vals < params.p
    if not is_open.any():
        raise OracleWindowTooSmallError(
            f"no open forward vertex within L1 radius {R} of {tuple(vertex)}")
    cand, vals = cand[is_open], vals[is_open]
    dist = np.abs(cand - vertex).sum(axis=1)
    # lexsort: last key is primary -> distance, then U, then coordinates
    order = np.lexsort(tuple(cand[:, i] for i in range(d - 1, -1, -1)) + (vals, dist))
    return tuple(int(c) for c in cand[order[0]])


def iterate_path(params: FieldParams, u, n_steps: int, max_radius: int = DEFAULT_MAX_RADIUS) -> PathRecord:
    if n_steps < 0:
        raise InvalidArgumentError("n_steps must be >= 0")
    start = as_vertex(u, params.d)
    steps, radii, status = K.iterate_path_nb(K.field_key(params.seed), params.p,
                                             np.asarray(start, np.int64), params.d, int(n_steps), max_radius)
    if status == K.SEARCH_EXHAUSTED:
        raise SearchExhaustedError(tuple(steps[-1]), max_radius)
    return PathRecord(start, [tuple(int(c) for c in s) for s in steps], [int(r) for r in radii])


def path_to_level(params: FieldParams, u, level: int, max_radius: int = DEFAULT_MAX_RADIUS) -> PathRecord:
    """Iterate from ``u`` until the path reaches coordinate d >= ``level``."""
    start = as_vertex(u, params.d)
    rec = PathRecord(start, [start], [])
    cur = start
    while cur[-1] < level:
        cur, r = successor_with_radius(params, cur, max_radius)
        rec.steps.append(cur)
        rec.step_radii.append(r)
    return rec


def shell_sizes(d: int, k_max: int):
    """Number of forward vertices at each L1 radius 1..k_max."""
    return [len(forward_shell((0,) * d, k, d).members) for k in range(1, k_max + 1)]


__all__ = [
    "Shell", "PathRecord", "forward_shell", "successor", "successor_with_radius",
    "successor_bruteforce", "iterate_path", "path_to_level", "shell_sizes",
    "DEFAULT_MAX_RADIUS",
]
