"""Deterministic random environment on Z^d.

Every vertex carries a uniform value obtained by hashing ``(seed, coords)``
with a keyed splitmix64 chain.  Nothing is sampled or stored: any module that
asks for the value of a vertex gets the same number, so independently computed
paths automatically live in one realization of the environment.

Mixing function (stable; changing it changes every data output)::

    h = mix64(seed ^ domain)
    for i, c in enumerate(coords):              # c as two's complement uint64
        h = mix64(h ^ mix64(c + (i + 1) * GOLDEN))
    U = (h >> 11) * 2**-53                      # top 53 bits, in [0, 1)

``mix64`` is the splitmix64 finalizer.  ``domain`` separates the lattice
field from the auxiliary stream used for extra geometric variables and from
replica-seed derivation.

Three implementations are kept in sync: pure Python integers (reference),
vectorized NumPy (oracles, bulk checks) and the numba kernels in
``drainage._kernels`` (simulation hot loops).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np

from .errors import InvalidArgumentError

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
MIX_C1 = 0xBF58476D1CE4E5B9
MIX_C2 = 0x94D049BB133111EB
FIELD_DOMAIN = 0x5851F42D4C957F2D
AUX_DOMAIN = 0x14057B7EF767814F
REPLICA_DOMAIN = 0x2545F4914F6CDD1D
INV_2_53 = 1.0 / (1 << 53)

Vertex = Tuple[int, ...]


@dataclass(frozen=True)
class FieldParams:
    """Dimension, openness probability and 64-bit seed of one environment."""

    d: int
    p: float
    seed: int = 0

    def __post_init__(self):
        if int(self.d) != self.d or self.d < 2:
            raise InvalidArgumentError(f"dimension must be an integer >= 2, got {self.d}")
        if not 0.0 < self.p < 1.0:
            raise InvalidArgumentError(f"p must lie in (0, 1), got {self.p}")
        if not 0 <= int(self.seed) <= MASK64:
            raise InvalidArgumentError("seed must be a 64-bit unsigned integer")
        object.__setattr__(self, "d", int(self.d))
        object.__setattr__(self, "p", float(self.p))
        object.__setattr__(self, "seed", int(self.seed))

    def with_seed(self, seed: int) -> "FieldParams":
        return FieldParams(self.d, self.p, seed)

    def replica(self, replica_id: int) -> "FieldParams":
        """Independent environment for replica ``replica_id``."""
        return self.with_seed(derive_seed(self.seed, replica_id))


def mix64(z: int) -> int:
    z &= MASK64
    z = ((z ^ (z >> 30)) * MIX_C1) & MASK64
    z = ((z ^ (z >> 27)) * MIX_C2) & MASK64
    return z ^ (z >> 31)


def hash_coords(seed: int, coords: Sequence[int], domain: int = FIELD_DOMAIN) -> int:
    h = mix64(seed ^ domain)
    for i, c in enumerate(coords):
        h = mix64(h ^ mix64((int(c) + (i + 1) * GOLDEN) & MASK64))
    return h


def derive_seed(seed: int, replica_id: int) -> int:
    """Seed of an independent environment keyed by ``(seed, replica_id)``."""
    return mix64((mix64(seed ^ REPLICA_DOMAIN) + int(replica_id)) & MASK64)


def as_vertex(v, d: int | None = None) -> Vertex:
    vertex = tuple(int(c) for c in v)
    if d is not None and len(vertex) != d:
        raise InvalidArgumentError(f"vertex {vertex} has {len(vertex)} coordinates, expected {d}")
    return vertex


def uniform_at(params: FieldParams, v) -> float:
    """Uniform value U_v in [0, 1) of vertex ``v``."""
    vertex = as_vertex(v, params.d)
    return (hash_coords(params.seed, vertex) >> 11) * INV_2_53


def is_open(params: FieldParams, v) -> bool:
    return uniform_at(params, v) < params.p


def aux_uniform(seed: int, key: Sequence[int]) -> float:
    """Uniform from the auxiliary stream; never collides with lattice values."""
    return (hash_coords(seed, key, AUX_DOMAIN) >> 11) * INV_2_53


# -- vectorized -------------------------------------------------------------

def _mix64_np(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * np.uint64(MIX_C1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(MIX_C2)
    return z ^ (z >> np.uint64(31))


def uniforms_at(params: FieldParams, coords) -> np.ndarray:
    """Uniform values for an ``(N, d)`` integer array of vertices."""
    arr = np.asarray(coords, dtype=np.int64)
    if arr.ndim != 2 or arr.shape[1] != params.d:
        raise InvalidArgumentError(f"expected an (N, {params.d}) coordinate array, got shape {arr.shape}")
    with np.errstate(over="ignore"):
        h = np.full(arr.shape[0], mix64(params.seed ^ FIELD_DOMAIN), dtype=np.uint64)
        cu = arr.view(np.uint64)
        for i in range(params.d):
            h = _mix64_np(h ^ _mix64_np(cu[:, i] + np.uint64(((i + 1) * GOLDEN) & MASK64)))
    return (h >> np.uint64(11)).astype(np.float64) * INV_2_53


def open_mask(params: FieldParams, coords) -> np.ndarray:
    return uniforms_at(params, coords) < params.p
