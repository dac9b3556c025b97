"""Dominating chain for the history height and its comparison random walk.

The walk Z takes values -1, 0, 1, 2, ... with

    P(Z = k)  = 2 p (1-p)^(l0 + k)        k >= 1
    P(Z = -1) = p^2
    P(Z = 0)  = 1 - p^2 - 2 (1-p)^(l0 + 1)

and has negative drift once 2 (1-p)^(l0+1) / p < p^2.  The integer chain M
is driven by the column gaps J observed along a joint exploration and stays
above the history height L at every step.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from . import _kernels as K
from .errors import InvalidArgumentError, SearchExhaustedError
from .exploration import _check_starts
from .field import FieldParams
from .successor import DEFAULT_MAX_RADIUS


def _drift_lhs(p: float, l0: int) -> float:
    return 2.0 * (1.0 - p) ** (l0 + 1) / p


@dataclass(frozen=True)
class DominationParams:
    p: float
    l0: int

    def __post_init__(self):
        if not 0.0 < self.p < 1.0:
            raise InvalidArgumentError(f"p must lie in (0, 1), got {self.p}")
        if self.l0 < 1:
            raise InvalidArgumentError("l0 must be >= 1")

    @property
    def satisfies_drift(self) -> bool:
        return _drift_lhs(self.p, self.l0) < self.p ** 2

    @classmethod
    def minimal(cls, p: float) -> "DominationParams":
        return cls(p, minimal_l0(p))


@dataclass(frozen=True)
class MChainState:
    M: int = 0
    n: int = 0


def minimal_l0(p: float) -> int:
    """Smallest l0 >= 1 with 2 (1-p)^(l0+1) / p < p^2."""
    if not 0.0 < p < 1.0:
        raise InvalidArgumentError(f"p must lie in (0, 1), got {p}")
    # closed-form starting guess, then settle the strict inequality exactly
    guess = max(1, int(math.floor(math.log(p ** 3 / 2.0) / math.log1p(-p))) - 2)
    l0 = guess
    while l0 > 1 and _drift_lhs(p, l0 - 1) < p * p:
        l0 -= 1
    while not _drift_lhs(p, l0) < p * p:
        l0 += 1
    return l0


def z_walk_pmf(params: DominationParams, k: int) -> float:
    p, l0 = params.p, params.l0
    if k == -1:
        return p * p
    if k == 0:
        return 1.0 - p * p - 2.0 * (1.0 - p) ** (l0 + 1)
    if k >= 1:
        return 2.0 * p * (1.0 - p) ** (l0 + k)
    return 0.0


def z_walk_drift(params: DominationParams) -> float:
    return _drift_lhs(params.p, params.l0) - params.p ** 2


def z_walk_support_sum(params: DominationParams, tail: float = 1e-15) -> Tuple[float, int]:
    """Sum of the pmf over k = -1, 0, 1, ... until a term drops below ``tail``."""
    total = z_walk_pmf(params, -1) + z_walk_pmf(params, 0)
    k = 1
    terms = []
    while True:
        t = z_walk_pmf(params, k)
        terms.append(t)
        if t < tail:
            break
        k += 1
    return math.fsum([total] + terms), k


def m_chain_step(state: MChainState, J: int, l0: int) -> MChainState:
    if J < 1:
        raise InvalidArgumentError(f"J must be >= 1, got {J}")
    return MChainState(int(K.m_chain_next(state.M, J, l0)), state.n + 1)


@dataclass
class CoupledRun:
    L: np.ndarray
    M: np.ndarray
    J: np.ndarray
    case: np.ndarray

    @property
    def violations(self) -> int:
        return int(np.count_nonzero(self.L > self.M))

    def first_zero(self, series: np.ndarray) -> int:
        """First n >= 1 with series[n] == 0 (len(series) if none)."""
        hits = np.flatnonzero(series[1:] == 0)
        return int(hits[0]) + 1 if hits.size else len(series)

    @property
    def tau(self) -> int:
        return self.first_zero(self.L)

    @property
    def tau_M(self) -> int:
        return self.first_zero(self.M)


def coupled_domination_run(params: FieldParams, starts, n_steps: int, l0: int | None = None,
                           max_radius: int = DEFAULT_MAX_RADIUS) -> CoupledRun:
    """Run a two-walker exploration and the dominating chain side by side.

    J for a mover is the gap to the first open vertex straight above it.  When
    only one walker moves (or both sit on the same vertex) the second
    geometric comes from the auxiliary stream of the same seed.
    """
    pts = _check_starts(starts, params.d)
    if len(pts) != 2:
        raise InvalidArgumentError("the coupling is defined for exactly two starts")
    l0 = minimal_l0(params.p) if l0 is None else int(l0)
    L, M, J, case, status = K.coupled_run_nb(K.field_key(params.seed), K.aux_key(params.seed), params.p,
                                             params.d, np.asarray(pts, np.int64), int(n_steps), l0, max_radius)
    if status == K.SEARCH_EXHAUSTED:
        raise SearchExhaustedError(pts[0], max_radius)
    return CoupledRun(L, M, J, case)


def gamma_rw_tail_bound_terms(p: float, l0: int | None = None) -> dict:
    """Ingredients of the excursion bound: the drift of the comparison walk
    and the success probability p^(2(l0-1)) of the excursion count."""
    l0 = minimal_l0(p) if l0 is None else l0
    return {"l0": l0, "drift": z_walk_drift(DominationParams(p, l0)),
            "excursion_success": p ** (2 * (l0 - 1))}


__all__: List[str] = [
    "DominationParams", "MChainState", "CoupledRun", "minimal_l0", "z_walk_pmf", "z_walk_drift",
    "z_walk_support_sum", "m_chain_step", "coupled_domination_run", "gamma_rw_tail_bound_terms",
]
