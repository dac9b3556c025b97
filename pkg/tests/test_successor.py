import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from drainage.errors import InvalidArgumentError, OracleWindowTooSmallError
from drainage.field import FieldParams, is_open, uniform_at
from drainage.successor import (forward_shell, iterate_path, path_to_level, shell_sizes, successor,
                                successor_bruteforce, successor_with_radius)


def _add(u, off):
    return tuple(a + b for a, b in zip(u, off))


def _find(P, pred, limit=200_000):
    for i in range(limit):
        u = (i % 997 - 498, i // 997)
        if pred(u):
            return u
    pytest.fail("no vertex with the required local pattern")


def test_shell_examples():
    assert forward_shell((0, 0), 1, 2).members == [(0, 1)]
    assert forward_shell((0, 0), 2, 2).members == [(-1, 1), (0, 2), (1, 1)]
    assert forward_shell((0, 0, 0), 2, 3).members == [(-1, 0, 1), (0, -1, 1), (0, 0, 2), (0, 1, 1), (1, 0, 1)]


@pytest.mark.parametrize("k", [0, -1])
def test_shell_radius_must_be_positive(k):
    with pytest.raises(InvalidArgumentError):
        forward_shell((0, 0), k, 2)


@pytest.mark.parametrize("d", [2, 3, 4])
def test_shell_matches_ball_scan(d):
    c = (3,) * d
    for k in range(1, 5):
        brute = sorted(w for w in itertools.product(*[range(x - k, x + k + 1) for x in c])
                       if sum(abs(a - b) for a, b in zip(w, c)) == k and w[-1] > c[-1])
        assert forward_shell(c, k, d).members == brute


def test_shell_sizes_d2():
    assert shell_sizes(2, 5) == [1, 3, 5, 7, 9]


def test_open_neighbour_above_wins():
    P = FieldParams(2, 0.5, 4)
    u = _find(P, lambda u: is_open(P, _add(u, (0, 1))))
    assert successor(P, u) == _add(u, (0, 1))


def test_unique_open_vertex_in_second_shell():
    P = FieldParams(2, 0.5, 4)
    pat = lambda u: (not is_open(P, _add(u, (0, 1))) and is_open(P, _add(u, (1, 1)))
                     and not is_open(P, _add(u, (-1, 1))) and not is_open(P, _add(u, (0, 2))))
    u = _find(P, pat)
    assert successor_with_radius(P, u) == (_add(u, (1, 1)), 2)


def test_equal_distance_tie_goes_to_smaller_uniform():
    P = FieldParams(2, 0.5, 4)
    pat = lambda u: (not is_open(P, _add(u, (0, 1))) and is_open(P, _add(u, (1, 1)))
                     and is_open(P, _add(u, (-1, 1))))
    u = _find(P, pat)
    left, right = _add(u, (-1, 1)), _add(u, (1, 1))
    want = left if uniform_at(P, left) < uniform_at(P, right) else right
    assert successor(P, u) == want


@pytest.mark.parametrize("d,p", [(2, 0.2), (2, 0.5), (3, 0.5), (4, 0.8)])
def test_agrees_with_bruteforce(d, p):
    P = FieldParams(d, p, 21)
    rng = np.random.default_rng(d * 10 + int(p * 10))
    for u in rng.integers(-10 ** 6, 10 ** 6, size=(300, d)):
        h, r = successor_with_radius(P, u)
        assert successor_bruteforce(P, u, r + 1) == h


def test_bruteforce_window_too_small():
    P = FieldParams(2, 0.5, 4)
    u = _find(P, lambda u: not is_open(P, _add(u, (0, 1))))
    with pytest.raises(OracleWindowTooSmallError):
        successor_bruteforce(P, u, 1)


def test_defined_for_closed_vertices():
    P = FieldParams(2, 0.5, 4)
    u = _find(P, lambda u: not is_open(P, u))
    h = successor(P, u)
    assert is_open(P, h) and h[1] > u[1]


def test_zero_steps():
    rec = iterate_path(FieldParams(2, 0.5), (3, 4), 0)
    assert rec.steps == [(3, 4)] and rec.step_radii == []


def test_nearly_all_open_column_goes_straight_up():
    P = FieldParams(3, 1 - 1e-12, 8)
    rec = iterate_path(P, (0, 0, 0), 20)
    assert rec.steps == [(0, 0, k) for k in range(21)]


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2 ** 32), x=st.integers(-1000, 1000), d=st.sampled_from([2, 3, 4]))
def test_path_invariants(seed, x, d):
    P = FieldParams(d, 0.5, seed)
    rec = iterate_path(P, (x,) + (0,) * (d - 1), 30)
    for a, b, r in zip(rec.steps, rec.steps[1:], rec.step_radii):
        assert b[-1] > a[-1]
        assert is_open(P, b)
        assert sum(abs(i - j) for i, j in zip(a, b)) == r


def test_coalescence_is_forever():
    P = FieldParams(2, 0.5, 3)
    a = path_to_level(P, (0, 0), 3000)
    b = path_to_level(P, (1, 0), 3000)
    common = set(a.steps) & set(b.steps)
    assert common, "neighbouring paths should meet within 3000 levels"
    w = min(common, key=lambda v: v[1])
    ia, ib = a.steps.index(w), b.steps.index(w)
    assert a.steps[ia:] == b.steps[ib:]


def test_jump_radius_survival_decays_faster_than_geometric():
    P = FieldParams(2, 0.5, 5)
    radii = np.array(iterate_path(P, (0, 0), 200_000).step_radii)
    surv = np.array([np.mean(radii >= r) for r in range(1, 5)])
    dec = np.diff(np.log(surv))
    assert np.all(np.diff(dec) < 0)
