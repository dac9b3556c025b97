import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from drainage import _kernels as K
from drainage.errors import InvalidArgumentError
from drainage.field import (FieldParams, aux_uniform, derive_seed, hash_coords, is_open, open_mask,
                            uniform_at, uniforms_at)

coord = st.integers(min_value=-(2 ** 40), max_value=2 ** 40)


def _window(n_side, d=2, offset=0):
    axes = [np.arange(n_side) + offset] * d
    return np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=1)


def test_repeat_queries_identical():
    P = FieldParams(3, 0.5, 17)
    assert uniform_at(P, (1, -2, 3)) == uniform_at(P, (1, -2, 3))
    assert 0.0 <= uniform_at(P, (1, -2, 3)) < 1.0


def test_seed_change_moves_almost_every_value():
    pts = _window(317)[:100_000]
    a = uniforms_at(FieldParams(2, 0.5, 5), pts)
    b = uniforms_at(FieldParams(2, 0.5, 6), pts)
    assert np.mean(a != b) >= 0.999


def test_mean_of_a_million_uniforms():
    u = uniforms_at(FieldParams(2, 0.5, 1), _window(1000))
    assert abs(u.mean() - 0.5) < 0.002


@pytest.mark.parametrize("p", [0.2, 0.5, 0.8])
def test_open_fraction_within_four_sd(p):
    m = open_mask(FieldParams(2, p, 3), _window(1000, offset=-500))
    assert abs(m.mean() - p) < 4 * math.sqrt(p * (1 - p) / 1e6)


def test_single_coordinate_change_changes_value():
    rng = np.random.default_rng(0)
    pts = rng.integers(-10 ** 6, 10 ** 6, size=(100_000, 3))
    P = FieldParams(3, 0.5, 9)
    base = uniforms_at(P, pts)
    for axis in range(3):
        moved = pts.copy()
        moved[:, axis] += rng.integers(1, 50, size=pts.shape[0])
        assert np.mean(uniforms_at(P, moved) != base) >= 1 - 1e-4


def test_is_open_uses_strict_inequality():
    v = (4, 7)
    u = uniform_at(FieldParams(2, 0.5, 2), v)
    assert not is_open(FieldParams(2, u, 2), v)
    assert is_open(FieldParams(2, float(np.nextafter(u, 1.0)), 2), v)
    assert is_open(FieldParams(2, 0.99, 2), v) == (u < 0.99)


def test_dimension_mismatch_rejected():
    P = FieldParams(2, 0.5)
    with pytest.raises(InvalidArgumentError):
        uniform_at(P, (1, 2, 3))
    with pytest.raises(InvalidArgumentError):
        uniforms_at(P, np.zeros((4, 3), dtype=int))


@pytest.mark.parametrize("kw", [dict(d=1, p=0.5), dict(d=2, p=0.0), dict(d=2, p=1.0), dict(d=2, p=0.5, seed=-1),
                                dict(d=2, p=0.5, seed=2 ** 64)])
def test_invalid_params(kw):
    with pytest.raises(InvalidArgumentError):
        FieldParams(**kw)


@settings(max_examples=200, deadline=None)
@given(seed=st.integers(0, 2 ** 64 - 1), v=st.tuples(coord, coord, coord))
def test_python_numpy_numba_routes_agree(seed, v):
    P = FieldParams(3, 0.5, seed)
    py = uniform_at(P, v)
    npv = uniforms_at(P, np.array([v]))[0]
    nb = K.uniform_nb(K.field_key(seed), np.array(v, dtype=np.int64), 3)
    assert py == npv == nb


def test_aux_stream_separate_from_field():
    assert aux_uniform(3, (0, 0)) != uniform_at(FieldParams(2, 0.5, 3), (0, 0))
    assert hash_coords(3, (1, 2)) != hash_coords(3, (2, 1))


def test_replica_seeds_distinct():
    seeds = {derive_seed(7, r) for r in range(10_000)}
    assert len(seeds) == 10_000
    assert FieldParams(2, 0.5, 7).replica(3).seed == derive_seed(7, 3)
