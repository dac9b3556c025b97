import numpy as np
import pytest
from scipy import stats

from drainage.analysis import exp_tail_fit
from drainage.errors import BudgetExhaustedError, InvalidArgumentError
from drainage.exploration import (_ball_above, difference_chain, init_joint, run_explicit, run_kernel,
                                  run_until_regenerations, step_joint)
from drainage.field import FieldParams
from drainage.successor import path_to_level, successor_with_radius


def test_init_examples():
    P = FieldParams(2, 0.5)
    s = init_joint(P, [(0, 0), (5, 0)])
    assert s.min_level == 0 and s.height == 0 and s.regenerated
    assert init_joint(P, [(0, 0)]).positions == [(0, 0)]
    with pytest.raises(InvalidArgumentError):
        init_joint(P, [(0, 0), (0, 1)])
    with pytest.raises(InvalidArgumentError):
        init_joint(P, [(0, 0), (0, 0)])
    with pytest.raises(InvalidArgumentError):
        init_joint(P, [])


def test_ball_of_radius_two_above_level_one():
    assert set(_ball_above((0, 0), 2, 1)) == {(0, 2)}
    assert set(_ball_above((0, 0), 1, 1)) == set()


def _find_start(P, want):
    for x in range(-5000, 5000):
        u = (x, 0)
        if successor_with_radius(P, u)[1] == want:
            return u
    pytest.fail("pattern not found")


def test_radius_one_first_step_regenerates_immediately():
    P = FieldParams(2, 0.5, 1)
    u = _find_start(P, 1)
    rec = run_until_regenerations(P, [u], 1)[0]
    assert (rec.tau_steps, rec.T_time, rec.width) == (1, 1, 1)


def test_diagonal_jump_leaves_one_history_vertex():
    P = FieldParams(2, 0.5, 1)
    for x in range(-5000, 5000):
        u = (x, 0)
        h, r = successor_with_radius(P, u)
        if r == 2 and h[1] == 1:
            break
    s = init_joint(P, [u])
    step_joint(s, P)
    assert s.history == {(x, 2)} and s.height == 1


def test_only_lower_walker_moves():
    P = FieldParams(2, 0.5, 2)
    s = init_joint(P, [(0, 0), (50, 0)])
    step_joint(s, P)
    while s.positions[0][1] == s.positions[1][1]:
        step_joint(s, P)
    before = list(s.positions)
    low = 0 if before[0][1] < before[1][1] else 1
    step_joint(s, P)
    assert s.positions[1 - low] == before[1 - low]
    assert s.positions[low] != before[low]


@pytest.mark.parametrize("d,starts", [(2, [(0, 0), (3, 0)]), (2, [(0, 0), (1, 0), (4, 0)]),
                                      (3, [(0, 0, 0), (2, 1, 0)]), (4, [(0, 0, 0, 0)])])
def test_kernel_matches_explicit_history(d, starts):
    for seed in range(15):
        P = FieldParams(d, 0.5, seed)
        assert run_explicit(P, starts, 6) == run_until_regenerations(P, starts, 6)


def test_history_restriction_and_level_equality():
    P = FieldParams(2, 0.4, 7)
    s = init_joint(P, [(0, 0), (2, 0), (9, 0)])
    for _ in range(500):
        step_joint(s, P)
        assert all(w[-1] > s.min_level for w in s.history)
        if s.regenerated:
            assert len({v[-1] for v in s.positions}) == 1


def test_walker_marginals_follow_their_own_paths():
    P = FieldParams(3, 0.5, 11)
    starts = [(0, 0, 0), (4, -1, 0)]
    s = init_joint(P, starts)
    seen = [{starts[0]}, {starts[1]}]
    for _ in range(400):
        step_joint(s, P)
        for i in range(2):
            seen[i].add(s.positions[i])
    for i in range(2):
        top = max(v[-1] for v in seen[i])
        assert seen[i] == set(path_to_level(P, starts[i], top).steps)


def test_regeneration_indices_strictly_increase():
    recs = run_until_regenerations(FieldParams(2, 0.5, 4), [(0, 0), (7, 0)], 3)
    assert recs[0].tau_steps < recs[1].tau_steps < recs[2].tau_steps
    assert recs[0].T_time < recs[1].T_time < recs[2].T_time
    assert all(r.width >= 0 for r in recs)
    assert all(len({v[-1] for v in r.positions_at_regen}) == 1 for r in recs)


def test_budget_exhaustion_carries_partial_records():
    with pytest.raises(BudgetExhaustedError) as exc:
        run_until_regenerations(FieldParams(2, 0.5, 4), [(0, 0), (7, 0)], 1000, step_cap=50)
    assert isinstance(exc.value.partial, list) and len(exc.value.partial) < 1000
    with pytest.raises(BudgetExhaustedError):
        run_explicit(FieldParams(2, 0.5, 4), [(0, 0), (7, 0)], 1000, step_cap=50)


def test_difference_chain_absorbs_and_never_changes_sign():
    P = FieldParams(2, 0.5, 0)
    absorbed = 0
    for r in range(200):
        z = [s.z[0] for s in difference_chain(P.replica(r), (0, 0), (3, 0), 500)]
        assert z[0] == 3 and all(v >= 0 for v in z)
        if z[-1] == 0:
            absorbed += 1
            assert 0 not in z[:-1]
    assert absorbed > 100


@pytest.mark.parametrize("m", [1, 4])
def test_difference_increment_has_zero_mean(m):
    P = FieldParams(2, 0.5, 31)
    rp = [run_kernel(P.replica(r), [(0, 0), (m, 0)], 1)[4][0] for r in range(10_000)]
    inc = np.array([v[1, 0] - v[0, 0] - m for v in rp])
    assert abs(inc.mean()) < 3 * inc.std(ddof=1) / np.sqrt(inc.size)


def test_single_walker_increments_identically_distributed():
    P = FieldParams(2, 0.5, 12)
    first, later = [], []
    for r in range(4000):
        c, tau, tt, ww, rp, st, n, _ = run_kernel(P.replica(r), [(0, 0)], 3)
        first.append(tt[0])
        later.append(tt[2] - tt[1])
    assert stats.ks_2samp(first, later).pvalue > 0.01


def test_width_tail_decays_exponentially():
    P = FieldParams(2, 0.5, 13)
    widths = np.concatenate([run_kernel(P.replica(r), [(0, 0), (4, 0)], 5)[3] for r in range(2000)])
    fit = exp_tail_fit(widths)
    assert fit.slope < 0
