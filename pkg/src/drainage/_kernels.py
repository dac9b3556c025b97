"""numba hot loops: hashing, successor search, joint exploration, coalescing runs.

Environments are passed around as a *field key* ``mix64(seed ^ FIELD_DOMAIN)``
so the per-vertex hash skips one mixing round.  Status codes returned by the
run kernels are listed below; Python wrappers translate them into exceptions.
"""
import heapq
import math

import numpy as np
from numba import njit, types
from numba.typed import Dict, List

from .field import AUX_DOMAIN, FIELD_DOMAIN, GOLDEN, MASK64, MIX_C1, MIX_C2, mix64

OK = 0
STEP_CAP = 1
LEVEL_CAP = 2
SEARCH_EXHAUSTED = 3
ABSORBED = 4

_C1 = np.uint64(MIX_C1)
_C2 = np.uint64(MIX_C2)
_GOLDEN = np.uint64(GOLDEN)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_INV53 = 1.0 / 9007199254740992.0
_LOW_PRIORITY = np.int64(-(2 ** 62))


def field_key(seed):
    return np.uint64(mix64(int(seed) ^ FIELD_DOMAIN))


def aux_key(seed):
    return np.uint64(mix64(int(seed) ^ AUX_DOMAIN))


@njit(cache=True, inline="always")
def mix64_nb(z):
    z = (z ^ (z >> _S30)) * _C1
    z = (z ^ (z >> _S27)) * _C2
    return z ^ (z >> _S31)


@njit(cache=True)
def hash_vertex(key, w, d):
    h = key
    for i in range(d):
        c = np.uint64(w[i])
        h = mix64_nb(h ^ mix64_nb(c + np.uint64(i + 1) * _GOLDEN))
    return h


@njit(cache=True)
def uniform_nb(key, w, d):
    return np.float64(hash_vertex(key, w, d) >> _S11) * _INV53


@njit(cache=True)
def aux_geometric(akey, p, step, tag):
    """Geometric(p) on {1, 2, ...} by inversion of one auxiliary uniform."""
    buf = np.empty(2, dtype=np.int64)
    buf[0] = step
    buf[1] = tag
    u = uniform_nb(akey, buf, 2)
    return 1 + np.int64(math.floor(math.log1p(-u) / math.log1p(-p)))


@njit(cache=True)
def _lex_less(a, b, d):
    for i in range(d):
        if a[i] < b[i]:
            return True
        if a[i] > b[i]:
            return False
    return False


@njit(cache=True)
def _consider(key, p, w, d, best, best_u):
    u = uniform_nb(key, w, d)
    if u < p and (u < best_u or (u == best_u and _lex_less(w, best, d))):
        for i in range(d):
            best[i] = w[i]
        return u
    return best_u


@njit(cache=True)
def successor_nb(key, p, pos, d, max_radius, out, w, odo):
    """Nearest open forward vertex by L1 shells; ties by min U then lex order.

    Writes the successor into ``out`` and returns its L1 radius, or -1 when no
    open vertex exists within ``max_radius``.  ``w`` (length d) and ``odo``
    (length >= d) are scratch buffers.
    """
    m = d - 1
    for k in range(1, max_radius + 1):
        best_u = 2.0
        for dh in range(1, k + 1):
            r = k - dh
            w[m] = pos[m] + dh
            if m == 1:
                w[0] = pos[0] - r
                best_u = _consider(key, p, w, d, out, best_u)
                if r > 0:
                    w[0] = pos[0] + r
                    best_u = _consider(key, p, w, d, out, best_u)
                continue
            # odometer over the first m-1 horizontal offsets in [-r, r]
            for i in range(m - 1):
                odo[i] = -r
            while True:
                s = 0
                for i in range(m - 1):
                    s += abs(odo[i])
                if s <= r:
                    rem = r - s
                    for i in range(m - 1):
                        w[i] = pos[i] + odo[i]
                    w[m - 1] = pos[m - 1] - rem
                    best_u = _consider(key, p, w, d, out, best_u)
                    if rem > 0:
                        w[m - 1] = pos[m - 1] + rem
                        best_u = _consider(key, p, w, d, out, best_u)
                i = m - 2
                while i >= 0:
                    odo[i] += 1
                    if odo[i] <= r:
                        break
                    odo[i] = -r
                    i -= 1
                if i < 0:
                    break
        if best_u < 2.0:
            return k
    return -1


@njit(cache=True)
def column_gap(key, p, pos, d, cap, w):
    """Smallest m >= 1 with pos + m e_d open (the J variable); -1 past ``cap``."""
    for i in range(d):
        w[i] = pos[i]
    for m in range(1, cap + 1):
        w[d - 1] = pos[d - 1] + m
        if uniform_nb(key, w, d) < p:
            return m
    return -1


@njit(cache=True)
def iterate_path_nb(key, p, start, d, n_steps, max_radius):
    steps = np.empty((n_steps + 1, d), dtype=np.int64)
    radii = np.empty(n_steps, dtype=np.int64)
    steps[0] = start
    w = np.empty(d, dtype=np.int64)
    odo = np.empty(d, dtype=np.int64)
    out = np.empty(d, dtype=np.int64)
    for n in range(n_steps):
        r = successor_nb(key, p, steps[n], d, max_radius, out, w, odo)
        if r < 0:
            return steps[: n + 1], radii[:n], SEARCH_EXHAUSTED
        steps[n + 1] = out
        radii[n] = r
    return steps, radii, OK


@njit(cache=True)
def _min_level(pos, k, d):
    m = pos[0, d - 1]
    for i in range(1, k):
        if pos[i, d - 1] < m:
            m = pos[i, d - 1]
    return m


@njit(cache=True)
def _same(pos, i, j, d):
    for c in range(d):
        if pos[i, c] != pos[j, c]:
            return False
    return True


@njit(cache=True)
def _all_coincide(keys, pos, k, d):
    for i in range(1, k):
        if keys[i] != keys[0] or not _same(pos, 0, i, d):
            return False
    return True


@njit(cache=True)
def joint_step_nb(keys, p, pos, k, d, max_radius, radii, new, w, odo, out):
    """Advance every walker on the minimum level; coincident walkers (same
    environment, same vertex) share one successor.  Fills ``radii`` (0 for
    walkers that stay) and returns the highest explored level, or
    ``_LOW_PRIORITY`` if nothing moved, or -(2**62)+1 on search exhaustion."""
    m = _min_level(pos, k, d)
    apex = _LOW_PRIORITY
    for i in range(k):
        radii[i] = 0
    for i in range(k):
        if pos[i, d - 1] != m or radii[i] != 0:
            continue
        r = successor_nb(keys[i], p, pos[i], d, max_radius, out, w, odo)
        if r < 0:
            return _LOW_PRIORITY + 1
        top = m + r
        if top > apex:
            apex = top
        for j in range(i, k):
            if radii[j] == 0 and pos[j, d - 1] == m and keys[j] == keys[i] and _same(pos, i, j, d):
                radii[j] = r
                for c in range(d):
                    new[j, c] = out[c]
    for i in range(k):
        if radii[i] != 0:
            for c in range(d):
                pos[i, c] = new[i, c]
    return apex


@njit(cache=True)
def run_joint_nb(keys, p, d, starts, j_max, step_cap, level_cap, stop_on_absorb, max_radius):
    """Joint exploration until ``j_max`` regenerations (or a cap).

    The explored region after n steps is the union of the L1 balls scanned by
    all moves so far, cut at the current minimum level.  The minimum level
    never decreases, so the region is empty exactly when the highest ball apex
    is at or below the minimum level; only that apex has to be tracked.

    Returns (count, tau, T, W, regen_positions, status, steps_taken, height_at_end).
    """
    k = starts.shape[0]
    pos = starts.copy()
    base = starts[0, d - 1]
    tau = np.zeros(j_max, dtype=np.int64)
    tt = np.zeros(j_max, dtype=np.int64)
    ww = np.zeros(j_max, dtype=np.int64)
    rp = np.zeros((j_max, k, d), dtype=np.int64)
    radii = np.zeros(k, dtype=np.int64)
    new = np.zeros((k, d), dtype=np.int64)
    w = np.empty(d, dtype=np.int64)
    odo = np.empty(d, dtype=np.int64)
    out = np.empty(d, dtype=np.int64)
    apex = base
    width = 0
    n = 0
    count = 0
    while True:
        top = joint_step_nb(keys, p, pos, k, d, max_radius, radii, new, w, odo, out)
        if top == _LOW_PRIORITY + 1:
            return count, tau, tt, ww, rp, SEARCH_EXHAUSTED, n, 0
        if top > apex:
            apex = top
        for i in range(k):
            width += radii[i]
        n += 1
        m = _min_level(pos, k, d)
        if apex <= m:
            tau[count] = n
            tt[count] = m - base
            ww[count] = width
            rp[count] = pos
            count += 1
            width = 0
            if count == j_max:
                return count, tau, tt, ww, rp, OK, n, 0
            if stop_on_absorb and _all_coincide(keys, pos, k, d):
                return count, tau, tt, ww, rp, ABSORBED, n, 0
        if n >= step_cap:
            return count, tau, tt, ww, rp, STEP_CAP, n, max(apex - m, 0)
        if m - base >= level_cap:
            return count, tau, tt, ww, rp, LEVEL_CAP, n, max(apex - m, 0)


@njit(cache=True)
def coalescence_time_nb(keys, p, d, starts, level_cap, max_radius):
    """Level and regeneration index of the first regeneration at which all
    walkers coincide.  Returns (T, nu, status); status LEVEL_CAP marks a
    censored sample with T equal to the cap."""
    k = starts.shape[0]
    pos = starts.copy()
    base = starts[0, d - 1]
    if _all_coincide(keys, pos, k, d):
        return 0, 0, OK
    radii = np.zeros(k, dtype=np.int64)
    new = np.zeros((k, d), dtype=np.int64)
    w = np.empty(d, dtype=np.int64)
    odo = np.empty(d, dtype=np.int64)
    out = np.empty(d, dtype=np.int64)
    apex = base
    nu = 0
    while True:
        top = joint_step_nb(keys, p, pos, k, d, max_radius, radii, new, w, odo, out)
        if top == _LOW_PRIORITY + 1:
            return 0, nu, SEARCH_EXHAUSTED
        if top > apex:
            apex = top
        m = _min_level(pos, k, d)
        if apex <= m:
            nu += 1
            if _all_coincide(keys, pos, k, d):
                return m - base, nu, OK
        if m - base >= level_cap:
            return level_cap, nu, LEVEL_CAP


@njit(cache=True)
def m_chain_next(M, J, l0):
    if J == 1:
        return max(M - 1, 0)
    if M >= l0 and J <= M:
        return M
    if J > M and M >= l0:
        return J
    return l0 + J


@njit(cache=True)
def coupled_run_nb(key, akey, p, d, starts, n_steps, l0, max_radius):
    """Pair exploration with the dominating integer chain driven by the
    observed column gaps.  Returns (L, M, J, case, status); case[n] is 0 when
    both walkers move, 1 when only the first moves (or they coincide), 2 when
    only the second moves."""
    k = 2
    keys = np.empty(2, dtype=np.uint64)
    keys[0] = key
    keys[1] = key
    pos = starts.copy()
    L = np.zeros(n_steps + 1, dtype=np.int64)
    M = np.zeros(n_steps + 1, dtype=np.int64)
    J = np.zeros(n_steps, dtype=np.int64)
    case = np.zeros(n_steps, dtype=np.int64)
    radii = np.zeros(k, dtype=np.int64)
    new = np.zeros((k, d), dtype=np.int64)
    w = np.empty(d, dtype=np.int64)
    odo = np.empty(d, dtype=np.int64)
    out = np.empty(d, dtype=np.int64)
    apex = starts[0, d - 1]
    for n in range(n_steps):
        lu = pos[0, d - 1]
        lv = pos[1, d - 1]
        coincide = _same(pos, 0, 1, d)
        if lu == lv and not coincide:
            ju = column_gap(key, p, pos[0], d, max_radius, w)
            jv = column_gap(key, p, pos[1], d, max_radius, w)
            jn = max(ju, jv)
            case[n] = 0
        elif lu < lv or coincide:
            jn = max(column_gap(key, p, pos[0], d, max_radius, w), aux_geometric(akey, p, n, 0))
            case[n] = 1
        else:
            jn = max(column_gap(key, p, pos[1], d, max_radius, w), aux_geometric(akey, p, n, 0))
            case[n] = 2
        J[n] = jn
        top = joint_step_nb(keys, p, pos, k, d, max_radius, radii, new, w, odo, out)
        if top == _LOW_PRIORITY + 1:
            return L[: n + 1], M[: n + 1], J[:n], case[:n], SEARCH_EXHAUSTED
        if top > apex:
            apex = top
        m = min(pos[0, d - 1], pos[1, d - 1])
        L[n + 1] = max(apex - m, 0)
        M[n + 1] = m_chain_next(M[n], jn, l0)
    return L, M, J, case, OK


@njit(cache=True)
def _vertex_hash(w, d):
    h = np.uint64(0x6A09E667F3BCC909)
    for i in range(d):
        h = mix64_nb(h ^ (np.uint64(w[i]) + np.uint64(i + 1) * _GOLDEN))
    return np.int64(h >> np.uint64(1))


@njit(cache=True)
def coalescing_run_nb(key, p, d, starts, checkpoints, max_radius):
    """Run walkers from ``starts`` (any levels) in one environment, merging a
    walker into whichever walker already sits on the vertex it lands on.

    Walkers are processed lowest level first, so a walker parked on vertex w
    cannot leave before every walker below it has moved; all meetings are
    therefore detected.  At each checkpoint level c (ascending), once every
    live walker is at level >= c, the edge (previous vertex, current vertex)
    of each live walker born at or below c is recorded.

    Returns (alive_count[c], alive[c, k], prev[c, k, d], cur[c, k, d], status).
    """
    k = starts.shape[0]
    nc = checkpoints.shape[0]
    pos = starts.copy()
    prev = starts.copy()
    dead = np.zeros(k, dtype=np.bool_)
    counts = np.zeros(nc, dtype=np.int64)
    alive_at = np.zeros((nc, k), dtype=np.bool_)
    prev_at = np.zeros((nc, k, d), dtype=np.int64)
    cur_at = np.zeros((nc, k, d), dtype=np.int64)
    occ = Dict.empty(key_type=types.int64, value_type=types.int64)
    heap = List()
    w = np.empty(d, dtype=np.int64)
    odo = np.empty(d, dtype=np.int64)
    out = np.empty(d, dtype=np.int64)
    for i in range(k):
        hv = _vertex_hash(pos[i], d)
        j = occ[hv] if hv in occ else -1
        if j >= 0 and _same(pos, i, j, d):
            dead[i] = True
            continue
        occ[hv] = i
        heap.append((pos[i, d - 1], np.int64(i)))
    heapq.heapify(heap)
    ci = 0
    while ci < nc:
        if len(heap) == 0:
            break
        lev, i = heap[0]
        while ci < nc and lev >= checkpoints[ci]:
            c = checkpoints[ci]
            cnt = 0
            for a in range(k):
                if not dead[a] and starts[a, d - 1] <= c:
                    alive_at[ci, a] = True
                    cnt += 1
                    for q in range(d):
                        prev_at[ci, a, q] = prev[a, q]
                        cur_at[ci, a, q] = pos[a, q]
            counts[ci] = cnt
            ci += 1
        if ci >= nc:
            break
        heapq.heappop(heap)
        if dead[i]:
            continue
        r = successor_nb(key, p, pos[i], d, max_radius, out, w, odo)
        if r < 0:
            return counts, alive_at, prev_at, cur_at, SEARCH_EXHAUSTED
        hv_old = _vertex_hash(pos[i], d)
        if hv_old in occ and occ[hv_old] == i:
            del occ[hv_old]
        for q in range(d):
            prev[i, q] = pos[i, q]
            pos[i, q] = out[q]
        hv = _vertex_hash(pos[i], d)
        j = occ[hv] if hv in occ else -1
        if j >= 0 and not dead[j] and _same(pos, i, j, d):
            dead[i] = True
            continue
        occ[hv] = i
        heapq.heappush(heap, (pos[i, d - 1], i))
    return counts, alive_at, prev_at, cur_at, OK


@njit(cache=True)
def regen_single_batch_nb(key_list, p, d, j_per, max_radius):
    """Single-walker regeneration increments for many environments: returns
    arrays (dT, dX) of shape (len(key_list), j_per) with the level and first
    coordinate increments between consecutive regenerations (starting at 0)."""
    R = key_list.shape[0]
    dT = np.zeros((R, j_per), dtype=np.int64)
    dX = np.zeros((R, j_per), dtype=np.int64)
    starts = np.zeros((1, d), dtype=np.int64)
    keys = np.empty(1, dtype=np.uint64)
    for rr in range(R):
        keys[0] = key_list[rr]
        count, tau, tt, ww, rp, status, n, h = run_joint_nb(keys, p, d, starts, j_per, 1 << 60, 1 << 60, False, max_radius)
        if status != OK:
            return dT, dX, status
        lastT = 0
        lastX = 0
        for j in range(j_per):
            dT[rr, j] = tt[j] - lastT
            dX[rr, j] = rp[j, 0, 0] - lastX
            lastT = tt[j]
            lastX = rp[j, 0, 0]
    return dT, dX, OK


@njit(cache=True)
def crossing_starts_nb(key, p, x_lo, x_hi, cut, band, max_radius):
    """d = 2 vertices whose forward path crosses level ``cut``: open vertices
    on the cut with x in [x_lo, x_hi], then open vertices w in the ``band``
    levels below with h(w) strictly above the cut.  Returns (src, dst, status);
    for on-cut vertices dst equals src."""
    n_max = (x_hi - x_lo + 1) * (band + 1)
    src = np.empty((n_max, 2), dtype=np.int64)
    dst = np.empty((n_max, 2), dtype=np.int64)
    w = np.empty(2, dtype=np.int64)
    odo = np.empty(2, dtype=np.int64)
    out = np.empty(2, dtype=np.int64)
    pos = np.empty(2, dtype=np.int64)
    m = 0
    for lev in range(cut - band, cut + 1):
        for x in range(x_lo, x_hi + 1):
            pos[0] = x
            pos[1] = lev
            if uniform_nb(key, pos, 2) >= p:
                continue
            if lev == cut:
                out[0] = x
                out[1] = lev
            else:
                r = successor_nb(key, p, pos, 2, max_radius, out, w, odo)
                if r < 0:
                    return src[:m], dst[:m], SEARCH_EXHAUSTED
                if out[1] <= cut:
                    continue
            src[m, 0] = x
            src[m, 1] = lev
            dst[m, 0] = out[0]
            dst[m, 1] = out[1]
            m += 1
    return src[:m], dst[:m], OK
