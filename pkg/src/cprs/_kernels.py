"""JIT-compiled inner loops for the stochastic simulators.

Every kernel is a deterministic function of its arguments and of the
state of the supplied ``numpy.random.Generator``; all kernels release
the GIL so trial batches can run on a thread pool.
"""
from __future__ import annotations

import numpy as np
from numba import njit

STATUS_TMAX = 0
STATUS_ABSORBED = 1
STATUS_WILD_EXTINCT = 2
STATUS_BUFFER_FULL = 3

EV_RELEASE = 0
EV_DEATH_WILD = 1
EV_DEATH_STERILE = 2
EV_ARROW = 3


@njit(cache=True, nogil=True)
def _fenwick_add(tree, i, delta):
    n = tree.size - 1
    while i <= n:
        tree[i] += delta
        i += i & (-i)


@njit(cache=True, nogil=True)
def _fenwick_prefix(tree, i):
    s = 0.0
    while i > 0:
        s += tree[i]
        i -= i & (-i)
    return s


@njit(cache=True, nogil=True)
def _fenwick_find(tree, u, bitmask):
    # smallest 0-based index whose cumulative rate exceeds u
    pos = 0
    k = bitmask
    n = tree.size - 1
    while k > 0:
        nxt = pos + k
        if nxt <= n and tree[nxt] <= u:
            u -= tree[nxt]
            pos = nxt
        k >>= 1
    return pos


@njit(cache=True, nogil=True)
def _bitmask(n):
    m = 1
    while m * 2 <= n:
        m *= 2
    return m


@njit(cache=True, nogil=True)
def _birth_in(states, nbr, x, lam1, lam2):
    b = 0.0
    for j in range(nbr.shape[1]):
        y = nbr[x, j]
        if y >= 0:
            sy = states[y]
            if sy == 1:
                b += lam1
            elif sy == 3:
                b += lam2
    return b


@njit(cache=True, nogil=True)
def _site_rate(states, nbr, x, lam1, lam2, r, sym):
    s = states[x]
    if s == 1:
        return 1.0 + r
    if s == 3:
        return 2.0
    if s == 0:
        return _birth_in(states, nbr, x, lam1, lam2) + r
    # s == 2
    if sym:
        return 1.0 + _birth_in(states, nbr, x, lam1, lam2)
    return 1.0


@njit(cache=True, nogil=True)
def gillespie_run(states, nbr, lam1, lam2, r, sym, t, t_max,
                  stop_on_extinct, record, ev_time, ev_site, ev_old, ev_new,
                  rg):
    """Run the exact chain from time ``t`` until t_max / absorption / a
    full event buffer. Returns (time, events_recorded, status)."""
    n = states.size
    rates = np.empty(n)
    tree = np.zeros(n + 1)
    for x in range(n):
        rates[x] = _site_rate(states, nbr, x, lam1, lam2, r, sym)
        _fenwick_add(tree, x + 1, rates[x])
    bitmask = _bitmask(n)
    wild = 0
    for x in range(n):
        if states[x] == 1 or states[x] == 3:
            wild += 1
    if stop_on_extinct and wild == 0:
        return t, 0, STATUS_WILD_EXTINCT
    cap = ev_time.size
    k = 0
    while True:
        total = _fenwick_prefix(tree, n)
        if total <= 1e-300:
            # confirm against freshly computed rates before declaring absorption
            total = 0.0
            for x in range(n):
                total += _site_rate(states, nbr, x, lam1, lam2, r, sym)
            if total <= 0.0:
                return t, k, STATUS_ABSORBED
            for x in range(n):
                rates[x] = _site_rate(states, nbr, x, lam1, lam2, r, sym)
            for i in range(n + 1):
                tree[i] = 0.0
            for x in range(n):
                _fenwick_add(tree, x + 1, rates[x])
            continue
        if record and k >= cap:
            return t, k, STATUS_BUFFER_FULL
        dt = rg.exponential(1.0 / total)
        if t + dt > t_max:
            return t_max, k, STATUS_TMAX
        t = t + dt
        u = rg.random() * total
        x = _fenwick_find(tree, u, bitmask)
        if x >= n:
            x = n - 1
        s = states[x]
        v = rg.random() * rates[x]
        if s == 0:
            b = _birth_in(states, nbr, x, lam1, lam2)
            new = 1 if v < b else 2
        elif s == 1:
            new = 0 if v < 1.0 else 3
        elif s == 2:
            new = 0 if v < 1.0 else 3
        else:
            new = 1 if v < 1.0 else 2
        states[x] = new
        if record:
            ev_time[k] = t
            ev_site[k] = x
            ev_old[k] = s
            ev_new[k] = new
            k += 1
        was_wild = s == 1 or s == 3
        is_wild = new == 1 or new == 3
        if was_wild and not is_wild:
            wild -= 1
        elif is_wild and not was_wild:
            wild += 1
        # only x and its neighbours can change rate
        nr = _site_rate(states, nbr, x, lam1, lam2, r, sym)
        _fenwick_add(tree, x + 1, nr - rates[x])
        rates[x] = nr
        for j in range(nbr.shape[1]):
            y = nbr[x, j]
            if y >= 0:
                ny = _site_rate(states, nbr, y, lam1, lam2, r, sym)
                _fenwick_add(tree, y + 1, ny - rates[y])
                rates[y] = ny
        if stop_on_extinct and wild == 0:
            return t, k, STATUS_WILD_EXTINCT


@njit(cache=True, nogil=True)
def apply_event_stream(states, ev_time, ev_kind, ev_site, ev_src, ev_mark,
                       w1, w3, release_keep, sym, t_end,
                       record, rec_time, rec_site, rec_old, rec_new,
                       stop_on_extinct):
    """Apply a time-sorted marked event stream to ``states`` in place.

    Arrow events fire when the source is wild, thinned by the mark
    (mark < w1 from state-1 sources, mark < w3 from state-3 sources);
    release events fire when mark < release_keep. Births land on empty
    targets always and on sterile-occupied targets only when ``sym``.
    Returns (wild_count, events_recorded, time_processed, status).
    """
    n_ev = ev_time.size
    wild = 0
    for x in range(states.size):
        if states[x] == 1 or states[x] == 3:
            wild += 1
    k = 0
    if stop_on_extinct and wild == 0:
        return wild, k, 0.0, STATUS_WILD_EXTINCT
    for i in range(n_ev):
        tt = ev_time[i]
        if tt > t_end:
            break
        kind = ev_kind[i]
        x = ev_site[i]
        s = states[x]
        new = s
        if kind == EV_RELEASE:
            if ev_mark[i] < release_keep:
                if s == 0:
                    new = 2
                elif s == 1:
                    new = 3
        elif kind == EV_DEATH_WILD:
            if s == 1:
                new = 0
            elif s == 3:
                new = 2
        elif kind == EV_DEATH_STERILE:
            if s == 2:
                new = 0
            elif s == 3:
                new = 1
        else:  # arrow ev_src[i] -> x
            ss = states[ev_src[i]]
            effective = (ss == 1 and ev_mark[i] < w1) or (
                ss == 3 and ev_mark[i] < w3
            )
            if effective:
                if s == 0:
                    new = 1
                elif s == 2 and sym:
                    new = 3
        if new != s:
            states[x] = new
            was_wild = s == 1 or s == 3
            is_wild = new == 1 or new == 3
            if was_wild and not is_wild:
                wild -= 1
            elif is_wild and not was_wild:
                wild += 1
            if record:
                rec_time[k] = tt
                rec_site[k] = x
                rec_old[k] = s
                rec_new[k] = new
                k += 1
            if stop_on_extinct and wild == 0:
                return wild, k, tt, STATUS_WILD_EXTINCT
    return wild, k, t_end, STATUS_TMAX


@njit(cache=True, nogil=True)
def cp_inhomogeneous_run(occ, lam_from_left, lam_from_right, left_idx,
                         right_idx, t, t_max, stop_on_extinct, rg):
    """Two-state contact process with site-dependent birth rates.

    Site k becomes occupied at rate lam_from_left[k] * occ[left] +
    lam_from_right[k] * occ[right]; occupied sites die at rate 1.
    Returns (time, n_occupied, status).
    """
    n = occ.size
    rates = np.empty(n)
    tree = np.zeros(n + 1)

    for x in range(n):
        rates[x] = 0.0
    for x in range(n):
        if occ[x] == 1:
            rates[x] = 1.0
        else:
            b = 0.0
            l = left_idx[x]
            if l >= 0 and occ[l] == 1:
                b += lam_from_left[x]
            rr = right_idx[x]
            if rr >= 0 and occ[rr] == 1:
                b += lam_from_right[x]
            rates[x] = b
        _fenwick_add(tree, x + 1, rates[x])
    bitmask = _bitmask(n)
    occupied = 0
    for x in range(n):
        occupied += occ[x]
    if stop_on_extinct and occupied == 0:
        return t, 0, STATUS_WILD_EXTINCT
    while True:
        total = _fenwick_prefix(tree, n)
        if total <= 1e-300:
            return t, occupied, STATUS_ABSORBED
        dt = rg.exponential(1.0 / total)
        if t + dt > t_max:
            return t_max, occupied, STATUS_TMAX
        t = t + dt
        u = rg.random() * total
        x = _fenwick_find(tree, u, bitmask)
        if x >= n:
            x = n - 1
        if occ[x] == 1:
            occ[x] = 0
            occupied -= 1
        else:
            occ[x] = 1
            occupied += 1
        # refresh x and both neighbours
        for idx in range(-1, 2):
            if idx == -1:
                y = left_idx[x]
            elif idx == 1:
                y = right_idx[x]
            else:
                y = x
            if y < 0:
                continue
            if occ[y] == 1:
                ny = 1.0
            else:
                b = 0.0
                l = left_idx[y]
                if l >= 0 and occ[l] == 1:
                    b += lam_from_left[y]
                rr = right_idx[y]
                if rr >= 0 and occ[rr] == 1:
                    b += lam_from_right[y]
                ny = b
            _fenwick_add(tree, y + 1, ny - rates[y])
            rates[y] = ny
        if stop_on_extinct and occupied == 0:
            return t, 0, STATUS_WILD_EXTINCT
