"""Compiled inner loops: Euler-Maruyama steps and cycle detection."""
import numpy as np
from numba import njit

# integer state slots for ``detect_chunk``
CUR, ARMED, VISITED, CYC_START, SEQ_LEN, SEQ_TRUNC, BURN = range(7)
N_INT_STATE = 7


@njit(cache=True)
def _drift(x, breaks, dcoef):
    nb = breaks.shape[0]
    if nb <= 16:
        i = 0
        while i < nb - 2 and x >= breaks[i + 1]:
            i += 1
    else:
        i = np.searchsorted(breaks, x, side="right") - 1
    if i < 0:
        i = 0
    elif i > nb - 2:
        i = nb - 2
    s = x - breaks[i]
    d = dcoef[0, i]
    for p in range(1, dcoef.shape[0]):
        d = d * s + dcoef[p, i]
    return d


@njit(cache=True)
def em_chunk(x, n, dt, noise_sd, breaks, dcoef, period, gen, out):
    """Write ``n`` left-endpoint samples into ``out``; return the next state.

    ``breaks``/``dcoef`` hold U' as a piecewise polynomial on
    ``[breaks[0], breaks[0] + period)``; positions are kept in that window.
    """
    lo = breaks[0]
    hi = lo + period
    for k in range(n):
        out[k] = x
        x = x - _drift(x, breaks, dcoef) * dt + noise_sd * gen.standard_normal()
        if x < lo or x >= hi:
            x = lo + (x - lo) % period
            if x >= hi:
                x = lo
    return x


@njit(cache=True)
def _circ(x, p, period):
    # both points lie in the same period window
    d = abs(x - p)
    return min(d, period - d)


@njit(cache=True)
def indicator_values(xs, lo, period, intervals, value, out):
    """``value * 1_A(x)`` for a union of closed intervals ``A``."""
    m = intervals.shape[0]
    for i in range(xs.shape[0]):
        x = xs[i]
        if x < lo or x >= lo + period:
            x = lo + (x - lo) % period
        v = 0.0
        for k in range(m):
            if intervals[k, 0] <= x <= intervals[k, 1]:
                v = value
                break
        out[i] = v
    return out


@njit(cache=True)
def detect_chunk(xs, g, dt, g0, pts, delta, period, st, s_acc, visits_cur, trans,
                 cur_seq, out_start, out_end, out_S, out_visits, out_seq, out_seqlen):
    """Scan samples for hits of the equilibrium balls and close cycles.

    A hit of ``B_delta(O_k)`` is registered at the first sample inside the
    closed ball once the path has been at distance ``>= 2 delta`` from the
    previously hit equilibrium.  A cycle closes at a hit of ``O_1`` (index 0)
    that follows a hit of any other equilibrium.  ``g`` holds the integrand
    at each sample; sample ``n`` contributes ``g[n] * dt`` to the cycle that
    contains it.  Transitions are tallied in ``trans`` only once the
    ``st[BURN]`` burn-in cycles have closed.

    Returns ``(n_processed, n_cycles, n_seq)``; processing stops early when
    an output buffer is full.
    """
    n = xs.shape[0]
    l = pts.shape[0]
    cap_c = out_start.shape[0]
    cap_s = out_seq.shape[0]
    cap_cur = cur_seq.shape[0]
    nc = 0
    ns = 0
    cur = st[CUR]
    armed = st[ARMED]
    acc = s_acc[0]
    for i in range(n):
        x = xs[i]
        if armed == 0:
            if _circ(x, pts[cur], period) >= 2.0 * delta:
                armed = 1
        if armed == 1:
            hit = -1
            for k in range(l):
                if _circ(x, pts[k], period) <= delta:
                    hit = k
                    break
            if hit == 0 and st[VISITED] == 1:
                if nc == cap_c or ns + st[SEQ_LEN] + 1 > cap_s:
                    # buffers full: stop before this sample, state untouched
                    st[CUR] = cur
                    st[ARMED] = armed
                    s_acc[0] = acc
                    return i, nc, ns
                if st[BURN] > 0:
                    st[BURN] -= 1
                else:
                    trans[cur, 0] += 1
                armed = 0
                cur = 0
                out_start[nc] = st[CYC_START]
                out_end[nc] = g0 + i
                out_S[nc] = acc
                for j in range(l):
                    out_visits[nc, j] = visits_cur[j]
                    visits_cur[j] = 0
                for j in range(st[SEQ_LEN]):
                    out_seq[ns] = cur_seq[j]
                    ns += 1
                out_seq[ns] = 0
                ns += 1
                out_seqlen[nc] = st[SEQ_LEN] + 1
                if st[SEQ_TRUNC] == 1:
                    out_seqlen[nc] = -out_seqlen[nc]
                nc += 1
                acc = 0.0
                st[CYC_START] = g0 + i
                st[VISITED] = 0
                st[SEQ_TRUNC] = 0
                visits_cur[0] = 1
                cur_seq[0] = 0
                st[SEQ_LEN] = 1
            elif hit >= 0:
                if st[BURN] == 0:
                    trans[cur, hit] += 1
                armed = 0
                cur = hit
                if hit != 0:
                    st[VISITED] = 1
                visits_cur[hit] += 1
                if cur_seq[st[SEQ_LEN] - 1] != hit:
                    if st[SEQ_LEN] < cap_cur:
                        cur_seq[st[SEQ_LEN]] = hit
                        st[SEQ_LEN] += 1
                    else:
                        st[SEQ_TRUNC] = 1
        acc += g[i] * dt
    st[CUR] = cur
    st[ARMED] = armed
    s_acc[0] = acc
    return n, nc, ns
