"""Compiled inner loops for metric evaluation, threshold search and bounds.

Every prior is presented to these kernels through two log-moment tables,
``LS[b, a] = ln E{c_s^a exp(-b c_s)}`` and ``LN[b, a] = ln E{c_n^a exp(-b c_n)}``,
plus a log-factorial table ``lf``. Callers are responsible for sizing the
tables; no bounds checking happens here.
"""

import math

import numpy as np
from numba import njit

# terms further than this below the peak are dropped from windowed sums
_WINDOW_NATS = 60.0
_PMF_FLOOR = 1e-30


@njit(cache=True, nogil=True)
def _term(LS, LN, lf, n1, N1, N, Kw, j):
    # j is the power carried by c_s
    return lf[N1] - lf[j] - lf[N1 - j] + LS[n1, j] + LN[Kw, N - j]


@njit(cache=True, nogil=True)
def log_metric(LS, LN, lf, n1, N1, N0, Kw, unimodal):
    """ln E{(c_s + c_n)^N1 c_n^N0 exp(-n1 c_s - Kw c_n)}."""
    N = N1 + N0
    if N1 == 0:
        return LS[n1, 0] + LN[Kw, N]
    if unimodal:
        lo = 0
        hi = N1
        while lo < hi:
            mid = (lo + hi) // 2
            if _term(LS, LN, lf, n1, N1, N, Kw, mid + 1) > _term(LS, LN, lf, n1, N1, N, Kw, mid):
                lo = mid + 1
            else:
                hi = mid
        peak = lo
        tmax = _term(LS, LN, lf, n1, N1, N, Kw, peak)
        if tmax == -np.inf:
            return -np.inf
        acc = 1.0
        j = peak + 1
        while j <= N1:
            t = _term(LS, LN, lf, n1, N1, N, Kw, j) - tmax
            if t < -_WINDOW_NATS:
                break
            acc += math.exp(t)
            j += 1
        j = peak - 1
        while j >= 0:
            t = _term(LS, LN, lf, n1, N1, N, Kw, j) - tmax
            if t < -_WINDOW_NATS:
                break
            acc += math.exp(t)
            j -= 1
        return tmax + math.log(acc)
    tmax = -np.inf
    for j in range(N1 + 1):
        t = _term(LS, LN, lf, n1, N1, N, Kw, j)
        if t > tmax:
            tmax = t
    if tmax == -np.inf:
        return -np.inf
    acc = 0.0
    for j in range(N1 + 1):
        acc += math.exp(_term(LS, LN, lf, n1, N1, N, Kw, j) - tmax)
    return tmax + math.log(acc)


@njit(cache=True, nogil=True)
def _df_condition(LS, LN, lf, n, N1h, N0h, Kw, xi, unimodal):
    one = log_metric(LS, LN, lf, n + 1, N1h + xi, N0h, Kw, unimodal)
    zero = log_metric(LS, LN, lf, n, N1h, N0h + xi, Kw, unimodal)
    return one > zero


@njit(cache=True, nogil=True)
def df_threshold(LS, LN, lf, n, N1h, N0h, Kw, xi_max, start, unimodal):
    """Smallest xi in [0, xi_max] deciding "1"; -1 when none.

    Relies on the likelihood ratio being non-decreasing in xi, so the
    search gallops from ``start`` and then bisects.
    """
    s = min(max(start, 0), xi_max)
    if _df_condition(LS, LN, lf, n, N1h, N0h, Kw, s, unimodal):
        hi = s
        step = 1
        lo = s - step
        while lo >= 0 and _df_condition(LS, LN, lf, n, N1h, N0h, Kw, lo, unimodal):
            hi = lo
            step *= 2
            lo = s - step
        if lo < -1:
            lo = -1
    else:
        lo = s
        step = 1
        hi = s + step
        while True:
            if hi >= xi_max:
                hi = xi_max
                if not _df_condition(LS, LN, lf, n, N1h, N0h, Kw, hi, unimodal):
                    return -1
                break
            if _df_condition(LS, LN, lf, n, N1h, N0h, Kw, hi, unimodal):
                break
            lo = hi
            step *= 2
            hi = s + step
    # condition false at lo (or lo == -1), true at hi
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if _df_condition(LS, LN, lf, n, N1h, N0h, Kw, mid, unimodal):
            hi = mid
        else:
            lo = mid
    return hi


@njit(cache=True, nogil=True)
def ms_zeta(LS, LN, lf, sorted_counts, K, unimodal):
    """Number of ones chosen by the sorted-prefix search for each row.

    ``sorted_counts`` rows must be sorted in descending order.
    Ties between hypotheses resolve to the smaller ones-count.
    """
    rows = sorted_counts.shape[0]
    out = np.empty(rows, dtype=np.int64)
    for r in range(rows):
        total = 0
        for k in range(K):
            total += sorted_counts[r, k]
        best = log_metric(LS, LN, lf, 0, 0, total, K, unimodal)
        best_n = 0
        N1 = 0
        for n1 in range(1, K + 1):
            N1 += sorted_counts[r, n1 - 1]
            v = log_metric(LS, LN, lf, n1, N1, total - N1, K, unimodal)
            if v > best:
                best = v
                best_n = n1
        out[r] = best_n
    return out


@njit(cache=True, nogil=True)
def df_stream(LS, LN, lf, counts, K, feedback, use_feedback, xi_cap, unimodal, thresholds):
    """Decision-feedback detection over each row of ``counts``.

    With ``use_feedback`` true the history is built from ``feedback`` (genie
    bits) rather than from the detector's own decisions. Thresholds used for
    each symbol are written into ``thresholds``.
    """
    trials, B = counts.shape
    out = np.zeros((trials, B), dtype=np.int8)
    for t in range(trials):
        start = 1
        for k in range(B):
            lo = k - (K - 1)
            if lo < 0:
                lo = 0
            Kw = k - lo + 1
            n = 0
            N1h = 0
            N0h = 0
            for j in range(lo, k):
                if use_feedback:
                    bit = feedback[t, j]
                else:
                    bit = out[t, j]
                if bit == 1:
                    n += 1
                    N1h += counts[t, j]
                else:
                    N0h += counts[t, j]
            cap = xi_cap
            alt = 4 * (N1h + N0h) + 10
            if N1h + N0h > 0 and alt > cap:
                cap = alt
            xi = df_threshold(LS, LN, lf, n, N1h, N0h, Kw, cap, start, unimodal)
            thresholds[t, k] = xi
            if xi >= 0:
                start = xi
                if counts[t, k] >= xi:
                    out[t, k] = 1
    return out


@njit(cache=True, nogil=True)
def df_threshold_grid(LS, LN, lf, n, Kw, N1_lo, N1_hi, N0_hi, xi_cap, unimodal):
    """Thresholds for every history (n, N1h, N0h) on a rectangular grid."""
    grid = np.empty((N1_hi - N1_lo + 1, N0_hi + 1), dtype=np.int64)
    for b in range(N0_hi + 1):
        start = 1
        for a in range(N1_lo, N1_hi + 1):
            cap = xi_cap
            alt = 4 * (a + b) + 10
            if a + b > 0 and alt > cap:
                cap = alt
            xi = df_threshold(LS, LN, lf, n, a, b, Kw, cap, start, unimodal)
            grid[a - N1_lo, b] = xi
            if xi >= 0:
                start = xi
    return grid


@njit(cache=True, nogil=True)
def _poisson_cdf_table(lam, upto, lf):
    # cdf[x] = Pr{Poi(lam) <= x}
    cdf = np.empty(upto + 1)
    acc = 0.0
    if lam == 0.0:
        for x in range(upto + 1):
            cdf[x] = 1.0
        return cdf
    llam = math.log(lam)
    for x in range(upto + 1):
        acc += math.exp(x * llam - lam - lf[x])
        cdf[x] = min(acc, 1.0)
    return cdf


@njit(cache=True, nogil=True)
def genie_accumulate(grid, p1, p0, lam1, lam0, lf):
    """Sum of P1 P0 * conditional symbol error over the history grid, per draw.

    ``grid`` holds thresholds; ``p1`` and ``p0`` are per-draw pmfs on the
    grid axes; ``lam1`` = c_s + c_n and ``lam0`` = c_n per draw.
    """
    M = p1.shape[0]
    xmax = 0
    for i in range(grid.shape[0]):
        for j in range(grid.shape[1]):
            if grid[i, j] > xmax:
                xmax = grid[i, j]
    out = np.zeros(M)
    for m in range(M):
        c1 = _poisson_cdf_table(lam1[m], xmax, lf)
        c0 = _poisson_cdf_table(lam0[m], xmax, lf)
        acc = 0.0
        for i in range(grid.shape[0]):
            w1 = p1[m, i]
            if w1 == 0.0:
                continue
            for j in range(grid.shape[1]):
                w = w1 * p0[m, j]
                if w == 0.0:
                    continue
                xi = grid[i, j]
                if xi < 0:
                    # never decides "1": every transmitted one is missed
                    e = 0.5
                elif xi == 0:
                    e = 0.5
                else:
                    # Pr{r < xi} = cdf[xi - 1]
                    e = 0.5 + 0.5 * (c1[xi - 1] - c0[xi - 1])
                acc += w * e
        out[m] = acc
    return out


@njit(cache=True, nogil=True)
def _binom_sf(N, u, lf, sf):
    # sf[x] = Pr{Bin(N, u) >= x} for x = 0..N+1
    sf[N + 1] = 0.0
    if u <= 0.0:
        for x in range(N + 1):
            sf[x] = 1.0 if x == 0 else 0.0
        return
    if u >= 1.0:
        for x in range(N + 1):
            sf[x] = 1.0
        return
    lu = math.log(u)
    lv = math.log1p(-u)
    acc = 0.0
    for x in range(N, -1, -1):
        acc += math.exp(lf[N] - lf[x] - lf[N - x] + x * lu + (N - x) * lv)
        sf[x] = min(acc, 1.0)
    sf[0] = 1.0


@njit(cache=True, nogil=True)
def union_weight_table(LS, LN, lf, K, n1, N1_lo, N1_hi, R_hi, unimodal, mask):
    """Hamming-weighted PEP table for every competitor of an n1-ones sequence.

    Returns H[N1 - N1_lo, R] = sum over (n1_hat, overlap) of
    multiplicity * hamming * Pr{metric(s_hat) > metric(s) | N1, R}, where N1
    is the count total on the ones of s and R the total on its zeros.
    Cells with ``mask == False`` are left at zero.
    """
    nN1 = N1_hi - N1_lo + 1
    out = np.zeros((nN1, R_hi + 1))
    # tau[nh, i, R]: smallest N1_hat for which s_hat wins
    tau = np.empty((K + 1, nN1, R_hi + 1), dtype=np.int64)
    targets = np.empty((nN1, R_hi + 1))
    for i in range(nN1):
        for R in range(R_hi + 1):
            if mask[i, R]:
                targets[i, R] = log_metric(LS, LN, lf, n1, N1_lo + i, R, K, unimodal)
    for nh in range(K + 1):
        for R in range(R_hi + 1):
            start = 0
            for i in range(nN1):
                N1 = N1_lo + i
                if not mask[i, R]:
                    continue
                N = N1 + R
                target = targets[i, R]
                # gallop + bisect for min x in [0, N] with f(nh, x) > target
                s = min(max(start, 0), N)
                if log_metric(LS, LN, lf, nh, s, N - s, K, unimodal) > target:
                    hi = s
                    step = 1
                    lo = s - step
                    while lo >= 0 and log_metric(LS, LN, lf, nh, lo, N - lo, K, unimodal) > target:
                        hi = lo
                        step *= 2
                        lo = s - step
                    if lo < -1:
                        lo = -1
                else:
                    lo = s
                    step = 1
                    hi = s + step
                    found = True
                    while True:
                        if hi >= N:
                            hi = N
                            if not (log_metric(LS, LN, lf, nh, hi, 0, K, unimodal) > target):
                                found = False
                            break
                        if log_metric(LS, LN, lf, nh, hi, N - hi, K, unimodal) > target:
                            break
                        lo = hi
                        step *= 2
                        hi = s + step
                    if not found:
                        tau[nh, i, R] = N + 1
                        continue
                while hi - lo > 1:
                    mid = (lo + hi) // 2
                    if log_metric(LS, LN, lf, nh, mid, N - mid, K, unimodal) > target:
                        hi = mid
                    else:
                        lo = mid
                tau[nh, i, R] = hi
                start = hi

    # pmf of M3 ~ Bin(R, d / (K - n1)) for every d, kept only where it exceeds
    # _PMF_FLOOR; the dropped mass is far below the Poisson truncation
    nd = K - n1 + 1
    bp = np.zeros((nd, R_hi + 1, R_hi + 1))
    blo = np.zeros((nd, R_hi + 1), dtype=np.int64)
    bhi = np.zeros((nd, R_hi + 1), dtype=np.int64)
    for d in range(nd):
        v = d / (K - n1) if K > n1 else 0.0
        for R in range(R_hi + 1):
            if v <= 0.0:
                bp[d, R, 0] = 1.0
                continue
            if v >= 1.0:
                bp[d, R, R] = 1.0
                blo[d, R] = R
                bhi[d, R] = R
                continue
            lv = math.log(v)
            lw = math.log1p(-v)
            first = -1
            last = -1
            for b in range(R + 1):
                p = math.exp(lf[R] - lf[b] - lf[R - b] + b * lv + (R - b) * lw)
                if p > _PMF_FLOOR:
                    bp[d, R, b] = p
                    if first < 0:
                        first = b
                    last = b
            blo[d, R] = first
            bhi[d, R] = last

    sf = np.empty(N1_hi + 2)
    for ov in range(0, n1 + 1):
        u = ov / n1 if n1 > 0 else 0.0
        for i in range(nN1):
            N1 = N1_lo + i
            _binom_sf(N1, u, lf, sf)
            for nh in range(ov, min(K, ov + K - n1) + 1):
                if nh == n1 and ov == n1:
                    continue
                mult = math.exp(lf[n1] - lf[ov] - lf[n1 - ov]
                                + lf[K - n1] - lf[nh - ov] - lf[K - n1 - nh + ov])
                ham = n1 + nh - 2 * ov
                d = nh - ov
                for R in range(R_hi + 1):
                    if not mask[i, R]:
                        continue
                    t = tau[nh, i, R]
                    h = 0.0
                    for b in range(blo[d, R], bhi[d, R] + 1):
                        x = t - b
                        if x <= 0:
                            h += bp[d, R, b]
                        elif x <= N1:
                            h += bp[d, R, b] * sf[x]
                    out[i, R] += mult * ham * h
    return out


@njit(cache=True, nogil=True)
def joint_weight_mask(lam1, lam0, N1_lo, N1_hi, R_hi, log_floor, lf):
    """Cells (N1, R) where some draw has Poisson weight above ``exp(log_floor)``."""
    nN1 = N1_hi - N1_lo + 1
    mask = np.zeros((nN1, R_hi + 1), dtype=np.bool_)
    lp1 = np.empty(nN1)
    lp0 = np.empty(R_hi + 1)
    for m in range(lam1.size):
        a = lam1[m]
        c = lam0[m]
        la = math.log(a) if a > 0 else -np.inf
        lc = math.log(c) if c > 0 else -np.inf
        for i in range(nN1):
            N1 = N1_lo + i
            lp1[i] = (0.0 if N1 == 0 else N1 * la) - a - lf[N1]
        for R in range(R_hi + 1):
            lp0[R] = (0.0 if R == 0 else R * lc) - c - lf[R]
        for i in range(nN1):
            if lp1[i] < log_floor:
                continue
            for R in range(R_hi + 1):
                if lp1[i] + lp0[R] >= log_floor:
                    mask[i, R] = True
    return mask


@njit(cache=True, nogil=True)
def sample_log_moments(x, lx, a, b):
    """``ln mean(x^a exp(-b x))`` over samples ``x`` for each pair in ``b x a``."""
    out = np.empty((b.size, a.size))
    M = x.size
    for i in range(b.size):
        for j in range(a.size):
            aj = a[j]
            bi = b[i]
            vmax = -np.inf
            for m in range(M):
                v = (0.0 if aj == 0.0 else aj * lx[m]) - bi * x[m]
                if v > vmax:
                    vmax = v
            if vmax == -np.inf:
                out[i, j] = -np.inf
                continue
            acc = 0.0
            for m in range(M):
                v = (0.0 if aj == 0.0 else aj * lx[m]) - bi * x[m]
                acc += math.exp(v - vmax)
            out[i, j] = vmax + math.log(acc) - math.log(M)
    return out
