"""Per-particle inner loops.

Every kernel has two implementations with identical signatures: an explicit
loop compiled by numba (``*_nb``) and a vectorised numpy twin (``*_np``).
The module-level names (``reweight``, ``score_candidates``, ...) bind to one
of them at import time according to ``ROTBAYES_DISABLE_NUMBA``.

Array conventions: particle positions ``x`` have shape ``(1 + m, n)`` with the
angle in row 0 and the ``m`` visibilities below it; ``w`` has shape ``(n,)``.
Candidate ``c`` is control ``c // 2`` measured in basis ``c % 2``.
"""
import math

import numpy as np

from ._accel import USE_NUMBA, njit

PI = math.pi
HALF_PI = 0.5 * math.pi
# resultant length below which the circular mean is undefined
MIN_RESULTANT = 1e-12


# --------------------------------------------------------------------------
# numba
# --------------------------------------------------------------------------


@njit
def _wrap_diff_nb(a, mu):
    d = a - mu
    return d - PI * math.floor((d + HALF_PI) / PI)


@njit
def _angle_from_sums_nb(c, s):
    mu = 0.5 * math.atan2(s, c)
    if mu < 0.0:
        mu += PI
    if mu >= PI:
        mu -= PI
    return mu


@njit
def trig_table_nb(theta, s_values):
    """Rows cos 2t, sin 2t, then cos 2 s_i t, sin 2 s_i t for each control."""
    m = s_values.shape[0]
    n = theta.shape[0]
    out = np.empty((2 * m + 2, n))
    for k in range(n):
        t2 = 2.0 * theta[k]
        out[0, k] = math.cos(t2)
        out[1, k] = math.sin(t2)
        for i in range(m):
            arg = t2 * s_values[i]
            out[2 + 2 * i, k] = math.cos(arg)
            out[3 + 2 * i, k] = math.sin(arg)
    return out


@njit
def reweight_nb(w, fringe, vis, outcome):
    n = w.shape[0]
    out = np.empty(n)
    for k in range(n):
        lp = 0.5 * (1.0 + vis[k] * fringe[k])
        out[k] = w[k] * (lp if outcome > 0 else 1.0 - lp)
    return out


@njit
def weighted_sums_nb(x, w, trig):
    """Return (sum w cos 2t, sum w sin 2t, sum w V_j..., sum w)."""
    rows, n = x.shape
    out = np.zeros(rows + 2)
    for k in range(n):
        wk = w[k]
        out[0] += wk * trig[0, k]
        out[1] += wk * trig[1, k]
        for j in range(1, rows):
            out[j + 1] += wk * x[j, k]
        out[rows + 1] += wk
    return out


@njit
def centered_cov_nb(x, w, mu):
    rows, n = x.shape
    cov = np.zeros((rows, rows))
    d = np.empty(rows)
    for k in range(n):
        d[0] = _wrap_diff_nb(x[0, k], mu[0])
        for j in range(1, rows):
            d[j] = x[j, k] - mu[j]
        wk = w[k]
        for a in range(rows):
            wd = wk * d[a]
            for b in range(a, rows):
                cov[a, b] += wd * d[b]
    for a in range(rows):
        for b in range(a):
            cov[a, b] = cov[b, a]
    return cov


@njit
def score_candidates_nb(x, w, trig, gdiag, fixed):
    """Expected posterior scalar variance for each of the 2m candidates.

    Returns ``(expected_variance, predictive_plus, ok)``; ``ok`` is False when
    some hypothetical posterior has an undefined circular mean. Both outcomes
    are accumulated in the same sweep over the particles.
    """
    m = x.shape[0] - 1
    n = w.shape[0]
    ev = np.zeros(2 * m)
    pp = np.zeros(2 * m)
    theta = x[0]
    g0 = gdiag[0]
    use_theta = g0 > 0.0
    c2 = trig[0]
    s2 = trig[1]
    na = 0
    active = np.empty(m, dtype=np.int64)
    for j in range(m):
        if gdiag[1 + j] > 0.0:
            active[na] = j
            na += 1
    vs_p = np.empty(na)
    vs_m = np.empty(na)
    mu_p = np.empty(na)
    mu_m = np.empty(na)
    for c in range(2 * m):
        i = c // 2
        f = trig[2 + c]
        vis = x[1 + i]
        p_p = 0.0
        p_m = 0.0
        cs_p = 0.0
        cs_m = 0.0
        sn_p = 0.0
        sn_m = 0.0
        for a in range(na):
            vs_p[a] = 0.0
            vs_m[a] = 0.0
        for k in range(n):
            lp = 0.5 * (1.0 + vis[k] * f[k])
            wp = w[k] * lp
            wm = w[k] * (1.0 - lp)
            p_p += wp
            p_m += wm
            if use_theta:
                cs_p += wp * c2[k]
                sn_p += wp * s2[k]
                cs_m += wm * c2[k]
                sn_m += wm * s2[k]
            for a in range(na):
                v = x[1 + active[a], k]
                vs_p[a] += wp * v
                vs_m[a] += wm * v
        pp[c] = p_p
        t_p = 0.0
        t_m = 0.0
        if use_theta:
            if p_p > 0.0:
                if math.sqrt(cs_p * cs_p + sn_p * sn_p) / p_p < MIN_RESULTANT:
                    return ev, pp, False
                t_p = _angle_from_sums_nb(cs_p, sn_p)
            if p_m > 0.0:
                if math.sqrt(cs_m * cs_m + sn_m * sn_m) / p_m < MIN_RESULTANT:
                    return ev, pp, False
                t_m = _angle_from_sums_nb(cs_m, sn_m)
        for a in range(na):
            j = active[a]
            if fixed[j] and j != i:
                mu_p[a] = 0.5
                mu_m[a] = 0.5
            else:
                mu_p[a] = vs_p[a] / p_p if p_p > 0.0 else 0.0
                mu_m[a] = vs_m[a] / p_m if p_m > 0.0 else 0.0
        acc = 0.0
        for k in range(n):
            lp = 0.5 * (1.0 + vis[k] * f[k])
            wp = w[k] * lp
            wm = w[k] * (1.0 - lp)
            if use_theta:
                # angles and means both lie in [0, pi): one shift suffices
                d = theta[k] - t_p
                d -= PI * ((d >= HALF_PI) - (d < -HALF_PI))
                e = theta[k] - t_m
                e -= PI * ((e >= HALF_PI) - (e < -HALF_PI))
                acc += g0 * (wp * d * d + wm * e * e)
            for a in range(na):
                v = x[1 + active[a], k]
                d = v - mu_p[a]
                e = v - mu_m[a]
                acc += gdiag[1 + active[a]] * (wp * d * d + wm * e * e)
        ev[c] = acc
    return ev, pp, True


# --------------------------------------------------------------------------
# numpy
# --------------------------------------------------------------------------


def _wrap_diff_np(a, mu):
    d = a - mu
    return d - PI * np.floor((d + HALF_PI) / PI)


def trig_table_np(theta, s_values):
    m = len(s_values)
    out = np.empty((2 * m + 2, theta.shape[0]))
    t2 = 2.0 * theta
    out[0] = np.cos(t2)
    out[1] = np.sin(t2)
    args = np.multiply.outer(s_values, t2)
    out[2::2] = np.cos(args)
    out[3::2] = np.sin(args)
    return out


def reweight_np(w, fringe, vis, outcome):
    lp = 0.5 * (1.0 + vis * fringe)
    return w * (lp if outcome > 0 else 1.0 - lp)


def weighted_sums_np(x, w, trig):
    return np.concatenate(([w @ trig[0], w @ trig[1]], x[1:] @ w, [w.sum()]))


def centered_cov_np(x, w, mu):
    d = x - mu[:, None]
    d[0] = _wrap_diff_np(x[0], mu[0])
    return (d * w) @ d.T


def score_candidates_np(x, w, trig, gdiag, fixed):
    m = x.shape[0] - 1
    ev = np.zeros(2 * m)
    pp = np.zeros(2 * m)
    theta = x[0]
    use_theta = gdiag[0] > 0.0
    active_v = np.flatnonzero(gdiag[1:] > 0.0)
    for c in range(2 * m):
        i = c // 2
        lp = 0.5 * (1.0 + x[1 + i] * trig[2 + c])
        total = 0.0
        for oi, lik in enumerate((lp, 1.0 - lp)):
            wl = w * lik
            p = wl.sum()
            if oi == 0:
                pp[c] = p
            if p <= 0.0:
                continue
            if use_theta:
                cs = wl @ trig[0]
                sn = wl @ trig[1]
                if math.hypot(cs, sn) / p < MIN_RESULTANT:
                    return ev, pp, False
                mu0 = 0.5 * math.atan2(sn, cs)
                if mu0 < 0.0:
                    mu0 += PI
                if mu0 >= PI:
                    mu0 -= PI
                d = _wrap_diff_np(theta, mu0)
                total += gdiag[0] * (wl @ (d * d))
            for j in active_v:
                if fixed[j] and j != i:
                    mu = 0.5
                else:
                    mu = (wl @ x[1 + j]) / p
                d = x[1 + j] - mu
                total += gdiag[1 + j] * (wl @ (d * d))
        ev[c] = total
    return ev, pp, True


if USE_NUMBA:
    trig_table = trig_table_nb
    reweight = reweight_nb
    weighted_sums = weighted_sums_nb
    centered_cov = centered_cov_nb
    score_candidates = score_candidates_nb
else:
    trig_table = trig_table_np
    reweight = reweight_np
    weighted_sums = weighted_sums_np
    centered_cov = centered_cov_np
    score_candidates = score_candidates_np

wrap_diff = _wrap_diff_np


def angle_from_sums(c, s):
    """Angle on the period-pi circle from resultant components of 2*theta."""
    return float(_angle_from_sums_nb(float(c), float(s)))
