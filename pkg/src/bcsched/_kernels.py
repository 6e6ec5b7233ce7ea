"""Compiled hot paths of the weighted sum-rate solver.

Mirrors the pure-Python reference in ``capacity``; the test suite checks
both paths agree.  Kept free of Python objects so the per-slot scheduler
loop stays cheap.
"""

import math

import numpy as np
from numba import njit

_POWER_RTOL = 1e-12
_MAX_BISECT_ITER = 200


@njit(cache=True)
def _total_power_nb(gains, weights, lam):
    num_users, num_sub = gains.shape
    total = 0.0
    for k in range(num_sub):
        zk = 0.0
        for m in range(num_users):
            g = gains[m, k]
            if weights[m] * g > lam:
                cand = weights[m] / lam - 1.0 / g
                if cand > zk:
                    zk = cand
        total += zk
    return total


@njit(cache=True)
def wsr_allocate(gains, weights, p_total):
    """Full solve for one channel state.

    Returns (dual price, powers (M,K), rates (M,), encoding order (K,M)).
    A nonpositive dual price signals failure; the caller raises.
    """
    num_users, num_sub = gains.shape
    powers = np.zeros((num_users, num_sub))
    rates = np.zeros(num_users)
    order = np.zeros((num_sub, num_users), dtype=np.int64)

    lam_hi = 0.0
    for m in range(num_users):
        for k in range(num_sub):
            wg = weights[m] * gains[m, k]
            if wg > lam_hi:
                lam_hi = wg
    if lam_hi <= 0.0 or p_total <= 0.0:
        for k in range(num_sub):
            for m in range(num_users):
                order[k, m] = m
        return 0.0, powers, rates, order

    # Bracket, bisect on the power residual, then polish the active
    # configuration to an exact budget.
    lam_lo = lam_hi
    bracketed = False
    for _ in range(2000):
        lam_lo *= 0.5
        if _total_power_nb(gains, weights, lam_lo) >= p_total:
            bracketed = True
            break
    if not bracketed:
        return -1.0, powers, rates, order
    lo = lam_lo
    hi = lam_hi
    for _ in range(_MAX_BISECT_ITER):
        mid = 0.5 * (lo + hi)
        tot = _total_power_nb(gains, weights, mid)
        if abs(tot - p_total) <= _POWER_RTOL * p_total:
            lo = mid
            hi = mid
            break
        if tot > p_total:
            lo = mid
        else:
            hi = mid
    lam = 0.5 * (lo + hi)
    a_sum = 0.0
    b_sum = 0.0
    for k in range(num_sub):
        best = 0.0
        top = -1
        for m in range(num_users):
            g = gains[m, k]
            if weights[m] * g > lam:
                cand = weights[m] / lam - 1.0 / g
                if cand > best:
                    best = cand
                    top = m
        if top >= 0:
            a_sum += weights[top]
            b_sum += 1.0 / gains[top, k]
    if a_sum > 0.0:
        lam_exact = a_sum / (p_total + b_sum)
        if (
            lam_exact > 0.0
            and abs(_total_power_nb(gains, weights, lam_exact) - p_total)
            <= 1e-9 * p_total
        ):
            lam = lam_exact
    if abs(_total_power_nb(gains, weights, lam) - p_total) > 1e-6 * p_total:
        return -1.0, powers, rates, order

    # Per-subcarrier envelope walk: segments bottom-up give powers, rates
    # and the encoding order.
    used = np.zeros(num_users, dtype=np.bool_)
    for k in range(num_sub):
        z_max = 0.0
        for m in range(num_users):
            g = gains[m, k]
            if weights[m] * g > lam:
                cand = weights[m] / lam - 1.0 / g
                if cand > z_max:
                    z_max = cand
        for m in range(num_users):
            used[m] = False
        pos = 0
        if z_max > 0.0:
            cur = -1
            best_wg = 0.0
            best_mu = 0.0
            for m in range(num_users):
                wg = weights[m] * gains[m, k]
                if wg > best_wg or (wg == best_wg and wg > 0.0 and weights[m] > best_mu):
                    cur = m
                    best_wg = wg
                    best_mu = weights[m]
            z = 0.0
            for _ in range(num_users + 1):
                z_next = z_max
                nxt = -1
                nxt_mu = -1.0
                for j in range(num_users):
                    if j == cur:
                        continue
                    gj = gains[j, k]
                    if weights[j] * gj <= 0.0 or weights[j] <= weights[cur]:
                        continue
                    den = gains[cur, k] * gj * (weights[j] - weights[cur])
                    if den == 0.0:
                        continue
                    zs = (weights[cur] * gains[cur, k] - weights[j] * gj) / den
                    if zs <= z:
                        continue
                    if zs < z_next or (zs == z_next and weights[j] > nxt_mu):
                        z_next = zs
                        nxt = j
                        nxt_mu = weights[j]
                end = z_next if z_next < z_max else z_max
                if end > z:
                    g = gains[cur, k]
                    powers[cur, k] += end - z
                    rates[cur] += math.log((1.0 + g * end) / (1.0 + g * z))
                    if not used[cur]:
                        order[k, pos] = cur
                        used[cur] = True
                        pos += 1
                if nxt < 0 or z_next >= z_max:
                    break
                z = z_next
                cur = nxt
        for m in range(num_users):
            if not used[m]:
                order[k, pos] = m
                pos += 1
    return lam, powers, rates, order


@njit(cache=True)
def wsr_bank_rates(gains_stack, weights, p_total):
    """Per-sample maximizer rates over a bank: (S, M) array."""
    num_samples = gains_stack.shape[0]
    num_users = gains_stack.shape[1]
    out = np.zeros((num_samples, num_users))
    for s in range(num_samples):
        lam, powers, rates, order = wsr_allocate(gains_stack[s], weights, p_total)
        if lam < 0.0:
            out[s, 0] = np.nan
        else:
            out[s] = rates
    return out
