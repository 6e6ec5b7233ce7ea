"""Weighted sum-rate maximization over the OFDM broadcast-channel capacity region.

The instantaneous region for one fading state is swept out by per-subcarrier
superposition layering: a power layer dz placed at interference level z and
given to user m buys marginal weighted utility

    u_m(z) = w_m * g_m / (1 + g_m * z),

so the optimal allocation fills every subcarrier with the upper envelope of
the per-user utility curves down to a common water level (the dual price of
the sum-power constraint).  Two curves cross at most once, which makes the
envelope an ordered list of at most M segments with analytic breakpoints;
the dual price is found by bisection on the total power and polished to an
exact solution of the active configuration.

Rates are in nats per channel use throughout; unit conversion is the
harness's job.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

try:
    from . import _kernels

    _HAVE_KERNELS = True
except ImportError:  # pragma: no cover - numba missing only in stripped envs
    _kernels = None
    _HAVE_KERNELS = False

# Dual-price search parameters (relative tolerance on the power residual).
POWER_RTOL = 1e-12
MAX_BISECT_ITER = 200


class SolverError(RuntimeError):
    """Raised when the dual-price search cannot meet its tolerance."""


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ChannelState:
    """One block-fading realization: complex coefficients and derived gains."""

    coefficients: np.ndarray  # (M, K) complex
    noise_variance: float = 1.0
    gains: np.ndarray = field(init=False)  # (M, K), |h|^2 / sigma^2

    def __post_init__(self):
        h = np.atleast_2d(np.asarray(self.coefficients))
        if h.ndim != 2:
            raise ValueError("coefficients must be a 2-D (users x subcarriers) array")
        if not self.noise_variance > 0:
            raise ValueError("noise variance must be positive")
        object.__setattr__(self, "coefficients", h)
        g = (np.abs(h) ** 2 / self.noise_variance).astype(float)
        object.__setattr__(self, "gains", g)

    @classmethod
    def from_gains(cls, gains) -> "ChannelState":
        """Build a state directly from SNR-normalized gains (unit noise)."""
        g = np.atleast_2d(np.asarray(gains, dtype=float))
        if np.any(g < 0):
            raise ValueError("gains must be nonnegative")
        return cls(coefficients=np.sqrt(g).astype(complex), noise_variance=1.0)

    @property
    def num_users(self) -> int:
        return self.coefficients.shape[0]

    @property
    def num_subcarriers(self) -> int:
        return self.coefficients.shape[1]


@dataclass(frozen=True)
class PowerBudget:
    """Total transmit power per slot, linear scale."""

    total: float

    def __post_init__(self):
        if not self.total > 0:
            raise ValueError("power budget must be positive")


@dataclass
class RateAllocation:
    """Solution of one weighted sum-rate problem.

    ``encoding_order[k]`` lists the users of subcarrier k bottom-first: the
    first entry is encoded first and sees no interference, later entries see
    the cumulative power of all earlier ones.
    """

    powers: np.ndarray  # (M, K)
    encoding_order: np.ndarray  # (K, M) int
    rates: np.ndarray  # (M,) nats per channel use
    objective: float
    dual_price: float = 0.0

    @property
    def total_power(self) -> float:
        return float(self.powers.sum())


@dataclass
class ErgodicBank:
    """A fixed, seeded collection of channel samples standing in for the
    ergodic region; regenerating with the same seed and size is identical."""

    samples: tuple
    seed: int

    def __post_init__(self):
        self.samples = tuple(self.samples)
        if not self.samples:
            raise ValueError("bank must contain at least one sample")
        self._gains_stack = None

    @property
    def size(self) -> int:
        return len(self.samples)

    @property
    def gains_stack(self) -> np.ndarray:
        """(S, M, K) gain array, built once on first use."""
        if self._gains_stack is None:
            self._gains_stack = np.ascontiguousarray(
                np.stack([s.gains for s in self.samples])
            )
        return self._gains_stack


def check_weights(weights, num_users=None) -> np.ndarray:
    """Validate a weight vector: nonnegative, at least one positive entry."""
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1:
        raise ValueError("weights must be a 1-D vector")
    if num_users is not None and w.shape[0] != num_users:
        raise ValueError(f"expected {num_users} weights, got {w.shape[0]}")
    if np.any(w < 0) or not np.any(w > 0):
        raise ValueError("weights must be nonnegative with at least one positive")
    if not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite")
    return w


# ---------------------------------------------------------------------------
# Layering primitives
# ---------------------------------------------------------------------------


def marginal_utility(weight, gain, level):
    """Marginal weighted rate of adding power for one user at cumulative
    power ``level``: weight * gain / (1 + gain * level)."""
    return weight * gain / (1.0 + gain * level)


def crossing_point(mu_i, g_i, mu_j, g_j):
    """Level above which user j's utility curve overtakes user i's.

    Returns None when the curves do not cross at a strictly positive level
    (equal weights, or one curve dominating from z=0 on; a tie exactly at
    z=0 does not count as an interior crossing).
    """
    den = g_i * g_j * (mu_j - mu_i)
    if den == 0:
        return None
    z = (mu_i * g_i - mu_j * g_j) / den
    return z if z > 0 else None


def _leader_at_zero(weights, gains):
    """User whose curve tops the envelope just above z=0.

    Ranked by weight*gain; an exact tie is broken toward the larger weight
    (that curve dominates immediately after zero) and then the lower index.
    """
    cur = -1
    best_wg = 0.0
    best_mu = 0.0
    for m in range(len(weights)):
        wg = weights[m] * gains[m]
        if wg > best_wg or (wg == best_wg and wg > 0.0 and weights[m] > best_mu):
            cur, best_wg, best_mu = m, wg, weights[m]
    return cur


def _envelope_segments(weights, gains, z_max):
    """Walk the upper utility envelope from 0 to z_max.

    Each pair of curves crosses at most once and the overtaker always has
    the larger weight, so the walk visits each user at most once.
    """
    segments = []
    cur = _leader_at_zero(weights, gains)
    if cur < 0 or z_max <= 0:
        return segments
    z = 0.0
    for _ in range(len(weights) + 1):
        z_next = z_max
        nxt = -1
        nxt_mu = -1.0
        for j in range(len(weights)):
            if j == cur or weights[j] * gains[j] <= 0.0:
                continue
            if weights[j] <= weights[cur]:
                continue  # never overtakes
            zs = crossing_point(weights[cur], gains[cur], weights[j], gains[j])
            if zs is None or zs <= z:
                continue
            if zs < z_next or (zs == z_next and weights[j] > nxt_mu):
                z_next, nxt, nxt_mu = zs, j, weights[j]
        end = min(z_next, z_max)
        if end > z:
            segments.append((cur, z, end))
        if nxt < 0 or z_next >= z_max:
            break
        z, cur = z_next, nxt
    return segments


def layer_partition(gains_column, weights, dual_price):
    """Partition one subcarrier's power axis among users at a dual price.

    Returns maximal segments (user, z_start, z_end) of the utility upper
    envelope on [0, z_max], where z_max is the level at which the envelope
    hits ``dual_price`` (empty when no curve starts above it).  The segment
    sequence bottom-up is the encoding order.
    """
    if not dual_price > 0:
        raise ValueError("dual price must be positive")
    g = np.asarray(gains_column, dtype=float)
    mu = check_weights(weights, g.shape[0])
    z_max = 0.0
    for m in range(len(mu)):
        if mu[m] * g[m] > dual_price:
            z_max = max(z_max, mu[m] / dual_price - 1.0 / g[m])
    return _envelope_segments(mu, g, z_max)


def rates_from_powers(gains, powers, encoding_order):
    """Per-user rates of an explicit (powers, encoding order) allocation.

    Direct evaluation of the superposition rate formula: the j-th encoded
    user on a subcarrier sees the cumulative power of users encoded before
    it as interference.
    """
    g = np.atleast_2d(np.asarray(gains, dtype=float))
    p = np.atleast_2d(np.asarray(powers, dtype=float))
    order = np.atleast_2d(np.asarray(encoding_order, dtype=int))
    num_users, num_sub = g.shape
    rates = np.zeros(num_users)
    for k in range(num_sub):
        below = 0.0
        for user in order[k]:
            gq = g[user, k]
            rates[user] += math.log1p(gq * p[user, k] / (1.0 + gq * below))
            below += p[user, k]
    return rates


# ---------------------------------------------------------------------------
# Exact instantaneous solver
# ---------------------------------------------------------------------------


def _total_power(gains, weights, lam):
    """Sum over subcarriers of the level where the envelope hits ``lam``."""
    with np.errstate(divide="ignore"):
        inv_g = np.where(gains > 0, 1.0 / np.where(gains > 0, gains, 1.0), np.inf)
    cand = weights[:, None] / lam - inv_g
    return float(np.maximum(cand.max(axis=0), 0.0).sum())


def _solve_dual_price(gains, weights, p_total):
    """Bisection on the dual price so the total power meets the budget,
    then an exact polish on the stabilized active configuration."""
    lam_hi = float((weights[:, None] * gains).max())
    if lam_hi <= 0.0:
        raise SolverError("all weighted gains are zero")
    lam_lo = lam_hi
    for _ in range(2000):
        lam_lo *= 0.5
        if _total_power(gains, weights, lam_lo) >= p_total:
            break
    else:  # pragma: no cover - signals corrupted (non-finite) inputs
        raise SolverError("failed to bracket the dual price")
    lo, hi = lam_lo, lam_hi
    for _ in range(MAX_BISECT_ITER):
        mid = 0.5 * (lo + hi)
        tot = _total_power(gains, weights, mid)
        if abs(tot - p_total) <= POWER_RTOL * p_total:
            lo = hi = mid
            break
        if tot > p_total:
            lo = mid
        else:
            hi = mid
    lam = 0.5 * (lo + hi)
    # Exact power on the active configuration: with the top user of every
    # active subcarrier fixed, total(lam) = A/lam - B.
    with np.errstate(divide="ignore"):
        inv_g = np.where(gains > 0, 1.0 / np.where(gains > 0, gains, 1.0), np.inf)
    cand = weights[:, None] / lam - inv_g
    top = cand.argmax(axis=0)
    active = cand.max(axis=0) > 0
    if active.any():
        a_sum = weights[top[active]].sum()
        b_sum = inv_g[top[active], np.flatnonzero(active)].sum()
        lam_exact = a_sum / (p_total + b_sum)
        if (
            lam_exact > 0
            and abs(_total_power(gains, weights, lam_exact) - p_total)
            <= 1e-9 * p_total
        ):
            lam = lam_exact
    if abs(_total_power(gains, weights, lam) - p_total) > 1e-6 * p_total:
        raise SolverError("dual-price bisection did not converge")
    return lam


def _zero_allocation(num_users, num_sub):
    return RateAllocation(
        powers=np.zeros((num_users, num_sub)),
        encoding_order=np.tile(np.arange(num_users), (num_sub, 1)),
        rates=np.zeros(num_users),
        objective=0.0,
        dual_price=0.0,
    )


def _solve_wsr_python(channel, weights, p_total):
    g = channel.gains
    mu = check_weights(weights, channel.num_users)
    num_users, num_sub = g.shape
    if p_total <= 0 or float((mu[:, None] * g).max()) <= 0.0:
        return _zero_allocation(num_users, num_sub)
    lam = _solve_dual_price(g, mu, p_total)
    powers = np.zeros((num_users, num_sub))
    rates = np.zeros(num_users)
    order = np.zeros((num_sub, num_users), dtype=int)
    for k in range(num_sub):
        segments = layer_partition(g[:, k], mu, lam)
        pos = 0
        seen = set()
        for user, z0, z1 in segments:
            gq = g[user, k]
            powers[user, k] += z1 - z0
            rates[user] += math.log((1.0 + gq * z1) / (1.0 + gq * z0))
            if user not in seen:
                order[k, pos] = user
                seen.add(user)
                pos += 1
        for m in range(num_users):
            if m not in seen:
                order[k, pos] = m
                pos += 1
    return RateAllocation(
        powers=powers,
        encoding_order=order,
        rates=rates,
        objective=float(mu @ rates),
        dual_price=lam,
    )


def solve_wsr_instant(channel, weights, power_budget, engine="auto"):
    """Maximize weights @ rates over the instantaneous capacity region.

    Outer bisection on the dual price of the sum-power constraint, inner
    utility-envelope partition per subcarrier.  The returned allocation has
    the budget tight whenever the objective is positive.
    """
    p_total = float(power_budget)
    if engine == "python" or not _HAVE_KERNELS:
        return _solve_wsr_python(channel, weights, p_total)
    mu = check_weights(weights, channel.num_users)
    g = channel.gains
    if p_total <= 0 or float((mu[:, None] * g).max()) <= 0.0:
        return _zero_allocation(channel.num_users, channel.num_subcarriers)
    lam, powers, rates, order = _kernels.wsr_allocate(
        np.ascontiguousarray(g), np.ascontiguousarray(mu), p_total
    )
    if lam <= 0.0:
        raise SolverError("dual-price bisection did not converge")
    return RateAllocation(
        powers=powers,
        encoding_order=order,
        rates=rates,
        objective=float(mu @ rates),
        dual_price=float(lam),
    )


# ---------------------------------------------------------------------------
# Grid-search oracle (tests only)
# ---------------------------------------------------------------------------

_BRUTE_MAX_USERS = 3
_BRUTE_MAX_SUBCARRIERS = 2


def _order_value_on_grid(gains_col, weights, order, grid):
    """Best weighted rate per total-budget grid point for one fixed
    encoding order on one subcarrier.

    Written in cumulative powers Z_1 <= ... <= Z_{M-1} <= b the objective
    splits into one term per breakpoint plus a budget term, so a running
    maximum over the shared grid searches all monotone breakpoint tuples.
    Returns (values over grid, breakpoint index arrays for argmax recovery).
    """
    m_users = len(order)
    log_terms = [
        weights[u] * np.log1p(gains_col[u] * grid) for u in order
    ]  # mu_u * log(1 + g_u Z)
    best_idx = []
    running = np.zeros(len(grid))
    for j in range(m_users - 1):
        term = running + log_terms[j] - log_terms[j + 1]
        idx = np.zeros(len(grid), dtype=int)
        cur_best = -np.inf
        cur_idx = 0
        for i in range(len(grid)):
            if term[i] > cur_best:
                cur_best = term[i]
                cur_idx = i
            term[i] = cur_best
            idx[i] = cur_idx
        running = term
        best_idx.append(idx)
    return running + log_terms[-1], best_idx


def _best_single_subcarrier(gains_col, weights, grid):
    """Exhaust all encoding orders on one subcarrier; per-budget maxima."""
    import itertools

    m_users = len(gains_col)
    best_val = np.full(len(grid), -np.inf)
    best_meta = [None] * len(grid)
    for order in itertools.permutations(range(m_users)):
        vals, idx_tables = _order_value_on_grid(gains_col, weights, order, grid)
        better = vals > best_val
        if better.any():
            for i in np.flatnonzero(better):
                best_val[i] = vals[i]
                best_meta[i] = (order, idx_tables)
    return best_val, best_meta


def _recover_powers(gains_col, order, idx_tables, grid, budget_idx):
    """Trace the running-max tables back into per-user powers."""
    m_users = len(order)
    z_idx = [0] * (m_users + 1)
    z_idx[m_users] = budget_idx
    cursor = budget_idx
    for j in range(m_users - 2, -1, -1):
        cursor = idx_tables[j][cursor]
        z_idx[j + 1] = cursor
    z_idx[0] = 0
    powers = np.zeros(m_users)
    for j, user in enumerate(order):
        powers[user] = grid[z_idx[j + 1]] - grid[z_idx[j]]
    return powers


def brute_force_wsr(channel, weights, power_budget, grid_resolution=400):
    """Independent grid-search oracle for small instances (tests only).

    Exhausts all encoding orders per subcarrier and all cumulative-power
    breakpoints on a uniform grid, including the split of the budget across
    subcarriers, evaluating the superposition rate formula directly.
    """
    g = channel.gains
    mu = check_weights(weights, channel.num_users)
    num_users, num_sub = g.shape
    if num_users > _BRUTE_MAX_USERS or num_sub > _BRUTE_MAX_SUBCARRIERS:
        raise ValueError(
            f"oracle limited to {_BRUTE_MAX_USERS} users x "
            f"{_BRUTE_MAX_SUBCARRIERS} subcarriers"
        )
    p_total = float(power_budget)
    if p_total <= 0:
        return _zero_allocation(num_users, num_sub)
    grid = np.linspace(0.0, p_total, grid_resolution + 1)
    tables = [_best_single_subcarrier(g[:, k], mu, grid) for k in range(num_sub)]
    powers = np.zeros((num_users, num_sub))
    if num_sub == 1:
        split = [grid_resolution]
    else:
        combined = tables[0][0] + tables[1][0][::-1]
        i_best = int(np.argmax(combined))
        split = [i_best, grid_resolution - i_best]
    order_out = np.zeros((num_sub, num_users), dtype=int)
    for k in range(num_sub):
        vals, metas = tables[k]
        order, idx_tables = metas[split[k]]
        powers[:, k] = _recover_powers(g[:, k], order, idx_tables, grid, split[k])
        order_out[k] = np.array(order)
    rates = rates_from_powers(g, powers, order_out)
    return RateAllocation(
        powers=powers,
        encoding_order=order_out,
        rates=rates,
        objective=float(mu @ rates),
        dual_price=0.0,
    )


# ---------------------------------------------------------------------------
# Ergodic-region operations
# ---------------------------------------------------------------------------


def solve_wsr_ergodic(bank, weights, power_budget, engine="auto"):
    """Sample-mean boundary rates of the ergodic region in direction
    ``weights``: the mean over the bank of the instantaneous maximizer's
    rate vector (fixed summation order, so runs agree bitwise)."""
    mu = check_weights(weights, bank.samples[0].num_users)
    p_total = float(power_budget)
    if engine != "python" and _HAVE_KERNELS:
        if float((mu[:, None] * bank.gains_stack).max()) <= 0.0 or p_total <= 0:
            return np.zeros(bank.samples[0].num_users)
        per_sample = _kernels.wsr_bank_rates(
            bank.gains_stack, np.ascontiguousarray(mu), p_total
        )
        if np.isnan(per_sample).any():
            raise SolverError("dual-price bisection failed on a bank sample")
    else:
        per_sample = np.stack(
            [
                solve_wsr_instant(s, mu, p_total, engine="python").rates
                for s in bank.samples
            ]
        )
    return per_sample.mean(axis=0)


class RegionSolver:
    """Memoized rate oracle r(weights) over a region handle.

    Weight vectors are normalized to unit sum and snapped to a quantization
    grid before lookup, so the per-slot scheduler loop re-solves each
    direction at most once.  Results are cached arrays: callers must not
    mutate them.  An all-zero weight vector maps to zero rates.
    """

    def __init__(self, region, power_budget, rate_scale=1.0, quantum=1e-4):
        self.region = region
        self.power_budget = float(power_budget)
        self.rate_scale = float(rate_scale)
        self.quantum = quantum
        self._cache = {}
        if isinstance(region, ErgodicBank):
            self.num_users = region.samples[0].num_users
            self._solve = lambda w: solve_wsr_ergodic(
                region, w, self.power_budget
            )
        else:
            self.num_users = region.num_users
            self._solve = lambda w: solve_wsr_instant(
                region, w, self.power_budget
            ).rates

    def rates(self, weights):
        w = np.asarray(weights, dtype=float)
        total = w.sum()
        if total <= 0.0:
            return np.zeros(self.num_users)
        unit = w / total
        if self.quantum:
            key = tuple((unit / self.quantum).round().astype(np.int64).tolist())
            solve_w = np.asarray(key, dtype=float)
            if solve_w.sum() <= 0.0:
                return np.zeros(self.num_users)
        else:
            key = tuple(unit.tolist())
            solve_w = unit
        hit = self._cache.get(key)
        if hit is None:
            hit = self._solve(solve_w) * self.rate_scale
            hit.setflags(write=False)
            self._cache[key] = hit
        return hit

    @property
    def cache_size(self):
        return len(self._cache)


def boundary_point_in_direction(
    bank,
    direction,
    power_budget,
    ratio_tol=1e-3,
    max_iter=600,
    step=0.5,
    solver=None,
):
    """Boundary point of the sampled ergodic region along a ray, plus a
    supporting weight vector.

    Finds weights whose maximizer has all rate / direction ratios equal to
    ``ratio_tol``: the boundary face can be nearly flat, which makes the
    ratio stiff in the weights, so the two-user case bisects on the weight
    fraction (the ratio is monotone in it) and larger cases run
    multiplicative updates with a step that shrinks whenever the spread
    worsens.  Users with a zero direction entry are excluded (zero weight).
    """
    d = np.asarray(direction, dtype=float)
    if np.any(d < 0) or not np.any(d > 0):
        raise ValueError("direction must be nonnegative and nonzero")
    support = d > 0
    num_users = d.shape[0]
    if solver is None:
        solver = RegionSolver(bank, power_budget, quantum=None)
    mu = np.zeros(num_users)
    mu[support] = 1.0 / support.sum()
    if support.sum() == 1:
        r = np.array(solver.rates(mu))
        return r, mu
    if support.sum() == 2:
        return _boundary_bisect_pair(solver, d, support, ratio_tol, max_iter)
    return _boundary_multiplicative(solver, d, support, mu, ratio_tol, max_iter, step)


def _ratio_spread(rates, d, support):
    ratios = rates[support] / d[support]
    mean = ratios.mean()
    if mean <= 0.0:
        raise SolverError("region has no extent along the direction")
    return (ratios.max() - ratios.min()) / mean


def _boundary_bisect_pair(solver, d, support, ratio_tol, max_iter):
    """Root-find the balanced point for two active users: r_i/d_i - r_j/d_j
    is nondecreasing in user i's weight share."""
    i, j = np.flatnonzero(support)

    def evaluate(x):
        mu = np.zeros(d.shape[0])
        mu[i], mu[j] = x, 1.0 - x
        r = np.array(solver.rates(mu))
        return mu, r, r[i] / d[i] - r[j] / d[j]

    lo, hi = 0.0, 1.0
    best = None
    for _ in range(max_iter):
        x = 0.5 * (lo + hi)
        mu, r, gap = evaluate(x)
        spread = _ratio_spread(r, d, support)
        if best is None or spread < best[0]:
            best = (spread, mu, r)
        if spread <= ratio_tol:
            return r, mu
        if gap > 0:
            hi = x
        else:
            lo = x
        if hi - lo < 1e-14:
            break
    raise SolverError(
        f"direction search stalled at ratio spread {best[0]:.2e} (tol {ratio_tol})"
    )


def _boundary_multiplicative(solver, d, support, mu, ratio_tol, max_iter, step):
    best = None
    prev_spread = np.inf
    for _ in range(max_iter):
        r = solver.rates(mu)
        ratios = r[support] / d[support]
        mean = ratios.mean()
        if mean <= 0.0:
            raise SolverError("region has no extent along the direction")
        spread = (ratios.max() - ratios.min()) / mean
        if best is None or spread < best[0]:
            best = (spread, mu.copy(), np.array(r))
        if spread <= ratio_tol:
            return np.array(r), mu.copy()
        if spread >= prev_spread:
            step *= 0.5  # overshooting a flat face: damp
            spread_base, mu = best[0], best[1].copy()
            prev_spread = spread_base
        else:
            prev_spread = spread
        mu = mu.copy()
        mu[support] *= np.exp(-step * (ratios - mean) / mean)
        mu /= mu.sum()
    raise SolverError(
        f"direction search did not reach tol={ratio_tol} "
        f"(best spread {best[0]:.2e} after {max_iter} iterations)"
    )


def sweep_region(bank, num_angles, power_budget):
    """Boundary sample table of a two-user sampled ergodic region.

    Sweeps weight directions (cos t, sin t) for t in [0, pi/2] and returns
    rows (t, r1, r2) in nats per channel use.  For more than two users a
    deterministic weight-grid sample (weights..., rates...) is returned
    instead of an angle sweep.
    """
    num_users = bank.samples[0].num_users
    if num_users != 2:
        return _sweep_weight_grid(bank, num_angles, power_budget)
    thetas = np.linspace(0.0, math.pi / 2.0, num_angles)
    rows = np.zeros((num_angles, 3))
    for i, theta in enumerate(thetas):
        mu = np.array([math.cos(theta), math.sin(theta)])
        mu = np.maximum(mu, 0.0)
        if not mu.any():
            mu[i > 0] = 1.0
        r = solve_wsr_ergodic(bank, mu, power_budget)
        rows[i] = (theta, r[0], r[1])
    return rows


def _sweep_weight_grid(bank, num_points, power_budget):
    """Simplex-grid fallback for M > 2: rows (weights..., rates...)."""
    import itertools

    num_users = bank.samples[0].num_users
    res = max(2, int(round(num_points ** (1.0 / (num_users - 1)))))
    rows = []
    for comp in itertools.product(range(res + 1), repeat=num_users):
        if sum(comp) != res or not any(comp):
            continue
        mu = np.asarray(comp, dtype=float) / res
        r = solve_wsr_ergodic(bank, mu, power_budget)
        rows.append(np.concatenate([mu, r]))
    return np.stack(rows)
