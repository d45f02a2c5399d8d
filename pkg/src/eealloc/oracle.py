"""Brute-force references: grid searches, power sweeps and seeded scenarios.

Nothing here calls the closed-form allocators except :func:`sweep`, which
samples them; the grid oracles are deliberately naive.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .ee_joint import _lambda_from
from .joint import joint_allocate, min_total_power
from .model import LN2, DomainError, InfeasibleError, PowerModel, Scenario, UserChannel
from .waterfill import allocate, d_sum_rate_dP, min_power

MAX_POWER_ORACLE_USERS = 4


class OracleRefused(ValueError):
    """Problem too large for exhaustive enumeration."""


class GridResult(NamedTuple):
    best: Optional[np.ndarray]  # powers (power oracle) or (2, K) bandwidths/powers (joint oracle)
    rate: float
    n_feasible: int


@dataclass(frozen=True)
class SweepCurve:
    mode: str
    P: np.ndarray
    sum_rate: np.ndarray
    ee: np.ndarray
    indicator: np.ndarray

    @property
    def argmax_P(self) -> float:
        return float(self.P[int(np.argmax(self.ee))])

    @property
    def spacing(self) -> float:
        return float(self.P[1] - self.P[0]) if len(self.P) > 1 else 0.0

    @property
    def samples(self) -> list[tuple[float, float, float, float]]:
        return list(zip(self.P.tolist(), self.sum_rate.tolist(), self.ee.tolist(), self.indicator.tolist()))


def _vec_rate(w, p, g):
    w = np.asarray(w, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = w * np.log1p(p * g / w) / LN2
    return np.where(w > 0, r, 0.0)


def grid_power_oracle(s: Scenario, P: float, steps: int) -> GridResult:
    """Best sum rate over a regular grid on the feasible power simplex.

    Every user keeps at least its minimum power; the excess ``P - P0`` is cut
    into ``steps`` equal quanta and every split of them is tried. Ties go to
    the lexicographically first split.
    """
    K = s.n_users
    if K > MAX_POWER_ORACLE_USERS:
        raise OracleRefused(f"power oracle handles at most {MAX_POWER_ORACLE_USERS} users, got {K}")
    if steps < 10:
        raise ValueError("steps must be at least 10")
    w, g = s.bandwidths, s.gains
    p_min = np.array([min_power(wk, gk, u.min_rate) for wk, gk, u in zip(w, g, s.users)])
    excess = P - math.fsum(p_min)
    if excess < -1e-10 * max(1.0, P):
        return GridResult(None, -math.inf, 0)
    quantum = max(excess, 0.0) / steps
    if K == 1:
        p = np.array([P])
        return GridResult(p, float(_vec_rate(w, p, g).sum()), 1)

    best_rate, best_split = -math.inf, None
    last = np.arange(steps + 1)

    def walk(prefix, remaining):
        nonlocal best_rate, best_split
        if len(prefix) == K - 2:
            n_a = last[: remaining + 1]
            n_b = remaining - n_a
            base = math.fsum(
                _vec_rate(w[k], p_min[k] + quantum * n, g[k]) for k, n in enumerate(prefix)
            ) if prefix else 0.0
            j = K - 2
            total = base + _vec_rate(w[j], p_min[j] + quantum * n_a, g[j]) + _vec_rate(
                w[j + 1], p_min[j + 1] + quantum * n_b, g[j + 1]
            )
            i = int(np.argmax(total))
            if total[i] > best_rate:
                best_rate = float(total[i])
                best_split = (*prefix, int(n_a[i]), int(n_b[i]))
            return
        for n in range(remaining + 1):
            walk((*prefix, n), remaining - n)

    walk((), steps)
    powers = p_min + quantum * np.array(best_split, dtype=float)
    n_points = math.comb(steps + K - 1, K - 1)
    return GridResult(powers, best_rate, n_points)


def grid_joint_oracle(s: Scenario, W: float, P: float, steps: int) -> GridResult:
    """Best floor-feasible sum rate over a grid of two-user splits of ``(W, P)``.

    ``best`` holds the bandwidths in row 0 and powers in row 1; it is ``None``
    (with rate ``-inf``) when no grid point meets both floors.
    """
    if s.n_users != 2:
        raise OracleRefused(f"joint oracle handles exactly 2 users, got {s.n_users}")
    (g1, g2), (r1, r2) = s.gains, s.min_rates
    frac = np.arange(steps + 1) / steps
    w2 = (W * frac)[:, None]
    p2 = (P * frac)[None, :]
    w1, p1 = W - w2, P - p2
    rate1 = _vec_rate(w1, p1, g1)
    rate2 = _vec_rate(w2, p2, g2)
    total = rate1 + rate2
    ok = (rate1 >= r1) & (rate2 >= r2)
    n_ok = int(ok.sum())
    if not n_ok:
        return GridResult(None, -math.inf, 0)
    masked = np.where(ok, total, -np.inf)
    a, b = np.unravel_index(int(np.argmax(masked)), masked.shape)
    best = np.array([[W - W * frac[a], W * frac[a]], [P - P * frac[b], P * frac[b]]])
    return GridResult(best, float(masked[a, b]), n_ok)


def sweep(s: Scenario, mode: str, n: int) -> SweepCurve:
    """Sample sum rate, EE and the derivative-sign indicator on ``[P0, P_M]``."""
    if n < 1:
        raise ValueError("n must be positive")
    if mode == "fixed":
        p0 = math.fsum(min_power(u.fixed_bandwidth, u.gain, u.min_rate) for u in s.users)
    elif mode == "joint":
        p0 = min_total_power(s, s.bandwidth_budget)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    if p0 > s.power_budget:
        raise InfeasibleError(
            f"minimum power {p0:.12g} exceeds budget {s.power_budget:.12g}", deficit=p0 - s.power_budget
        )
    grid = np.linspace(p0, s.power_budget, n)
    zeta = s.power_model.amp_efficiency
    rates, ees, ind = np.empty(n), np.empty(n), np.empty(n)
    for i, P in enumerate(grid):
        P = float(P)
        if mode == "fixed":
            alloc, diag = allocate(s, P)
            ind[i] = d_sum_rate_dP(s, diag, P) - alloc.energy_efficiency / zeta
        else:
            sol = joint_allocate(s, s.bandwidth_budget, P)
            alloc = sol.allocation
            try:
                ind[i] = _lambda_from(s, s.bandwidth_budget, P, sol)
            except (ArithmeticError, DomainError):
                ind[i] = math.nan
        rates[i] = alloc.sum_rate
        ees[i] = alloc.energy_efficiency
    return SweepCurve(mode, grid, rates, ees, ind)


class Lcg64:
    """64-bit linear congruential generator with a shifted output.

    ``state <- state * 6364136223846793005 + 1442695040888963407 (mod 2**64)``;
    each draw returns ``(state >> 11) / 2**53``, uniform on ``[0, 1)``. The
    seed is mixed in by one step from ``state = seed``.
    """

    MULT = 6364136223846793005
    INC = 1442695040888963407
    MASK = (1 << 64) - 1

    def __init__(self, seed: int):
        self.state = (int(seed) * self.MULT + self.INC) & self.MASK

    def random(self) -> float:
        self.state = (self.state * self.MULT + self.INC) & self.MASK
        return (self.state >> 11) / float(1 << 53)

    def uniform_upto(self, high: float) -> float:
        """Uniform on ``(0, high]``."""
        return high * (1.0 - self.random())


GAIN_MAX = 10.0
MIN_RATE_MAX = 10.0
FIXED_TOTAL_BANDWIDTH_MAX = 15.0
JOINT_BANDWIDTH_MAX = 15.0
POWER_BUDGET_MAX = 100.0
AMP_EFFICIENCY = 0.8
CIRCUIT_POWER = 10.0


def random_scenario(seed: int, K: int, mode: str = "joint") -> Scenario:
    """Seeded random instance.

    Draw order: K gains on (0, 10] (a gain equal to an earlier one is redrawn
    in joint mode), K rate floors on (0, 10], then in fixed mode K bandwidths
    on (0, 15/K] with a bandwidth budget of 15, or in joint mode a bandwidth
    budget on (0, 15]; finally the power budget on (0, 100].
    Amplifier efficiency is 0.8 and circuit power 10.
    """
    if K < 1:
        raise ValueError("K must be at least 1")
    if mode not in ("fixed", "joint"):
        raise ValueError(f"unknown mode {mode!r}")
    rng = Lcg64(seed)
    gains: list[float] = []
    while len(gains) < K:
        g = rng.uniform_upto(GAIN_MAX)
        if mode == "joint" and g in gains:
            continue
        gains.append(g)
    floors = [rng.uniform_upto(MIN_RATE_MAX) for _ in range(K)]
    if mode == "fixed":
        bws = [rng.uniform_upto(FIXED_TOTAL_BANDWIDTH_MAX / K) for _ in range(K)]
        w_budget = FIXED_TOTAL_BANDWIDTH_MAX
    else:
        bws = [None] * K
        w_budget = rng.uniform_upto(JOINT_BANDWIDTH_MAX)
    p_budget = rng.uniform_upto(POWER_BUDGET_MAX)
    users = tuple(UserChannel(g, r, w) for g, r, w in zip(gains, floors, bws))
    return Scenario(users, w_budget, p_budget, PowerModel(AMP_EFFICIENCY, CIRCUIT_POWER))


def is_feasible(s: Scenario, mode: str) -> bool:
    """Whether the rate floors fit within the budgets."""
    try:
        if mode == "fixed":
            p0 = math.fsum(min_power(u.fixed_bandwidth, u.gain, u.min_rate) for u in s.users)
        else:
            p0 = min_total_power(s, s.bandwidth_budget)
    except InfeasibleError:
        return False
    return p0 <= s.power_budget


def feasible_seeds(K: int, mode: str, count: int, start: int = 0) -> list[int]:
    """First ``count`` seeds from ``start`` whose scenarios are feasible."""
    seeds, seed = [], start
    while len(seeds) < count:
        if is_feasible(random_scenario(seed, K, mode), mode):
            seeds.append(seed)
        seed += 1
    return seeds
