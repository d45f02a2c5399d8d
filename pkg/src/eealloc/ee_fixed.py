"""Energy-efficiency-optimal total power with fixed per-user bandwidths.

The optimum is located from the derivative sign at the critical power levels
(where the set of users above water changes), then refined by bisection on the
in-bracket sign function.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .model import LN2, Allocation, DomainError, InfeasibleError, PowerModel, Scenario, energy_efficiency
from .waterfill import _prepare, allocate, critical_powers

AT_P0 = "at_P0"
INTERIOR = "interior"
CLAMPED = "clamped_at_PM"


@dataclass(frozen=True)
class CriticalLevelTable:
    order: tuple[int, ...]
    sorted_alpha: tuple[float, ...]
    sorted_gains: tuple[float, ...]
    sorted_bandwidths: tuple[float, ...]
    sorted_min_powers: tuple[float, ...]
    levels: tuple[float, ...]
    ee_at_levels: tuple[float, ...]
    lambda_at_levels: tuple[float, ...]
    beyond_budget: tuple[bool, ...]
    min_total_power: float
    min_total_rate: float


@dataclass(frozen=True)
class FixedOptResult:
    p_opt: float
    allocation: Allocation
    max_ee: float
    bracket: Optional[tuple[float, float]]
    boundary_case: str


def critical_levels(s: Scenario) -> CriticalLevelTable:
    w, g, r, p_min, alpha = _prepare(s)
    p0 = math.fsum(p_min)
    r0 = math.fsum(r)
    order, levels = critical_powers(w, alpha, p0)
    a, ws = alpha[order], w[order]
    pm = s.power_model

    ee, lam = [], []
    for j in range(len(order)):
        # users 0..j-1 (sorted) are above water at levels[j]
        gain_bits = math.fsum(ws[:j] * np.log2(a[j] / a[:j])) if j else 0.0
        if levels[j] == 0 and pm.circuit_power == 0:
            # nothing consumed yet: use the limit of R/(P/zeta) as P -> 0+
            gamma = pm.amp_efficiency / (LN2 * a[0])
        else:
            gamma = energy_efficiency(r0 + gain_bits, float(levels[j]), pm)
        ee.append(gamma)
        lam.append(1.0 / (LN2 * a[j]) - gamma / pm.amp_efficiency)

    return CriticalLevelTable(
        order=tuple(int(k) for k in order),
        sorted_alpha=tuple(a.tolist()),
        sorted_gains=tuple(g[order].tolist()),
        sorted_bandwidths=tuple(ws.tolist()),
        sorted_min_powers=tuple(p_min[order].tolist()),
        levels=tuple(levels.tolist()),
        ee_at_levels=tuple(ee),
        lambda_at_levels=tuple(lam),
        beyond_budget=tuple(bool(x > s.power_budget) for x in levels),
        min_total_power=p0,
        min_total_rate=r0,
    )


def _bracket_constants(n_active: int, table: CriticalLevelTable):
    a = np.asarray(table.sorted_alpha[:n_active])
    ws = np.asarray(table.sorted_bandwidths[:n_active])
    w_tot = math.fsum(ws)
    A = table.min_total_rate - math.fsum(ws * np.log2(a)) - w_tot * math.log2(w_tot)
    B = table.min_total_power - math.fsum(ws * a)
    return A, B, w_tot


def theta(P: float, n_active: int, table: CriticalLevelTable, pm: PowerModel) -> float:
    """Sign function of d(EE)/dP while ``n_active`` users are above water.

    Valid for ``P`` between critical levels ``n_active - 1`` and ``n_active``.
    """
    if not 1 <= n_active <= len(table.levels):
        raise DomainError(f"n_active must lie in [1, {len(table.levels)}], got {n_active}")
    A, B, w_tot = _bracket_constants(n_active, table)
    if P <= B:
        raise DomainError(f"theta needs P > {B:.12g}, got {P:.12g}")
    return (P + pm.amp_efficiency * pm.circuit_power) * w_tot / (P - B) - A * LN2 - w_tot * math.log(P - B)


def _bisect_sign(f, lo: float, hi: float, rtol: float = 1e-14, maxiter: int = 200) -> float:
    """Point where ``f`` turns from positive (at ``lo``) to nonpositive (at ``hi``)."""
    for _ in range(maxiter):
        mid = 0.5 * (lo + hi)
        if f(mid) > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= rtol * max(1.0, abs(hi)):
            break
    return 0.5 * (lo + hi)


def optimize_fixed(s: Scenario) -> FixedOptResult:
    """Total power in ``[P0, P_M]`` maximizing energy efficiency, with its allocation."""
    table = critical_levels(s)
    pm = s.power_model
    p0, p_max = table.min_total_power, s.power_budget
    if p0 > p_max:
        raise InfeasibleError(
            f"minimum total power {p0:.12g} exceeds the power budget {p_max:.12g} (deficit {p0 - p_max:.6g})",
            deficit=p0 - p_max,
        )
    levels, lam = table.levels, table.lambda_at_levels
    K = len(levels)

    p_opt, bracket, case = p0, None, AT_P0
    if lam[0] > 0:
        case = CLAMPED
        p_opt = p_max
        for J in range(1, K + 1):
            lo = levels[J - 1]
            hi = levels[J] if J < K else math.inf
            if lo >= p_max:
                break
            if hi <= lo:
                continue
            if J < K and hi <= p_max and lam[J] > 0:
                continue
            upper = min(hi, p_max)
            f = lambda P, J=J: theta(P, J, table, pm)
            if upper == p_max and f(upper) > 0:
                bracket = (lo, upper)
                break
            p_opt = _bisect_sign(f, lo, upper)
            bracket, case = (lo, upper), INTERIOR
            break

    p_opt = float(p_opt)
    alloc, _ = allocate(s, p_opt)
    return FixedOptResult(p_opt, alloc, alloc.energy_efficiency, bracket, case)


def ee_curve(s: Scenario, P: float) -> float:
    """Energy efficiency with optimal allocation at total power ``P``."""
    alloc, _ = allocate(s, P)
    return alloc.energy_efficiency
