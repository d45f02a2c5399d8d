"""Sum-rate-optimal power split across fixed-bandwidth channels (water-filling
above per-user minimum-power floors)."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import LN2, Allocation, DomainError, InfeasibleError, Scenario, build_allocation

# largest exponent (in nats) accepted before 2**(r/w) overflows a double
_MAX_EXPONENT = 700.0


@dataclass(frozen=True)
class WaterfillDiagnostics:
    min_powers: tuple[float, ...]
    base_levels: tuple[float, ...]
    water_level: float
    binding_set: frozenset[int]
    min_total_power: float
    min_total_rate: float
    total_power: float


def min_power(w: float, g: float, r_min: float) -> float:
    """Smallest power that carries ``r_min`` over bandwidth ``w`` at gain ``g``."""
    if w <= 0 or g <= 0 or r_min < 0:
        raise DomainError(f"min_power needs w > 0, g > 0, r_min >= 0 (got {w}, {g}, {r_min})")
    exponent = r_min / w * LN2
    if exponent > _MAX_EXPONENT:
        raise InfeasibleError(
            f"rate floor {r_min:.6g} over bandwidth {w:.6g} needs more power than a double can hold",
            deficit=math.inf,
        )
    return w / g * math.expm1(exponent)


def _prepare(s: Scenario):
    w = s.bandwidths
    g = s.gains
    r = s.min_rates
    p_min = np.array([min_power(wk, gk, rk) for wk, gk, rk in zip(w, g, r)])
    alpha = 1.0 / g + p_min / w
    return w, g, r, p_min, alpha


def critical_powers(w: np.ndarray, alpha: np.ndarray, p0: float):
    """Sort users by base level and return ``(order, levels)``.

    ``levels[j]`` is the total power at which the water reaches the
    ``(j+1)``-th smallest base level.
    """
    order = np.argsort(alpha, kind="stable")
    a = alpha[order]
    ws = w[order]
    cw = np.concatenate(([0.0], np.cumsum(ws)[:-1]))
    cwa = np.concatenate(([0.0], np.cumsum(ws * a)[:-1]))
    levels = p0 + a * cw - cwa
    # roundoff can make consecutive levels dip; they are nondecreasing exactly
    levels = np.maximum.accumulate(np.maximum(levels, p0))
    levels[0] = p0
    return order, levels


def allocate(s: Scenario, P: float) -> tuple[Allocation, WaterfillDiagnostics]:
    """Optimal power allocation for total transmit power ``P``.

    Raises InfeasibleError when ``P`` is below the total minimum power.
    """
    w, g, r, p_min, alpha = _prepare(s)
    p0 = math.fsum(p_min)
    if P < p0 - 1e-10 * max(1.0, p0):
        raise InfeasibleError(
            f"total power {P:.12g} is below the minimum {p0:.12g} (deficit {p0 - P:.6g})",
            deficit=p0 - P,
        )
    order, levels = critical_powers(w, alpha, p0)
    # number of users above water: the last level not exceeding P
    n_active = int(np.searchsorted(levels, P, side="right"))
    n_active = max(n_active, 1)
    active = order[:n_active]
    wa = w[active]
    level = (P - p0 + math.fsum(wa * alpha[active])) / math.fsum(wa)

    p = p_min + w * np.maximum(level - alpha, 0.0)
    p[order[n_active:]] = p_min[order[n_active:]]
    alloc = build_allocation(w, p, g, s.power_model)
    diag = WaterfillDiagnostics(
        min_powers=tuple(p_min.tolist()),
        base_levels=tuple(alpha.tolist()),
        water_level=level,
        binding_set=frozenset(int(k) for k in order[n_active:]),
        min_total_power=p0,
        min_total_rate=float(math.fsum(r)),
        total_power=float(P),
    )
    return alloc, diag


def water_level_from_set(s: Scenario, diag: WaterfillDiagnostics) -> float:
    """Water level implied by the binding set and the requested total power."""
    w = s.bandwidths
    alpha = np.asarray(diag.base_levels)
    free = [k for k in range(len(w)) if k not in diag.binding_set]
    return (diag.total_power - diag.min_total_power + math.fsum(w[free] * alpha[free])) / math.fsum(w[free])


def sum_rate_closed_form(s: Scenario, diag: WaterfillDiagnostics) -> float:
    """Maximum sum rate from the binding set and water level (cross-check only)."""
    w, g, r = s.bandwidths, s.gains, s.min_rates
    total = []
    for k in range(len(w)):
        if k in diag.binding_set:
            total.append(r[k])
        else:
            total.append(w[k] * math.log2(g[k] * diag.water_level))
    return math.fsum(total)


def kkt_residual(s: Scenario, alloc: Allocation, diag: WaterfillDiagnostics) -> float:
    """Largest violation of the optimality conditions for ``alloc``.

    Covers the power budget (relative), stationarity of the users above water,
    dual feasibility of the binding users and the minimum-power floors.
    """
    w, g = s.bandwidths, s.gains
    p = alloc.powers
    p_min = np.asarray(diag.min_powers)
    mu = 1.0 / diag.water_level
    marginal = w * g / (w + p * g)

    gaps = [abs(math.fsum(p) - diag.total_power) / max(1.0, diag.total_power)]
    for k in range(len(w)):
        if k in diag.binding_set:
            gaps.append(max(marginal[k] - mu, 0.0))
        else:
            gaps.append(abs(mu - marginal[k]))
    gaps.extend(np.maximum(p_min - p, 0.0).tolist())
    return float(max(gaps))


def d_sum_rate_dP(s: Scenario, diag: WaterfillDiagnostics, P: float) -> float:
    """Derivative of the maximum sum rate with respect to total power at ``P``."""
    w = s.bandwidths
    alpha = np.asarray(diag.base_levels)
    free = [k for k in range(len(w)) if k not in diag.binding_set]
    if not free:
        # right derivative at the first critical level
        return 1.0 / (LN2 * float(alpha.min()))
    wf = math.fsum(w[free])
    return wf / (LN2 * (P - diag.min_total_power + math.fsum(w[free] * alpha[free])))
