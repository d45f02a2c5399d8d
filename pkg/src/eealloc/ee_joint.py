"""Energy-efficiency-optimal total power with joint bandwidth assignment.

The full bandwidth budget is always used. Along the power axis the sign of
d(EE)/dP is tracked through ``lambda_P``, whose zero is found by bisection.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Optional

from .ee_fixed import AT_P0, CLAMPED, INTERIOR, _bisect_sign
from .joint import (
    JointSolution,
    _leader_state,
    _roles,
    joint_allocate,
    min_total_power,
)
from .model import LN2, DomainError, InfeasibleError, Scenario

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class JointOptResult:
    p_opt: float
    solution: JointSolution
    max_ee: float
    lambda_trace: Optional[object]  # SweepCurve when requested
    boundary_case: str
    used_fallback: bool = False


def _dpsi_dP(s: Scenario, W: float, P: float, psi: float) -> float:
    # implicit differentiation of the psi equation: -(dF/dP) / (dF/dpsi)
    st = _leader_state(s, W, P, psi)
    g1 = s.users[_roles(s)[0]].gain
    if st.w1 <= 0:
        raise DomainError("leader has no bandwidth; d(psi)/dP undefined")
    rho = st.p1 * g1 / st.w1
    d_dP = -(g1 / st.w1) / (1.0 + rho)
    if not abs(st.slope) > 1e-14:
        raise DomainError(f"degenerate psi equation slope {st.slope!r}")
    return -d_dP / st.slope


def dpsi_dP(s: Scenario, W: float, P: float) -> float:
    """Sensitivity of the optimal ``psi`` to the total power at fixed ``W``."""
    sol = joint_allocate(s, W, P)
    return _dpsi_dP(s, W, P, sol.psi)


def _lambda_from(s: Scenario, W: float, P: float, sol: JointSolution) -> float:
    lead, followers, _ = _roles(s)
    psi = sol.psi
    om = sol.omegas
    g1 = s.users[lead].gain
    pm = s.power_model

    # d(omega_i)/d(psi) = g_i / (psi g_i - 1 + exp(omega_i)) = g_i / (omega_i exp(omega_i))
    f1_follow = math.fsum(
        s.users[i].min_rate / om[i] ** 2 * s.users[i].gain / (om[i] * math.exp(om[i])) for i in followers
    )
    lead_bits = W / LN2 - math.fsum(s.users[i].min_rate / om[i] for i in followers)
    F1 = om[lead] * f1_follow + lead_bits * g1 / (om[lead] * math.exp(om[lead]))
    F2 = math.fsum(s.users[i].min_rate for i in followers) + lead_bits * om[lead]
    return (P + pm.amp_efficiency * pm.circuit_power) * F1 * _dpsi_dP(s, W, P, psi) - F2


def lambda_P(s: Scenario, W: float, P: float) -> float:
    """Sign indicator of d(EE)/dP at ``(W, P)`` under joint allocation."""
    return _lambda_from(s, W, P, joint_allocate(s, W, P))


def ee_joint_curve(s: Scenario, W: float, P: float) -> float:
    """Energy efficiency of the joint optimum at totals ``(W, P)``."""
    return joint_allocate(s, W, P).allocation.energy_efficiency


def _golden_max(f, lo: float, hi: float, rtol: float = 1e-10, maxiter: int = 300) -> float:
    inv_phi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - inv_phi * (b - a)
    d = a + inv_phi * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(maxiter):
        if b - a <= rtol * max(1.0, abs(b)):
            break
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - inv_phi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv_phi * (b - a)
            fd = f(d)
    x = 0.5 * (a + b)
    # the search interior never reaches the ends; compare them explicitly
    return max((lo, hi, x), key=f)


def optimize_joint(s: Scenario, trace_samples: int = 0) -> JointOptResult:
    """Total power maximizing energy efficiency with bandwidth budget fully used."""
    W, p_max = s.bandwidth_budget, s.power_budget
    p0 = min_total_power(s, W)
    if p0 > p_max:
        raise InfeasibleError(
            f"minimum rate requirements cannot be met: they need power {p0:.12g} "
            f"> budget {p_max:.12g} (deficit {p0 - p_max:.6g})",
            deficit=p0 - p_max,
        )
    # with no floors the EE vanishes at P = 0; probe just above it
    p_lo = p0 if p0 > 0 else 1e-9 * p_max

    def lam(P):
        value = lambda_P(s, W, P)
        if not math.isfinite(value):
            raise DomainError(f"non-finite lambda_P at P={P!r}")
        return value

    used_fallback = False
    try:
        if p_max <= p_lo or lam(p_lo) <= 0:
            p_opt, case = p0, AT_P0
        elif lam(p_max) > 0:
            p_opt, case = p_max, CLAMPED
        else:
            p_opt, case = _bisect_sign(lam, p_lo, p_max), INTERIOR
    except InfeasibleError:
        raise
    except (ArithmeticError, ValueError) as exc:
        log.warning("lambda_P bisection failed (%s); falling back to golden-section on EE", exc)
        used_fallback = True
        p_opt = _golden_max(lambda P: ee_joint_curve(s, W, P), p0, p_max)
        case = AT_P0 if p_opt == p0 else CLAMPED if p_opt == p_max else INTERIOR

    sol = joint_allocate(s, W, p_opt)
    trace = None
    if trace_samples:
        from .oracle import sweep

        trace = sweep(s, "joint", trace_samples)
    return JointOptResult(p_opt, sol, sol.allocation.energy_efficiency, trace, case, used_fallback)
