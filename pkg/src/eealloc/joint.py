"""Joint bandwidth and power assignment maximizing the sum rate for given totals.

At the optimum every user except the best-gain one (the leader) sits exactly
on its rate floor, and the followers' shares are closed-form functions of a
single scalar ``psi``. The leader takes whatever bandwidth and power remain;
``psi`` is pinned by requiring the leader's own optimality condition.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple

import numpy as np
from scipy.optimize import brentq

from .model import LN2, Allocation, DomainError, InfeasibleError, Scenario, build_allocation
from .special import omega

_PSI_FLOOR = 1e-30
_LOG_PSI_FLOOR = math.log(_PSI_FLOOR)


@dataclass(frozen=True)
class PsiWindow:
    psi_min: float
    psi_max: float

    @property
    def feasible(self) -> bool:
        # at P = P0 both ends are the same point, found by separate root solves
        return self.psi_min <= self.psi_max * (1 + 1e-10)


@dataclass(frozen=True)
class JointSolution:
    psi: float
    allocation: Allocation
    leader_index: int
    max_sum_rate: float
    omegas: tuple[float, ...]


def follower_alloc(psi: float, g: float, r_min: float) -> tuple[float, float]:
    """Bandwidth and power that carry exactly ``r_min`` at coefficient ``psi``."""
    if r_min == 0:
        return 0.0, 0.0
    if psi <= 0 or g <= 0 or r_min < 0:
        raise DomainError(f"follower_alloc needs psi > 0, g > 0, r_min >= 0 (got {psi}, {g}, {r_min})")
    om = omega(psi * g)
    if om == 0.0:
        raise DomainError(f"psi={psi!r} too small: follower bandwidth is unbounded")
    w = r_min * LN2 / om
    p = r_min * LN2 / g * math.expm1(om) / om
    return w, p


def follower_power_rational(psi: float, g: float, r_min: float) -> float:
    """Follower power via the ``(psi*g - 1 - W0) / (W0 (W0 + 1))`` form.

    Ill-conditioned when ``psi*g`` is near 1; kept as an independent check on
    the exponential form used by :func:`follower_alloc`.
    """
    om = omega(psi * g)
    w0 = om - 1.0
    return r_min * LN2 / g * (psi * g - 1.0 - w0) / (w0 * om)


def psi_from_leader(w1: float, p1: float, g1: float) -> float:
    """Coefficient implied by the leader's share ``(w1, p1)``."""
    if w1 <= 0:
        raise DomainError(f"psi_from_leader needs w1 > 0 (got {w1})")
    x = p1 * g1 / w1
    if x < 1e-3:
        # (1+x) ln(1+x) - x = sum_{n>=2} (-1)^n x^n / (n (n-1))
        total, xn = 0.0, x
        for n in range(2, 12):
            xn *= x
            total += (-1) ** n * xn / (n * (n - 1))
        return total / g1
    return ((1.0 + x) * math.log1p(x) - x) / g1


def _shares(s: Scenario, psi: float, users) -> tuple[float, float]:
    ws, ps = [], []
    for k in users:
        u = s.users[k]
        w, p = follower_alloc(psi, u.gain, u.min_rate)
        ws.append(w)
        ps.append(p)
    return math.fsum(ws), math.fsum(ps)


@lru_cache(maxsize=512)
def _roles(s: Scenario) -> tuple[int, tuple[int, ...], tuple[int, ...]]:
    """(leader, followers with a positive floor, all users with a positive floor)."""
    lead = int(np.argmax(s.gains))
    floored = tuple(k for k, u in enumerate(s.users) if u.min_rate > 0)
    return lead, tuple(k for k in floored if k != lead), floored


def leader_of(s: Scenario) -> int:
    """Index of the best-gain user, who takes all excess resources."""
    return _roles(s)[0]


def _floored(s: Scenario) -> tuple[int, ...]:
    return _roles(s)[2]


def _solve_log_psi(f, increasing: bool) -> float:
    """Root of a monotone ``f(psi)`` searched on ``log(psi)``; 0 if none above the floor."""
    lo = _LOG_PSI_FLOOR
    f_lo = f(_PSI_FLOOR)
    if (f_lo >= 0) == increasing:
        return _PSI_FLOOR if f_lo == 0 else 0.0
    hi = 0.0
    while (f(math.exp(hi)) < 0) == increasing:
        hi += math.log(4.0)
        if hi > 700:
            return math.inf
    return math.exp(brentq(lambda u: f(math.exp(u)), lo, hi, xtol=1e-14, rtol=1e-15, maxiter=200))


@lru_cache(maxsize=512)
def _psi_min(s: Scenario, W: float) -> float:
    floored = _floored(s)
    if not floored:
        return 0.0
    return _solve_log_psi(lambda psi: _shares(s, psi, floored)[0] - W, increasing=False)


def _psi_max(s: Scenario, W: float, P: float) -> float:
    floored = _floored(s)
    if not floored:
        return psi_from_leader(W, P, s.users[leader_of(s)].gain)
    return _solve_log_psi(lambda psi: _shares(s, psi, floored)[1] - P, increasing=True)


def psi_window(s: Scenario, W: float, P: float) -> PsiWindow:
    """Range of ``psi`` over which every rate floor fits within ``(W, P)``.

    The lower end saturates the bandwidth with everyone (leader included) on
    its floor; the upper end does the same for power.
    """
    if W <= 0 or P < 0:
        raise DomainError(f"psi_window needs W > 0 and P >= 0 (got {W}, {P})")
    return PsiWindow(_psi_min(s, float(W)), _psi_max(s, float(W), float(P)))


def min_total_power(s: Scenario, W: float) -> float:
    """Least total power meeting all floors when the total bandwidth is ``W``."""
    psi = _psi_min(s, float(W))
    floored = _floored(s)
    if not floored:
        return 0.0
    if psi == 0.0:
        return math.fsum(s.users[k].min_rate * LN2 / s.users[k].gain for k in floored)
    return _shares(s, psi, floored)[1]


def _followers(s: Scenario) -> tuple[int, ...]:
    return _roles(s)[1]


def psi_equation(s: Scenario, W: float, P: float, psi: float) -> float:
    """Leader optimality residual: increasing in ``psi``, zero at the optimum."""
    g1 = s.users[leader_of(s)].gain
    sw, sp = _shares(s, psi, _followers(s)) if psi > 0 else (0.0, 0.0)
    w1, p1 = W - sw, max(P - sp, 0.0)
    if w1 <= 0:
        return -math.inf
    return omega(psi * g1) - math.log1p(p1 * g1 / w1)


def solve_psi(s: Scenario, W: float, P: float, win: PsiWindow) -> float:
    """Zero of the leader optimality residual inside the feasible window."""
    if not win.feasible:
        raise InfeasibleError(
            f"rate floors cannot be met with W={W:.12g}, P={P:.12g} (psi_min > psi_max)"
        )
    lo, hi = win.psi_min, win.psi_max
    if hi - lo <= 1e-10 * max(hi, 1e-300):
        return lo
    f_hi = psi_equation(s, W, P, hi)
    if f_hi <= 0:
        return hi
    if psi_equation(s, W, P, lo) >= 0:
        return lo
    # -inf where the leader is left without bandwidth; brentq needs finite values
    f = lambda x: max(psi_equation(s, W, P, x), -1e6)
    return brentq(f, lo, hi, xtol=1e-300, rtol=1e-15, maxiter=300)


def joint_allocate(s: Scenario, W: float, P: float) -> JointSolution:
    """Sum-rate-optimal bandwidth and power for totals ``W`` and ``P``."""
    W, P = float(W), float(P)
    p0 = min_total_power(s, W)
    if P < p0 * (1 - 1e-12):
        raise InfeasibleError(
            f"rate floors need total power {p0:.12g} at bandwidth {W:.12g}; "
            f"power {P:.12g} falls short by {p0 - P:.6g}",
            deficit=p0 - P,
        )
    return _assemble(s, W, P, _root_psi(s, W, P))


class _LeaderState(NamedTuple):
    residual: float  # psi equation value
    slope: float  # d(residual)/d(psi)
    w1: float
    p1: float
    dw_followers: float  # d(sum of follower bandwidths)/d(psi)


def _leader_state(s: Scenario, W: float, P: float, psi: float) -> _LeaderState:
    lead, followers, _ = _roles(s)
    g1 = s.users[lead].gain
    sw, sp, dsw = [], [], []
    for k in followers:
        u = s.users[k]
        om = omega(psi * u.gain)
        e = math.exp(om)
        w = u.min_rate * LN2 / om
        sw.append(w)
        sp.append(u.min_rate * LN2 / u.gain * math.expm1(om) / om)
        # dw/dpsi = -w * (d omega/d psi) / omega, with d omega/d psi = g / (omega e^omega)
        dsw.append(-w * u.gain / (om * om * e))
    w1 = W - math.fsum(sw)
    p1 = max(P - math.fsum(sp), 0.0)
    d_sw = math.fsum(dsw)
    if w1 <= 0:
        return _LeaderState(-math.inf, math.inf, w1, p1, d_sw)
    om1 = omega(psi * g1)
    rho = p1 * g1 / w1
    d_om1 = g1 / (om1 * math.exp(om1)) if om1 > 0 else math.inf
    # follower power slope is -psi times the bandwidth slope
    d_rho = g1 * d_sw * (psi * w1 + p1) / (w1 * w1)
    return _LeaderState(om1 - math.log1p(rho), d_om1 - d_rho / (1.0 + rho), w1, p1, d_sw)


@lru_cache(maxsize=512)
def _lower_end(s: Scenario, W: float) -> tuple[float, float, float, float]:
    """psi_min with the followers' total bandwidth and power and the leader's omega there."""
    lead, followers, _ = _roles(s)
    lo = _psi_min(s, W)
    if lo <= 0:
        return lo, 0.0, 0.0, 0.0
    sw, sp = _shares(s, lo, followers)
    return lo, sw, sp, omega(lo * s.users[lead].gain)


def _root_psi(s: Scenario, W: float, P: float, start: float | None = None) -> float:
    lead, followers, floored = _roles(s)
    g1 = s.users[lead].gain
    if not floored:
        return psi_from_leader(W, P, g1)
    lo, sw, sp, om_lo = _lower_end(s, W)
    w1, p1 = W - sw, max(P - sp, 0.0)
    if lo > 0 and w1 > 0:
        if om_lo - math.log1p(p1 * g1 / w1) >= 0:
            return lo
        # The leader's share only shrinks as psi grows, so the psi implied by
        # its share at the lower end bounds the root from above.
        hi = psi_from_leader(w1, p1, g1) * (1 + 1e-12)
    else:
        hi = max(2.0 * lo, 1.0)
        while psi_equation(s, W, P, hi) < 0:
            lo, hi = hi, 2.0 * hi
    return _newton_bracketed(lambda x: _leader_state(s, W, P, x), lo, hi, start)


def _newton_bracketed(state, lo: float, hi: float, start: float | None = None, maxiter: int = 300) -> float:
    """Root of an increasing function, negative at ``lo`` and positive at ``hi``.

    Newton steps, with a bisection (geometric on wide brackets) whenever a step
    leaves the bracket or fails to halve it.
    """
    x = start if start is not None and lo < start < hi else _midpoint(lo, hi)
    width = hi - lo
    for _ in range(maxiter):
        st = state(x)
        f = st.residual
        if f == 0.0:
            return x
        if f < 0:
            lo = x
        else:
            hi = x
        x_new = x - f / st.slope if math.isfinite(f) and st.slope > 0 else math.nan
        if not lo < x_new < hi or abs(x_new - x) > 0.5 * width:
            x_new = _midpoint(lo, hi)
        width = abs(x_new - x)
        if width <= 4e-16 * abs(x_new) or hi - lo <= 4e-16 * hi:
            return x_new
        x = x_new
    return x


def _midpoint(lo: float, hi: float) -> float:
    if lo > 0 and hi > 8.0 * lo:
        return math.sqrt(lo * hi)
    return 0.5 * (lo + hi)


def _assemble(s: Scenario, W: float, P: float, psi: float) -> JointSolution:
    lead = leader_of(s)
    K = s.n_users
    w = np.zeros(K)
    p = np.zeros(K)
    for k in _followers(s):
        w[k], p[k] = follower_alloc(psi, s.users[k].gain, s.users[k].min_rate)
    w[lead] = max(W - math.fsum(w), 0.0)
    p[lead] = max(P - math.fsum(p), 0.0)
    if w[lead] == 0.0:
        p[lead] = 0.0
    alloc = build_allocation(w, p, s.gains, s.power_model)
    omegas = tuple(omega(psi * u.gain) for u in s.users)
    followers_rate = math.fsum(s.users[k].min_rate for k in _followers(s))
    r_hat = followers_rate + w[lead] * omegas[lead] / LN2
    return JointSolution(psi, alloc, lead, r_hat, omegas)


def joint_kkt_residual(s: Scenario, alloc: Allocation) -> float:
    """Largest optimality violation of a joint allocation.

    Every user holding bandwidth must imply the same ``psi`` from its own
    ``(w, p)``; non-leaders must sit on their rate floors, and the leader
    must not be below its own.
    """
    lead = leader_of(s)
    w, p, r = alloc.bandwidths, alloc.powers, alloc.rates
    gaps = []
    psis = {k: psi_from_leader(w[k], p[k], s.users[k].gain) for k in range(s.n_users) if w[k] > 0}
    ref = psis.get(lead)
    if ref is not None and ref > 0:
        gaps.extend(abs(v - ref) / ref for v in psis.values())
    for k, u in enumerate(s.users):
        scale = max(u.min_rate, 1e-300)
        if k == lead:
            gaps.append(max(u.min_rate - r[k], 0.0) / scale if u.min_rate > 0 else 0.0)
        elif u.min_rate > 0:
            gaps.append(abs(r[k] - u.min_rate) / scale)
        elif w[k] > 0 or p[k] > 0:
            # a follower with no floor should get nothing
            gaps.append(max(w[k], p[k]))
    return float(max(gaps)) if gaps else 0.0
