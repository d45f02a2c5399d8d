"""Domain types and the rate / energy-efficiency evaluators shared by all solvers."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

LN2 = math.log(2.0)


class DomainError(ValueError):
    """An argument lies outside the domain of a formula."""


class InfeasibleError(ValueError):
    """The rate floors cannot be met with the given budgets.

    ``deficit`` is how far short the budget falls (same units as the budget),
    when that is measurable.
    """

    def __init__(self, message: str, deficit: Optional[float] = None, budget: str = "power"):
        super().__init__(message)
        self.deficit = deficit
        self.budget = budget


@dataclass(frozen=True)
class UserChannel:
    gain: float
    min_rate: float = 0.0
    fixed_bandwidth: Optional[float] = None


@dataclass(frozen=True)
class PowerModel:
    amp_efficiency: float = 1.0
    circuit_power: float = 0.0


@dataclass(frozen=True)
class Scenario:
    users: tuple[UserChannel, ...]
    bandwidth_budget: float
    power_budget: float
    power_model: PowerModel = field(default_factory=PowerModel)

    def __post_init__(self):
        object.__setattr__(self, "users", tuple(self.users))

    @property
    def n_users(self) -> int:
        return len(self.users)

    @property
    def gains(self) -> np.ndarray:
        return np.array([u.gain for u in self.users], dtype=float)

    @property
    def min_rates(self) -> np.ndarray:
        return np.array([u.min_rate for u in self.users], dtype=float)

    @property
    def bandwidths(self) -> np.ndarray:
        """Fixed per-user bandwidths (fixed-bandwidth mode only)."""
        if any(u.fixed_bandwidth is None for u in self.users):
            raise DomainError("scenario has users without a fixed bandwidth")
        return np.array([u.fixed_bandwidth for u in self.users], dtype=float)

    @property
    def min_total_rate(self) -> float:
        return math.fsum(u.min_rate for u in self.users)


@dataclass(frozen=True)
class UserAllocation:
    bandwidth: float
    power: float
    rate: float


@dataclass(frozen=True)
class Allocation:
    per_user: tuple[UserAllocation, ...]
    total_bandwidth: float
    total_power: float
    sum_rate: float
    energy_efficiency: float

    @property
    def bandwidths(self) -> np.ndarray:
        return np.array([u.bandwidth for u in self.per_user])

    @property
    def powers(self) -> np.ndarray:
        return np.array([u.power for u in self.per_user])

    @property
    def rates(self) -> np.ndarray:
        return np.array([u.rate for u in self.per_user])


def rate(w: float, p: float, g: float) -> float:
    """Achievable rate ``w * log2(1 + p*g/w)`` of one channel.

    ``rate(0, 0, g)`` is 0 by convention (a user given no resources).
    """
    if w < 0 or p < 0 or g <= 0:
        raise DomainError(f"rate needs w >= 0, p >= 0, g > 0 (got w={w}, p={p}, g={g})")
    if w == 0:
        if p == 0:
            return 0.0
        raise DomainError("rate undefined for zero bandwidth with positive power")
    return w * math.log1p(p * g / w) / LN2


def energy_efficiency(R: float, P: float, pm: PowerModel) -> float:
    """Sum rate per unit of consumed power, ``R / (P/zeta + P_C)``."""
    if P < 0:
        raise DomainError(f"transmit power must be nonnegative, got {P}")
    consumed = P / pm.amp_efficiency + pm.circuit_power
    if consumed <= 0:
        raise ZeroDivisionError("zero consumed power (P = 0 and P_C = 0)")
    return R / consumed


def build_allocation(
    bandwidths: Sequence[float],
    powers: Sequence[float],
    gains: Sequence[float],
    pm: PowerModel,
) -> Allocation:
    """Assemble an Allocation, recomputing every rate from (w, p, g).

    The energy efficiency is NaN when nothing is consumed (no transmit power
    and no circuit power).
    """
    users = tuple(
        UserAllocation(float(w), float(p), rate(float(w), float(p), float(g)))
        for w, p, g in zip(bandwidths, powers, gains)
    )
    W = math.fsum(u.bandwidth for u in users)
    P = math.fsum(u.power for u in users)
    R = math.fsum(u.rate for u in users)
    try:
        ee = energy_efficiency(R, P, pm)
    except ZeroDivisionError:
        ee = math.nan
    return Allocation(users, W, P, R, ee)


def _finite(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x)


def validate(s: Scenario, mode: str = "joint") -> list[str]:
    """Return every invariant violation found in ``s``; empty means valid.

    ``mode`` is ``"fixed"`` (per-user bandwidths given) or ``"joint"``
    (bandwidths chosen by the solver, gains must be distinct).
    """
    if mode not in ("fixed", "joint"):
        raise ValueError(f"unknown mode {mode!r}")
    problems = []
    if len(s.users) < 1:
        problems.append("scenario has no users")
    for k, u in enumerate(s.users):
        if not _finite(u.gain) or u.gain <= 0:
            problems.append(f"user {k}: gain must be positive and finite (got {u.gain!r})")
        if not _finite(u.min_rate) or u.min_rate < 0:
            problems.append(f"user {k}: min_rate must be nonnegative and finite (got {u.min_rate!r})")
        if u.fixed_bandwidth is not None and (not _finite(u.fixed_bandwidth) or u.fixed_bandwidth <= 0):
            problems.append(f"user {k}: bandwidth must be positive (got {u.fixed_bandwidth!r})")
    if not _finite(s.bandwidth_budget) or s.bandwidth_budget <= 0:
        problems.append(f"bandwidth_budget must be positive (got {s.bandwidth_budget!r})")
    if not _finite(s.power_budget) or s.power_budget <= 0:
        problems.append(f"power_budget must be positive (got {s.power_budget!r})")
    pm = s.power_model
    if not _finite(pm.amp_efficiency) or not 0 < pm.amp_efficiency <= 1:
        problems.append(f"amp_efficiency must lie in (0, 1] (got {pm.amp_efficiency!r})")
    if not _finite(pm.circuit_power) or pm.circuit_power < 0:
        problems.append(f"circuit_power must be nonnegative (got {pm.circuit_power!r})")

    if mode == "fixed":
        missing = [k for k, u in enumerate(s.users) if u.fixed_bandwidth is None]
        if missing:
            problems.append(f"fixed mode: users {missing} have no bandwidth")
        elif _finite(s.bandwidth_budget):
            total = math.fsum(u.fixed_bandwidth for u in s.users)
            if total > s.bandwidth_budget * (1 + 1e-12):
                problems.append(
                    f"fixed mode: bandwidths sum to {total:.12g} > bandwidth_budget {s.bandwidth_budget:.12g}"
                )
    else:
        gains = [u.gain for u in s.users]
        if len(set(gains)) != len(gains):
            problems.append("gains not distinct")
    return problems
