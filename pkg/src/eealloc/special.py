"""Principal-branch Lambert W and the helpers the closed forms are built on."""

import math

from .model import DomainError

_INV_E = math.exp(-1.0)
BRANCH_SLACK = 1e-12


def lambert_w0(x: float) -> float:
    """Principal branch ``W0(x)``, the solution ``y >= -1`` of ``y * exp(y) = x``.

    Halley iteration from a region-dependent starting point. Arguments up to
    ``BRANCH_SLACK`` below ``-1/e`` are clamped to the branch point.
    """
    x = float(x)
    if math.isnan(x):
        raise DomainError("lambert_w0 of NaN")
    if x < -_INV_E - BRANCH_SLACK:
        raise DomainError(f"lambert_w0 undefined below -1/e (got {x!r})")
    if x <= -_INV_E:
        return -1.0
    if x == 0.0:
        return 0.0
    if math.isinf(x):
        return math.inf

    if x < -0.25:
        # branch-point series in p = sqrt(2(ex + 1))
        p = math.sqrt(max(2.0 * (math.e * x + 1.0), 0.0))
        w = -1.0 + p * (1.0 + p * (-1.0 / 3.0 + p * 11.0 / 72.0))
    elif x <= 0.25:
        w = x * (1.0 - x)
    else:
        # Winitzki's approximation, within a few percent everywhere above
        lx = math.log1p(x)
        w = lx * (1.0 - math.log1p(lx) / (2.0 + lx))

    # Halley converges cubically: once a step is below 1e-6 the iterate after
    # it is already exact to rounding, except near the branch point.
    done = 1e-6 if w > -0.5 else 2e-16
    for _ in range(32):
        ew = math.exp(w)
        f = w * ew - x
        wp1 = w + 1.0
        if wp1 == 0.0:
            break
        dw = f / (ew * wp1 - (w + 2.0) * f / (2.0 * wp1))
        w -= dw
        if abs(dw) <= done * (1.0 + abs(w)):
            break
    return max(w, -1.0)


def omega(t: float) -> float:
    """``W0((t - 1)/e) + 1`` for ``t >= 0``.

    Equivalently the root ``z >= 0`` of ``(z - 1) * exp(z) + 1 = t``. Small
    ``t`` is solved on that relation directly, since forming ``(t - 1)/e``
    throws away the digits of ``t``.
    """
    t = float(t)
    if t < 0:
        if t < -BRANCH_SLACK:
            raise DomainError(f"omega needs t >= 0 (got {t!r})")
        t = 0.0
    if t == 0.0:
        return 0.0
    if t >= 1e-2:
        return lambert_w0((t - 1.0) / math.e) + 1.0
    z = math.sqrt(2.0 * t)
    for _ in range(50):
        h = _omega_series(z) - t
        dz = h / (z * math.exp(z))
        z -= dz
        if abs(dz) <= 1e-16 * z:
            break
    return z


def _omega_series(z: float) -> float:
    # (z - 1) e^z + 1 = sum_{n>=2} (n - 1) z^n / n!, valid for z < ~0.3
    total = 0.0
    term = z  # z^n / n! for n = 1
    for n in range(2, 24):
        term *= z / n
        total += (n - 1) * term
    return total


def phi(x: float) -> float:
    """``ln(1 + 1/x) - 1/(1 + x)``, strictly positive and decreasing on x > 0."""
    x = float(x)
    if not x > 0:
        raise DomainError(f"phi needs x > 0 (got {x!r})")
    if x < 10.0:
        return math.log1p(1.0 / x) - 1.0 / (1.0 + x)
    # series in u = 1/x avoids cancellation: sum_{n>=2} (-1)^n (n-1)/n u^n
    u = 1.0 / x
    total = 0.0
    un = u
    for n in range(2, 24):
        un *= u
        total += (-1) ** n * (n - 1) / n * un
    return total
