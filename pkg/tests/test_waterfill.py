import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import fixed_scenario
from eealloc.model import InfeasibleError, rate
from eealloc.oracle import feasible_seeds, grid_power_oracle, random_scenario
from eealloc.waterfill import (
    allocate,
    critical_powers,
    d_sum_rate_dP,
    kkt_residual,
    min_power,
    sum_rate_closed_form,
    water_level_from_set,
)

LN2 = math.log(2.0)


@pytest.mark.parametrize("w,g,r,expected", [(1, 1, 1, 1.0), (2, 1, 2, 2.0), (1, 4, 0, 0.0)])
def test_min_power_examples(w, g, r, expected):
    assert min_power(w, g, r) == pytest.approx(expected, rel=1e-15)


@given(st.floats(0.5, 20), st.floats(0.01, 10), st.floats(0, 50))
def test_min_power_meets_floor(w, g, r):
    p = min_power(w, g, r)
    assert rate(w, p, g) == pytest.approx(r, rel=1e-10, abs=1e-300)


def test_min_power_overflow_guard():
    with pytest.raises(InfeasibleError):
        min_power(1.0, 1.0, 2000.0)


def test_symmetric_split():
    alloc, diag = allocate(fixed_scenario([1, 1], [0, 0], [1, 1]), 4.0)
    assert alloc.powers.tolist() == pytest.approx([2.0, 2.0], rel=1e-15)
    assert diag.binding_set == frozenset()


def _brute_two_user(s, P, step=1e-4):
    # independent reference: scan the first user's power
    p1 = np.arange(0.0, P + step / 2, step)
    w, g = s.bandwidths, s.gains
    total = w[0] * np.log2(1 + p1 * g[0] / w[0]) + w[1] * np.log2(1 + (P - p1) * g[1] / w[1])
    return p1[int(np.argmax(total))], float(total.max())


def test_low_power_single_user_above_water(two_user_unequal):
    P = 0.4
    alloc, diag = allocate(two_user_unequal, P)
    p1_ref, r_ref = _brute_two_user(two_user_unequal, P)
    assert p1_ref == pytest.approx(0.4, abs=1e-4)
    assert alloc.powers.tolist() == pytest.approx([0.4, 0.0], abs=1e-15)
    assert diag.water_level == pytest.approx(0.9, rel=1e-14)
    assert diag.binding_set == frozenset({1})
    assert alloc.sum_rate >= r_ref - 1e-12


def test_both_users_above_water(two_user_unequal):
    P = 1.5
    alloc, diag = allocate(two_user_unequal, P)
    p1_ref, r_ref = _brute_two_user(two_user_unequal, P)
    assert p1_ref == pytest.approx(1.0, abs=1e-4)
    assert alloc.powers.tolist() == pytest.approx([1.0, 0.5], rel=1e-14)
    assert diag.water_level == pytest.approx(1.5, rel=1e-14)
    assert diag.binding_set == frozenset()
    assert alloc.sum_rate >= r_ref - 1e-12


def test_below_minimum_power_reports_deficit():
    s = fixed_scenario([1, 1], [1, 1], [1, 1])
    with pytest.raises(InfeasibleError) as info:
        allocate(s, 1.5)
    assert info.value.deficit == pytest.approx(0.5)


def test_kkt_certificate_and_perturbation(two_user_unequal):
    alloc, diag = allocate(two_user_unequal, 1.5)
    assert kkt_residual(two_user_unequal, alloc, diag) <= 1e-12
    from eealloc.model import build_allocation

    bumped = build_allocation(
        two_user_unequal.bandwidths, alloc.powers + np.array([0.1, -0.1]), two_user_unequal.gains,
        two_user_unequal.power_model,
    )
    assert kkt_residual(two_user_unequal, bumped, diag) >= 0.01


def test_kkt_single_user(single_user):
    alloc, diag = allocate(single_user, 3.0)
    assert alloc.powers.tolist() == [3.0]
    assert kkt_residual(single_user, alloc, diag) == 0.0


def test_derivative_examples(two_user_unequal, single_user):
    _, diag = allocate(two_user_unequal, 1.5)
    d = d_sum_rate_dP(two_user_unequal, diag, 1.5)
    assert d == pytest.approx(2.0 / 3.0 / LN2, rel=1e-14)
    h = 1e-5
    fd = (allocate(two_user_unequal, 1.5 + h)[0].sum_rate - allocate(two_user_unequal, 1.5 - h)[0].sum_rate) / (2 * h)
    assert d == pytest.approx(fd, rel=1e-7)

    _, diag1 = allocate(single_user, 1.0)
    assert d_sum_rate_dP(single_user, diag1, 1.0) == pytest.approx(1.0 / (2.0 * LN2), rel=1e-14)

    _, diag_lo = allocate(two_user_unequal, 0.6)
    assert d_sum_rate_dP(two_user_unequal, diag_lo, 0.6) > d


def test_derivative_everyone_binding():
    s = fixed_scenario([2.0, 1.0], [1.0, 1.0], [1.0, 1.0])
    alloc, diag = allocate(s, 1.5)  # P0 = 0.5 + 1 = 1.5
    alpha = min(diag.base_levels)
    assert d_sum_rate_dP(s, diag, 1.5) == pytest.approx(1.0 / (LN2 * alpha))


def test_critical_levels_match_binding_set_changes(two_user_unequal):
    w, g = two_user_unequal.bandwidths, two_user_unequal.gains
    alpha = 1.0 / g
    order, levels = critical_powers(w, alpha, 0.0)
    assert levels.tolist() == pytest.approx([0.0, 0.5])
    grid = np.linspace(0.01, 2.0, 400)
    sizes = [len(allocate(two_user_unequal, P)[1].binding_set) for P in grid]
    change = grid[np.flatnonzero(np.diff(sizes))[0] + 1]
    assert change == pytest.approx(0.5, abs=grid[1] - grid[0])


def _seeded_fixed(n):
    out = []
    for K in (1, 2, 3):
        out += [random_scenario(seed, K, "fixed") for seed in feasible_seeds(K, "fixed", n)]
    return out


@pytest.mark.parametrize("s", _seeded_fixed(4))
def test_diagnostics_invariants(s):
    for frac in (0.0, 0.3, 1.0):
        P = s.power_budget * frac + (1 - frac) * math.fsum(min_power(u.fixed_bandwidth, u.gain, u.min_rate) for u in s.users)
        alloc, diag = allocate(s, P)
        assert kkt_residual(s, alloc, diag) <= 1e-9
        assert alloc.total_power == pytest.approx(P, rel=1e-10)
        assert water_level_from_set(s, diag) == pytest.approx(diag.water_level, rel=1e-12)
        assert sum_rate_closed_form(s, diag) == pytest.approx(alloc.sum_rate, rel=1e-10)
        assert diag.min_total_power == pytest.approx(math.fsum(diag.min_powers), rel=1e-12)
        for k, a in enumerate(diag.base_levels):
            if k in diag.binding_set:
                assert diag.water_level <= a + 1e-10
            else:
                assert diag.water_level >= a - 1e-10
        assert np.all(alloc.rates >= s.min_rates - 1e-9 * np.maximum(1, s.min_rates))


@pytest.mark.parametrize("s", _seeded_fixed(3))
def test_oracle_and_monotone_powers(s):
    P0 = math.fsum(min_power(u.fixed_bandwidth, u.gain, u.min_rate) for u in s.users)
    grid = np.linspace(P0, s.power_budget, 60)
    prev = None
    for P in grid:
        alloc, _ = allocate(s, P)
        if prev is not None:
            assert np.all(alloc.powers >= prev - 1e-12)
        prev = alloc.powers
    P = 0.5 * (P0 + s.power_budget)
    alloc, _ = allocate(s, P)
    best = grid_power_oracle(s, P, 200)
    assert alloc.sum_rate >= best.rate - 1e-3 * alloc.sum_rate
    assert best.rate <= alloc.sum_rate + 1e-6


@settings(max_examples=60, deadline=None)
@given(
    st.lists(st.tuples(st.floats(0.05, 10), st.floats(0, 5), st.floats(0.1, 5)), min_size=1, max_size=6),
    st.floats(0.0, 50.0),
)
def test_kkt_holds_on_arbitrary_instances(users, extra):
    g, r, w = zip(*users)
    s = fixed_scenario(g, r, w)
    P0 = math.fsum(min_power(wk, gk, rk) for wk, gk, rk in zip(w, g, r))
    alloc, diag = allocate(s, P0 + extra)
    assert kkt_residual(s, alloc, diag) <= 1e-9
