import math

import numpy as np
import pytest

from conftest import E, LOG2E, fixed_scenario, joint_scenario
from eealloc import ee_joint
from eealloc.ee_fixed import AT_P0, CLAMPED, INTERIOR, optimize_fixed
from eealloc.ee_joint import dpsi_dP, ee_joint_curve, lambda_P, optimize_joint
from eealloc.joint import joint_allocate, min_total_power
from eealloc.model import InfeasibleError
from eealloc.oracle import SweepCurve, feasible_seeds, random_scenario


def _seeded(K, n):
    return [random_scenario(seed, K, "joint") for seed in feasible_seeds(K, "joint", n)]


def _fd_psi(s, W, P, h):
    return (joint_allocate(s, W, P + h).psi - joint_allocate(s, W, P - h).psi) / (2 * h)


def test_single_user_matches_fixed():
    s = joint_scenario([1.0], [0.0], W=1.0, P=10.0, zeta=1.0, pc=1.0)
    res = optimize_joint(s)
    assert res.boundary_case == INTERIOR
    assert res.p_opt == pytest.approx(E - 1, abs=1e-10)
    assert res.max_ee == pytest.approx(LOG2E / E, abs=1e-10)
    fixed = optimize_fixed(fixed_scenario([1.0], [0.0], [1.0], P=10.0, zeta=1.0, pc=1.0))
    assert res.p_opt == pytest.approx(fixed.p_opt, rel=1e-12)


def test_single_user_dpsi_closed_form():
    s = joint_scenario([2.5], [0.0], W=3.0)
    for P in (0.1, 1.0, 7.0):
        assert dpsi_dP(s, 3.0, P) == pytest.approx(math.log1p(P * 2.5 / 3.0) / 3.0, rel=1e-12)


@pytest.mark.parametrize("s", _seeded(3, 6))
def test_dpsi_implicit_vs_finite_difference(s):
    W = s.bandwidth_budget
    P0 = min_total_power(s, W)
    for frac in (0.1, 0.5, 0.9):
        P = P0 + frac * (s.power_budget - P0)
        d = dpsi_dP(s, W, P)
        assert d > 0
        assert d == pytest.approx(_fd_psi(s, W, P, 1e-5 * P), rel=1e-4)


@pytest.mark.parametrize("s", _seeded(3, 8) + _seeded(2, 4))
def test_lambda_sign_matches_finite_difference(s):
    W = s.bandwidth_budget
    P0 = min_total_power(s, W)
    for frac in np.linspace(0.02, 0.98, 7):
        P = P0 + frac * (s.power_budget - P0)
        h = 1e-5 * P
        fd = (ee_joint_curve(s, W, P + h) - ee_joint_curve(s, W, P - h)) / (2 * h)
        if abs(fd) > 1e-8:
            assert np.sign(lambda_P(s, W, P)) == np.sign(fd)


def test_lambda_positive_with_abundant_bandwidth():
    s = joint_scenario([2.0, 1.0], [0.5, 0.5], W=15.0, P=100.0, zeta=0.8, pc=10.0)
    P0 = min_total_power(s, 15.0)
    assert lambda_P(s, 15.0, P0 * 1.01) > 0


def test_scarce_bandwidth_optimum_at_minimum_power():
    probe = joint_scenario([2.0, 1.0], [10.0, 10.0], W=3.0, P=1e9, zeta=0.8, pc=1.0)
    P0 = min_total_power(probe, 3.0)
    s = joint_scenario([2.0, 1.0], [10.0, 10.0], W=3.0, P=3 * P0, zeta=0.8, pc=1.0)
    assert lambda_P(s, 3.0, 3 * P0) < 0
    res = optimize_joint(s)
    assert res.boundary_case == AT_P0
    assert res.p_opt == pytest.approx(P0, rel=1e-12)
    ee = [ee_joint_curve(s, 3.0, P) for P in np.linspace(P0, 3 * P0, 300)]
    assert np.all(np.diff(ee) < 0)


def test_clamped_when_budget_small():
    s = joint_scenario([1.0], [0.0], W=1.0, P=1.0, zeta=1.0, pc=1.0)
    res = optimize_joint(s)
    assert res.boundary_case == CLAMPED and res.p_opt == 1.0


def test_infeasible_names_deficit():
    s = joint_scenario([3.0, 1.0], [5.0, 5.0], W=0.5, P=10.0)
    with pytest.raises(InfeasibleError) as info:
        optimize_joint(s)
    assert "minimum rate requirements cannot be met" in str(info.value)
    assert info.value.deficit == pytest.approx(min_total_power(s, 0.5) - 10.0)


@pytest.mark.parametrize("s", _seeded(3, 5))
def test_optimum_beats_every_sample(s):
    res = optimize_joint(s, trace_samples=300)
    curve = res.lambda_trace
    assert isinstance(curve, SweepCurve)
    assert np.all(curve.ee <= res.max_ee + 1e-12)
    assert res.max_ee == res.solution.allocation.energy_efficiency
    assert abs(res.p_opt - curve.argmax_P) <= curve.spacing
    # at most one +/- change in the first differences (1000-point grid)
    P0 = min_total_power(s, s.bandwidth_budget)
    ee = np.array([ee_joint_curve(s, s.bandwidth_budget, P) for P in np.linspace(P0, s.power_budget, 1000)])
    signs = np.sign(np.diff(ee))
    signs = signs[signs != 0]
    assert np.count_nonzero(np.diff(signs) > 0) == 0
    assert np.count_nonzero(np.diff(signs) < 0) <= 1


@pytest.mark.parametrize("s", _seeded(3, 3))
def test_full_bandwidth_dominates(s):
    res = optimize_joint(s)
    W_M = s.bandwidth_budget
    for frac in (0.7, 0.9, 0.99):
        W = frac * W_M
        if min_total_power(s, W) <= res.p_opt:
            assert ee_joint_curve(s, W, res.p_opt) < res.max_ee


def test_fallback_to_golden_section(monkeypatch, caplog):
    s = joint_scenario([3.0, 1.0], [1.0, 1.0], W=5.0, P=60.0, zeta=0.8, pc=10.0)
    honest = optimize_joint(s)

    def broken(*args):
        raise ArithmeticError("forced")

    monkeypatch.setattr(ee_joint, "lambda_P", broken)
    res = optimize_joint(s)
    assert res.used_fallback
    assert "falling back" in caplog.text
    assert res.p_opt == pytest.approx(honest.p_opt, rel=1e-5)
    assert res.max_ee == pytest.approx(honest.max_ee, rel=1e-10)
