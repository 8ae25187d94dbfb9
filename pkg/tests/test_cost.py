import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from uavrelay.channel import SegmentModel
from uavrelay.cost import (
    AF_OUTAGE,
    DF_RATE,
    FictitiousCost,
    RelayCost,
    RelayProblem,
    UserCluster,
    VirtualUserOracle,
    check_condition1,
    check_condition2,
    dbm_to_snr_scale,
    majority_segment,
    sum_rate,
    user_throughputs,
    virtual_user_cost,
)
from uavrelay.geometry import Heights, RelayLink
from uavrelay.terrain import NestedBoundaryField, NestedOracle

H = Heights(50.0, 45.0, 0.0)
M = SegmentModel.two_segment_default()
LINK = RelayLink((0.0, 0.0), (300.0, 0.0), H)
AF = RelayCost.from_dbm(AF_OUTAGE, 33, 33, -80)
DF = RelayCost.from_dbm(DF_RATE, 33, 33, -80)
# physical range at 113 dB SNR scale; wider spreads lose the smaller term to rounding
gains = st.floats(1e-12, 1e-6, allow_nan=False)


def test_cost_examples():
    assert RelayCost(AF_OUTAGE, 1.0, 1.0)(1.0, 1.0) == 2.0
    assert RelayCost(DF_RATE, 3.0, 1.0)(1.0, 1.0) == -1.0
    assert dbm_to_snr_scale(33.0, -80.0) == pytest.approx(10 ** 11.3)


def test_throughput_prelog():
    c = RelayCost(DF_RATE, 3.0, 1.0)
    assert c.throughput(1.0, 1.0) == 0.5
    assert RelayCost(DF_RATE, 3.0, 1.0, half_prelog=False).throughput(1.0, 1.0) == 1.0
    assert c.throughput(1.0, 1.0) == -0.5 * c(1.0, 1.0)


@pytest.mark.parametrize("bad", [(0.0, 1.0), (1.0, -1e-3)])
def test_nonpositive_gain_is_domain_error(bad):
    for c in (AF, DF):
        with pytest.raises(ValueError):
            c(*bad)


def test_unknown_kind_rejected():
    with pytest.raises(ValueError):
        RelayCost("sinr", 1.0, 1.0)


@settings(max_examples=200, deadline=None)
@given(gains, gains, st.floats(1.001, 10))
def test_cost_strictly_decreasing_in_each_gain(gu, gb, s):
    assert AF(gu * s, gb) < AF(gu, gb) and AF(gu, gb * s) < AF(gu, gb)
    # DF is a max, so only the active argument moves it
    assert DF(gu * s, gb) <= DF(gu, gb) and DF(gu, gb * s) <= DF(gu, gb)
    assert DF(gu * s, gb * s) < DF(gu, gb)


def _random_polar(rng, n, L):
    return rng.uniform(0, 1.5 * L, n), rng.uniform(-math.pi, math.pi, n)


@pytest.mark.parametrize("cost", [AF, DF])
def test_fictitious_costs_ordered_in_k(cost):
    F = FictitiousCost(cost, SegmentModel.ladder(4), LINK)
    rho, th = _random_polar(np.random.default_rng(0), 2000, LINK.L)
    v = np.array([F.value_many(k, rho, th) for k in range(1, 5)])
    if cost is AF:
        assert np.all(np.diff(v, axis=0) > 0)
    else:
        # BS-limited points tie across k
        assert np.all(np.diff(v, axis=0) >= 0) and np.mean(np.diff(v, axis=0) > 0) > 0.5


@pytest.mark.parametrize("cost", [AF, DF])
def test_fictitious_at_bs_matches_eval_cost(cost):
    F = FictitiousCost(cost, M, LINK)
    for k in (1, 2):
        g_u = M.beta(k) * math.sqrt(300.0 ** 2 + 2500.0) ** (-M.alpha[k - 1])
        g_b = M.beta0 * 5.0 ** (-M.alpha0)
        assert F.value(k, LINK.L, 0.0) == pytest.approx(cost(g_u, g_b), rel=1e-12)


@pytest.mark.parametrize("cost", [AF, DF])
def test_polar_and_euclidean_paths_agree(cost):
    link = RelayLink((-40.0, 25.0), (210.0, 330.0), H)
    F = FictitiousCost(cost, M, link)
    rho, th = _random_polar(np.random.default_rng(1), 10_000, link.L)
    many = F.value_many(2, rho, th)
    for i in range(10_000):
        direct = F.at_point(2, link.point(rho[i], th[i]))
        assert abs(F.value(2, rho[i], th[i]) - direct) <= 1e-9 * max(1.0, abs(direct))
        assert abs(many[i] - direct) <= 1e-9 * max(1.0, abs(direct))


def _fd(F, k, rho, th):
    h = 1e-4 * max(1.0, rho)
    ht = h / max(1.0, rho)
    return ((F.value(k, rho + h, th) - F.value(k, rho - h, th)) / (2 * h),
            (F.value(k, rho, th + ht) - F.value(k, rho, th - ht)) / (2 * ht))


@pytest.mark.parametrize("cost", [AF, DF])
def test_gradient_matches_finite_differences(cost):
    F = FictitiousCost(cost, M, LINK)
    rng = np.random.default_rng(2)
    checked = 0
    while checked < 2000:
        k, rho, th = int(rng.integers(1, 3)), rng.uniform(1, 300), rng.uniform(-1.5, 1.5)
        if cost is DF:
            du, db = F.distances(rho, th)
            a = -math.log2(1 + DF.p_b * M.beta0 * db ** -M.alpha0)
            b = -math.log2(1 + DF.p_u * M.beta(k) * du ** -M.alpha[k - 1])
            if abs(a - b) < 1e-3 * abs(a):
                continue
        g = F.grad(k, rho, th)
        fd = _fd(F, k, rho, th)
        scale = math.hypot(g[0], g[1] / rho)
        assert max(abs(fd[0] - g[0]), abs(fd[1] - g[1]) / rho) <= 1e-5 * scale
        checked += 1


def test_gradient_undefined_at_user():
    with pytest.raises(ValueError):
        FictitiousCost(AF, M, LINK).grad(1, 0.0, 0.3)


def test_df_kink_uses_one_sided_partials():
    # find a BS/user tie along the axis and check the left-derivative convention
    F = FictitiousCost(DF, M, LINK)
    from scipy.optimize import brentq

    def gap(r):
        du, db = F.distances(r, 0.4)
        return -math.log2(1 + DF.p_b * M.beta0 * db ** -M.alpha0) + math.log2(1 + DF.p_u * M.beta(2) * du ** -M.alpha[1])

    r = brentq(gap, 1.0, 299.0, xtol=1e-13)
    g = F.grad(2, r, 0.4)
    left = (F.value(2, r, 0.4) - F.value(2, r - 1e-6, 0.4)) / 1e-6
    assert g[0] == pytest.approx(left, rel=1e-3)


@pytest.mark.parametrize("cost", [AF, DF])
def test_theta_partial_sign(cost):
    F = FictitiousCost(cost, M, LINK)
    rng = np.random.default_rng(3)
    strict = 0
    for _ in range(3000):
        k, rho, th = int(rng.integers(1, 3)), rng.uniform(1, 400), rng.uniform(1e-4, math.pi - 1e-4)
        gp, gm = F.grad(k, rho, th)[1], F.grad(k, rho, -th)[1]
        assert gp >= 0 and gm <= 0 and gp == pytest.approx(-gm)
        strict += gp > 0
        assert F.grad(k, rho, 0.0)[1] == 0.0
    if cost is AF:
        assert strict == 3000
    else:
        assert strict > 0  # zero only where the user hop is the bottleneck


@pytest.mark.parametrize("cost", [AF, DF])
def test_values_grow_with_abs_theta(cost):
    F = FictitiousCost(cost, M, LINK)
    th = np.linspace(0, math.pi, 400)
    for rho in (20.0, 150.0, 290.0):
        v = F.value_many(1, np.full_like(th, rho), th)
        assert np.all(np.diff(v) >= 0)
        if cost is AF:
            assert np.all(np.diff(v) > 0)


def test_conditions():
    af, df = RelayCost(AF_OUTAGE, 1.0, 1.0), RelayCost(DF_RATE, 1.0, 1.0)
    r = check_condition1(af)
    assert r.passed and r.grid[0] == pytest.approx(1e-6) and r.grid[-1] == pytest.approx(1e6)
    assert not check_condition1(df).passed
    assert check_condition2(df).passed
    assert not check_condition2(af).passed

    def bumpy(x, y):
        return np.sin(np.log(x)) + np.sin(np.log(y))

    assert not check_condition1(bumpy).passed and not check_condition2(bumpy).passed


def test_majority_vote():
    assert list(majority_segment(np.array([[1], [1], [1]]), 2)) == [1]
    assert list(majority_segment(np.array([[2]] * 11 + [[1]] * 9), 2)) == [2]
    assert list(majority_segment(np.array([[2]] * 10 + [[1]] * 10), 2)) == [1]


def _fields(n, rng):
    return [NestedOracle(NestedBoundaryField.random(rng, 2, 40, 250), (0.0, 0.0)) for _ in range(n)]


def test_virtual_user_zero_radius_is_single_user():
    rng = np.random.default_rng(4)
    orc = _fields(1, rng)[0]
    cl = UserCluster((0.0, 0.0), 0.0, np.zeros((5, 2)))
    pb = RelayProblem(LINK, M, DF, orc)
    for x in rng.uniform(-200, 300, (200, 2)):
        assert virtual_user_cost(cl, x, [orc] * 5, M, DF, H, (300.0, 0.0)) == pytest.approx(pb.true_cost(x), rel=1e-12)
        assert sum_rate(cl, x, [orc] * 5, M, DF, H, (300.0, 0.0)) == pytest.approx(-0.5 * pb.true_cost(x), rel=1e-12)


def test_sum_rate_matches_independent_loop():
    rng = np.random.default_rng(5)
    users = rng.uniform(-30, 30, (8, 2))
    orcs = [NestedOracle(NestedBoundaryField.random(rng, 2, 30, 200), tuple(u)) for u in users]
    cl = UserCluster((0.0, 0.0), 60.0, users)
    p_b, p_u = DF.p_b, DF.p_u
    for x in rng.uniform(-100, 300, (50, 2)):
        rates = []
        for u, o in zip(users, orcs):
            k = o.segment(x)
            du = math.sqrt((x[0] - u[0]) ** 2 + (x[1] - u[1]) ** 2 + 50.0 ** 2)
            db = math.sqrt((x[0] - 300.0) ** 2 + x[1] ** 2 + 5.0 ** 2)
            gu = 10 ** M.log10beta[k - 1] * du ** -M.alpha[k - 1]
            gb = 10 ** -3.85 * db ** -2.08
            rates.append(0.5 * min(math.log2(1 + p_u * gu), math.log2(1 + p_b * gb)))
        assert sum_rate(cl, x, orcs, M, DF, H, (300.0, 0.0)) == pytest.approx(np.mean(rates), rel=1e-12)
        assert len(user_throughputs(users, x, orcs, M, DF, H, (300.0, 0.0))) == 8


def test_cluster_validation():
    with pytest.raises(ValueError):
        UserCluster((0, 0), 5.0, np.array([[10.0, 0.0]]))
    with pytest.raises(ValueError):
        UserCluster((0, 0), 5.0, np.zeros((0, 2)))
    with pytest.raises(ValueError):
        VirtualUserOracle([])
