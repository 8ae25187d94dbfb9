import math

import numpy as np
import pytest

from uavrelay.baselines import (
    N_PHI_BINS,
    LosProbabilityTable,
    averaged_user_gain,
    build_los_table,
    classify_users,
    direct_link_eval,
    exhaustive_placement,
    los_table_from_rays,
    probabilistic_cluster_placement,
    probabilistic_placement,
    region_grid,
    simple_search_placement,
)
from uavrelay.channel import SegmentModel
from uavrelay.cost import AF_OUTAGE, DF_RATE, RelayCost, RelayProblem
from uavrelay.geometry import Heights, RelayLink
from uavrelay.search import SearchParams, shaded_contour_search
from uavrelay.terrain import Building, NestedBoundaryField, NestedOracle, UrbanMap, generate_map, los_blocked

H = Heights(50.0, 45.0, 0.0)
M = SegmentModel.two_segment_default()
DF = RelayCost.from_dbm(DF_RATE, 33, 33, -80)
AF = RelayCost.from_dbm(AF_OUTAGE, 33, 33, -80)
LINK = RelayLink((3.0, -7.0), (290.0, 95.0), H)


def nested(radii, cost=DF, link=LINK):
    return RelayProblem(link, M, cost, NestedOracle(NestedBoundaryField.circular(radii), link.x_u))


def test_region_grid_inside_half_disk():
    pts = region_grid(LINK, 5.0)
    assert tuple(pts[-2]) == LINK.x_u and tuple(pts[-1]) == LINK.x_b
    body = pts[:-2]
    assert np.allclose(body / 5.0, np.round(body / 5.0))
    for x in body:
        rho, th = LINK.polar(x)
        assert abs(th) <= math.pi / 2 + 1e-12 and rho <= LINK.L * math.cos(th) + 1e-6
    with pytest.raises(ValueError):
        region_grid(LINK, 0.0)


def test_exhaustive_matches_double_loop():
    pb = nested([80.0], AF)
    res = exhaustive_placement(pb, 5.0)
    c = 0.5 * (np.array(LINK.x_u) + np.array(LINK.x_b))
    best = (math.inf, None)
    for i in range(-100, 100):
        for j in range(-100, 100):
            x = (5.0 * i, 5.0 * j)
            if math.hypot(x[0] - c[0], x[1] - c[1]) <= LINK.L / 2:
                f = pb.true_cost(x)
                if f < best[0]:
                    best = (f, x)
    for x in (LINK.x_u, LINK.x_b):
        if pb.true_cost(x) < best[0]:
            best = (pb.true_cost(x), x)
    assert res.cost == pytest.approx(best[0], rel=1e-12)
    assert res.x == pytest.approx(best[1])


def test_exhaustive_single_point_and_refinement():
    pb = nested([80.0])
    one = exhaustive_placement(pb, grid=np.array([[10.0, 20.0]]))
    assert one.x == (10.0, 20.0) and one.cost == pytest.approx(pb.true_cost((10.0, 20.0)))
    coarse = exhaustive_placement(pb, 5.0).cost
    assert exhaustive_placement(pb, 2.5).cost <= coarse
    assert exhaustive_placement(pb, 1.0).cost <= coarse


def test_simple_search_matches_axis_scan():
    pb = nested([80.0], AF)
    res = simple_search_placement(pb, 5.0)
    r = np.arange(0.0, LINK.L, 0.01)
    scan = min(pb.true_cost(LINK.point(t, 0.0)) for t in r)
    assert res.cost <= scan + 1e-9 * abs(scan)
    assert res.cost >= scan - 1e-6 * abs(scan)


def test_simple_equals_full_when_all_los_and_never_beats_it():
    pb = nested([1e6])
    full = shaded_contour_search(pb, SearchParams(5.0)).result
    simple = simple_search_placement(pb, 5.0)
    assert simple.cost == pytest.approx(full.cost, rel=1e-12)
    rng = np.random.default_rng(0)
    for _ in range(10):
        p = RelayProblem(LINK, M, DF, NestedOracle(NestedBoundaryField.random(rng, 2, 30, 300), LINK.x_u))
        assert simple_search_placement(p, 5.0).cost >= shaded_contour_search(p, SearchParams(5.0)).result.cost


def _grid_with_gain(link, gain_fn, cost):
    pts = region_grid(link, 5.0)
    best = (math.inf, None)
    for x in pts:
        r = max(math.hypot(x[0] - link.x_u[0], x[1] - link.x_u[1]), 1.0)
        db = math.sqrt((x[0] - link.x_b[0]) ** 2 + (x[1] - link.x_b[1]) ** 2 + 25.0)
        f = cost(gain_fn(r), M.beta0 * db ** -M.alpha0)
        if f < best[0]:
            best = (f, tuple(x))
    return best


@pytest.mark.parametrize("p,k", [(1.0, 1), (0.0, 2)])
def test_probabilistic_degenerate_tables(p, k):
    res = probabilistic_placement(LINK, LosProbabilityTable.constant(p), M, AF)
    f, x = _grid_with_gain(LINK, lambda r: M.beta(k) * r ** -M.alpha[k - 1], AF)
    assert res.x == pytest.approx(x)


def test_probabilistic_not_pinned_above_user():
    # horizontal distance vanishes above the user; the result must still be a finite-cost interior point
    for p in (0.0, 0.3, 1.0):
        res = probabilistic_placement(LINK, LosProbabilityTable.constant(p), M, DF)
        assert math.isfinite(res.cost) and res.x != LINK.x_u


def test_probabilistic_requires_two_segments():
    with pytest.raises(ValueError):
        probabilistic_placement(LINK, LosProbabilityTable.constant(0.5), SegmentModel.ladder(3), DF)


def test_averaged_gain_mix_and_switch():
    t = LosProbabilityTable.constant(0.25)
    x = np.array([[33.0, 33.0]])
    r = math.hypot(30.0, 40.0)
    expect = 0.25 * M.beta(1) * r ** -2.14 + 0.75 * M.beta(2) * r ** -3.03
    assert averaged_user_gain(x, (3.0, -7.0), t, M, H)[0] == pytest.approx(expect)
    r3 = math.hypot(r, 50.0)
    expect3 = 0.25 * M.beta(1) * r3 ** -2.14 + 0.75 * M.beta(2) * r3 ** -3.03
    assert averaged_user_gain(x, (3.0, -7.0), t, M, H, "3d")[0] == pytest.approx(expect3)
    with pytest.raises(ValueError):
        averaged_user_gain(x, (0, 0), t, M, H, "manhattan")


def test_cluster_probabilistic_single_user_matches():
    t = LosProbabilityTable.constant(0.6)
    a = probabilistic_placement(LINK, t, M, DF)
    b = probabilistic_cluster_placement(LINK, [LINK.x_u], t, M, DF)
    assert a.x == b.x


def test_los_table_free_space():
    empty = UrbanMap((0, 0, 500, 500))
    t = build_los_table(empty, 20, 200, H, np.random.default_rng(0))
    ok = ~np.isnan(t.p_los)
    assert ok.sum() > N_PHI_BINS // 2 and np.all(t.p_los[ok] == 1.0)


def test_los_table_recount_and_overhead():
    m = generate_map(3)
    rng = np.random.default_rng(1)
    a = np.column_stack([rng.uniform(0, 1000, (100, 2)), np.zeros(100)])
    a = a[m.is_outdoor(a[:, :2])]
    b = np.column_stack([a[:, :2] + rng.normal(0, 60, (len(a), 2)), np.full(len(a), 50.0)])
    t = los_table_from_rays(m, a, b, H)
    n = np.zeros(N_PHI_BINS, int)
    hit = np.zeros(N_PHI_BINS, int)
    w = (math.pi / 2) / N_PHI_BINS
    for ai, bi in zip(a, b):
        phi = math.atan2(50.0, math.hypot(*(bi[:2] - ai[:2])))
        i = min(max(math.ceil(phi / w) - 1, 0), N_PHI_BINS - 1)
        n[i] += 1
        hit[i] += los_blocked(m, ai, bi) == 0
    assert np.array_equal(t.n_samples, n)
    assert np.allclose(t.p_los[n > 0], hit[n > 0] / n[n > 0])
    big = build_los_table(m, 200, 100, H, np.random.default_rng(2))
    assert big(math.pi / 2 - 0.01) > 0.95


def test_los_table_deterministic_and_round_trip(tmp_path):
    m = generate_map(4)
    t1 = build_los_table(m, 30, 50, H, np.random.default_rng(5))
    t2 = build_los_table(m, 30, 50, H, np.random.default_rng(5))
    assert t1.to_csv() == t2.to_csv()
    t1.save(tmp_path / "t.csv")
    back = LosProbabilityTable.load(tmp_path / "t.csv")
    assert np.array_equal(back.n_samples, t1.n_samples)
    assert np.allclose(back.p_los, t1.p_los, equal_nan=True, rtol=1e-5)


def test_los_table_interpolates_empty_bins():
    p = np.array([0.2, np.nan, 0.6, 1.0])
    t = LosProbabilityTable(np.linspace(0, math.pi / 2, 5), p, np.array([5, 0, 5, 5]))
    c = t.centers
    assert t(c[1]) == pytest.approx(0.4)
    assert t(0.0) == pytest.approx(0.2) and t(math.pi / 2) == pytest.approx(1.0)


@pytest.mark.parametrize("p,edges", [
    (np.array([0.5, 1.2]), np.array([0, 1, 2.0])),
    (np.array([0.5, 0.2]), np.array([0, 2, 1.0])),
    (np.array([np.nan, np.nan]), np.array([0, 1, 2.0])),
])
def test_los_table_validation(p, edges):
    with pytest.raises(ValueError):
        LosProbabilityTable(edges, p, np.array([1, 1]))


def test_direct_link_segments():
    m = UrbanMap((0, 0, 400, 400), (Building(100, 90, 120, 110, 40.0),))
    cost = RelayCost.from_dbm(DF_RATE, 33, 33, -80)
    d = math.sqrt(300.0 ** 2 + 45.0 ** 2)
    los = direct_link_eval(RelayLink((0.0, 300.0), (300.0, 300.0), H), M, cost, m)
    nlos = direct_link_eval(RelayLink((0.0, 100.0), (300.0, 100.0), H), M, cost, m)
    assert los.segment == 1 and los.gain == pytest.approx(M.beta(1) * d ** -2.14)
    assert nlos.segment == 2 and nlos.gain == pytest.approx(M.beta(2) * d ** -3.03)
    assert los.rate == pytest.approx(math.log2(1 + cost.p_b * los.gain))
    assert nlos.outage_ref == pytest.approx(1 / (cost.p_b * nlos.gain))


def test_classify_users_recount():
    rates = np.random.default_rng(3).gamma(2.0, 2.0, 100)
    cls = classify_users(rates, 20.0)
    srt = np.sort(rates)
    lo = srt[19] + 0.8 * (srt[20] - srt[19])  # linear-interpolated 20th percentile
    hi = srt[79] + 0.2 * (srt[80] - srt[79])
    assert [c == "edge" for c in cls] == [r <= lo for r in rates]
    assert [c == "center" for c in cls] == [r >= hi for r in rates]
    assert sum(c == "edge" for c in cls) == 20
