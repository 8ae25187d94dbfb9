import math

import numpy as np
import pytest
from scipy.stats import ncx2, norm

from uavrelay.channel import (
    ChannelConfigError,
    DetectorOracle,
    Measurement,
    SegmentModel,
    detect_segment,
    detect_segment_ml,
    gain_bs,
    gain_db,
    gain_user,
    sample_fading,
    sample_measurement,
)
from uavrelay.geometry import Heights, Point2, RelayLink
from uavrelay.terrain import NestedBoundaryField, NestedOracle

H = Heights(50.0, 45.0, 0.0)
M = SegmentModel.two_segment_default()

# hand-evaluated with 40-digit arithmetic, independent of the package
G_BS_AT_5M = 4.96755164553015305641e-6
G_U1_AT_50M = 4.72285041680748037382e-8
G_U2_AT_50M = 1.02830248864221302344e-9


def test_frozen_gains():
    link = RelayLink((0.0, 0.0), (300.0, 0.0), H)
    assert gain_bs((300.0, 0.0), link, M) == pytest.approx(G_BS_AT_5M, rel=1e-12)
    assert gain_user((0.0, 0.0), (0.0, 0.0), 1, M, H) == pytest.approx(G_U1_AT_50M, rel=1e-12)
    assert gain_user((0.0, 0.0), (0.0, 0.0), 2, M, H) == pytest.approx(G_U2_AT_50M, rel=1e-12)


def test_segment_ordering_on_default_parameters():
    M.check_ordering(1.0, 1e5)
    for k in range(2, 7):
        SegmentModel.ladder(k).check_ordering(1.0, 1e4)


def test_ordering_violation_is_config_error():
    bad = SegmentModel((3.0, 2.0), (-3.69, -3.84), (2.0, 5.0), 2.08, -3.85)
    with pytest.raises(ChannelConfigError):
        bad.check_ordering(1.0, 2000.0)


@pytest.mark.parametrize("kw", [
    dict(alpha=(2.0,), log10beta=(-3.0, -4.0), sigma_db=(1.0,)),
    dict(alpha=(2.0,), log10beta=(-3.0,), sigma_db=(0.0,)),
])
def test_malformed_models_rejected(kw):
    with pytest.raises(ChannelConfigError):
        SegmentModel(alpha0=2.08, log10beta0=-3.85, **kw)


def test_gain_user_rejects_unknown_segment():
    with pytest.raises(ValueError):
        gain_user((0, 0), (0, 0), 3, M, H)


def test_db_gain_matches_linear():
    for d in (50.0, 80.0, 500.0):
        x = (math.sqrt(d * d - 2500.0), 0.0)
        for k in (1, 2):
            assert gain_db(gain_user(x, (0, 0), k, M, H)) == pytest.approx(M.mean_gain_db(k, d), abs=1e-9)


def test_gain_continuous_within_segment():
    xs = np.linspace(0, 400, 4001)
    g = np.array([gain_user((x, 0.0), (0, 0), 1, M, H) for x in xs])
    assert np.all(np.diff(g) < 0)
    # log-slope peaks at alpha / (2 * 50) per metre, step is 0.1 m
    assert np.max(np.abs(np.diff(np.log(g)))) <= 0.1 * 2.14 / 100 + 1e-9


def _oracle(r=150.0):
    return NestedOracle(NestedBoundaryField.circular([r]), (0.0, 0.0))


def test_measurement_noiseless_limit():
    tiny = SegmentModel((2.14, 3.03), (-3.69, -3.84), (1e-12, 1e-12), 2.08, -3.85)
    m = sample_measurement((60.0, 80.0), (0, 0), _oracle(), tiny, H, np.random.default_rng(0))
    assert m.gain_db == pytest.approx(tiny.mean_gain_db(1, math.sqrt(60 ** 2 + 80 ** 2 + 50 ** 2)), abs=1e-9)


def test_measurement_moments():
    rng = np.random.default_rng(1)
    n = 100_000
    for x, k in (((30.0, 40.0), 1), ((300.0, 0.0), 2)):
        ys = np.array([sample_measurement(x, (0, 0), _oracle(), M, H, rng).gain_db for _ in range(n)])
        d = math.sqrt(x[0] ** 2 + x[1] ** 2 + 2500.0)
        assert abs(ys.std() / M.sigma_db[k - 1] - 1) < 0.02
        assert abs(ys.mean() - M.mean_gain_db(k, d)) < 3 * M.sigma_db[k - 1] / math.sqrt(n)


def test_detector_examples():
    eq = SegmentModel((2.14, 3.03), (-3.69, -3.84), (3.0, 3.0), 2.08, -3.85)
    x = Point2(0.0, 0.0)  # d = 50
    mu1, mu2 = eq.mean_gain_db(1, 50.0), eq.mean_gain_db(2, 50.0)
    assert detect_segment(Measurement(x, mu1), (0, 0), eq, H) == 1
    assert detect_segment(Measurement(x, mu2), (0, 0), eq, H) == 2
    assert detect_segment(Measurement(x, 0.5 * (mu1 + mu2)), (0, 0), eq, H) == 1


def _exhaustive_gaussian_ml(y, d, model):
    # direct density evaluation, first maximum wins
    dens = [norm.pdf(y - model.b(k) + model.a(k) * math.log10(d), scale=model.sigma_db[k - 1])
            for k in range(1, model.K + 1)]
    return 1 + int(np.argmax(dens))


def test_detector_matches_exhaustive_likelihood_equal_sigma():
    eq = SegmentModel.ladder(4)
    eq = SegmentModel(eq.alpha, eq.log10beta, (4.0,) * 4, eq.alpha0, eq.log10beta0)
    rng = np.random.default_rng(2)
    for _ in range(10_000):
        x = Point2(*rng.uniform(-500, 500, 2))
        k = int(rng.integers(1, 5))
        d = math.sqrt(x[0] ** 2 + x[1] ** 2 + 2500.0)
        y = eq.mean_gain_db(k, d) + rng.normal(0, 4.0)
        assert detect_segment(Measurement(x, y), (0, 0), eq, H) == _exhaustive_gaussian_ml(y, d, eq)


def test_detector_accuracy_close_to_exact_ml_unequal_sigma():
    # the 1/sigma rule drops the log-sigma term, so a few draws may differ
    rng = np.random.default_rng(3)
    ok_rule = ok_ml = 0
    n = 10_000
    pdfs = [lambda r, s=s: norm.pdf(r, scale=s) for s in M.sigma_db]
    for _ in range(n):
        x = Point2(*rng.uniform(-300, 300, 2))
        m = sample_measurement(x, (0, 0), _oracle(), M, H, rng)
        truth = _oracle().segment(x)
        d = math.sqrt(x[0] ** 2 + x[1] ** 2 + 2500.0)
        ok_rule += detect_segment(m, (0, 0), M, H) == truth
        ok_ml += detect_segment_ml(m, (0, 0), M, H, pdfs) == truth
        assert detect_segment_ml(m, (0, 0), M, H, pdfs) == _exhaustive_gaussian_ml(m.gain_db, d, M)
    assert abs(ok_rule - ok_ml) / n < 0.002


def test_detector_error_falls_with_separation():
    rng = np.random.default_rng(4)
    errs = []
    for sigma in (12.0, 6.0, 3.0):
        mdl = SegmentModel((2.14, 3.03), (-3.69, -3.84), (sigma, sigma), 2.08, -3.85)
        det = DetectorOracle(_oracle(), mdl, (0, 0), H, rng)
        xs = rng.uniform(-300, 300, (4000, 2))
        errs.append(np.mean(det.segments(xs) != _oracle().segments(xs)))
    assert errs[0] > errs[1] > errs[2]


def test_rayleigh_fading_unit_mean():
    a = sample_fading("nlos_rayleigh", np.random.default_rng(5), 1_000_000)
    assert abs(a.mean() - 1.0) < 0.01


def test_rician_less_variable_than_rayleigh():
    rng = np.random.default_rng(6)
    ray = sample_fading("nlos_rayleigh", rng, 200_000)
    for kind in ("bs_uav_rician20dB", "los_rician9dB"):
        ric = sample_fading(kind, rng, 200_000)
        assert abs(ric.mean() - 1) < 0.01 and ric.var() < ray.var()


@pytest.mark.parametrize("kind,k_db", [("bs_uav_rician20dB", 20.0), ("los_rician9dB", 9.0)])
def test_rician_cdf_against_closed_form(kind, k_db):
    kf = 10 ** (k_db / 10)
    a = np.sort(sample_fading(kind, np.random.default_rng(7), 200_000))
    for q in (0.05, 0.25, 0.5, 0.75, 0.95):
        x = a[int(q * len(a))]
        # 2(K+1)|a|^2 is noncentral chi-square with 2 dof and noncentrality 2K
        assert abs(ncx2.cdf(2 * (kf + 1) * x, 2, 2 * kf) - q) < 0.01


def test_unknown_fading_kind():
    with pytest.raises(ValueError):
        sample_fading("rician3dB", np.random.default_rng(0))
