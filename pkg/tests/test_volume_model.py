import math

import numpy as np
import pytest

from phantomforge.volume_model import (
    VolumeModel,
    fit_volume_model,
    outlier_probability,
)

FIT_KW = dict(dip_seed=11, mc_seed=13)


@pytest.fixture(scope="module")
def normal_model():
    rng = np.random.default_rng(8)
    return fit_volume_model(rng.normal(30, 5, 500), 86, **FIT_KW)


def test_unimodal_fit_basics(normal_model):
    assert normal_model.kind == "unimodal"
    assert normal_model.zero_prevalence == 0.0
    assert normal_model.dip[1] >= 0.05
    up = normal_model.unimodal_params
    assert up.median == pytest.approx(30, abs=1)
    assert up.robust_sigma == pytest.approx(5, rel=0.15)


def test_p_out_zero_at_median(normal_model):
    assert outlier_probability(normal_model, normal_model.unimodal_params.median) == 0.0


def test_p_out_at_iqr_fence_matches_normal_cdf():
    # exactly symmetric sample: the fence Q3 + 1.5*IQR sits at
    # median + 2.698 robust sigmas, whose HDR level is 2*Phi(2.698)-1
    from scipy.special import ndtri

    n = 4001
    xs = 30 + 5 * ndtri((np.arange(n) + 0.5) / n)
    model = fit_volume_model(xs, 86, **FIT_KW)
    up = model.unimodal_params
    fence = up.q3 + 1.5 * (up.q3 - up.q1)
    expected = 2 * (0.5 * (1 + math.erf(2.698 / math.sqrt(2)))) - 1
    assert outlier_probability(model, fence) == pytest.approx(expected, abs=1e-3)
    assert expected == pytest.approx(0.9930, abs=1e-3)
    assert outlier_probability(model, fence) > 0.9


def test_p_out_monotone_in_distance_from_median(normal_model):
    med = normal_model.unimodal_params.median
    ps = [outlier_probability(normal_model, med + d) for d in (0, 1, 3, 7, 15, 40)]
    assert ps == sorted(ps)
    assert all(0.0 <= p <= 1.0 for p in ps)
    # symmetric
    assert outlier_probability(normal_model, med - 7) == pytest.approx(
        outlier_probability(normal_model, med + 7)
    )


def test_zero_volume_rule_gallbladder():
    rng = np.random.default_rng(8)
    vols = rng.normal(30, 5, 500)
    vols[:80] = 0.0  # 16% missing
    model = fit_volume_model(vols, 86, **FIT_KW)
    assert model.zero_prevalence == pytest.approx(0.16)
    p = outlier_probability(model, 0.0)
    assert p == pytest.approx(0.84, abs=0.01)
    assert p <= 0.9  # absence alone does not reject


def test_bimodal_cohort_detected_and_fit():
    rng = np.random.default_rng(21)
    vols = np.concatenate([rng.normal(100, 8, 150), rng.normal(260, 8, 150)])
    model = fit_volume_model(vols, 105, **FIT_KW)
    assert model.kind == "multimodal"
    assert model.gmm_params.k == 2
    means = np.sort(model.gmm_params.means)
    assert abs(means[0] - 100) < 6 and abs(means[1] - 260) < 6
    # in-population values score low-ish, far values score 1
    assert outlier_probability(model, 100.0) < 0.5
    assert outlier_probability(model, 180.0) > 0.99
    assert outlier_probability(model, 400.0) > 0.99


def test_all_zero_cohort():
    model = fit_volume_model(np.zeros(50), 86, **FIT_KW)
    assert model.zero_prevalence == 1.0
    assert not model.fitted
    assert outlier_probability(model, 0.0) == 0.0
    assert outlier_probability(model, 12.0) == 1.0


def test_low_confidence_below_20_nonzero():
    rng = np.random.default_rng(4)
    vols = np.concatenate([rng.normal(30, 5, 12), np.zeros(30)])
    model = fit_volume_model(vols, 86, **FIT_KW)
    assert model.low_confidence
    assert model.kind == "unimodal"
    # wide variance: at least 100% relative scale
    assert model.unimodal_params.robust_sigma >= abs(model.unimodal_params.median)
    assert outlier_probability(model, model.unimodal_params.median * 1.5) < 0.9


def test_scale_equivariance_both_kinds():
    c = 3.7
    rng = np.random.default_rng(8)
    uni = rng.normal(30, 5, 400)
    rng2 = np.random.default_rng(21)
    multi = np.concatenate([rng2.normal(100, 8, 150), rng2.normal(260, 8, 150)])
    for samples, sid in ((uni, 86), (multi, 105)):
        base = fit_volume_model(samples, sid, **FIT_KW)
        scaled = fit_volume_model(samples * c, sid, **FIT_KW)
        for x in np.quantile(samples[samples > 0], [0.1, 0.5, 0.9, 0.99]):
            pa = outlier_probability(base, float(x))
            pb = outlier_probability(scaled, float(x * c))
            assert abs(pa - pb) < 1e-6, (sid, x, pa, pb)


def test_mc_scoring_deterministic():
    rng = np.random.default_rng(21)
    vols = np.concatenate([rng.normal(100, 8, 150), rng.normal(260, 8, 150)])
    m1 = fit_volume_model(vols, 105, **FIT_KW)
    m2 = fit_volume_model(vols, 105, **FIT_KW)
    for x in (90.0, 150.0, 260.0):
        assert outlier_probability(m1, x) == outlier_probability(m2, x)


def test_model_json_round_trip(normal_model):
    back = VolumeModel.from_json(normal_model.to_json())
    for x in (20.0, 30.0, 45.0):
        assert outlier_probability(back, x) == pytest.approx(
            outlier_probability(normal_model, x), abs=1e-12
        )
