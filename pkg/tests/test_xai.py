import numpy as np
import pytest

from fdiabench import autodiff as ad
from fdiabench.xai import (
    AttributionProfile,
    cohens_kappa_topk,
    cross_level_profile,
    data_attribution,
    integrated_gradients,
    top_k,
)


def _linear_net(w):
    net = ad.DenseNet([len(w), 1], ["linear"], seed=0)
    net.weights[0].data = np.asarray(w, dtype=float)[:, None]
    net.biases[0].data = np.zeros(1)
    return net


def test_data_attribution(rng):
    X = rng.normal(size=(5000, 4))
    assert not data_attribution(X, X).any()
    shifted = X.copy()
    shifted[:, 2] += 2 * X[:, 2].std()
    np.testing.assert_allclose(data_attribution(shifted, X), [0, 0, 2, 0], atol=1e-12)
    np.testing.assert_allclose(data_attribution(shifted + 7, X + 7), data_attribution(shifted, X), atol=1e-9)


def test_ig_linear_closed_form(rng):
    w, a = rng.normal(size=6), rng.normal(size=6)
    np.testing.assert_allclose(integrated_gradients(_linear_net(w), a, np.zeros(6)), w * a, atol=1e-12)


def test_ig_completeness(rng):
    for seed in range(3):
        net = ad.DenseNet([5, 16, 16, 1], ["tanh", "tanh", "linear"], seed=seed)
        a, base = rng.normal(size=5), rng.normal(size=5)
        phi = integrated_gradients(net, a, base, steps=256)
        gap = net.predict(a[None])[0, 0] - net.predict(base[None])[0, 0]
        assert phi.sum() == pytest.approx(gap, rel=1e-3, abs=1e-9)


def test_ig_at_baseline_is_zero(rng):
    a = rng.normal(size=4)
    assert not integrated_gradients(ad.DenseNet([4, 8, 1], ["tanh", "linear"], seed=0), a, a).any()


def test_top_k_ties_prefer_lower_index():
    assert top_k([1, 3, 3, 0, 3, 2, 3]) == (1, 2, 4, 6, 5)


def test_kappa_cases():
    assert cohens_kappa_topk((0, 1, 2, 3, 4), (4, 3, 2, 1, 0), 54) == pytest.approx(1.0)
    p_o, p_e = 44 / 54, 2426 / 2916
    disjoint = cohens_kappa_topk((0, 1, 2, 3, 4), (5, 6, 7, 8, 9), 54)
    assert disjoint == pytest.approx((p_o - p_e) / (1 - p_e))
    assert disjoint == pytest.approx(-0.102, abs=5e-4)
    p_o4 = 52 / 54
    assert cohens_kappa_topk((0, 1, 2, 3, 4), (0, 1, 2, 3, 9), 54) == pytest.approx((p_o4 - p_e) / (1 - p_e))


def test_kappa_monotone_in_overlap():
    base = (0, 1, 2, 3, 4)
    values = [cohens_kappa_topk(base, base[:m] + tuple(range(10, 15 - m)), 30) for m in range(6)]
    assert values == sorted(values) and values[-1] == pytest.approx(1.0)


def test_cross_level_profile(rng):
    clean = rng.normal(size=(300, 8))
    gen = clean + np.eye(8)[3] * 5
    w = np.zeros(8)
    w[[3, 0, 1, 2, 4]] = [5, 4, 3, 2, 1]
    prof = cross_level_profile(gen, clean, _linear_net(w))
    assert prof.top5_data[0] == 3
    assert prof.top5_model == (3, 0, 1, 2, 4)
    assert -1 <= prof.kappa <= 1 and len(prof.top5_data) == 5
    again = cross_level_profile(gen, clean, _linear_net(w))
    assert again.to_json() == prof.to_json()


def test_profile_json_round_trip():
    prof = AttributionProfile(np.arange(6.0), np.arange(6.0)[::-1], (5, 4, 3, 2, 1), (0, 1, 2, 3, 4), -0.2)
    doc = prof.to_dict()
    assert set(doc) == {"data_level", "model_level", "top5_data", "top5_model", "kappa"}
    back = AttributionProfile.from_json(prof.to_json())
    assert back.top5_data == prof.top5_data and back.kappa == prof.kappa
    np.testing.assert_array_equal(back.model_level, prof.model_level)
