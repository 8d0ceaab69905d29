import numpy as np
import pytest

from hto import attack, defense, spectral
from hto import detector as det
from hto.defense import ATConfig, FilteredDetector
from hto.errors import ConfigError, ShapeError
from hto.traces import PowerTrace


def test_at_config_validation():
    for bad in (ATConfig(epsilon_mw=-1), ATConfig(step=0), ATConfig(pgd_iters=0), ATConfig(epochs=0)):
        with pytest.raises(ConfigError):
            bad.validate()


def test_pgd_zero_budget_is_identity(small_model, small_data):
    x = small_data.X[0]
    out = defense.pgd_attack(small_model, x, 1, ATConfig(epsilon_mw=0.0))
    np.testing.assert_array_equal(out, x)
    assert out is not x


def test_pgd_stays_in_perturbation_set(small_model, small_data):
    at = ATConfig(epsilon_mw=0.4, step=0.15, pgd_iters=7)
    X = small_data.X.copy()
    X[:3, :5] = 0.0  # zero power samples stay nonnegative
    out = defense.pgd_attack(small_model, X, small_data.y, at)
    diff = out - X
    assert diff.min() >= 0.0 and diff.max() <= 0.4 + 1e-12
    assert out.min() >= 0.0
    single = defense.pgd_attack(small_model, PowerTrace(X[0]), int(small_data.y[0]), at)
    np.testing.assert_allclose(single, out[0], atol=1e-12)


def test_pgd_single_small_step_ascends(small_model, small_data):
    at = ATConfig(epsilon_mw=1e-4, step=1e-4, pgd_iters=1)
    for x, y in zip(small_data.X[:20], small_data.y[:20]):
        before = det.loss(small_model, x, int(y))
        after = det.loss(small_model, defense.pgd_attack(small_model, x, int(y), at), int(y))
        assert after >= before - 1e-12


def test_pgd_beats_single_step(fixture_data, fixture_model):
    _, _, test = fixture_data
    params = fixture_model[0]
    X, y = test.X[:100], test.y[:100]
    eps = 0.5
    pgd = defense.pgd_attack(params, X, y, ATConfig(epsilon_mw=eps, step=0.1, pgd_iters=20))
    fgsm = defense.pgd_attack(params, X, y, ATConfig(epsilon_mw=eps, step=eps, pgd_iters=1))
    wins = det.loss(params, pgd, y) >= det.loss(params, fgsm, y) - 1e-12
    assert np.mean(wins) >= 0.8


def test_zero_budget_training_equals_plain(small_data):
    cfg = det.TrainConfig(epochs=3, seed=4)
    a, ha = defense.adversarial_train(small_data, None, cfg, ATConfig(epsilon_mw=0.0))
    b, hb = det.train(small_data, None, cfg)
    assert np.array_equal(a.flat(), b.flat()) and ha == hb


def test_adversarial_training_is_deterministic(small_data):
    cfg = det.TrainConfig(epochs=2, seed=1)
    at = ATConfig(epsilon_mw=0.3, pgd_iters=3)
    a, _ = defense.adversarial_train(small_data, None, cfg, at)
    b, _ = defense.adversarial_train(small_data, None, cfg, at)
    assert np.array_equal(a.flat(), b.flat())
    plain, _ = det.train(small_data, None, cfg)
    assert not np.array_equal(a.flat(), plain.flat())


def test_full_band_filter_equals_plain_predict(small_model, small_data):
    fd = FilteredDetector(small_model, spectral.BandPassFilter.from_mhz(0, 50), small_data.sample_period)
    for x in small_data.X[:10]:
        assert defense.filtered_predict(fd, x) == det.predict(small_model, x)
    assert fd.accuracy(small_data) == det.accuracy(small_model, small_data)
    with pytest.raises(ShapeError):
        defense.filtered_predict(fd, np.zeros(small_data.d + 1))


def test_filter_band_must_fit_detector(small_model):
    with pytest.raises(ConfigError):
        FilteredDetector(small_model, spectral.BandPassFilter.from_mhz(0, 80))


def test_filtered_dataset_is_valid_power(small_data):
    out = defense.filtered_dataset(small_data, spectral.BandPassFilter.from_mhz(0, 5))
    assert out.X.min() >= 0.0 and out.X.shape == small_data.X.shape
    assert np.array_equal(out.y, small_data.y)


def test_clean_accuracy_survives_defender_band(fixture_data, fixture_model):
    _, train, test = fixture_data
    params = fixture_model[0]
    fd = FilteredDetector(params, spectral.choose_band(train, 0.99), test.sample_period)
    clean, filtered = det.accuracy(params, test), fd.accuracy(test)
    for key in ("class0", "class1"):
        assert abs(clean[key] - filtered[key]) <= 5.0


def test_filter_recovers_unconstrained_patch(fixture_data, fixture_model, fixture_sync_patch):
    _, train, test = fixture_data
    params = fixture_model[0]
    fd = FilteredDetector(params, spectral.choose_band(train, 0.99), test.sample_period)
    assert attack.evaluate_patch(params, test, fixture_sync_patch)["class1"] <= 5.0
    patched = test.X + np.where(test.y[:, None] == 1, fixture_sync_patch.delta, 0.0)
    assert fd.accuracy(test, patched)["class1"] >= det.accuracy(params, test)["class1"] - 5.0


def test_robustness_curve_rows(small_data, small_model):
    budget = attack.PatchBudget(iterations=1)
    rows = defense.robustness_curve(small_model, small_model, small_data, [1e-9, 0.5], budget)
    assert [r[0] for r in rows] == [1e-9, 0.5]
    clean = det.accuracy(small_model, small_data)
    assert rows[0][1] == rows[0][2] == clean["class1"]
    assert rows[0][3] == clean["overall"]
    assert rows == defense.robustness_curve(small_model, small_model, small_data, [1e-9, 0.5], budget)
    with pytest.raises(ConfigError):
        defense.robustness_curve(small_model, small_model, small_data, [0.5, 0.1], budget)
