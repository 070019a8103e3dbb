import math

import numpy as np
import pytest
from scipy import stats

from dade.calibration import (CalibrationTable, calibrate, empirical_upper_quantile, load_calibration, pair_ratios,
                              sample_pairs, save_calibration, validate_calibration)
from dade.errors import CalibrationError, FormatError, InvalidInputError
from dade.estimator import checkpoints
from dade.transform import apply_transform, fit_random_orthogonal


@pytest.fixture(scope="module")
def cal64(aniso64):
    return calibrate(aniso64.pca, aniso64.x_pca, 0.1, 8, n_pairs=20_000, seed=0)


def test_pairs_with_two_vectors():
    pairs = sample_pairs(2, 500, 0)
    assert {tuple(p) for p in pairs.tolist()} == {(0, 1), (1, 0)}


def test_pairs_are_deterministic_and_distinct():
    a, b = sample_pairs(100, 1000, 7), sample_pairs(100, 1000, 7)
    assert np.array_equal(a, b)
    assert np.all(a[:, 0] != a[:, 1])
    assert not np.array_equal(a, sample_pairs(100, 1000, 8))


def test_pairs_first_index_uniform():
    pairs = sample_pairs(1000, 100_000, 3)
    counts = np.bincount(pairs[:, 0] // 100, minlength=10)
    assert stats.chisquare(counts).pvalue > 0.01


def test_pairs_second_index_uniform():
    pairs = sample_pairs(1000, 100_000, 4)
    counts = np.bincount(pairs[:, 1] // 100, minlength=10)
    assert stats.chisquare(counts).pvalue > 0.01


def test_pairs_errors():
    with pytest.raises(InvalidInputError):
        sample_pairs(1, 10, 0)
    with pytest.raises(InvalidInputError):
        sample_pairs(10, 0, 0)


def test_upper_quantile_rank():
    values = np.arange(1.0, 11.0)
    assert empirical_upper_quantile(values, 0.9) == 9.0
    assert empirical_upper_quantile(values, 0.95) == 10.0
    assert empirical_upper_quantile(values, 0.5) == 5.0


def test_table_shape(cal64):
    assert cal64.checkpoints == tuple(range(8, 64, 8))
    assert len(cal64.epsilons) == len(cal64.checkpoints)
    assert cal64.dim == 64 and cal64.sample_count == 20_000
    assert all(np.diff(cal64.epsilons) <= 0)


def test_default_parameters(aniso128, aniso128_cal):
    assert aniso128_cal.p_s == 0.1 and aniso128_cal.delta_d == 32
    assert aniso128_cal.checkpoints == (32, 64, 96)
    assert aniso128_cal.sample_count == 100_000


def test_quantile_definition_on_sample(aniso64, cal64):
    pairs = sample_pairs(len(aniso64.x_pca), 20_000, 0)
    ratios, keep = pair_ratios(aniso64.pca, aniso64.x_pca, pairs, cal64.checkpoints)
    n = int(keep.sum())
    exceed = (ratios > np.asarray(cal64.raw_epsilons)).mean(axis=0)
    assert np.all(exceed <= 0.1)
    assert np.all(exceed > 0.1 - 1.0 / n)


def test_full_dimension_ratio_is_zero(aniso64):
    pairs = sample_pairs(len(aniso64.x_pca), 2000, 5)
    ratios, _ = pair_ratios(aniso64.pca, aniso64.x_pca, pairs, [64])
    assert np.abs(ratios).max() < 1e-12


def test_median_ratio_near_zero_on_isotropic_data():
    x = np.random.default_rng(0).standard_normal((10_000, 32))
    t = fit_random_orthogonal(32, 1, x)
    xr = apply_transform(t, x)
    cal = calibrate(t, xr, 0.5, 8, n_pairs=50_000, seed=2)
    assert max(abs(e) for e in cal.raw_epsilons) < 0.05


def test_smaller_p_s_gives_larger_bounds(aniso64):
    lo = calibrate(aniso64.pca, aniso64.x_pca, 0.05, 8, n_pairs=20_000)
    hi = calibrate(aniso64.pca, aniso64.x_pca, 0.3, 8, n_pairs=20_000)
    assert all(a >= b for a, b in zip(lo.epsilons, hi.epsilons))


def test_calibrate_is_deterministic(aniso64, cal64):
    again = calibrate(aniso64.pca, aniso64.x_pca, 0.1, 8, n_pairs=20_000, seed=0)
    assert again == cal64
    assert again.raw_epsilons == cal64.raw_epsilons


def test_lower_quantile_diagnostic(cal64):
    assert all(lo < hi for lo, hi in zip(cal64.lower_epsilons, cal64.raw_epsilons))


def test_holdout_exceedance(aniso64, cal64):
    rates = validate_calibration(cal64, aniso64.pca, aniso64.x_pca, n_holdout=50_000, seed=1)
    # calibrated on 20k pairs here, so widen by the calibration sample's own noise
    slack = 3 * math.sqrt(0.09 / 50_000 + 0.09 / 20_000)
    assert np.all(np.abs(rates - 0.1) <= slack)


def test_doubled_bounds_lower_exceedance(aniso64, cal64):
    doubled = cal64.with_epsilons([2 * e for e in cal64.epsilons])
    rates = validate_calibration(doubled, aniso64.pca, aniso64.x_pca, n_holdout=20_000, seed=1)
    assert np.all(rates < 0.1)


def test_identical_data_cannot_be_calibrated():
    x = np.ones((50, 8), dtype=np.float32)
    x[0, 0] = 2.0
    t = fit_random_orthogonal(8, 0, np.random.default_rng(0).standard_normal((20, 8)))
    with pytest.raises(CalibrationError):
        calibrate(t, x, 0.1, 4, n_pairs=1000)


def test_invalid_p_s(aniso64):
    for p in (0.0, 1.0, -0.1):
        with pytest.raises(InvalidInputError):
            calibrate(aniso64.pca, aniso64.x_pca, p, 8, n_pairs=100)


def test_step_at_least_dimension_has_no_checkpoints(small):
    cal = calibrate(small.pca, small.x_pca, 0.1, 32, n_pairs=100)
    assert cal.checkpoints == () and cal.epsilons == ()


def test_checkpoints_cover_multiples(small):
    cal = calibrate(small.pca, small.x_pca, 0.1, 5, n_pairs=500)
    assert cal.checkpoints == tuple(checkpoints(32, 5)[:-1]) == (5, 10, 15, 20, 25, 30)


def test_round_trip(tmp_path, cal64):
    path = tmp_path / "cal.bin"
    save_calibration(cal64, path)
    raw = path.read_bytes()
    assert len(raw) == 16 + 12 * len(cal64.checkpoints)
    back = load_calibration(path, dim=64)
    assert back.p_s == cal64.p_s and back.delta_d == cal64.delta_d
    assert back.checkpoints == cal64.checkpoints and back.epsilons == cal64.epsilons


def test_truncated_file(tmp_path, cal64):
    path = tmp_path / "cal.bin"
    save_calibration(cal64, path)
    path.write_bytes(path.read_bytes()[:-3])
    with pytest.raises(FormatError):
        load_calibration(path)


def test_table_requires_matching_lengths():
    with pytest.raises(InvalidInputError):
        CalibrationTable(0.1, 8, (8, 16), (0.1,))
