import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from errors import ScalingError
from scaling_core import (FluctuationSurface, QGrid, ScaleGrid, ScalingConfig, detrend_residuals,
                          detrended_covariances, dfa, fit_scaling, fluctuation_surface, profile,
                          segment, segment_covariance)
from synth import SynthSpec, generate

finite = st.floats(min_value=-1e3, max_value=1e3, allow_nan=False, allow_infinity=False)


def gaussian(n, seed=0):
    return np.random.default_rng(seed).standard_normal(n)


def test_profile_is_cumulative_deviation():
    np.testing.assert_allclose(profile([1.0, 2.0, 3.0]), [-1.0, -1.0, 0.0])


def test_segment_forward_and_backward():
    seq = np.arange(10.0)
    segs = segment(seq, 3, bidirectional=True)
    assert segs.shape == (6, 3)
    np.testing.assert_array_equal(segs[0], [0, 1, 2])
    np.testing.assert_array_equal(segs[2], [6, 7, 8])
    np.testing.assert_array_equal(segs[3], [1, 2, 3])
    np.testing.assert_array_equal(segs[5], [7, 8, 9])
    assert segment(seq, 3, bidirectional=False).shape == (3, 3)


def test_segment_longer_than_series_rejected():
    with pytest.raises(ScalingError):
        segment(np.arange(5.0), 6)


def test_segment_covariance_worked_example():
    assert segment_covariance([1.0, 2.0, 3.0], [3.0, 2.0, 1.0]) == pytest.approx(10.0 / 3.0)


def test_detrend_removes_polynomial_of_its_order():
    i = np.arange(12.0)
    rx, _ = detrend_residuals(3.0 + 2.0 * i, 3.0 + 2.0 * i, 1)
    np.testing.assert_allclose(rx, 0.0, atol=1e-10)
    quad = 1.0 - i + 0.5 * i ** 2
    rq, _ = detrend_residuals(quad, quad, 2)
    np.testing.assert_allclose(rq, 0.0, atol=1e-9)


def test_detrend_rejects_underdetermined_and_mismatched():
    with pytest.raises(ScalingError):
        detrend_residuals(np.arange(3.0), np.arange(3.0), 2)
    with pytest.raises(ScalingError):
        detrend_residuals(np.arange(5.0), np.arange(6.0), 1)


@settings(max_examples=50, deadline=None)
@given(arrays(float, 16, elements=finite), finite, finite)
def test_residuals_invariant_to_added_linear_trend(seg, a, b):
    shifted = seg + a + b * np.arange(16.0)
    r1, _ = detrend_residuals(seg, seg, 1)
    r2, _ = detrend_residuals(shifted, shifted, 1)
    np.testing.assert_allclose(r1, r2, atol=1e-7 * (1.0 + abs(a) + 16 * abs(b) + np.abs(seg).max()))


@settings(max_examples=30, deadline=None)
@given(arrays(float, 40, elements=finite), arrays(float, 40, elements=finite))
def test_covariance_antisymmetric_in_sign_of_y(x, y):
    f = detrended_covariances(x, y, 10, 1, True)
    g = detrended_covariances(x, -y, 10, 1, True)
    np.testing.assert_allclose(f, -g, atol=1e-9 * (1.0 + np.abs(f).max()))


def test_scale_grid_log_spaced_defaults():
    grid = ScaleGrid.log_spaced(1000)
    assert grid.scales[0] == 30
    assert grid.scales[-1] == 200
    assert list(grid.scales) == sorted(set(grid.scales))


def test_scale_grid_validation():
    with pytest.raises(ScalingError, match='N/5'):
        ScaleGrid.explicit([30, 100, 300]).validate(1000)
    assert ScaleGrid.explicit([30, 100, 300]).validate(1000, allow_large=True)
    with pytest.raises(ScalingError):
        ScaleGrid.explicit([4, 10]).validate(1000, order=3)
    with pytest.raises(ScalingError):
        ScaleGrid.explicit([10, 10])
    with pytest.raises(ScalingError, match='curto'):
        ScaleGrid.log_spaced(100)


def test_q_grid_must_contain_zero_and_two():
    grid = QGrid.from_range(-4, 4, 0.25)
    assert len(grid) == 33
    assert grid.symmetric
    assert grid.index(2.0) == 24
    with pytest.raises(ScalingError):
        QGrid((-1.0, 1.0, 3.0))


def test_scaling_config_rejects_bad_order():
    with pytest.raises(ScalingError):
        ScalingConfig(detrend_order=4)


def test_cross_mode_with_same_series_equals_single_mode():
    x = gaussian(4096, seed=3)
    qs = QGrid.from_range(-4, 4, 0.25)
    ss = ScaleGrid.log_spaced(x.size)
    single = fluctuation_surface(x, qs, ss)
    cross = fluctuation_surface(x, qs, ss, other=x.copy())
    assert single.mode == 'single' and cross.mode == 'cross'
    np.testing.assert_array_equal(single.values, cross.values)


def test_single_mode_h2_equals_dfa_exactly():
    x = gaussian(4096, seed=4)
    qs = QGrid.from_range(-4, 4, 0.25)
    ss = ScaleGrid.log_spaced(x.size)
    scaling = fit_scaling(fluctuation_surface(x, qs, ss))
    classic = dfa(x, ss)
    assert scaling.hurst == classic.hurst
    np.testing.assert_array_equal(fluctuation_surface(x, qs, ss).column(2.0), classic.fluctuations)


def test_surface_independent_of_worker_count():
    x = gaussian(3000, seed=5)
    qs = QGrid.from_range(-2, 2, 0.5)
    ss = ScaleGrid.log_spaced(x.size)
    serial = fluctuation_surface(x, qs, ss, workers=1)
    threaded = fluctuation_surface(x, qs, ss, workers=4)
    np.testing.assert_array_equal(serial.values, threaded.values)


def test_sign_flipped_partner_gives_same_surface():
    x, y = gaussian(2000, seed=6), gaussian(2000, seed=7)
    qs = QGrid.from_range(-2, 2, 0.5)
    ss = ScaleGrid.log_spaced(2000)
    a = fluctuation_surface(x, qs, ss, other=y)
    b = fluctuation_surface(x, qs, ss, other=-y)
    np.testing.assert_allclose(a.values, b.values, rtol=1e-10)


def test_linear_ramp_profile_is_rejected():
    ramp = np.arange(1000.0)
    with pytest.raises(ScalingError, match='indisponivel'):
        fluctuation_surface(ramp, QGrid.from_range(-2, 2, 1), ScaleGrid.log_spaced(1000),
                            integrate=False)


def test_zero_covariance_segments_excluded_only_for_non_positive_q(caplog):
    rng = np.random.default_rng(8)
    walk = np.concatenate([np.arange(500.0), 500.0 + np.cumsum(rng.standard_normal(500))])
    qs = QGrid.from_range(-2, 2, 1)
    ss = ScaleGrid.explicit([50, 100])
    with caplog.at_level(logging.INFO, logger='scaling_core'):
        surface = fluctuation_surface(walk, qs, ss, integrate=False, bidirectional=False)
    assert surface.excluded_counts.tolist() == [10, 5]
    assert np.all(np.isfinite(surface.values))
    assert 'excluidos' in caplog.text
    # q > 0 keeps the zero segments, so F(2) is pulled down relative to the kept half
    f_half = detrended_covariances(walk[500:], walk[500:], 50, 1, False)
    assert surface.column(2.0)[0] == pytest.approx(np.sqrt(np.mean(np.abs(f_half)) / 2.0), rel=1e-6)


def _power_law_surface(qs, ss, slopes):
    s = ss.array.astype(float)
    values = np.vstack([2.0 * s ** h for h in slopes])
    return FluctuationSurface(qs, ss, values, np.ones(len(ss), dtype=int))


def test_fit_recovers_exact_power_law():
    qs = QGrid.from_range(-2, 2, 1)
    ss = ScaleGrid.explicit([10, 20, 40, 80, 160])
    slopes = [0.9, 0.8, 0.7, 0.6, 0.5]
    result = fit_scaling(_power_law_surface(qs, ss, slopes))
    np.testing.assert_allclose(result.h, slopes, atol=1e-12)
    np.testing.assert_allclose(result.r_squared, 1.0)
    np.testing.assert_allclose(result.intercept, np.log(2.0), atol=1e-12)
    assert result.fit_range == (10, 160)
    assert result.all_available


def test_fit_constant_fluctuation_has_unit_r_squared():
    qs = QGrid.from_range(-2, 2, 1)
    ss = ScaleGrid.explicit([10, 20, 40, 80])
    result = fit_scaling(_power_law_surface(qs, ss, [0.0] * 5))
    np.testing.assert_allclose(result.h, 0.0, atol=1e-12)
    np.testing.assert_array_equal(result.r_squared, 1.0)


def test_fit_marks_q_unavailable_with_too_few_scales(caplog):
    qs = QGrid.from_range(-2, 2, 1)
    ss = ScaleGrid.explicit([10, 20, 40, 80, 160])
    surface = _power_law_surface(qs, ss, [0.5] * 5)
    surface.values[0, :2] = np.nan
    with caplog.at_level(logging.WARNING, logger='scaling_core'):
        result = fit_scaling(surface)
    assert not result.available[0]
    assert np.isnan(result.h[0])
    assert result.available[1:].all()
    assert result.n_scales[0] == 3
    assert 'indisponivel' in caplog.text


def test_fit_weights_scales_by_segment_count():
    qs = QGrid.from_range(-2, 2, 1)
    ss = ScaleGrid.explicit([10, 20, 40, 80, 160])
    surface = _power_law_surface(qs, ss, [0.5] * 5)
    surface.values[:, -1] *= 1.5
    surface.segment_counts = np.array([320, 160, 80, 40, 20])
    weighted = fit_scaling(surface)
    uniform = fit_scaling(surface, weighting='uniform')
    ols_slope = np.polyfit(np.log(ss.array), np.log(surface.values[0]), 1)[0]
    assert uniform.h[0] == pytest.approx(ols_slope, abs=1e-12)
    assert abs(weighted.h[0] - 0.5) < abs(uniform.h[0] - 0.5)
    assert np.all(weighted.stderr > 0)


def test_unknown_fit_weighting_rejected():
    with pytest.raises(ScalingError, match='fit_weighting'):
        ScalingConfig(fit_weighting='ols')
    qs = QGrid.from_range(-2, 2, 1)
    ss = ScaleGrid.explicit([10, 20, 40, 80])
    with pytest.raises(ScalingError, match='fit_weighting'):
        fit_scaling(_power_law_surface(qs, ss, [0.5] * 5), weighting='ols')


def test_short_series_grid_collapse_is_logged(caplog):
    with caplog.at_level(logging.WARNING, logger='scaling_core'):
        grid = ScalingConfig().scale_grid(150)
    assert grid.scales == (30,)
    assert 'N=150 gera so 1 escala(s)' in caplog.text
    caplog.clear()
    with caplog.at_level(logging.WARNING, logger='scaling_core'):
        ScalingConfig().scale_grid(4096)
    assert caplog.text == ''


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.floats(1e-3, 1e3), st.booleans())
def test_h_invariant_to_rescaling_the_series(seed, c, flip):
    x = gaussian(600, seed)
    factor = -c if flip else c
    qs = QGrid.from_range(-2, 2, 1)
    ss = ScaleGrid.log_spaced(x.size)
    base = fit_scaling(fluctuation_surface(x, qs, ss))
    scaled = fit_scaling(fluctuation_surface(factor * x, qs, ss))
    np.testing.assert_allclose(scaled.h, base.h, atol=1e-9)
    np.testing.assert_allclose(scaled.intercept - base.intercept, np.log(c), atol=1e-9)


def test_surface_export_to_csv(tmp_path):
    x = gaussian(1000)
    surface = fluctuation_surface(x, QGrid.from_range(-2, 2, 1), ScaleGrid.log_spaced(1000))
    path = surface.to_csv(str(tmp_path / 'f.csv'), log=True)
    with open(path, encoding='utf-8') as f:
        text = f.read().splitlines()
    assert text[0] == 's,q=-2,q=-1,q=0,q=1,q=2'
    assert len(text) == len(surface.ss) + 1


@pytest.mark.parametrize('hurst', [0.3, 0.7])
def test_dfa_recovers_fgn_hurst_single_seed(hurst):
    x = generate(SynthSpec('fgn', 4096, seed=11, params={'hurst': hurst}))
    assert dfa(x).hurst == pytest.approx(hurst, abs=0.1)


@pytest.mark.slow
@pytest.mark.parametrize('hurst', [0.3, 0.5, 0.7])
def test_fgn_hurst_recovery_over_seeds(hurst):
    config = ScalingConfig()
    estimates = []
    for seed in range(20):
        x = generate(SynthSpec('fgn', 10000, seed=seed, params={'hurst': hurst}))
        surface = fluctuation_surface(x, config.q_grid(), config.scale_grid(len(x)))
        estimates.append(fit_scaling(surface).hurst)
    errors = np.abs(np.array(estimates) - hurst)
    assert errors.mean() <= 0.03
    assert errors.max() <= 0.05
