import numpy as np
import pandas as pd
import pytest

from errors import SynthError
from synth import (SynthSpec, binomial_cascade, cascade_oracle, fgn, fgn_autocovariance, generate,
                   generate_pair)


def lag1(x):
    x = np.asarray(x, dtype=float) - np.mean(x)
    return float(np.dot(x[1:], x[:-1]) / np.dot(x, x))


def test_fgn_autocovariance_of_white_noise():
    np.testing.assert_allclose(fgn_autocovariance(0.5, [0, 1, 2, 10]), [1.0, 0.0, 0.0, 0.0], atol=1e-15)
    assert fgn_autocovariance(0.8, 1) == pytest.approx(2 ** 0.6 - 1.0)


@pytest.mark.parametrize('hurst', [0.5, 0.8])
def test_fgn_lag_one_correlation(hurst):
    x = fgn(8192, hurst, np.random.default_rng(1))
    assert x.shape == (8192,)
    assert lag1(x) == pytest.approx(2 ** (2 * hurst - 1) - 1.0, abs=0.06)
    assert np.std(x) == pytest.approx(1.0, abs=0.1)


def test_cascade_conserves_mass():
    measure = binomial_cascade(10, 0.3, np.random.default_rng(2))
    assert measure.size == 1024
    assert measure.sum() == pytest.approx(1.0)
    assert measure.min() == pytest.approx(0.3 ** 10)
    assert measure.max() == pytest.approx(0.7 ** 10)


def test_even_cascade_is_flat():
    series = generate(SynthSpec('cascade', seed=3, params={'p': 0.5, 'depth': 8}))
    assert len(series) == 256
    np.testing.assert_allclose(series.values, 0.5 ** 8)


def test_cascade_oracle_values():
    assert cascade_oracle(0.3, 2) == pytest.approx(0.8929, abs=1e-4)
    assert cascade_oracle(0.5, 2) == pytest.approx(1.0)
    assert cascade_oracle(0.3, 0) == pytest.approx(-np.log(0.21) / (2 * np.log(2)))
    h = cascade_oracle(0.3, np.linspace(-4, 4, 33))
    assert np.all(np.diff(h) < 0)
    with pytest.raises(SynthError):
        cascade_oracle(1.0, 2)


@pytest.mark.parametrize('model, params, expected', [
    ('ar1', {'phi': 0.6}, 0.6),
    ('ma1', {'theta': 0.5}, 0.4),
    ('gaussian_iid', {}, 0.0),
])
def test_linear_models_lag_one(model, params, expected):
    series = generate(SynthSpec(model, 20000, seed=4, params=params))
    assert lag1(series.values) == pytest.approx(expected, abs=0.03)


def test_logistic_map_stays_in_unit_interval():
    values = generate(SynthSpec('logistic_map', 500, seed=5)).values
    assert np.all((values >= 0.0) & (values <= 1.0))
    np.testing.assert_allclose(values[1:], 4.0 * values[:-1] * (1.0 - values[:-1]))


def test_generation_is_seed_deterministic():
    spec = SynthSpec('student_t', 300, seed=6)
    np.testing.assert_array_equal(generate(spec).values, generate(spec).values)
    other = generate(SynthSpec('student_t', 300, seed=7)).values
    assert not np.array_equal(generate(spec).values, other)


def test_generate_places_series_on_requested_grid():
    series = generate(SynthSpec('gaussian_iid', 10, seed=1), label='mercado',
                      start='2019-11-01T00:00:00Z', freq='1h')
    assert series.label == 'mercado'
    assert series.timestamps[0] == pd.Timestamp('2019-11-01T00:00:00Z')
    assert series.timestamps[-1] == pd.Timestamp('2019-11-01T09:00:00Z')


@pytest.mark.parametrize('kwargs', [
    {'model': 'levy'},
    {'model': 'fgn', 'n': 100, 'params': {'alpha': 1.0}},
    {'model': 'fgn', 'n': 100, 'params': {'hurst': 1.0}},
    {'model': 'ar1', 'n': 100, 'params': {'phi': 1.0}},
    {'model': 'cascade', 'n': 100, 'params': {'depth': 8}},
    {'model': 'cascade', 'params': {'p': 0.0}},
    {'model': 'student_t', 'n': 100, 'params': {'dof': 0.0}},
    {'model': 'gaussian_iid'},
])
def test_spec_validation(kwargs):
    with pytest.raises(SynthError):
        SynthSpec(**kwargs)


def test_cascade_length_follows_depth():
    assert SynthSpec('cascade', params={'depth': 5}).n == 32
    assert SynthSpec('cascade', 32, params={'depth': 5}).n == 32


def test_coupled_pair():
    pair = generate_pair(SynthSpec('coupled_pair', 5000, seed=8, params={'beta': 0.5}), labels=('a', 'b'))
    assert len(pair) == 5000
    assert pair.name == 'a_b'
    residual = pair.y.values - 0.5 * pair.x.values
    assert np.std(residual) == pytest.approx(0.25, abs=0.02)
    with pytest.raises(SynthError, match='coupled_pair'):
        generate_pair(SynthSpec('ar1', 100, seed=1))
    with pytest.raises(SynthError):
        generate(SynthSpec('coupled_pair', 100, seed=1))
