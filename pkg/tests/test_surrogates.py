import os
import warnings
from unittest.mock import patch

import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from errors import IaaftConvergenceWarning, SurrogateError
from ingest import TimeSeries
from run_metrics import reset_metrics, snapshot
from scaling_core import dfa
from surrogates import (SurrogateSpec, ensemble, ensemble_frame, iaaft, iaaft_with_diagnostics,
                        make_member, shuffle, spectrum_rmse, write_ensemble_dir,
                        write_ensemble_parquet, write_ensemble_wide)
from synth import SynthSpec, generate


def ar1(n=4096, phi=0.8, seed=0):
    return generate(SynthSpec('ar1', n, seed=seed, params={'phi': phi}))


def test_shuffle_keeps_values_and_timestamps():
    series = ar1(500)
    out = shuffle(series, seed=1)
    assert isinstance(out, TimeSeries)
    assert out.timestamps.equals(series.timestamps)
    np.testing.assert_array_equal(np.sort(out.values), np.sort(series.values))
    assert not np.array_equal(out.values, series.values)
    np.testing.assert_array_equal(shuffle(series, seed=1).values, out.values)


def test_shuffle_of_plain_array_returns_array():
    out = shuffle(np.arange(10.0), seed=3)
    assert isinstance(out, np.ndarray)
    assert sorted(out) == list(np.arange(10.0))


def test_iaaft_preserves_values_and_matches_spectrum():
    series = ar1()
    result = iaaft_with_diagnostics(series, seed=5)
    np.testing.assert_array_equal(np.sort(result.values), np.sort(series.values))
    assert result.rmse <= 1e-2
    assert result.iterations >= 1
    assert spectrum_rmse(result.values, np.abs(np.fft.rfft(series.values))) == result.rmse


@settings(max_examples=25, deadline=None)
@given(arrays(float, st.integers(8, 64),
              elements=st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)),
       st.integers(0, 2 ** 32 - 1))
def test_iaaft_is_a_permutation_of_the_input(values, seed):
    with warnings.catch_warnings():
        warnings.simplefilter('ignore', IaaftConvergenceWarning)
        out = iaaft(values, seed=seed, max_iterations=20)
    np.testing.assert_array_equal(np.sort(out), np.sort(values))


def _lag_one(x):
    x = np.asarray(x) - np.mean(x)
    return float(np.dot(x[:-1], x[1:]) / np.dot(x, x))


@pytest.mark.parametrize('seed', [0, 1, 2])
def test_iaaft_keeps_lag_one_autocorrelation(seed):
    series = ar1(10000, phi=0.8, seed=seed)
    surrogate = iaaft(series, seed=seed + 100)
    assert _lag_one(surrogate.values) == pytest.approx(_lag_one(series.values), abs=0.05)
    assert _lag_one(shuffle(series, seed=seed).values) == pytest.approx(0.0, abs=0.05)


def test_iaaft_constant_input_returned_unchanged():
    result = iaaft_with_diagnostics(np.full(16, 2.5), seed=1)
    np.testing.assert_array_equal(result.values, 2.5)
    assert result.converged and result.iterations == 0


def test_iaaft_rejects_short_series():
    with pytest.raises(SurrogateError, match='N >= 4'):
        iaaft(np.array([1.0, 2.0, 3.0]))


def test_iaaft_non_convergence_warns_but_returns():
    series = ar1(1024)
    with pytest.warns(IaaftConvergenceWarning) as record:
        result = iaaft_with_diagnostics(series, seed=2, max_iterations=1)
    assert not result.converged
    assert record[0].message.iterations == 1
    assert record[0].message.rmse == result.rmse
    np.testing.assert_array_equal(np.sort(result.values), np.sort(series.values))


def test_shuffled_long_memory_noise_loses_persistence():
    series = generate(SynthSpec('fgn', 4096, seed=4, params={'hurst': 0.8}))
    shuffled = shuffle(series, seed=9)
    assert 0.45 <= dfa(shuffled).hurst <= 0.55


def test_spec_validation():
    with pytest.raises(SurrogateError):
        SurrogateSpec('bootstrap')
    with pytest.raises(SurrogateError):
        SurrogateSpec('iaaft', ensemble_size=0)


def test_ensemble_members_depend_only_on_index():
    reset_metrics()
    series = ar1(512)
    spec = SurrogateSpec('iaaft', master_seed=77, ensemble_size=4, max_iterations=200)
    serial = ensemble(series, spec)
    threaded = ensemble(series, spec, workers=3)
    for a, b in zip(serial, threaded):
        np.testing.assert_array_equal(a.values, b.values)
    np.testing.assert_array_equal(make_member(series, spec, 2).values, serial[2].values)
    assert not np.array_equal(serial[0].values, serial[1].values)
    assert snapshot()['surrogates_generated'] == 8


@patch('surrogates.iaaft')
def test_ensemble_failure_names_member_and_seed(mock_iaaft):
    mock_iaaft.side_effect = ValueError('boom')
    spec = SurrogateSpec('iaaft', master_seed=5, ensemble_size=2)
    with pytest.raises(SurrogateError, match=r'membro 0.*master_seed=5.*boom'):
        ensemble(np.arange(16.0), spec)


def test_ensemble_writers(tmp_path):
    series = ar1(64)
    members = ensemble(series, SurrogateSpec('shuffle', master_seed=1, ensemble_size=3))
    paths = write_ensemble_dir(members, str(tmp_path / 'dir'), prefix='sc')
    assert [os.path.basename(p) for p in paths] == ['sc_000.csv', 'sc_001.csv', 'sc_002.csv']
    first = pd.read_csv(paths[0])
    assert list(first.columns) == ['timestamp', 'member_0']

    wide = write_ensemble_wide(members, str(tmp_path / 'wide.csv'))
    assert list(pd.read_csv(wide).columns) == ['timestamp', 'member_0', 'member_1', 'member_2']

    parquet = write_ensemble_parquet(members, str(tmp_path / 'ens.parquet'))
    frame = pd.read_parquet(parquet)
    np.testing.assert_array_equal(frame['member_1'].to_numpy(), members[1].values)
    assert ensemble_frame(members).shape == (64, 4)
