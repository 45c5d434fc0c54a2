import json
import os
from unittest.mock import patch

import numpy as np
import pytest

import run_metrics
from parallel import as_rng, derive_rng, derive_seed, parallel_map
from run_metrics import inc_metric, reset_metrics, save_metrics, snapshot, start_metrics_server


def test_derived_streams_depend_only_on_keys():
    a = derive_rng(1, 'iaaft', 3).standard_normal(5)
    b = derive_rng(1, 'iaaft', 3).standard_normal(5)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, derive_rng(1, 'iaaft', 4).standard_normal(5))
    assert not np.array_equal(a, derive_rng(2, 'iaaft', 3).standard_normal(5))
    assert derive_seed(7, 'rho', 'p1', 'a_b') == derive_seed(7, 'rho', 'p1', 'a_b')
    assert 0 <= derive_seed(7, 'x') < 2 ** 63
    with pytest.raises(ValueError):
        derive_seed(7, -1)


def test_as_rng_passes_generators_through():
    rng = np.random.default_rng(0)
    assert as_rng(rng) is rng
    assert as_rng(5).random() == np.random.default_rng(5).random()


def test_parallel_map_preserves_order():
    def work(i):
        return derive_rng(3, i).random()

    serial = parallel_map(work, range(20), workers=1)
    threaded = parallel_map(work, range(20), workers=4)
    assert serial == threaded
    assert parallel_map(work, [], workers=4) == []


def test_metrics_counters_and_file(tmp_path):
    reset_metrics()
    inc_metric('series_analyzed')
    inc_metric('rho_simulations', 200)
    counters = snapshot()
    assert counters['series_analyzed'] == 1
    assert counters['rho_simulations'] == 200
    assert counters['items_failed'] == 0

    path = save_metrics(str(tmp_path / 'saida'))
    assert os.path.basename(path).startswith('metrics_')
    with open(path, 'r', encoding='utf-8') as f:
        assert json.load(f) == counters
    reset_metrics()
    assert set(snapshot().values()) == {0}


def test_metrics_are_thread_safe():
    reset_metrics()
    parallel_map(lambda _: inc_metric('surrogates_generated'), range(500), workers=8)
    assert snapshot()['surrogates_generated'] == 500


@patch('run_metrics.start_http_server', create=True)
def test_metrics_server_only_with_prometheus(mock_server, monkeypatch):
    monkeypatch.setattr(run_metrics, 'PROMETHEUS_AVAILABLE', True)
    start_metrics_server(9109)
    mock_server.assert_called_once_with(9109)
    monkeypatch.setattr(run_metrics, 'PROMETHEUS_AVAILABLE', False)
    start_metrics_server(9110)
    assert mock_server.call_count == 1
