import json
import os
import threading
from datetime import datetime, timezone

from logging_setup import get_logger

logger = get_logger(__name__)

_METRIC_NAMES = ('series_analyzed', 'pairs_analyzed',
                 'surrogates_generated', 'rho_simulations', 'items_failed')
_METRICS = {name: 0 for name in _METRIC_NAMES}
_LOCK = threading.Lock()

# Prometheus integration (optional)
try:
    from prometheus_client import Counter, Gauge, start_http_server
    PROMETHEUS_AVAILABLE = True
except Exception:
    PROMETHEUS_AVAILABLE = False


if PROMETHEUS_AVAILABLE:
    PROM_COUNTERS = {
        'series_analyzed': Counter('mfa_series_analyzed_total', 'Series analisadas (bateria + MF-DFA)'),
        'pairs_analyzed': Counter('mfa_pairs_analyzed_total', 'Pares analisados (rho + MF-DCCA)'),
        'surrogates_generated': Counter('mfa_surrogates_generated_total', 'Series embaralhadas/IAAFT geradas'),
        'rho_simulations': Counter('mfa_rho_simulations_total', 'Simulacoes Monte-Carlo da banda rho'),
        'items_failed': Counter('mfa_items_failed_total', 'Itens do pipeline que falharam'),
    }
    PROM_LAST_RUN = Gauge('mfa_last_run_timestamp', 'Last run timestamp (unix)')


def inc_metric(name: str, amount: int = 1):
    with _LOCK:
        _METRICS[name] = _METRICS.get(name, 0) + amount
    if PROMETHEUS_AVAILABLE and name in PROM_COUNTERS:
        PROM_COUNTERS[name].inc(amount)


def snapshot() -> dict:
    with _LOCK:
        return dict(_METRICS)


def reset_metrics():
    with _LOCK:
        for name in list(_METRICS):
            _METRICS[name] = 0


def save_metrics(directory: str) -> str:
    """Write the counters to ``metrics_<ts>.json`` inside ``directory``."""
    ts = datetime.now(timezone.utc).strftime('%Y%m%dT%H%M%SZ')
    os.makedirs(directory, exist_ok=True)
    path = os.path.join(directory, f'metrics_{ts}.json')
    try:
        with open(path, 'w', encoding='utf-8') as f:
            json.dump(snapshot(), f, ensure_ascii=False, indent=2)
        logger.info('Metrics saved: %s', path)
    except OSError as e:
        logger.warning('Falha ao salvar metrics: %s', e)
    if PROMETHEUS_AVAILABLE:
        try:
            PROM_LAST_RUN.set(int(datetime.now(timezone.utc).timestamp()))
        except Exception:
            pass
    return path


def start_metrics_server(port: int = 8000):
    if PROMETHEUS_AVAILABLE:
        start_http_server(port)
        logger.info('Prometheus metrics server started on port %d', port)
    else:
        logger.info(
            'prometheus_client not available; metrics endpoint disabled')
