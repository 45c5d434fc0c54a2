"""Pipeline completo: bateria, MF-DFA + atribuicao de fontes, rho_DCCA e MF-DCCA.

Cada (periodo, serie) e (periodo, par) e um item independente com seed
derivada apenas das suas coordenadas; o relatorio e montado em ordem fixa,
entao o resultado nao depende do numero de workers. Falhas de item sao
coletadas e o pipeline segue com os demais.
"""
import os
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from importlib import metadata
from typing import Dict, List, Optional, Tuple

from config import AnalysisConfig
from dcca_rho import rho_with_band
from errors import ConfigError, IngestError
from ingest import TimeSeries, align, prepare_series, read_series, slice_period, volume_changes
from logging_setup import get_logger
from multifractal import analyze_pair, analyze_series, attribute_sources
from parallel import derive_seed, parallel_map
from reports import REPORT_SCHEMA_PATH, validar_com_schema, write_json, write_outputs
from run_metrics import inc_metric, save_metrics, snapshot
from rwtests import battery

logger = get_logger(__name__)

TOOLKIT_VERSION = '1.0.0'
_PACKAGES = ('numpy', 'scipy', 'pandas', 'statsmodels', 'arch')


@dataclass
class RunReport:
    report: dict
    failures: List[dict] = field(default_factory=list)
    schema_valid: bool = True

    @property
    def exit_code(self) -> int:
        return 0 if not self.failures and self.schema_valid else 1


def _versions() -> Dict[str, str]:
    out = {'toolkit': TOOLKIT_VERSION}
    for name in _PACKAGES:
        try:
            out[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            out[name] = 'desconhecida'
    return out


def load_inputs(config: AnalysisConfig) -> Dict[str, TimeSeries]:
    """Read every input and apply its kind-driven transform."""
    prepared = {}
    for spec in config.inputs:
        try:
            raw = read_series(spec.resolved_path, spec.time_column, spec.value_column, spec.label,
                              spec.kind, spec.timezone, spec.delimiter)
        except FileNotFoundError as e:
            raise ConfigError(f'arquivo de entrada nao encontrado: {spec.resolved_path}') from e
        except IngestError as e:
            raise ConfigError(f'entrada {spec.label}: {e}') from e
        if raw.kind == 'volume':
            prepared[spec.label] = volume_changes(raw, drop_zero=config.settings['drop_zero_volume'])
        else:
            prepared[spec.label] = prepare_series(raw)
    return prepared


def plan_items(config: AnalysisConfig, prepared: Dict[str, TimeSeries]) -> Tuple[list, list]:
    """Slice by period and align pairs; too-short slices are configuration errors."""
    minimum = config.settings['min_period_obs']
    series_items, pair_items = [], []
    for period in config.periods:
        sliced = {}
        for label, series in prepared.items():
            part = slice_period(series, period.start, period.end)
            if len(part) < minimum:
                raise ConfigError(
                    f'periodo {period.label}: serie {label} tem {len(part)} observacoes (minimo {minimum})')
            sliced[label] = part
            series_items.append((period.label, label, part))
        for x, y in config.pairs:
            try:
                pair = align(sliced[x], sliced[y], min_length=minimum)
            except IngestError as e:
                raise ConfigError(f'periodo {period.label}: par {x}/{y}: {e}') from e
            pair_items.append((period.label, pair))
    return series_items, pair_items


def _series_job(config: AnalysisConfig, master_seed: int):
    s = config.settings

    def _run(item) -> dict:
        period, label, series = item
        out = {'period': period, 'series': label, 'n': len(series), 'battery': None,
               'spectrum': None, 'attribution': None, 'error': None}
        try:
            if s['run_battery']:
                out['battery'] = battery(series, config.battery_config()).to_dict()
            if s['run_attribution']:
                seed = derive_seed(master_seed, 'attribution', period, label)
                attribution = attribute_sources(series, config.attribution_config(seed))
                out['attribution'] = attribution.to_dict()
                out['spectrum'] = out['attribution']['original']
            else:
                out['spectrum'] = analyze_series(series, config.scaling_config()).spectrum.to_dict()
            inc_metric('series_analyzed')
        except Exception as e:
            out['error'] = f'{type(e).__name__}: {e}'
            inc_metric('items_failed')
            logger.error('Item (%s, %s) falhou: %s', period, label, e)
        return out

    return _run


def _pair_job(config: AnalysisConfig, master_seed: int):
    s = config.settings

    def _run(item) -> dict:
        period, pair = item
        out = {'period': period, 'pair': pair.name, 'x': pair.x.label, 'y': pair.y.label,
               'n': len(pair), 'rho': None, 'spectrum': None, 'error': None}
        try:
            scaling = config.scaling_config()
            grid = scaling.scale_grid(len(pair))
            seed = derive_seed(master_seed, 'rho', period, pair.name)
            profile = rho_with_band(pair, grid, s['detrend_order'], s['bidirectional'],
                                    s['rho_confidence'], s['rho_sims'], seed,
                                    one_sided=s['rho_one_sided'], allow_large=True)
            out['rho'] = profile.to_dict()
            out['spectrum'] = analyze_pair(pair, scaling).spectrum.to_dict()
            inc_metric('pairs_analyzed')
        except Exception as e:
            out['error'] = f'{type(e).__name__}: {e}'
            inc_metric('items_failed')
            logger.error('Par (%s, %s) falhou: %s', period, pair.name, e)
        return out

    return _run


def run_pipeline(config: AnalysisConfig, workers: int = 1) -> RunReport:
    """Deterministic report for ``config``; wall-clock data stays out of it."""
    master_seed = config.master_seed
    prepared = load_inputs(config)
    series_items, pair_items = plan_items(config, prepared)
    logger.info('Pipeline: %d periodo(s), %d item(s) de serie, %d par(es), workers=%d',
                len(config.periods), len(series_items), len(pair_items), workers)

    series_out = parallel_map(_series_job(config, master_seed), series_items, workers)
    pairs_out = parallel_map(_pair_job(config, master_seed), pair_items, workers)

    failures = [{'period': i['period'], 'item': i.get('series') or i.get('pair'), 'error': i['error']}
                for i in series_out + pairs_out if i['error']]
    report = {
        'manifest': {
            'config_hash': config.config_hash(),
            'master_seed': master_seed,
            'versions': _versions(),
            'effective_config': config.effective,
        },
        'series': series_out,
        'pairs': pairs_out,
        'failures': failures,
    }
    valid = validar_com_schema(report, REPORT_SCHEMA_PATH)
    if failures:
        logger.warning('%d item(s) falharam; ver campo failures do relatorio', len(failures))
    return RunReport(report, failures, valid)


def run_and_write(config: AnalysisConfig, output_dir: str, workers: int = 1,
                  config_path: Optional[str] = None) -> RunReport:
    """run_pipeline plus report files, run_manifest.json and metrics."""
    started = datetime.now(timezone.utc)
    clock = time.monotonic()
    result = run_pipeline(config, workers)
    written = write_outputs(result.report, output_dir)
    finished = datetime.now(timezone.utc)
    manifest = {
        'config_path': config_path,
        'config_hash': result.report['manifest']['config_hash'],
        'started_at': started.strftime('%Y-%m-%dT%H:%M:%SZ'),
        'finished_at': finished.strftime('%Y-%m-%dT%H:%M:%SZ'),
        'elapsed_seconds': round(time.monotonic() - clock, 3),
        'workers': workers,
        'schema_valid': result.schema_valid,
        'failures': len(result.failures),
        'outputs': [os.path.relpath(p, output_dir) for p in written],
        'metrics': snapshot(),
    }
    write_json(manifest, os.path.join(output_dir, 'run_manifest.json'))
    save_metrics(output_dir)
    return result
