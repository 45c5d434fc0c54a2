"""Configuracao: variaveis de ambiente (.env) e arquivo JSON de analise.

O arquivo de analise e plano, com unidades nos nomes das chaves. Ele e
validado pelo schema e depois semanticamente; qualquer violacao vira
ConfigError antes de qualquer calculo. O config efetivo (com defaults) e
ecoado no manifesto e identificado pelo seu SHA-256.
"""
import hashlib
import json
import os
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import pandas as pd
from dotenv import load_dotenv
from jsonschema import ValidationError, validate

from errors import ConfigError, ScalingError
from logging_setup import get_logger
from multifractal import AttributionConfig
from rwtests import BatteryConfig
from scaling_core import QGrid, ScalingConfig

# real environment variables win over .env
load_dotenv(override=False)

logger = get_logger(__name__)

OUTPUT_DIR = os.getenv('MFA_OUTPUT_DIR', 'resultados')
WORKERS = int(os.getenv('MFA_WORKERS', '1'))
MASTER_SEED = int(os.getenv('MFA_SEED', '20200101'))
METRICS_PORT = os.getenv('MFA_METRICS_PORT')

CONFIG_SCHEMA_PATH = os.path.join(os.path.dirname(__file__), 'schema', 'analysis_config_schema.json')

DEFAULTS = {
    'pairs': [],
    'q_min': -4.0,
    'q_max': 4.0,
    'q_step': 0.25,
    'scale_min_obs': 30,
    'scale_max_obs': None,
    'scale_max_fraction': 0.2,
    'scale_count': 20,
    'detrend_order': 1,
    'bidirectional': True,
    'fit_weighting': 'segments',
    'min_period_obs': 150,
    'drop_zero_volume': True,
    'ensemble_size': 50,
    'shuffle_ensemble_size': None,
    'floor_ensemble_size': 20,
    'iaaft_max_iterations': 1000,
    'iaaft_tolerance': 1e-8,
    'margin_sd': 2.0,
    'temporal_width': 'abs_delta_h',
    'distribution_width': 'delta_alpha',
    'rho_confidence': 0.95,
    'rho_sims': 1000,
    'rho_one_sided': False,
    'ljung_box_lags': None,
    'vr_horizons': [2, 4, 8, 16],
    'bds_dims': [2, 3, 4, 5],
    'bds_eps_factor': 0.7,
    'run_battery': True,
    'run_attribution': True,
}

INPUT_DEFAULTS = {
    'kind': 'generic',
    'timezone': 'UTC',
    'time_column': 'timestamp',
    'value_column': 'value',
    'delimiter': ',',
}


@dataclass(frozen=True)
class InputSpec:
    path: str
    label: str
    kind: str = 'generic'
    timezone: str = 'UTC'
    time_column: str = 'timestamp'
    value_column: str = 'value'
    delimiter: str = ','
    resolved_path: str = ''


@dataclass(frozen=True)
class PeriodSpec:
    label: str
    start: pd.Timestamp
    end: pd.Timestamp


@dataclass
class AnalysisConfig:
    inputs: List[InputSpec]
    periods: List[PeriodSpec]
    pairs: List[Tuple[str, str]]
    settings: dict
    effective: dict = field(default_factory=dict)

    @property
    def master_seed(self) -> int:
        return int(self.effective['master_seed'])

    def scaling_config(self, workers: int = 1) -> ScalingConfig:
        s = self.settings
        return ScalingConfig(q_min=s['q_min'], q_max=s['q_max'], q_step=s['q_step'],
                             scale_min=s['scale_min_obs'], scale_max=s['scale_max_obs'],
                             scale_max_fraction=s['scale_max_fraction'],
                             scale_count=s['scale_count'], detrend_order=s['detrend_order'],
                             bidirectional=s['bidirectional'], fit_weighting=s['fit_weighting'],
                             workers=workers)

    def battery_config(self) -> BatteryConfig:
        s = self.settings
        return BatteryConfig(ljung_box_lags=s['ljung_box_lags'], vr_horizons=tuple(s['vr_horizons']),
                             bds_dims=tuple(s['bds_dims']), bds_eps_factor=s['bds_eps_factor'],
                             dfa_scale_min=s['scale_min_obs'], dfa_order=s['detrend_order'],
                             bidirectional=s['bidirectional'], dfa_weighting=s['fit_weighting'])

    def attribution_config(self, master_seed: int, workers: int = 1) -> AttributionConfig:
        s = self.settings
        return AttributionConfig(scaling=self.scaling_config(), ensemble_size=s['ensemble_size'],
                                 shuffle_ensemble_size=s['shuffle_ensemble_size'],
                                 floor_ensemble_size=s['floor_ensemble_size'],
                                 max_iterations=s['iaaft_max_iterations'],
                                 convergence_tol=s['iaaft_tolerance'], margin_sd=s['margin_sd'],
                                 temporal_width=s['temporal_width'],
                                 distribution_width=s['distribution_width'],
                                 master_seed=master_seed, workers=workers)

    def config_hash(self) -> str:
        return config_hash(self.effective)


def config_hash(effective: dict) -> str:
    canonical = json.dumps(effective, sort_keys=True, separators=(',', ':'), ensure_ascii=True)
    return hashlib.sha256(canonical.encode('utf-8')).hexdigest()


def _timestamp(value: str, where: str) -> pd.Timestamp:
    try:
        ts = pd.Timestamp(value)
    except (ValueError, TypeError) as e:
        raise ConfigError(f'{where}: timestamp invalido {value!r}') from e
    return ts.tz_localize('UTC') if ts.tz is None else ts.tz_convert('UTC')


def _check_semantics(raw: dict):
    labels = [i['label'] for i in raw['inputs']]
    duplicated = sorted({x for x in labels if labels.count(x) > 1})
    if duplicated:
        raise ConfigError(f'labels de entrada duplicados: {duplicated}')
    if not raw['periods']:
        raise ConfigError('lista de periodos vazia')
    period_labels = [p['label'] for p in raw['periods']]
    if len(set(period_labels)) != len(period_labels):
        raise ConfigError(f'labels de periodo duplicados: {period_labels}')
    spans = []
    for p in raw['periods']:
        start = _timestamp(p['start'], f'periodo {p["label"]}')
        end = _timestamp(p['end'], f'periodo {p["label"]}')
        if not start < end:
            raise ConfigError(f'periodo {p["label"]}: inicio {p["start"]} nao e anterior ao fim {p["end"]}')
        spans.append((start, end, p['label']))
    spans.sort()
    for (s1, e1, l1), (s2, _, l2) in zip(spans, spans[1:]):
        if s2 < e1:
            raise ConfigError(f'periodos {l1} e {l2} se sobrepoem')
    for x, y in raw['pairs']:
        missing = [lab for lab in (x, y) if lab not in labels]
        if missing:
            raise ConfigError(f'par ({x}, {y}) referencia labels desconhecidos: {missing}')
    try:
        QGrid.from_range(raw['q_min'], raw['q_max'], raw['q_step'])
    except ScalingError as e:
        raise ConfigError(f'grade q invalida: {e}') from e
    if raw['scale_max_obs'] is not None and raw['scale_max_obs'] <= raw['scale_min_obs']:
        raise ConfigError('scale_max_obs deve ser maior que scale_min_obs')
    if raw['scale_min_obs'] < max(4, raw['detrend_order'] + 2):
        raise ConfigError(f'scale_min_obs abaixo de max(4, ordem+2) para ordem {raw["detrend_order"]}')


def build_config(raw: dict, base_dir: str = '.', master_seed: Optional[int] = None) -> AnalysisConfig:
    """Validate a config dict (schema, then semantics) and fill in defaults."""
    try:
        with open(CONFIG_SCHEMA_PATH, 'r', encoding='utf-8') as f:
            schema = json.load(f)
        validate(instance=raw, schema=schema)
    except ValidationError as e:
        path = '/'.join(str(p) for p in e.absolute_path)
        raise ConfigError(f'config invalida em {path or "<raiz>"}: {e.message}') from e

    effective = dict(DEFAULTS)
    effective.update(raw)
    if master_seed is not None:
        effective['master_seed'] = int(master_seed)
    effective.setdefault('master_seed', MASTER_SEED)
    if int(effective['master_seed']) < 0:
        raise ConfigError(f'master_seed deve ser >= 0, recebeu {effective["master_seed"]}')
    effective['inputs'] = [dict(INPUT_DEFAULTS, **i) for i in raw['inputs']]
    effective['pairs'] = [list(p) for p in effective['pairs']]
    for key in ('q_min', 'q_max', 'q_step', 'scale_max_fraction', 'iaaft_tolerance',
                'margin_sd', 'rho_confidence', 'bds_eps_factor'):
        effective[key] = float(effective[key])
    _check_semantics(effective)

    inputs = [InputSpec(resolved_path=i['path'] if os.path.isabs(i['path'])
                        else os.path.normpath(os.path.join(base_dir, i['path'])), **i)
              for i in effective['inputs']]
    periods = [PeriodSpec(p['label'], _timestamp(p['start'], p['label']), _timestamp(p['end'], p['label']))
               for p in effective['periods']]
    pairs = [(x, y) for x, y in effective['pairs']]
    settings = {k: v for k, v in effective.items() if k not in ('inputs', 'periods', 'pairs')}
    return AnalysisConfig(inputs, periods, pairs, settings, effective)


def load_config(path: str, master_seed: Optional[int] = None,
                overrides: Optional[dict] = None) -> AnalysisConfig:
    """Read a JSON config file; ``overrides`` (flat keys) replace file values before validation."""
    if not os.path.exists(path):
        raise ConfigError(f'arquivo de config nao encontrado: {path}')
    try:
        with open(path, 'r', encoding='utf-8') as f:
            raw = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(f'{path}: JSON invalido (linha {e.lineno}): {e.msg}') from e
    if overrides:
        raw.update(overrides)
    config = build_config(raw, os.path.dirname(os.path.abspath(path)), master_seed)
    logger.info('Config carregada: %s (hash=%s)', path, config.config_hash()[:12])
    return config

