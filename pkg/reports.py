"""Montagem e gravacao dos artefatos de saida.

Tabelas de testes, MF-DFA e MF-DCCA (CSV), dados de figura (CSV por serie/par)
e o report.json deterministico validado contra schema/run_report_schema.json.
Este modulo so manipula dicionarios e DataFrames; os calculos ficam nos
modulos de analise.
"""
import json
import math
import os
from typing import Iterable, List, Optional

import numpy as np
import pandas as pd
from jsonschema import ValidationError, validate

from logging_setup import get_logger

logger = get_logger(__name__)

SCHEMA_DIR = os.path.join(os.path.dirname(__file__), 'schema')
REPORT_SCHEMA_PATH = os.path.join(SCHEMA_DIR, 'run_report_schema.json')
CONFIG_SCHEMA_PATH = os.path.join(SCHEMA_DIR, 'analysis_config_schema.json')

SIGNIFICANCE_LEVEL = 0.05


def float_or_none(value) -> Optional[float]:
    if value is None:
        return None
    value = float(value)
    return value if math.isfinite(value) else None


def float_list(values) -> List[Optional[float]]:
    return [float_or_none(v) for v in np.asarray(values, dtype=float).ravel()]


def write_json(obj: object, path: str) -> str:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(obj, f, ensure_ascii=False, indent=2, sort_keys=True, allow_nan=False)
        f.write('\n')
    logger.info('Salvo: %s', path)
    return path


def write_csv(frame: pd.DataFrame, path: str) -> str:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    frame.to_csv(path, index=False, float_format='%.10g')
    logger.info('Tabela salva: %s (linhas=%d)', path, len(frame))
    return path


def load_schema(schema_path: str) -> dict:
    with open(schema_path, 'r', encoding='utf-8') as f:
        return json.load(f)


def validar_com_schema(obj: object, schema_path: str = REPORT_SCHEMA_PATH) -> bool:
    try:
        validate(instance=obj, schema=load_schema(schema_path))
        return True
    except FileNotFoundError:
        logger.warning('Schema nao encontrado: %s. Pulando validacao.', schema_path)
        return False
    except ValidationError as e:
        logger.error('Validacao falhou: %s', e.message)
        return False


def stars(p_value: Optional[float], level: float = SIGNIFICANCE_LEVEL) -> str:
    """'*' when the test rejects at ``level``."""
    if p_value is None or not math.isfinite(p_value):
        return ''
    return '*' if p_value < level else ''


def _fmt(value: Optional[float], digits: int = 4) -> str:
    if value is None:
        return 'NA'
    return f'{value:.{digits}f}'


def table1_frame(series_items: Iterable[dict]) -> pd.DataFrame:
    """Rows = (period, series); columns = the battery tests, p-values starred at 5%."""
    rows = []
    for item in series_items:
        battery = item.get('battery') or {}
        tests = battery.get('tests', {})
        row = {'period': item['period'], 'series': item['series']}
        for name in ('runs', 'ljung_box', 'variance_ratio', 'bds', 'mann_kendall'):
            entry = tests.get(name, {})
            p = entry.get('p_value')
            decision_p = entry.get('decision_p_value', p)
            row[name] = 'NA' if p is None else f'{_fmt(p)}{stars(decision_p)}'
        dfa_entry = tests.get('dfa', {})
        row['dfa_hurst'] = _fmt(dfa_entry.get('hurst'))
        row['rejections'] = battery.get('rejections')
        rows.append(row)
    return pd.DataFrame(rows, columns=['period', 'series', 'runs', 'ljung_box', 'variance_ratio',
                                       'bds', 'mann_kendall', 'dfa_hurst', 'rejections'])


def table2_frame(series_items: Iterable[dict]) -> pd.DataFrame:
    rows = []
    for item in series_items:
        attribution = item.get('attribution')
        if not attribution:
            continue
        original = attribution['original']
        rows.append({'period': item['period'], 'series': item['series'], 'variant': 'original',
                     'abs_delta_h': original['abs_delta_h'], 'delta_h': original['delta_h'],
                     'delta_alpha': original['delta_alpha'], 'mdm': original['mdm'],
                     'hurst': original['hurst'], 'n': 1, 'sd_delta_alpha': 0.0})
        for variant in ('shuffled', 'surrogate'):
            summary = attribution[variant]
            rows.append({'period': item['period'], 'series': item['series'], 'variant': variant,
                         'abs_delta_h': summary['abs_delta_h']['mean'],
                         'delta_h': summary['delta_h']['mean'],
                         'delta_alpha': summary['delta_alpha']['mean'],
                         'mdm': summary['mdm']['mean'], 'hurst': summary['hurst']['mean'],
                         'n': summary['n'], 'sd_delta_alpha': summary['delta_alpha']['sd']})
    return pd.DataFrame(rows, columns=['period', 'series', 'variant', 'abs_delta_h', 'delta_h',
                                       'delta_alpha', 'mdm', 'hurst', 'n', 'sd_delta_alpha'])


def table3_frame(pair_items: Iterable[dict]) -> pd.DataFrame:
    rows = []
    for item in pair_items:
        spectrum = item.get('spectrum')
        rho = item.get('rho')
        if not spectrum:
            continue
        share = None
        if rho:
            decisions = rho['decision']
            share = sum(d != 'not_significant' for d in decisions) / len(decisions)
        rows.append({'period': item['period'], 'pair': item['pair'], 'hurst_xy': spectrum['hurst'],
                     'abs_delta_h_xy': spectrum['abs_delta_h'], 'delta_h_xy': spectrum['delta_h'],
                     'delta_alpha_xy': spectrum['delta_alpha'], 'mdm_xy': spectrum['mdm'],
                     'significant_share': share})
    return pd.DataFrame(rows, columns=['period', 'pair', 'hurst_xy', 'abs_delta_h_xy', 'delta_h_xy',
                                       'delta_alpha_xy', 'mdm_xy', 'significant_share'])


def spectrum_figure_frame(item: dict) -> pd.DataFrame:
    """Per-q panels (h, tau, alpha, f) for the original and ensemble means."""
    attribution = item['attribution']
    frames = []
    panels = [('original', attribution['original'])]
    panels += [(v, attribution[v]['curves']) for v in ('shuffled', 'surrogate')]
    for variant, curves in panels:
        frame = pd.DataFrame({'q': curves['q'], 'h': curves['h'], 'tau': curves['tau'],
                              'alpha': curves['alpha'], 'f_alpha': curves['f_alpha']})
        frame.insert(0, 'variant', variant)
        frame.insert(0, 'period', item['period'])
        frames.append(frame)
    return pd.concat(frames, ignore_index=True)


def rho_figure_frame(item: dict) -> pd.DataFrame:
    rho = item['rho']
    frame = pd.DataFrame({'s': rho['scales'], 'rho': rho['rho'], 'lower': rho['lower'],
                          'upper': rho['upper'], 'decision': rho['decision']})
    frame.insert(0, 'period', item['period'])
    return frame


def _safe_name(name: str) -> str:
    return ''.join(c if c.isalnum() or c in '-_.' else '_' for c in name)


def write_outputs(report: dict, output_dir: str) -> List[str]:
    """Write report.json, the three tables and the figure CSVs."""
    written = []
    series_items = [i for i in report['series'] if not i.get('error')]
    pair_items = [i for i in report['pairs'] if not i.get('error')]
    written.append(write_json(report, os.path.join(output_dir, 'report.json')))
    written.append(write_csv(table1_frame(series_items), os.path.join(output_dir, 'table1_tests.csv')))
    written.append(write_csv(table2_frame(series_items), os.path.join(output_dir, 'table2_mfdfa.csv')))
    written.append(write_csv(table3_frame(pair_items), os.path.join(output_dir, 'table3_mfdcca.csv')))

    by_series = {}
    for item in series_items:
        if item.get('attribution'):
            by_series.setdefault(item['series'], []).append(spectrum_figure_frame(item))
    for name, frames in sorted(by_series.items()):
        path = os.path.join(output_dir, 'fig_spectrum', f'{_safe_name(name)}.csv')
        written.append(write_csv(pd.concat(frames, ignore_index=True), path))

    by_pair = {}
    for item in pair_items:
        if item.get('rho'):
            by_pair.setdefault(item['pair'], []).append(rho_figure_frame(item))
    for name, frames in sorted(by_pair.items()):
        path = os.path.join(output_dir, 'fig_rho', f'{_safe_name(name)}.csv')
        written.append(write_csv(pd.concat(frames, ignore_index=True), path))
    return written
