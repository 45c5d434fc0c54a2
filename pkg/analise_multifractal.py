"""Linha de comando da analise multifractal.

Subcomandos:
  analyze    pipeline completo a partir de um arquivo de config JSON
  mfdfa      espectro MF-DFA de uma serie (opcionalmente com atribuicao de fontes)
  mfdcca     espectro MF-DCCA de um par
  rho        coeficiente rho_DCCA com banda critica Monte-Carlo
  tests      bateria de testes de passeio aleatorio
  surrogate  ensemble de series embaralhadas ou IAAFT
  synth      geradores sinteticos (fGn, cascata, AR(1), ...)

Codigos de saida: 0 sucesso, 1 falha parcial de itens, 2 erro de config/uso.
"""
import argparse
import os
import sys
from typing import List, Optional

import pandas as pd

import config as cfg
from dcca_rho import DEFAULT_CONFIDENCE, DEFAULT_SIMS, rho_with_band
from errors import AnalysisError, ConfigError, IngestError, ScalingError, SynthError
from ingest import MIN_ALIGNED, SERIES_KINDS, TimeSeries, align, prepare_series, read_series, write_series_csv
from logging_setup import get_logger, set_level
from multifractal import AttributionConfig, analyze_pair, analyze_series, attribute_sources
from pipeline import run_and_write
from reports import float_list, write_csv, write_json
from run_metrics import save_metrics, start_metrics_server
from rwtests import BatteryConfig, battery
from scaling_core import FIT_WEIGHTINGS, ScalingConfig
from surrogates import (METHODS, SurrogateSpec, ensemble, write_ensemble_dir, write_ensemble_parquet,
                        write_ensemble_wide)
from synth import MODELS, SynthSpec, generate, generate_pair

logger = get_logger(__name__)

EXIT_OK = 0
EXIT_PARTIAL = 1
EXIT_USAGE = 2

# flag -> chave do config de analise (subcomando analyze)
_CONFIG_OVERRIDES = {
    'q_min': 'q_min',
    'q_max': 'q_max',
    'q_step': 'q_step',
    's_min': 'scale_min_obs',
    's_max': 'scale_max_obs',
    'order': 'detrend_order',
    'fit_weighting': 'fit_weighting',
    'confidence': 'rho_confidence',
    'sims': 'rho_sims',
    'ensemble': 'ensemble_size',
}

# flag -> parametro do modelo sintetico
_SYNTH_PARAMS = ('hurst', 'p', 'depth', 'phi', 'theta', 'sigma', 'beta', 'noise_sd', 'dof', 'r', 'burn_in')


def _non_negative_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f'inteiro invalido: {text!r}')
    if value < 0:
        raise argparse.ArgumentTypeError(f'deve ser >= 0, recebeu {value}')
    return value


def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--seed', type=_non_negative_int, default=None,
                        help=f'Seed mestre (default: MFA_SEED ou {cfg.MASTER_SEED})')
    common.add_argument('--output', '-o', default=None,
                        help=f'Diretorio de saida (default: MFA_OUTPUT_DIR ou {cfg.OUTPUT_DIR})')
    common.add_argument('--workers', type=int, default=None, help='Numero de workers (threads)')
    common.add_argument('--log-level', default=None,
                        choices=['DEBUG', 'INFO', 'WARNING', 'ERROR'], type=str.upper)
    common.add_argument('--metrics-port', type=int, default=None,
                        help='Porta do endpoint Prometheus (opcional)')
    return common


def _dfa_parser() -> argparse.ArgumentParser:
    dfa = argparse.ArgumentParser(add_help=False)
    dfa.add_argument('--s-min', type=int, default=None, help='Menor escala (observacoes)')
    dfa.add_argument('--order', type=int, default=None, help='Ordem do polinomio de detrend (1..3)')
    dfa.add_argument('--no-bidirectional', action='store_true',
                     help='Segmentar so do inicio (sem a segunda passagem a partir do fim)')
    dfa.add_argument('--fit-weighting', choices=FIT_WEIGHTINGS, default=None,
                     help='Pesos do ajuste log-log: segments (n. de segmentos por escala) ou uniform')
    return dfa


def _scaling_parser(dfa: argparse.ArgumentParser) -> argparse.ArgumentParser:
    scaling = argparse.ArgumentParser(add_help=False, parents=[dfa])
    scaling.add_argument('--q-min', type=float, default=None)
    scaling.add_argument('--q-max', type=float, default=None)
    scaling.add_argument('--q-step', type=float, default=None)
    scaling.add_argument('--s-max', type=int, default=None, help='Maior escala (default N/5)')
    return scaling


def _input_parser() -> argparse.ArgumentParser:
    inputs = argparse.ArgumentParser(add_help=False)
    inputs.add_argument('--time-column', default='timestamp')
    inputs.add_argument('--value-column', default='value')
    inputs.add_argument('--delimiter', default=',')
    inputs.add_argument('--kind', default='generic', choices=SERIES_KINDS,
                        help='price -> log-retornos, volume -> variacao log do volume')
    inputs.add_argument('--timezone', default='UTC', help="Offset fixo ('+08:00') ou zona IANA")
    return inputs


def build_parser() -> argparse.ArgumentParser:
    common, dfa, inputs = _common_parser(), _dfa_parser(), _input_parser()
    scaling = _scaling_parser(dfa)
    parser = argparse.ArgumentParser(
        prog='analise_multifractal',
        description='Analise multifractal de eficiencia de mercado (MF-DFA, MF-DCCA, rho_DCCA)')
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('analyze', parents=[common, scaling], help='Pipeline completo a partir do config')
    p.add_argument('config', help='Arquivo JSON de configuracao')
    p.add_argument('--confidence', type=float, default=None)
    p.add_argument('--sims', type=int, default=None)
    p.add_argument('--ensemble', type=int, default=None)
    p.set_defaults(handler=cmd_analyze)

    p = sub.add_parser('mfdfa', parents=[common, scaling, inputs], help='Espectro MF-DFA de uma serie')
    p.add_argument('input')
    p.add_argument('--attribution', action='store_true',
                   help='Roda a atribuicao de fontes (embaralhadas, IAAFT e piso gaussiano)')
    p.add_argument('--ensemble', type=int, default=50)
    p.set_defaults(handler=cmd_mfdfa)

    p = sub.add_parser('mfdcca', parents=[common, scaling, inputs], help='Espectro MF-DCCA de um par')
    p.add_argument('input_x')
    p.add_argument('input_y')
    p.add_argument('--min-obs', type=int, default=MIN_ALIGNED)
    p.set_defaults(handler=cmd_mfdcca)

    p = sub.add_parser('rho', parents=[common, scaling, inputs], help='rho_DCCA com banda critica')
    p.add_argument('input_x')
    p.add_argument('input_y')
    p.add_argument('--min-obs', type=int, default=MIN_ALIGNED)
    p.add_argument('--confidence', type=float, default=DEFAULT_CONFIDENCE)
    p.add_argument('--sims', type=int, default=DEFAULT_SIMS)
    p.add_argument('--one-sided', action='store_true', help='So a cauda superior da banda')
    p.set_defaults(handler=cmd_rho)

    p = sub.add_parser('tests', parents=[common, dfa, inputs], help='Bateria de testes de passeio aleatorio')
    p.add_argument('input')
    p.add_argument('--lags', type=int, default=None, help='Lags do Ljung-Box')
    p.set_defaults(handler=cmd_tests)

    p = sub.add_parser('surrogate', parents=[common, inputs], help='Ensemble de surrogates')
    p.add_argument('input')
    p.add_argument('--method', choices=METHODS, default='iaaft')
    p.add_argument('--ensemble', type=int, default=50)
    p.add_argument('--max-iterations', type=int, default=1000)
    p.add_argument('--tolerance', type=float, default=1e-8)
    p.add_argument('--format', choices=('dir', 'wide', 'parquet'), default='dir')
    p.set_defaults(handler=cmd_surrogate)

    p = sub.add_parser('synth', parents=[common], help='Gera uma serie (ou par) sintetica em CSV')
    p.add_argument('--model', choices=MODELS, required=True)
    p.add_argument('--n', type=int, default=None)
    p.add_argument('--label', default=None, help='Nome do arquivo/label (default: modelo)')
    p.add_argument('--start', default='2020-01-01T00:00:00Z', help='Primeiro timestamp (UTC)')
    p.add_argument('--freq', default='5min', help='Espacamento dos timestamps (pandas)')
    for name in _SYNTH_PARAMS:
        p.add_argument(f'--{name.replace("_", "-")}', dest=name, type=float, default=None)
    p.set_defaults(handler=cmd_synth)
    return parser


def _seed(args) -> int:
    seed = cfg.MASTER_SEED if args.seed is None else args.seed
    if seed < 0:
        raise ConfigError(f'seed mestre deve ser >= 0, recebeu {seed}')
    return seed


def _workers(args) -> int:
    return cfg.WORKERS if args.workers is None else args.workers


def _output_dir(args) -> str:
    out = args.output or cfg.OUTPUT_DIR
    os.makedirs(out, exist_ok=True)
    return out


def _scaling_config(args) -> ScalingConfig:
    defaults = ScalingConfig()
    try:
        config = ScalingConfig(
            q_min=defaults.q_min if args.q_min is None else args.q_min,
            q_max=defaults.q_max if args.q_max is None else args.q_max,
            q_step=defaults.q_step if args.q_step is None else args.q_step,
            scale_min=defaults.scale_min if args.s_min is None else args.s_min,
            scale_max=args.s_max,
            detrend_order=defaults.detrend_order if args.order is None else args.order,
            bidirectional=not args.no_bidirectional,
            fit_weighting=args.fit_weighting or defaults.fit_weighting,
            workers=_workers(args))
        config.q_grid()
    except ScalingError as e:
        raise ConfigError(f'parametros de escala invalidos: {e}') from e
    return config


def _scale_grid(config: ScalingConfig, n: int):
    try:
        return config.scale_grid(n)
    except ScalingError as e:
        raise ConfigError(f'grade de escalas invalida para N={n}: {e}') from e


def _load(path: str, args) -> TimeSeries:
    if not os.path.exists(path):
        raise ConfigError(f'arquivo de entrada nao encontrado: {path}')
    raw = read_series(path, args.time_column, args.value_column, kind=args.kind,
                      tz=args.timezone, delimiter=args.delimiter)
    return prepare_series(raw)


def _load_pair(args):
    x = _load(args.input_x, args)
    y = _load(args.input_y, args)
    return align(x, y, min_length=args.min_obs)


def cmd_analyze(args) -> int:
    overrides = {key: getattr(args, flag) for flag, key in _CONFIG_OVERRIDES.items()
                 if getattr(args, flag) is not None}
    if args.no_bidirectional:
        overrides['bidirectional'] = False
    config = cfg.load_config(args.config, args.seed, overrides)
    out = _output_dir(args)
    result = run_and_write(config, out, _workers(args), args.config)
    logger.info('Analise concluida: %s (%d falha(s))', out, len(result.failures))
    return result.exit_code


def _write_spectrum(analysis, out: str, stem: str) -> List[str]:
    written = [write_csv(analysis.spectrum.to_frame(), os.path.join(out, f'{stem}_spectrum.csv')),
               analysis.surface.to_csv(os.path.join(out, f'{stem}_fluctuation.csv'))]
    scaling = analysis.scaling
    summary = analysis.spectrum.to_dict()
    summary['r_squared'] = float_list(scaling.r_squared)
    summary['available'] = [bool(v) for v in scaling.available]
    summary['scales'] = [int(s) for s in analysis.surface.ss]
    written.append(write_json(summary, os.path.join(out, f'{stem}_spectrum.json')))
    return written


def cmd_mfdfa(args) -> int:
    series = _load(args.input, args)
    scaling = _scaling_config(args)
    _scale_grid(scaling, len(series))
    out = _output_dir(args)
    analysis = analyze_series(series, scaling)
    _write_spectrum(analysis, out, series.label)
    if args.attribution:
        attribution = attribute_sources(series, AttributionConfig(
            scaling=scaling, ensemble_size=args.ensemble, master_seed=_seed(args),
            workers=_workers(args)))
        write_json(attribution.to_dict(), os.path.join(out, f'{series.label}_attribution.json'))
    logger.info('MF-DFA %s: h(2)=%.4f, delta_alpha=%.4f', series.label,
                analysis.spectrum.hurst, analysis.spectrum.delta_alpha)
    return EXIT_OK


def cmd_mfdcca(args) -> int:
    pair = _load_pair(args)
    scaling = _scaling_config(args)
    _scale_grid(scaling, len(pair))
    out = _output_dir(args)
    analysis = analyze_pair(pair, scaling)
    _write_spectrum(analysis, out, pair.name)
    logger.info('MF-DCCA %s: h_xy(2)=%.4f', pair.name, analysis.spectrum.hurst)
    return EXIT_OK


def cmd_rho(args) -> int:
    pair = _load_pair(args)
    scaling = _scaling_config(args)
    grid = _scale_grid(scaling, len(pair))
    out = _output_dir(args)
    result = rho_with_band(pair, grid, scaling.detrend_order, scaling.bidirectional, args.confidence,
                           args.sims, _seed(args), _workers(args), args.one_sided,
                           allow_large=True)
    result.to_csv(os.path.join(out, f'{pair.name}_rho.csv'))
    write_json(result.to_dict(), os.path.join(out, f'{pair.name}_rho.json'))
    return EXIT_OK


def cmd_tests(args) -> int:
    series = _load(args.input, args)
    defaults = BatteryConfig()
    config = BatteryConfig(ljung_box_lags=args.lags,
                           dfa_scale_min=defaults.dfa_scale_min if args.s_min is None else args.s_min,
                           dfa_order=defaults.dfa_order if args.order is None else args.order,
                           bidirectional=not args.no_bidirectional,
                           dfa_weighting=args.fit_weighting or defaults.dfa_weighting,
                           workers=_workers(args))
    out = _output_dir(args)
    report = battery(series, config)
    write_json(report.to_dict(), os.path.join(out, f'{series.label}_tests.json'))
    row = dict(report.to_row(), series=series.label)
    write_csv(pd.DataFrame([row]), os.path.join(out, f'{series.label}_tests.csv'))
    failed = [name for name, result in report.tests.items() if result.error]
    return EXIT_PARTIAL if failed else EXIT_OK


def cmd_surrogate(args) -> int:
    series = _load(args.input, args)
    spec = SurrogateSpec(args.method, _seed(args), args.ensemble, args.max_iterations, args.tolerance)
    out = _output_dir(args)
    members = ensemble(series, spec, _workers(args))
    prefix = f'{series.label}_{args.method}'
    if args.format == 'dir':
        write_ensemble_dir(members, os.path.join(out, prefix), prefix)
    elif args.format == 'wide':
        write_ensemble_wide(members, os.path.join(out, f'{prefix}.csv'))
    else:
        write_ensemble_parquet(members, os.path.join(out, f'{prefix}.parquet'))
    return EXIT_OK


def cmd_synth(args) -> int:
    params = {name: getattr(args, name) for name in _SYNTH_PARAMS if getattr(args, name) is not None}
    for name in ('depth', 'burn_in'):
        if name in params:
            params[name] = int(params[name])
    spec = SynthSpec(args.model, args.n, _seed(args), params)
    out = _output_dir(args)
    label = args.label or args.model
    if args.model == 'coupled_pair':
        pair = generate_pair(spec, (f'{label}_x', f'{label}_y'))
        for series in (pair.x, pair.y):
            write_series_csv(series, os.path.join(out, f'{series.label}.csv'))
    else:
        write_series_csv(generate(spec, label, args.start, args.freq), os.path.join(out, f'{label}.csv'))
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.log_level:
        set_level(args.log_level)
    port = args.metrics_port or (int(cfg.METRICS_PORT) if cfg.METRICS_PORT else None)
    if port:
        start_metrics_server(port)
    try:
        code = args.handler(args)
    except (ConfigError, IngestError, SynthError) as e:
        logger.error('Erro de configuracao/entrada: %s', e)
        return EXIT_USAGE
    except AnalysisError as e:
        logger.error('%s falhou: %s', args.command, e)
        code = EXIT_PARTIAL
    if args.command != 'analyze':
        save_metrics(_output_dir(args))
    return code


if __name__ == '__main__':
    sys.exit(main())
