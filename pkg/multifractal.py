"""Quantidades multifractais e de eficiencia a partir de h(q).

tau(q), espectro de Legendre (alpha, f(alpha)), larguras delta_alpha e
delta_h, MDM, e o experimento de atribuicao de fontes (serie original vs.
ensembles embaralhados e IAAFT vs. piso de tamanho finito).
"""
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np
import pandas as pd

from errors import MultifractalError
from ingest import AlignedPair
from logging_setup import get_logger
from parallel import derive_rng, derive_seed, parallel_map
from reports import float_list, float_or_none
from scaling_core import (FluctuationSurface, QGrid, ScalingConfig, ScalingResult,
                          fit_scaling, fluctuation_surface)
from surrogates import SurrogateSpec, ensemble

logger = get_logger(__name__)

DEFAULT_ENSEMBLE_SIZE = 50
DEFAULT_FLOOR_ENSEMBLE_SIZE = 20
DEFAULT_MARGIN_SD = 2.0

VERDICTS = ('distribution_contributes', 'temporal_correlation_contributes',
            'nonlinear_correlation_contributes', 'linear_correlation_contributes')

_SCALARS = ('delta_alpha', 'delta_h', 'abs_delta_h', 'mdm', 'hurst')
WIDTH_MEASURES = ('delta_alpha', 'abs_delta_h')


@dataclass
class MultifractalSpectrum:
    qs: QGrid
    h: np.ndarray
    tau: np.ndarray
    alpha: np.ndarray
    f_alpha: np.ndarray
    delta_alpha: float
    delta_alpha_literal: float
    delta_h: float
    abs_delta_h: float
    mdm: float
    hurst: float
    warnings: List[str] = field(default_factory=list)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({'q': self.qs.array, 'h': self.h, 'tau': self.tau,
                             'alpha': self.alpha, 'f_alpha': self.f_alpha})

    def to_dict(self) -> dict:
        return {
            'q': float_list(self.qs.array),
            'h': float_list(self.h),
            'tau': float_list(self.tau),
            'alpha': float_list(self.alpha),
            'f_alpha': float_list(self.f_alpha),
            'delta_alpha': float_or_none(self.delta_alpha),
            'delta_alpha_literal': float_or_none(self.delta_alpha_literal),
            'delta_h': float_or_none(self.delta_h),
            'abs_delta_h': float_or_none(self.abs_delta_h),
            'mdm': float_or_none(self.mdm),
            'hurst': float_or_none(self.hurst),
            'warnings': list(self.warnings),
        }


@dataclass
class MultifractalAnalysis:
    surface: FluctuationSurface
    scaling: ScalingResult
    spectrum: MultifractalSpectrum


def _h_array(scaling) -> np.ndarray:
    return np.asarray(scaling.h if isinstance(scaling, ScalingResult) else scaling, dtype=float)


def mass_exponents(scaling, qs: Optional[QGrid] = None) -> np.ndarray:
    """tau(q) = q h(q) - 1."""
    h = _h_array(scaling)
    q = (qs or scaling.qs).array
    if h.shape != q.shape:
        raise MultifractalError(f'h(q) com {h.size} valores para {q.size} ordens q')
    return q * h - 1.0


def legendre_spectrum(tau, qs: QGrid):
    """alpha = d tau / d q (central differences, one-sided at the ends); f = q alpha - tau."""
    tau = np.asarray(tau, dtype=float)
    q = qs.array
    if q.size < 3:
        raise MultifractalError('espectro de Legendre requer pelo menos 3 ordens q')
    alpha = np.gradient(tau, q)
    f_alpha = q * alpha - tau
    bad = ~np.isfinite(alpha)
    if bad.any():
        alpha = alpha.copy()
        alpha[bad] = np.nan
        f_alpha[bad] = np.nan
        logger.warning('alpha indisponivel em q=%s', q[bad].tolist())
    return alpha, f_alpha


def widths(scaling, spectrum):
    """Literal endpoint differences (delta_h, delta_alpha) = (h(qmax)-h(qmin), alpha(qmax)-alpha(qmin))."""
    h = _h_array(scaling)
    alpha = np.asarray(getattr(spectrum, 'alpha', spectrum), dtype=float)
    return float(h[-1] - h[0]), float(alpha[-1] - alpha[0])


def mdm(h_qmin: float, h_qmax: float) -> float:
    """Market deficiency measure: half the summed endpoint distances from 0.5."""
    if not (np.isfinite(h_qmin) and np.isfinite(h_qmax)):
        raise MultifractalError('MDM requer h(q_min) e h(q_max) finitos')
    return 0.5 * (abs(h_qmin - 0.5) + abs(h_qmax - 0.5))


def spectrum_from_scaling(scaling: ScalingResult) -> MultifractalSpectrum:
    if not scaling.all_available:
        missing = [q for q, ok in zip(scaling.qs, scaling.available) if not ok]
        raise MultifractalError(f'h(q) indisponivel para q={missing}; espectro nao calculavel')
    qs = scaling.qs
    h = np.asarray(scaling.h, dtype=float)
    tau = mass_exponents(scaling)
    alpha, f_alpha = legendre_spectrum(tau, qs)
    delta_h, delta_alpha_literal = widths(h, alpha)
    notes = []
    if np.any(np.diff(h) > 1e-12):
        notes.append('h(q) nao monotona')
        logger.warning('h(q) nao monotona decrescente (delta_h literal = %.4f)', delta_h)
    return MultifractalSpectrum(qs, h, tau, alpha, f_alpha,
                                delta_alpha=abs(delta_alpha_literal),
                                delta_alpha_literal=delta_alpha_literal,
                                delta_h=delta_h, abs_delta_h=abs(delta_h),
                                mdm=mdm(h[0], h[-1]), hurst=scaling.at(2.0), warnings=notes)


def _analyze(series, config: ScalingConfig) -> MultifractalAnalysis:
    values = series.x.values if isinstance(series, AlignedPair) else getattr(series, 'values', series)
    n = len(values)
    surface = fluctuation_surface(series, config.q_grid(), config.scale_grid(n),
                                  m=config.detrend_order, bidirectional=config.bidirectional,
                                  workers=config.workers,
                                  allow_large=config.allow_large_scales or config.scale_max is not None)
    scaling = fit_scaling(surface, weighting=config.fit_weighting)
    return MultifractalAnalysis(surface, scaling, spectrum_from_scaling(scaling))


def analyze_series(series, config: Optional[ScalingConfig] = None) -> MultifractalAnalysis:
    """MF-DFA of one series."""
    return _analyze(series, config or ScalingConfig())


def analyze_pair(pair: AlignedPair, config: Optional[ScalingConfig] = None) -> MultifractalAnalysis:
    """MF-DCCA of an aligned pair."""
    return _analyze(pair, config or ScalingConfig())


@dataclass
class EnsembleSummary:
    n: int
    mean: Dict[str, float]
    sd: Dict[str, float]
    curves: Dict[str, np.ndarray]

    @classmethod
    def from_spectra(cls, spectra: List[MultifractalSpectrum]) -> 'EnsembleSummary':
        if len(spectra) < 2:
            raise MultifractalError(f'resumo de ensemble requer n >= 2, recebeu {len(spectra)}')
        mean, sd = {}, {}
        for name in _SCALARS:
            values = np.array([getattr(s, name) for s in spectra], dtype=float)
            mean[name] = float(np.mean(values))
            sd[name] = float(np.std(values, ddof=1))
        curves = {'q': spectra[0].qs.array}
        for name in ('h', 'tau', 'alpha', 'f_alpha'):
            curves[name] = np.mean(np.vstack([getattr(s, name) for s in spectra]), axis=0)
        return cls(len(spectra), mean, sd, curves)

    def variance(self, name: str = 'delta_alpha') -> float:
        return self.sd[name] ** 2

    def to_dict(self) -> dict:
        out = {'n': self.n}
        for name in _SCALARS:
            out[name] = {'mean': float_or_none(self.mean[name]), 'sd': float_or_none(self.sd[name])}
        out['curves'] = {k: float_list(v) for k, v in self.curves.items()}
        return out


@dataclass(frozen=True)
class AttributionConfig:
    scaling: ScalingConfig = field(default_factory=ScalingConfig)
    ensemble_size: int = DEFAULT_ENSEMBLE_SIZE
    shuffle_ensemble_size: Optional[int] = None
    floor_ensemble_size: int = DEFAULT_FLOOR_ENSEMBLE_SIZE
    max_iterations: int = 1000
    convergence_tol: float = 1e-8
    margin_sd: float = DEFAULT_MARGIN_SD
    temporal_width: str = 'abs_delta_h'
    distribution_width: str = 'delta_alpha'
    master_seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.ensemble_size < 2 or (self.shuffle_ensemble_size or 2) < 2:
            raise MultifractalError('ensembles de atribuicao requerem n >= 2')
        if self.floor_ensemble_size < 2:
            raise MultifractalError('floor_ensemble_size deve ser >= 2')
        for width in (self.temporal_width, self.distribution_width):
            if width not in WIDTH_MEASURES:
                raise MultifractalError(
                    f'medida de largura desconhecida: {width!r}; opcoes: {WIDTH_MEASURES}')


@dataclass
class SourceAttribution:
    original: MultifractalSpectrum
    shuffled: EnsembleSummary
    surrogate: EnsembleSummary
    floor: EnsembleSummary
    verdicts: Dict[str, bool]
    margins: Dict[str, Dict[str, float]]
    measures: Dict[str, str] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            'original': self.original.to_dict(),
            'shuffled': self.shuffled.to_dict(),
            'surrogate': self.surrogate.to_dict(),
            'floor': self.floor.to_dict(),
            'verdicts': dict(self.verdicts),
            'margins': {k: {kk: float_or_none(vv) for kk, vv in v.items()}
                        for k, v in self.margins.items()},
            'measures': dict(self.measures),
        }


def _spectra(members, config: ScalingConfig, workers: int, what: str) -> List[MultifractalSpectrum]:
    def _one(indexed):
        index, member = indexed
        try:
            return analyze_series(member, config).spectrum
        except Exception as e:
            raise MultifractalError(f'{what}: membro {index} falhou: {e}') from e

    return parallel_map(_one, list(enumerate(members)), workers)


def finite_size_floor(n: int, config: Optional[ScalingConfig] = None, n_sims: int = DEFAULT_FLOOR_ENSEMBLE_SIZE,
                      seed: int = 0, workers: int = 1) -> EnsembleSummary:
    """Spectrum summary of i.i.d. Gaussian series with the same length and grids."""
    config = config or ScalingConfig()
    members = [derive_rng(seed, 'floor', i).standard_normal(n) for i in range(n_sims)]
    return EnsembleSummary.from_spectra(_spectra(members, config, workers, 'piso'))


def _margin_test(difference: float, variances: List[float], k: float) -> Dict[str, float]:
    pooled = float(np.sqrt(np.mean(variances)))
    return {'difference': difference, 'pooled_sd': pooled, 'margin': k * pooled}


def attribute_sources(series, config: Optional[AttributionConfig] = None) -> SourceAttribution:
    """Compare the original spectrum width with shuffled, IAAFT and Gaussian-floor ensembles.

    Each verdict holds when its difference exceeds margin = margin_sd x pooled sd.
    Original-vs-ensemble verdicts (temporal: original - shuffled; nonlinear:
    original - surrogate) use ``temporal_width``, |delta_h| by default.
    Ensemble-vs-ensemble verdicts (distribution: shuffled - floor; linear:
    |shuffled - surrogate|) use ``distribution_width``, delta_alpha by default.
    """
    config = config or AttributionConfig()
    values = getattr(series, 'values', series)
    original = analyze_series(series, config.scaling).spectrum

    n_shuffle = config.shuffle_ensemble_size or config.ensemble_size
    shuffle_spec = SurrogateSpec('shuffle', derive_seed(config.master_seed, 'shuffle'), n_shuffle)
    iaaft_spec = SurrogateSpec('iaaft', derive_seed(config.master_seed, 'iaaft'), config.ensemble_size,
                               config.max_iterations, config.convergence_tol)
    shuffled = EnsembleSummary.from_spectra(
        _spectra(ensemble(series, shuffle_spec, config.workers), config.scaling, config.workers, 'embaralhada'))
    surrogate = EnsembleSummary.from_spectra(
        _spectra(ensemble(series, iaaft_spec, config.workers), config.scaling, config.workers, 'surrogate'))
    floor = finite_size_floor(len(values), config.scaling, config.floor_ensemble_size,
                              derive_seed(config.master_seed, 'floor'), config.workers)

    k = config.margin_sd
    tw, dw = config.temporal_width, config.distribution_width
    own = getattr(original, tw)
    margins = {
        'temporal_correlation_contributes': _margin_test(
            own - shuffled.mean[tw], [shuffled.variance(tw)], k),
        'distribution_contributes': _margin_test(
            shuffled.mean[dw] - floor.mean[dw], [shuffled.variance(dw), floor.variance(dw)], k),
        'nonlinear_correlation_contributes': _margin_test(
            own - surrogate.mean[tw], [surrogate.variance(tw)], k),
        'linear_correlation_contributes': _margin_test(
            abs(shuffled.mean[dw] - surrogate.mean[dw]),
            [shuffled.variance(dw), surrogate.variance(dw)], k),
    }
    measures = {'temporal_correlation_contributes': tw, 'nonlinear_correlation_contributes': tw,
                'distribution_contributes': dw, 'linear_correlation_contributes': dw}
    verdicts = {name: bool(margins[name]['difference'] > margins[name]['margin']) for name in VERDICTS}
    logger.info('Atribuicao de fontes: %s original=%.4f embaralhada=%.4f surrogate=%.4f; '
                '%s embaralhada=%.4f piso=%.4f; veredictos=%s', tw, own, shuffled.mean[tw],
                surrogate.mean[tw], dw, shuffled.mean[dw], floor.mean[dw],
                [v for v in VERDICTS if verdicts[v]])
    return SourceAttribution(original, shuffled, surrogate, floor, verdicts, margins, measures)
