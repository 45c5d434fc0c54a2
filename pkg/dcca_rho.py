"""Coeficiente rho_DCCA(s) e banda critica Monte-Carlo sob a hipotese nula.

A banda e construida com pares gaussianos i.i.d. independentes e seus pares
antiteticos (X, -Y), o que torna a amostra nula exatamente simetrica em sinal.
"""
import os
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
import pandas as pd

from errors import DccaError, ScalingError
from ingest import AlignedPair
from logging_setup import get_logger
from parallel import derive_rng, parallel_map
from reports import float_list
from run_metrics import inc_metric
from scaling_core import ScaleGrid, detrended_covariances, profile

logger = get_logger(__name__)

DEFAULT_CONFIDENCE = 0.95
DEFAULT_SIMS = 1000
MIN_SIMS = 100

POSITIVE = 'significant_positive'
NEGATIVE = 'significant_negative'
NOT_SIGNIFICANT = 'not_significant'


@dataclass
class RhoProfile:
    scales: ScaleGrid
    rho: np.ndarray
    n_effective: int
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None
    confidence: Optional[float] = None
    decision: List[str] = field(default_factory=list)
    label: str = ''

    @property
    def has_band(self) -> bool:
        return self.lower is not None and self.upper is not None

    def with_band(self, band: Tuple[np.ndarray, np.ndarray], confidence: float) -> 'RhoProfile':
        lower, upper = band
        return RhoProfile(self.scales, self.rho, self.n_effective, np.asarray(lower),
                          np.asarray(upper), confidence, [], self.label)

    def to_frame(self) -> pd.DataFrame:
        nan = np.full(len(self.scales), np.nan)
        decision = self.decision or [''] * len(self.scales)
        return pd.DataFrame({'s': self.scales.array, 'rho': self.rho,
                             'lower': self.lower if self.has_band else nan,
                             'upper': self.upper if self.has_band else nan,
                             'decision': decision})

    def to_csv(self, path: str) -> str:
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        self.to_frame().to_csv(path, index=False, float_format='%.12g')
        logger.info('Perfil rho salvo: %s', path)
        return path

    def to_dict(self) -> dict:
        nan = np.full(len(self.scales), np.nan)
        return {
            'scales': [int(s) for s in self.scales],
            'rho': float_list(self.rho),
            'lower': float_list(self.lower if self.has_band else nan),
            'upper': float_list(self.upper if self.has_band else nan),
            'confidence': self.confidence,
            'n_effective': int(self.n_effective),
            'decision': list(self.decision),
        }


def _rho_values(x: np.ndarray, y: np.ndarray, scales, m: int, bidirectional: bool,
                labels=('x', 'y')) -> np.ndarray:
    px = profile(x)
    py = profile(y)
    rho = np.empty(len(scales))
    for i, s in enumerate(scales):
        f_xy = detrended_covariances(px, py, s, m, bidirectional)
        f_xx = detrended_covariances(px, px, s, m, bidirectional)
        f_yy = detrended_covariances(py, py, s, m, bidirectional)
        var_x = np.mean(f_xx)
        var_y = np.mean(f_yy)
        for side, var in zip(labels, (var_x, var_y)):
            if not var > 0:
                raise DccaError(f'denominador nulo na escala {s}: serie {side!r} degenerada (constante)')
        rho[i] = np.mean(f_xy) / (np.sqrt(var_x) * np.sqrt(var_y))
    return rho


def rho_dcca(pair: AlignedPair, ss: Optional[ScaleGrid] = None, m: int = 1,
             bidirectional: bool = True, allow_large: bool = False) -> RhoProfile:
    """rho(s) = F2_xy(s) / (F_x(s) F_y(s)) per scale, no clamping."""
    n = len(pair)
    ss = ss or ScaleGrid.log_spaced(n)
    try:
        ss.validate(n, m, allow_large)
    except ScalingError as e:
        raise DccaError(f'grade de escalas invalida para N={n}: {e}') from e
    rho = _rho_values(pair.x.values, pair.y.values, ss.scales, m, bidirectional,
                      (pair.x.label or 'x', pair.y.label or 'y'))
    worst = np.max(np.abs(rho)) - 1.0
    if worst > 1e-9:
        logger.error('rho fora de [-1, 1] por %.3e', worst)
    return RhoProfile(ss, rho, n, label=pair.name)


def critical_band(n: int, ss: ScaleGrid, confidence: float = DEFAULT_CONFIDENCE,
                  n_sims: int = DEFAULT_SIMS, seed: int = 0, m: int = 1,
                  bidirectional: bool = True, workers: int = 1,
                  allow_large: bool = False) -> Tuple[np.ndarray, np.ndarray]:
    """Empirical (1-c)/2 and (1+c)/2 quantiles of rho(s) under independent Gaussian pairs."""
    if n_sims < MIN_SIMS:
        raise DccaError(f'n_sims deve ser >= {MIN_SIMS}, recebeu {n_sims}')
    if not 0.5 < confidence < 1:
        raise DccaError(f'confianca fora de (0.5, 1): {confidence}')
    try:
        ss.validate(n, m, allow_large)
    except ScalingError as e:
        raise DccaError(f'grade de escalas invalida para N={n}: {e}') from e

    def _simulate(index: int) -> np.ndarray:
        rng = derive_rng(seed, 'rho_null', index)
        x = rng.standard_normal(n)
        y = rng.standard_normal(n)
        return _rho_values(x, y, ss.scales, m, bidirectional)

    draws = np.vstack(parallel_map(_simulate, range(n_sims), workers))
    sample = np.sort(np.vstack([draws, -draws]), axis=0)
    lower, upper = np.quantile(sample, [(1 - confidence) / 2, (1 + confidence) / 2], axis=0)
    inc_metric('rho_simulations', n_sims)
    logger.info('Banda critica rho: N=%d, %d simulacoes (+antiteticas), confianca %.3f',
                n, n_sims, confidence)
    return lower, upper


def significance(profile_: RhoProfile, one_sided: bool = False) -> List[str]:
    """Per-scale decision against the band; ``one_sided`` only tests the upper tail."""
    if not profile_.has_band:
        raise DccaError('perfil rho sem banda critica; rode critical_band antes')
    decisions = []
    for rho, lower, upper in zip(profile_.rho, profile_.lower, profile_.upper):
        if rho > upper:
            decisions.append(POSITIVE)
        elif not one_sided and rho < lower:
            decisions.append(NEGATIVE)
        else:
            decisions.append(NOT_SIGNIFICANT)
    profile_.decision = decisions
    return decisions


def rho_with_band(pair: AlignedPair, ss: Optional[ScaleGrid] = None, m: int = 1,
                  bidirectional: bool = True, confidence: float = DEFAULT_CONFIDENCE,
                  n_sims: int = DEFAULT_SIMS, seed: int = 0, workers: int = 1,
                  one_sided: bool = False, allow_large: bool = False) -> RhoProfile:
    """rho_dcca + critical_band + significance for one pair."""
    result = rho_dcca(pair, ss, m, bidirectional, allow_large)
    band = critical_band(len(pair), result.scales, confidence, n_sims, seed, m, bidirectional,
                         workers, allow_large)
    result = result.with_band(band, confidence)
    significance(result, one_sided)
    return result
