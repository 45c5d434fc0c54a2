"""Series nulas: embaralhamento e surrogates IAAFT.

O embaralhamento destroi toda a estrutura temporal e preserva a distribuicao.
O IAAFT preserva distribuicao e espectro de amplitude (correlacao linear) e
randomiza a estrutura nao linear. Os membros de um ensemble sao reproduziveis
a partir de (master_seed, indice).
"""
import os
import warnings
from dataclasses import dataclass
from typing import List, Sequence, Union

import numpy as np
import pandas as pd

from errors import IaaftConvergenceWarning, SurrogateError
from ingest import TimeSeries
from logging_setup import get_logger
from parallel import as_rng, derive_rng, derive_seed, parallel_map
from run_metrics import inc_metric

logger = get_logger(__name__)

METHODS = ('shuffle', 'iaaft')
DEFAULT_ENSEMBLE_SIZE = 50
DEFAULT_MAX_ITERATIONS = 1000
DEFAULT_TOLERANCE = 1e-8

SeriesLike = Union[TimeSeries, np.ndarray, Sequence[float]]


@dataclass(frozen=True)
class SurrogateSpec:
    method: str = 'iaaft'
    master_seed: int = 0
    ensemble_size: int = DEFAULT_ENSEMBLE_SIZE
    max_iterations: int = DEFAULT_MAX_ITERATIONS
    convergence_tol: float = DEFAULT_TOLERANCE

    def __post_init__(self):
        if self.method not in METHODS:
            raise SurrogateError(f'metodo desconhecido {self.method!r}; opcoes: {METHODS}')
        if self.ensemble_size < 1:
            raise SurrogateError(f'ensemble_size deve ser >= 1, recebeu {self.ensemble_size}')
        if self.max_iterations < 1:
            raise SurrogateError('max_iterations deve ser >= 1')
        if self.convergence_tol < 0:
            raise SurrogateError('convergence_tol deve ser >= 0')


@dataclass
class IaaftResult:
    values: np.ndarray
    iterations: int
    rmse: float
    converged: bool


def _values(series: SeriesLike) -> np.ndarray:
    if isinstance(series, TimeSeries):
        return series.values
    return np.asarray(series, dtype=float)


def _rewrap(series: SeriesLike, values: np.ndarray):
    if isinstance(series, TimeSeries):
        return series.with_values(values)
    return values


def shuffle(series: SeriesLike, seed=None):
    """Uniform random permutation of the values; timestamps stay in place."""
    x = _values(series)
    if x.size < 1:
        raise SurrogateError('shuffle recebeu serie vazia')
    return _rewrap(series, as_rng(seed).permutation(x))


def spectrum_rmse(values, target_amplitude: np.ndarray) -> float:
    """RMSE between amplitude spectra relative to the target's RMS amplitude."""
    amp = np.abs(np.fft.rfft(values))
    scale = np.sqrt(np.mean(target_amplitude ** 2))
    if scale == 0:
        return 0.0
    return float(np.sqrt(np.mean((amp - target_amplitude) ** 2)) / scale)


def iaaft_with_diagnostics(series: SeriesLike, seed=None,
                           max_iterations: int = DEFAULT_MAX_ITERATIONS,
                           convergence_tol: float = DEFAULT_TOLERANCE) -> IaaftResult:
    """IAAFT surrogate plus iteration count, final spectrum error and convergence flag.

    The loop always ends on the rank-remapping step, so the surrogate holds
    exactly the input values.
    """
    x = _values(series)
    n = x.size
    if n < 4:
        raise SurrogateError(f'IAAFT requer N >= 4, recebeu {n}')
    if np.all(x == x[0]):
        return IaaftResult(x.copy(), 0, 0.0, True)
    rng = as_rng(seed)
    sorted_x = np.sort(x)
    target = np.abs(np.fft.rfft(x))
    surrogate = rng.permutation(x)
    previous = np.inf
    rmse = np.inf
    converged = False
    iterations = 0
    for iterations in range(1, max_iterations + 1):
        spectrum = np.fft.rfft(surrogate)
        modulus = np.abs(spectrum)
        phase = np.divide(spectrum, modulus, out=np.ones_like(spectrum), where=modulus > 0)
        candidate = np.fft.irfft(target * phase, n)
        ranks = np.argsort(np.argsort(candidate, kind='stable'), kind='stable')
        surrogate = sorted_x[ranks]
        rmse = spectrum_rmse(surrogate, target)
        if rmse == 0 or (np.isfinite(previous) and abs(previous - rmse) <= convergence_tol * previous):
            converged = True
            break
        previous = rmse
    if not converged:
        message = (f'IAAFT nao convergiu em {max_iterations} iteracoes '
                   f'(rmse relativo final {rmse:.3e})')
        logger.warning(message)
        warnings.warn(IaaftConvergenceWarning(message, rmse, iterations), stacklevel=2)
    return IaaftResult(surrogate, iterations, rmse, converged)


def iaaft(series: SeriesLike, seed=None, max_iterations: int = DEFAULT_MAX_ITERATIONS,
          convergence_tol: float = DEFAULT_TOLERANCE):
    result = iaaft_with_diagnostics(series, seed, max_iterations, convergence_tol)
    return _rewrap(series, result.values)


def make_member(series: SeriesLike, spec: SurrogateSpec, index: int):
    """Member ``index`` of the ensemble described by ``spec``."""
    rng = derive_rng(spec.master_seed, index)
    if spec.method == 'shuffle':
        return shuffle(series, rng)
    return iaaft(series, rng, spec.max_iterations, spec.convergence_tol)


def ensemble(series: SeriesLike, spec: SurrogateSpec, workers: int = 1) -> List:
    def _member(index: int):
        try:
            return make_member(series, spec, index)
        except Exception as e:
            raise SurrogateError(
                f'falha no membro {index} ({spec.method}, master_seed={spec.master_seed}, '
                f'seed derivada={derive_seed(spec.master_seed, index)}): {e}') from e

    members = parallel_map(_member, range(spec.ensemble_size), workers)
    inc_metric('surrogates_generated', len(members))
    return members


def _member_values(members) -> List[np.ndarray]:
    return [_values(m) for m in members]


def write_ensemble_dir(members, directory: str, prefix: str = 'surrogate') -> List[str]:
    """One CSV per member: ``<prefix>_<index>.csv`` with a ``member_<index>`` column."""
    os.makedirs(directory, exist_ok=True)
    paths = []
    for i, member in enumerate(members):
        path = os.path.join(directory, f'{prefix}_{i:03d}.csv')
        frame = pd.DataFrame({f'member_{i}': _values(member)})
        if isinstance(member, TimeSeries):
            frame.insert(0, 'timestamp', member.timestamps.strftime('%Y-%m-%dT%H:%M:%SZ'))
        frame.to_csv(path, index=False, float_format='%.17g')
        paths.append(path)
    logger.info('Ensemble salvo em %s (%d membros)', directory, len(paths))
    return paths


def ensemble_frame(members) -> pd.DataFrame:
    frame = pd.DataFrame({f'member_{i}': v for i, v in enumerate(_member_values(members))})
    if members and isinstance(members[0], TimeSeries):
        frame.insert(0, 'timestamp', members[0].timestamps.strftime('%Y-%m-%dT%H:%M:%SZ'))
    return frame


def write_ensemble_wide(members, path: str) -> str:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    ensemble_frame(members).to_csv(path, index=False, float_format='%.17g')
    logger.info('Ensemble salvo: %s (%d membros)', path, len(members))
    return path


def write_ensemble_parquet(members, path: str) -> str:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    ensemble_frame(members).to_parquet(path, index=False)
    logger.info('Ensemble salvo: %s (%d membros)', path, len(members))
    return path
