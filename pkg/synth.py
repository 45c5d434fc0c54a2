"""Geradores sinteticos com propriedades de escala conhecidas.

Usados para validar os estimadores: fGn por embedding circulante, cascata
binomial multifractal, AR(1), MA(1), par acoplado, ruido i.i.d. e mapa
logistico. Tudo e deterministico dado o seed.
"""
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np
from scipy import signal

from errors import SynthError
from ingest import AlignedPair, TimeSeries
from logging_setup import get_logger
from parallel import as_rng

logger = get_logger(__name__)

MODELS = ('fgn', 'cascade', 'ar1', 'ma1', 'coupled_pair', 'gaussian_iid',
          'student_t', 'logistic_map')

_DEFAULT_PARAMS = {
    'fgn': {'hurst': 0.5},
    'cascade': {'p': 0.3, 'depth': 14},
    'ar1': {'phi': 0.5, 'sigma': 1.0, 'burn_in': 1000},
    'ma1': {'theta': 0.5, 'sigma': 1.0},
    'coupled_pair': {'beta': 0.5, 'noise_sd': 0.25},
    'gaussian_iid': {},
    'student_t': {'dof': 3.0},
    'logistic_map': {'r': 4.0, 'burn_in': 100},
}


@dataclass(frozen=True)
class SynthSpec:
    model: str
    n: Optional[int] = None
    seed: Optional[int] = None
    params: Dict[str, float] = field(default_factory=dict)

    def __post_init__(self):
        if self.model not in MODELS:
            raise SynthError(f'modelo desconhecido {self.model!r}; opcoes: {MODELS}')
        unknown = set(self.params) - set(_DEFAULT_PARAMS[self.model])
        if unknown:
            raise SynthError(f'parametros desconhecidos para {self.model}: {sorted(unknown)}')
        merged = dict(_DEFAULT_PARAMS[self.model])
        merged.update(self.params)
        object.__setattr__(self, 'params', merged)
        n = self.n
        if self.model == 'cascade':
            depth = int(merged['depth'])
            if depth < 1:
                raise SynthError(f'profundidade da cascata invalida: {depth}')
            if n is not None and n != 2 ** depth:
                raise SynthError(f'cascata exige N = 2^depth = {2 ** depth}, recebeu {n}')
            n = 2 ** depth
            if not 0 < merged['p'] < 1:
                raise SynthError(f'cascata exige p em (0, 1), recebeu {merged["p"]}')
        if n is None or n < 1:
            raise SynthError(f'comprimento invalido: {n}')
        object.__setattr__(self, 'n', int(n))
        if self.model == 'fgn' and not 0 < merged['hurst'] < 1:
            raise SynthError(f'fGn exige H em (0, 1), recebeu {merged["hurst"]}')
        if self.model == 'student_t' and merged['dof'] <= 0:
            raise SynthError('graus de liberdade devem ser positivos')
        if self.model == 'ar1' and abs(merged['phi']) >= 1:
            raise SynthError(f'AR(1) exige |phi| < 1, recebeu {merged["phi"]}')


def fgn_autocovariance(hurst: float, k) -> np.ndarray:
    """Unit-variance fGn autocovariance at integer lag(s) k."""
    k = np.abs(np.asarray(k, dtype=float))
    two_h = 2.0 * hurst
    return 0.5 * (np.abs(k + 1) ** two_h - 2.0 * k ** two_h + np.abs(k - 1) ** two_h)


def fgn(n: int, hurst: float, rng) -> np.ndarray:
    """Exact-covariance fGn through circulant embedding of size 2n."""
    rng = as_rng(rng)
    gamma = fgn_autocovariance(hurst, np.arange(n + 1))
    row = np.concatenate([gamma, gamma[-2:0:-1]])
    m = row.size
    eigenvalues = np.fft.fft(row).real
    if eigenvalues.min() < -1e-10 * eigenvalues.max():
        raise SynthError(
            f'embedding circulante com autovalor negativo ({eigenvalues.min():.3e}) para H={hurst}, N={n}')
    eigenvalues = np.clip(eigenvalues, 0.0, None)
    noise = rng.standard_normal(m) + 1j * rng.standard_normal(m)
    sample = np.fft.fft(np.sqrt(eigenvalues / m) * noise)
    return sample.real[:n]


def binomial_cascade(depth: int, p: float, rng) -> np.ndarray:
    """Cell masses of a binomial measure; weights {p, 1-p} swapped at random per branch."""
    rng = as_rng(rng)
    measure = np.ones(1)
    for _ in range(depth):
        left = np.where(rng.random(measure.size) < 0.5, p, 1.0 - p)
        measure = np.column_stack([measure * left, measure * (1.0 - left)]).ravel()
    return measure


def cascade_oracle(p: float, q):
    """Generalized Hurst exponent of the binomial cascade; q = 0 uses the analytic limit."""
    if not 0 < p < 1:
        raise SynthError(f'p fora de (0, 1): {p}')
    q_arr = np.atleast_1d(np.asarray(q, dtype=float))
    out = np.empty_like(q_arr)
    zero = q_arr == 0
    qq = q_arr[~zero]
    out[~zero] = 1.0 / qq - np.log(p ** qq + (1.0 - p) ** qq) / (qq * np.log(2.0))
    out[zero] = -np.log(p * (1.0 - p)) / (2.0 * np.log(2.0))
    return float(out[0]) if np.ndim(q) == 0 else out


def _logistic_map(n: int, r: float, burn_in: int, rng) -> np.ndarray:
    x = rng.uniform(0.1, 0.9)
    for _ in range(int(burn_in)):
        x = r * x * (1.0 - x)
    out = np.empty(n)
    for i in range(n):
        x = r * x * (1.0 - x)
        out[i] = x
    return out


def _values(spec: SynthSpec, rng) -> np.ndarray:
    p = spec.params
    n = spec.n
    if spec.model == 'fgn':
        return fgn(n, p['hurst'], rng)
    if spec.model == 'cascade':
        return binomial_cascade(int(p['depth']), p['p'], rng)
    if spec.model == 'ar1':
        burn = int(p['burn_in'])
        eps = rng.standard_normal(n + burn) * p['sigma']
        return signal.lfilter([1.0], [1.0, -p['phi']], eps)[burn:]
    if spec.model == 'ma1':
        eps = rng.standard_normal(n + 1) * p['sigma']
        return signal.lfilter([1.0, p['theta']], [1.0], eps)[1:]
    if spec.model == 'gaussian_iid':
        return rng.standard_normal(n)
    if spec.model == 'student_t':
        return rng.standard_t(p['dof'], n)
    if spec.model == 'logistic_map':
        return _logistic_map(n, p['r'], p['burn_in'], rng)
    raise SynthError(f'{spec.model} gera um par; use generate_pair')


def generate(spec: SynthSpec, label: Optional[str] = None, start: str = '2020-01-01T00:00:00Z',
             freq: str = '5min') -> TimeSeries:
    rng = np.random.default_rng(spec.seed)
    values = _values(spec, rng)
    logger.debug('Serie sintetica gerada: %s N=%d seed=%s', spec.model, spec.n, spec.seed)
    return TimeSeries.from_values(values, label=label or spec.model, kind='generic', start=start, freq=freq)


def generate_pair(spec: SynthSpec, labels=('x', 'y')) -> AlignedPair:
    """X i.i.d. Gaussian and Y = beta * X + noise_sd * eps on the same timestamps."""
    if spec.model != 'coupled_pair':
        raise SynthError(f'generate_pair so aceita coupled_pair, recebeu {spec.model}')
    rng = np.random.default_rng(spec.seed)
    x = rng.standard_normal(spec.n)
    y = spec.params['beta'] * x + spec.params['noise_sd'] * rng.standard_normal(spec.n)
    sx = TimeSeries.from_values(x, label=labels[0])
    sy = TimeSeries.from_values(y, label=labels[1])
    return AlignedPair(sx, sy, min_length=min(spec.n, 2))
