"""Motor numerico compartilhado do MF-DFA / MF-DCCA.

Perfil, segmentacao (direta e reversa), detrending polinomial por projecao
ortogonal, superficie de flutuacao F(q, s) e regressao log-log. O modo single
(MF-DFA) e sempre calculado pelo mesmo caminho do modo cross com Y := X, e o
DFA classico usa a mesma agregacao de q = 2.
"""
import os
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from statsmodels.regression.linear_model import WLS

from errors import ScalingError
from logging_setup import get_logger
from parallel import parallel_map

logger = get_logger(__name__)

DEFAULT_Q_MAX = 4.0
DEFAULT_Q_STEP = 0.25
DEFAULT_SCALE_MIN = 30
DEFAULT_SCALE_MAX_FRACTION = 0.2
DEFAULT_SCALE_COUNT = 20
MIN_FIT_SCALES = 4
DEGENERATE_FLOOR = 1e-20
FIT_WEIGHTINGS = ('segments', 'uniform')


@dataclass(frozen=True)
class ScaleGrid:
    scales: Tuple[int, ...]
    spacing: str = 'explicit'

    def __post_init__(self):
        scales = tuple(int(s) for s in self.scales)
        if not scales:
            raise ScalingError('grade de escalas vazia')
        if any(b <= a for a, b in zip(scales, scales[1:])):
            raise ScalingError(f'escalas devem ser estritamente crescentes: {scales}')
        if self.spacing not in ('log_spaced', 'explicit'):
            raise ScalingError(f'spacing desconhecido: {self.spacing!r}')
        object.__setattr__(self, 'scales', scales)

    def __len__(self):
        return len(self.scales)

    def __iter__(self):
        return iter(self.scales)

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.scales, dtype=int)

    @classmethod
    def explicit(cls, scales: Sequence[int]) -> 'ScaleGrid':
        return cls(tuple(scales), 'explicit')

    @classmethod
    def log_spaced(cls, n: int, s_min: int = DEFAULT_SCALE_MIN, s_max: Optional[int] = None,
                   count: int = DEFAULT_SCALE_COUNT,
                   max_fraction: float = DEFAULT_SCALE_MAX_FRACTION) -> 'ScaleGrid':
        """About ``count`` log-spaced integers from s_min to floor(n * max_fraction)."""
        if s_max is None:
            s_max = int(np.floor(n * max_fraction))
        if s_max < s_min:
            raise ScalingError(
                f'N={n} curto demais: escala maxima {s_max} menor que a minima {s_min}')
        raw = np.geomspace(s_min, s_max, num=max(int(count), 2))
        grid = cls(tuple(np.unique(np.round(raw).astype(int))), 'log_spaced')
        if len(grid) < MIN_FIT_SCALES:
            logger.warning('N=%d gera so %d escala(s) entre %d e %d (minimo %d para o ajuste): '
                           'h(q) ficara indisponivel; aumente N ou reduza a escala minima',
                           n, len(grid), s_min, s_max, MIN_FIT_SCALES)
        return grid

    def validate(self, n: int, order: int = 1, allow_large: bool = False) -> 'ScaleGrid':
        lower = max(4, order + 2)
        if self.scales[0] < lower:
            raise ScalingError(
                f'escala minima {self.scales[0]} abaixo de {lower} para detrend de ordem {order}')
        if self.scales[-1] > n:
            raise ScalingError(f'escala {self.scales[-1]} maior que N={n}')
        if not allow_large and self.scales[-1] > n // 5:
            raise ScalingError(
                f'escala maxima {self.scales[-1]} acima de N/5={n // 5}; use allow_large para forcar')
        return self


@dataclass(frozen=True)
class QGrid:
    orders: Tuple[float, ...]
    symmetric: bool = False

    def __post_init__(self):
        orders = tuple(float(q) for q in self.orders)
        if any(b <= a for a, b in zip(orders, orders[1:])):
            raise ScalingError('ordens q devem ser estritamente crescentes')
        if 0.0 not in orders or 2.0 not in orders:
            raise ScalingError(f'a grade q precisa conter 0 e 2: {orders}')
        if self.symmetric and orders[0] + orders[-1] != 0:
            raise ScalingError(f'grade simetrica com extremos {orders[0]} e {orders[-1]}')
        object.__setattr__(self, 'orders', orders)

    def __len__(self):
        return len(self.orders)

    def __iter__(self):
        return iter(self.orders)

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.orders, dtype=float)

    @property
    def q_min(self) -> float:
        return self.orders[0]

    @property
    def q_max(self) -> float:
        return self.orders[-1]

    def index(self, q: float) -> int:
        return self.orders.index(float(q))

    @classmethod
    def from_range(cls, q_min: float, q_max: float, step: float = DEFAULT_Q_STEP) -> 'QGrid':
        if step <= 0 or q_max <= q_min:
            raise ScalingError(f'faixa q invalida: {q_min}..{q_max} passo {step}')
        count = int(round((q_max - q_min) / step)) + 1
        orders = np.round(q_min + step * np.arange(count), 10)
        orders = orders[orders <= q_max + 1e-9]
        return cls(tuple(orders), symmetric=bool(q_min + q_max == 0))

    @classmethod
    def symmetric_grid(cls, q_max: float = DEFAULT_Q_MAX, step: float = DEFAULT_Q_STEP) -> 'QGrid':
        return cls.from_range(-q_max, q_max, step)


@dataclass(frozen=True)
class ScalingConfig:
    q_min: float = -DEFAULT_Q_MAX
    q_max: float = DEFAULT_Q_MAX
    q_step: float = DEFAULT_Q_STEP
    scale_min: int = DEFAULT_SCALE_MIN
    scale_max: Optional[int] = None
    scale_max_fraction: float = DEFAULT_SCALE_MAX_FRACTION
    scale_count: int = DEFAULT_SCALE_COUNT
    detrend_order: int = 1
    bidirectional: bool = True
    allow_large_scales: bool = False
    fit_weighting: str = 'segments'
    workers: int = 1

    def __post_init__(self):
        if not 1 <= self.detrend_order <= 3:
            raise ScalingError(f'ordem de detrend fora de 1..3: {self.detrend_order}')
        if self.fit_weighting not in FIT_WEIGHTINGS:
            raise ScalingError(f'fit_weighting desconhecido: {self.fit_weighting!r}; opcoes: {FIT_WEIGHTINGS}')

    def q_grid(self) -> QGrid:
        return QGrid.from_range(self.q_min, self.q_max, self.q_step)

    def scale_grid(self, n: int) -> ScaleGrid:
        grid = ScaleGrid.log_spaced(n, self.scale_min, self.scale_max, self.scale_count,
                                    self.scale_max_fraction)
        return grid.validate(n, self.detrend_order,
                             self.allow_large_scales or self.scale_max is not None)


@dataclass
class FluctuationSurface:
    """F(q, s) with rows indexed by q and columns by s. NaN marks an unavailable cell."""
    qs: QGrid
    ss: ScaleGrid
    values: np.ndarray
    segment_counts: np.ndarray
    excluded_counts: np.ndarray = None
    detrend_order: int = 1
    mode: str = 'single'
    bidirectional: bool = True
    n: int = 0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (len(self.qs), len(self.ss)):
            raise ScalingError(
                f'superficie com forma {self.values.shape}, esperado {(len(self.qs), len(self.ss))}')
        self.segment_counts = np.asarray(self.segment_counts, dtype=int)
        if self.excluded_counts is None:
            self.excluded_counts = np.zeros(len(self.ss), dtype=int)

    def column(self, q: float) -> np.ndarray:
        return self.values[self.qs.index(q)]

    def to_frame(self, log: bool = False) -> pd.DataFrame:
        data = np.log(self.values) if log else self.values
        frame = pd.DataFrame(data.T, columns=[f'q={q:g}' for q in self.qs])
        frame.insert(0, 's', self.ss.array)
        return frame

    def to_csv(self, path: str, log: bool = False) -> str:
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        self.to_frame(log).to_csv(path, index=False, float_format='%.12g')
        logger.info('Superficie salva: %s', path)
        return path


@dataclass
class ScalingResult:
    qs: QGrid
    h: np.ndarray
    intercept: np.ndarray
    r_squared: np.ndarray
    stderr: np.ndarray
    available: np.ndarray
    fit_range: Tuple[int, int]
    n_scales: np.ndarray = field(default=None)

    def at(self, q: float) -> float:
        return float(self.h[self.qs.index(q)])

    @property
    def hurst(self) -> float:
        return self.at(2.0)

    @property
    def all_available(self) -> bool:
        return bool(np.all(self.available))


@dataclass
class DfaResult:
    hurst: float
    intercept: float
    r_squared: float
    stderr: float
    scales: np.ndarray
    fluctuations: np.ndarray


def profile(values) -> np.ndarray:
    """Cumulative sum of deviations from the mean."""
    x = _as_array(values)
    if x.size < 2:
        raise ScalingError(f'perfil requer N >= 2, recebeu {x.size}')
    return np.cumsum(x - x.mean())


def segment(seq, s: int, bidirectional: bool = True) -> np.ndarray:
    """Non-overlapping segments of length s, forward then (optionally) from the end."""
    seq = np.asarray(seq, dtype=float)
    n = seq.size
    if s > n:
        raise ScalingError(f'escala {s} maior que o comprimento {n}')
    if s < 1:
        raise ScalingError(f'escala invalida: {s}')
    n_s = n // s
    forward = seq[:n_s * s].reshape(n_s, s)
    if not bidirectional:
        return forward
    backward = seq[n - n_s * s:].reshape(n_s, s)
    return np.concatenate([forward, backward], axis=0)


@lru_cache(maxsize=256)
def _projector(s: int, order: int) -> np.ndarray:
    index = (np.arange(s, dtype=float) - (s - 1) / 2.0) / s
    design = np.vander(index, order + 1, increasing=True)
    q, _ = np.linalg.qr(design)
    q.setflags(write=False)
    return q


def _residuals(segments: np.ndarray, order: int) -> np.ndarray:
    s = segments.shape[-1]
    basis = _projector(s, order)
    return segments - (segments @ basis) @ basis.T


def detrend_residuals(segment_x, segment_y, m: int = 1):
    """Residuals of each segment around its own least-squares polynomial of order m.

    Works on a single segment (1-D) or a stack of segments (2-D, one per row).
    """
    sx = np.asarray(segment_x, dtype=float)
    sy = np.asarray(segment_y, dtype=float)
    if sx.shape != sy.shape:
        raise ScalingError(f'segmentos com formas diferentes: {sx.shape} e {sy.shape}')
    s = sx.shape[-1]
    if s < m + 2:
        raise ScalingError(f'segmento de tamanho {s} nao sobredetermina polinomio de ordem {m}')
    rx = _residuals(sx, m)
    ry = rx if segment_y is segment_x else _residuals(sy, m)
    for res in (rx, ry):
        bad = ~np.isfinite(res)
        if bad.any():
            rows = np.flatnonzero(bad.reshape(-1, s).any(axis=1))
            raise ScalingError(f'detrend falhou numericamente no segmento {int(rows[0])}')
    return rx, ry


def segment_covariance(residuals_x, residuals_y):
    """Mean product of residuals; one value per segment when given a stack."""
    rx = np.asarray(residuals_x, dtype=float)
    ry = np.asarray(residuals_y, dtype=float)
    if rx.shape != ry.shape:
        raise ScalingError('residuos com comprimentos diferentes')
    return np.einsum('...k,...k->...', rx, ry) / rx.shape[-1]


def detrended_covariances(px: np.ndarray, py: np.ndarray, s: int, order: int,
                          bidirectional: bool) -> np.ndarray:
    """Per-segment detrended covariances f_v of two profiles at scale s."""
    segs_x = segment(px, s, bidirectional)
    segs_y = segs_x if py is px else segment(py, s, bidirectional)
    rx, ry = detrend_residuals(segs_x, segs_y, order)
    return segment_covariance(rx, ry)


def _aggregate_variance(f: np.ndarray) -> np.ndarray:
    return np.sqrt(np.mean(np.abs(f), axis=-1))


def _aggregate(f: np.ndarray, q: float, degenerate: np.ndarray) -> float:
    """q-order average of the per-segment covariances f_v at one scale."""
    if q == 2:
        return float(_aggregate_variance(f[np.newaxis, :])[0])
    if q > 0:
        return float(np.mean(np.abs(f) ** (q / 2.0)) ** (1.0 / q))
    kept = np.abs(f[~degenerate])
    if kept.size == 0:
        return np.nan
    if q == 0:
        return float(np.exp(np.sum(np.log(kept)) / (2.0 * kept.size)))
    return float(np.mean(kept ** (q / 2.0)) ** (1.0 / q))


def _as_array(series) -> np.ndarray:
    if isinstance(series, np.ndarray):
        return series.astype(float, copy=False)
    return np.asarray(getattr(series, 'values', series), dtype=float)


def _unpack(series, other):
    if other is None and hasattr(series, 'x') and hasattr(series, 'y'):
        return _as_array(series.x), _as_array(series.y), 'cross'
    x = _as_array(series)
    if other is None:
        return x, None, 'single'
    y = _as_array(other)
    if y.size != x.size:
        raise ScalingError(f'series de comprimentos diferentes: {x.size} e {y.size}')
    return x, y, 'cross'


def _profiles(x, y, integrate: bool):
    px = profile(x) if integrate else x.astype(float, copy=True)
    if y is None:
        return px, px
    py = profile(y) if integrate else y.astype(float, copy=True)
    return px, py


def _degenerate_threshold(px, py) -> float:
    energy = np.sqrt(np.mean(px * px) * np.mean(py * py))
    return DEGENERATE_FLOOR * energy


def fluctuation_surface(series, qs: QGrid, ss: ScaleGrid, m: int = 1, bidirectional: bool = True,
                        other=None, integrate: bool = True, workers: int = 1,
                        allow_large: bool = False) -> FluctuationSurface:
    """q-order fluctuation surface for one series (single) or a pair (cross).

    ``series`` may be a TimeSeries, an AlignedPair or a plain array; ``other``
    turns a single input into a cross computation. With ``integrate=False`` the
    input is taken as an already built profile.
    """
    x, y, mode = _unpack(series, other)
    n = x.size
    ss.validate(n, m, allow_large)
    px, py = _profiles(x, y, integrate)
    threshold = _degenerate_threshold(px, py)
    qarr = qs.array

    def _column(s: int):
        f = detrended_covariances(px, py, s, m, bidirectional)
        degenerate = np.abs(f) <= threshold
        if degenerate.all():
            return np.full(qarr.size, np.nan), f.size, int(degenerate.sum())
        col = np.array([_aggregate(f, q, degenerate) for q in qarr])
        return col, f.size, int(degenerate.sum())

    columns = parallel_map(_column, list(ss.scales), workers)
    values = np.column_stack([c[0] for c in columns])
    counts = np.array([c[1] for c in columns])
    excluded = np.array([c[2] for c in columns])
    if excluded.any():
        logger.info('%d segmento(s) com covariancia nula excluidos da agregacao q<=0 (modo %s)',
                    int(excluded.sum()), mode)
    if np.all(np.isnan(values)):
        raise ScalingError(
            'superficie indisponivel: todos os segmentos tem covariancia detrended nula '
            '(serie perfeitamente ajustada pelo polinomio)')
    return FluctuationSurface(qs, ss, values, counts, excluded, m, mode, bidirectional, n)


def _fit_line(ln_s: np.ndarray, ln_f: np.ndarray, weights: np.ndarray):
    """Weighted least squares of ln F on ln s: (slope, intercept, r2, stderr)."""
    design = np.column_stack([np.ones_like(ln_s), ln_s])
    fit = WLS(ln_f, design, weights=weights).fit()
    intercept, slope = (float(v) for v in fit.params)
    if np.ptp(ln_f) == 0:
        r2 = 1.0
    else:
        r2 = float(np.clip(fit.rsquared, 0.0, 1.0))
    return slope, intercept, r2, float(fit.bse[1])


def _fit_weights(segment_counts, weighting: str) -> np.ndarray:
    # var(ln F(q, s)) shrinks roughly as 1/N_s, so large scales with few segments weigh less
    if weighting not in FIT_WEIGHTINGS:
        raise ScalingError(f'fit_weighting desconhecido: {weighting!r}; opcoes: {FIT_WEIGHTINGS}')
    counts = np.asarray(segment_counts, dtype=float)
    if weighting == 'uniform':
        return np.ones_like(counts)
    return np.maximum(counts, 1.0)


def fit_scaling(surface: FluctuationSurface, min_scales: int = MIN_FIT_SCALES,
                weighting: str = 'segments') -> ScalingResult:
    """Log-log fit of F(q, s) on s per q; q with too few valid scales is unavailable.

    ``weighting='segments'`` weights each scale by its segment count;
    ``'uniform'`` is plain OLS.
    """
    ln_s = np.log(surface.ss.array.astype(float))
    weights = _fit_weights(surface.segment_counts, weighting)
    nq = len(surface.qs)
    h = np.full(nq, np.nan)
    intercept = np.full(nq, np.nan)
    r2 = np.full(nq, np.nan)
    stderr = np.full(nq, np.nan)
    n_scales = np.zeros(nq, dtype=int)
    for i in range(nq):
        row = surface.values[i]
        valid = np.isfinite(row) & (row > 0)
        n_scales[i] = int(valid.sum())
        if n_scales[i] < min_scales:
            continue
        h[i], intercept[i], r2[i], stderr[i] = _fit_line(ln_s[valid], np.log(row[valid]), weights[valid])
    available = np.isfinite(h)
    if not available.all():
        missing = [q for q, ok in zip(surface.qs, available) if not ok]
        logger.warning('h(q) indisponivel para q=%s (menos de %d escalas validas)',
                       missing, min_scales)
    fit_range = (int(surface.ss.scales[0]), int(surface.ss.scales[-1]))
    return ScalingResult(surface.qs, h, intercept, r2, stderr, available, fit_range, n_scales)


def dfa(series, ss: Optional[ScaleGrid] = None, m: int = 1, bidirectional: bool = True,
        integrate: bool = True, weighting: str = 'segments') -> DfaResult:
    """Classic DFA: h(2) through the same q = 2 path and fit as the surface."""
    x = _as_array(series)
    if ss is None:
        ss = ScaleGrid.log_spaced(x.size)
    ss.validate(x.size, m, allow_large=True)
    px, _ = _profiles(x, None, integrate)
    covariances = [detrended_covariances(px, px, s, m, bidirectional) for s in ss.scales]
    fluct = np.array([_aggregate(f, 2.0, None) for f in covariances])
    counts = np.array([f.size for f in covariances])
    valid = np.isfinite(fluct) & (fluct > 0)
    if valid.sum() < MIN_FIT_SCALES:
        raise ScalingError('DFA sem escalas validas suficientes')
    ln_s = np.log(ss.array[valid].astype(float))
    weights = _fit_weights(counts, weighting)[valid]
    slope, intercept, r2, stderr = _fit_line(ln_s, np.log(fluct[valid]), weights)
    return DfaResult(slope, intercept, r2, stderr, ss.array, fluct)
