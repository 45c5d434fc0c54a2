"""Leitura, transformacao e sincronizacao de series temporais.

Toda serie entra no toolkit como um TimeSeries com timestamps em UTC. As
transformacoes (log-retornos, variacoes de volume) e o alinhamento por
intersecao de timestamps devolvem objetos novos; nada e alterado in-place.
"""
import os
import re
from dataclasses import dataclass, field
from datetime import timedelta, timezone
from typing import Optional, Union

import numpy as np
import pandas as pd

from errors import IngestError
from logging_setup import get_logger

logger = get_logger(__name__)

SERIES_KINDS = ('price', 'return', 'volume', 'volume_change', 'generic')
MIN_SCALE = 30
MIN_ALIGNED = 5 * MIN_SCALE

_OFFSET_RE = re.compile(r'^(?:UTC)?([+-])(\d{2}):?(\d{2})$')
_AWARE_RE = r'(?:Z|[+-]\d{2}:?\d{2})$'


def _to_utc_index(timestamps) -> pd.DatetimeIndex:
    idx = pd.DatetimeIndex(timestamps)
    if idx.tz is None:
        return idx.tz_localize('UTC')
    return idx.tz_convert('UTC')


@dataclass(frozen=True)
class TimeSeries:
    timestamps: pd.DatetimeIndex
    values: np.ndarray
    label: str = ''
    kind: str = 'generic'

    def __post_init__(self):
        ts = _to_utc_index(self.timestamps)
        vals = np.asarray(self.values, dtype=float).copy()
        vals.setflags(write=False)
        if vals.ndim != 1:
            raise IngestError(f'serie {self.label!r}: valores devem ser 1-D')
        if len(ts) != vals.size:
            raise IngestError(
                f'serie {self.label!r}: {len(ts)} timestamps para {vals.size} valores')
        if self.kind not in SERIES_KINDS:
            raise IngestError(f'serie {self.label!r}: kind desconhecido {self.kind!r}')
        bad = np.flatnonzero(~np.isfinite(vals))
        if bad.size:
            raise IngestError(
                f'serie {self.label!r}: valores nao finitos nos indices {bad[:10].tolist()}')
        if len(ts) > 1:
            steps = np.diff(ts.asi8)
            bad = np.flatnonzero(steps <= 0)
            if bad.size:
                raise IngestError(
                    f'serie {self.label!r}: timestamps nao estritamente crescentes em '
                    f'{[str(ts[i + 1]) for i in bad[:5]]}')
        object.__setattr__(self, 'timestamps', ts)
        object.__setattr__(self, 'values', vals)

    def __len__(self) -> int:
        return self.values.size

    @classmethod
    def from_values(cls, values, label: str = '', kind: str = 'generic',
                    start: str = '2020-01-01T00:00:00Z', freq: str = '5min') -> 'TimeSeries':
        """Series on an evenly spaced UTC grid (synthetic data, surrogates)."""
        values = np.asarray(values, dtype=float)
        ts = pd.date_range(start=pd.Timestamp(start), periods=values.size, freq=freq)
        return cls(ts, values, label, kind)

    def with_values(self, values, kind: Optional[str] = None, label: Optional[str] = None) -> 'TimeSeries':
        return TimeSeries(self.timestamps, values, self.label if label is None else label,
                          self.kind if kind is None else kind)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({'timestamp': self.timestamps.strftime('%Y-%m-%dT%H:%M:%SZ'),
                             'value': self.values})


@dataclass(frozen=True)
class AlignedPair:
    x: TimeSeries
    y: TimeSeries
    common_timestamps: pd.DatetimeIndex = field(default=None)
    min_length: int = MIN_ALIGNED

    def __post_init__(self):
        if not self.x.timestamps.equals(self.y.timestamps):
            raise IngestError(
                f'par {self.x.label!r}/{self.y.label!r}: timestamps diferentes; use align()')
        if len(self.x) < self.min_length:
            raise IngestError(
                f'par {self.x.label!r}/{self.y.label!r}: N={len(self.x)} abaixo do minimo {self.min_length}')
        object.__setattr__(self, 'common_timestamps', self.x.timestamps)

    def __len__(self) -> int:
        return len(self.x)

    @property
    def name(self) -> str:
        return f'{self.x.label}_{self.y.label}'


def _check_positive(series: TimeSeries, what: str):
    bad = np.flatnonzero(series.values <= 0)
    if bad.size:
        raise IngestError(
            f'{what} {series.label!r}: valor nao positivo no indice {int(bad[0])} '
            f'({series.values[bad[0]]!r}); {bad.size} ocorrencia(s)')


def _log_differences(series: TimeSeries, kind: str) -> TimeSeries:
    if len(series) < 2:
        raise IngestError(f'serie {series.label!r}: pelo menos 2 observacoes sao necessarias')
    diffs = np.diff(np.log(series.values))
    return TimeSeries(series.timestamps[1:], diffs, series.label, kind)


def log_returns(prices: TimeSeries) -> TimeSeries:
    """value[i] = ln(price[i+1]) - ln(price[i]), stamped at the later bar."""
    if prices.kind != 'price':
        raise IngestError(f'log_returns espera kind=price, recebeu {prices.kind!r}')
    _check_positive(prices, 'preco')
    return _log_differences(prices, 'return')


def volume_changes(volume: TimeSeries, drop_zero: bool = True) -> TimeSeries:
    """Log-differences of traded volume.

    Zero-volume bars are dropped before differencing (and logged); with
    ``drop_zero=False`` they are rejected instead. Negative volume is always
    rejected.
    """
    if volume.kind != 'volume':
        raise IngestError(f'volume_changes espera kind=volume, recebeu {volume.kind!r}')
    negative = np.flatnonzero(volume.values < 0)
    if negative.size:
        raise IngestError(
            f'volume {volume.label!r}: valor negativo no indice {int(negative[0])}')
    zero = volume.values == 0
    if zero.any():
        stamps = [str(t) for t in volume.timestamps[zero]]
        if not drop_zero:
            raise IngestError(f'volume {volume.label!r}: volume zero em {stamps}')
        logger.warning('volume %s: %d barra(s) com volume zero descartadas (%s)',
                       volume.label, len(stamps), ', '.join(stamps[:5]))
        volume = TimeSeries(volume.timestamps[~zero], volume.values[~zero],
                            volume.label, volume.kind)
    return _log_differences(volume, 'volume_change')


def prepare_series(series: TimeSeries) -> TimeSeries:
    """Apply the transform implied by the series kind."""
    if series.kind == 'price':
        return log_returns(series)
    if series.kind == 'volume':
        return volume_changes(series)
    return series


def align(x: TimeSeries, y: TimeSeries, min_length: int = MIN_ALIGNED) -> AlignedPair:
    """Restrict both series to the exact intersection of their timestamps."""
    if len(x) == 0 or len(y) == 0:
        raise IngestError('align recebeu serie vazia')
    common = x.timestamps.intersection(y.timestamps).sort_values()
    if len(common) < min_length:
        raise IngestError(
            f'sobreposicao insuficiente entre {x.label!r} (N={len(x)}) e {y.label!r} '
            f'(N={len(y)}): {len(common)} timestamps em comum, minimo {min_length}')
    ix = x.timestamps.get_indexer(common)
    iy = y.timestamps.get_indexer(common)
    return AlignedPair(TimeSeries(common, x.values[ix], x.label, x.kind),
                       TimeSeries(common, y.values[iy], y.label, y.kind),
                       min_length=min_length)


def slice_period(series: TimeSeries, start, end) -> TimeSeries:
    """Observations with start <= t < end."""
    start = _to_utc_index([pd.Timestamp(start)])[0]
    end = _to_utc_index([pd.Timestamp(end)])[0]
    mask = (series.timestamps >= start) & (series.timestamps < end)
    return TimeSeries(series.timestamps[mask], series.values[mask], series.label, series.kind)


def parse_timezone(tz: Union[str, None]):
    """Fixed offsets ('+08:00') become datetime.timezone; other names go to pandas."""
    if tz is None or tz == '' or tz.upper() == 'UTC':
        return 'UTC'
    match = _OFFSET_RE.match(tz.strip())
    if match:
        sign, hours, minutes = match.groups()
        delta = timedelta(hours=int(hours), minutes=int(minutes))
        return timezone(-delta if sign == '-' else delta)
    return tz


def _parse_timestamps(raw: pd.Series, tz) -> pd.Series:
    if pd.api.types.is_numeric_dtype(raw):
        return pd.to_datetime(raw, unit='s', utc=True, errors='coerce')
    text = raw.astype(str).str.strip()
    aware = text.str.contains(_AWARE_RE, regex=True)
    parsed = pd.Series(pd.NaT, index=raw.index, dtype='datetime64[ns, UTC]')
    if aware.any():
        parsed[aware] = pd.to_datetime(text[aware], utc=True, errors='coerce', format='ISO8601')
    naive = ~aware
    if naive.any():
        local = pd.to_datetime(text[naive], errors='coerce', format='ISO8601')
        local = local.dt.tz_localize(parse_timezone(tz), ambiguous='NaT', nonexistent='NaT')
        parsed[naive] = local.dt.tz_convert('UTC')
    return parsed


def read_series(path: str, time_column: str = 'timestamp', value_column: str = 'value',
                label: Optional[str] = None, kind: str = 'generic', tz: Optional[str] = 'UTC',
                delimiter: str = ',') -> TimeSeries:
    """Load a (timestamp, value) series from CSV or Parquet.

    Timestamps may be ISO-8601 strings (naive ones are interpreted in ``tz``)
    or epoch seconds. Rows that fail to parse are reported by file line number.
    """
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    label = label or os.path.splitext(os.path.basename(path))[0]
    if path.endswith('.parquet'):
        frame = pd.read_parquet(path)
        first_line = 1
    else:
        frame = pd.read_csv(path, sep=delimiter, dtype={value_column: str}
                            if value_column else None)
        first_line = 2
    missing = [c for c in (time_column, value_column) if c not in frame.columns]
    if missing:
        raise IngestError(f'{path}: colunas ausentes {missing}; disponiveis {list(frame.columns)}')
    stamps = _parse_timestamps(frame[time_column], tz)
    values = pd.to_numeric(frame[value_column], errors='coerce')
    bad = frame.index[stamps.isna() | values.isna()]
    if len(bad):
        lines = [int(i) + first_line for i in bad[:20]]
        raise IngestError(f'{path}: {len(bad)} linha(s) nao interpretaveis, linhas {lines}')
    order = np.argsort(stamps.values, kind='stable')
    if np.any(order != np.arange(order.size)):
        logger.info('%s: linhas fora de ordem temporal foram ordenadas', path)
    series = TimeSeries(pd.DatetimeIndex(stamps.values[order]), values.to_numpy()[order], label, kind)
    logger.info('Serie carregada: %s (label=%s, N=%d, kind=%s)', path, label, len(series), kind)
    return series


def write_series_csv(series: TimeSeries, path: str, delimiter: str = ',') -> str:
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    series.to_frame().to_csv(path, index=False, sep=delimiter, float_format='%.17g')
    logger.info('Serie salva: %s (N=%d)', path, len(series))
    return path
