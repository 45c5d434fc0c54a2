"""Bateria de testes de passeio aleatorio (eficiencia na forma fraca).

Runs, Ljung-Box, Variance Ratio, BDS, Mann-Kendall e o expoente de Hurst do
DFA. Cada teste e uma funcao pura da serie e dos parametros; a bateria
registra falhas individuais no proprio item e continua.
"""
import warnings
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np
from arch.unitroot import VarianceRatio
from scipy import stats
from statsmodels.stats.diagnostic import acorr_ljungbox

from errors import RandomWalkTestError
from logging_setup import get_logger
from parallel import parallel_map
from reports import float_or_none
from scaling_core import ScaleGrid, dfa

logger = get_logger(__name__)

SIGNIFICANCE_LEVEL = 0.05
DEFAULT_HORIZONS = (2, 4, 8, 16)
DEFAULT_BDS_DIMS = (2, 3, 4, 5)
DEFAULT_EPS_FACTOR = 0.7
MIN_BATTERY_LENGTH = 200
P_VALUE_TESTS = ('runs', 'ljung_box', 'variance_ratio', 'bds', 'mann_kendall')


@dataclass
class TestResult:
    __test__ = False

    name: str
    statistic: Optional[float] = None
    p_value: Optional[float] = None
    decision_p_value: Optional[float] = None
    reject: Optional[bool] = None
    params: Dict[str, object] = field(default_factory=dict)
    details: Dict[str, object] = field(default_factory=dict)
    error: Optional[str] = None

    def to_dict(self) -> dict:
        return {
            'name': self.name,
            'statistic': float_or_none(self.statistic),
            'p_value': float_or_none(self.p_value),
            'decision_p_value': float_or_none(self.decision_p_value),
            'reject': self.reject,
            'params': dict(self.params),
            'details': self.details,
            'error': self.error,
        }


def _finish(result: TestResult, level: float = SIGNIFICANCE_LEVEL) -> TestResult:
    if result.decision_p_value is None:
        result.decision_p_value = result.p_value
    result.reject = bool(result.decision_p_value < level)
    return result


def _array(series) -> np.ndarray:
    return np.asarray(getattr(series, 'values', series), dtype=float)


def _two_sided(z: float) -> float:
    return float(2.0 * stats.norm.sf(abs(z)))


def count_runs(signs) -> int:
    """Number of maximal blocks of equal consecutive values."""
    signs = np.asarray(signs)
    if signs.size == 0:
        return 0
    return int(1 + np.count_nonzero(signs[1:] != signs[:-1]))


def runs_test(series, min_length: int = 20) -> TestResult:
    """Wald-Wolfowitz runs above/below the median; ties with the median are dropped."""
    x = _array(series)
    if x.size < min_length:
        raise RandomWalkTestError(f'runs test requer N >= {min_length}, recebeu {x.size}')
    if np.all(x == x[0]):
        raise RandomWalkTestError('runs test: todos os valores iguais, sem estrutura de runs')
    deviations = x - np.median(x)
    deviations = deviations[deviations != 0]
    above = deviations > 0
    n1 = int(above.sum())
    n2 = int(above.size - n1)
    if n1 == 0 or n2 == 0:
        raise RandomWalkTestError('runs test: apenas um lado da mediana apos remover empates')
    n = n1 + n2
    runs = count_runs(above)
    expected = 2.0 * n1 * n2 / n + 1.0
    variance = 2.0 * n1 * n2 * (2.0 * n1 * n2 - n) / (n ** 2 * (n - 1.0))
    z = (runs - expected) / np.sqrt(variance)
    return _finish(TestResult('runs', float(z), _two_sided(z),
                              params={'split': 'median'},
                              details={'runs': runs, 'n_above': n1, 'n_below': n2,
                                       'dropped_ties': int(x.size - n)}))


def default_lags(n: int) -> int:
    return max(1, min(10, n // 5))


def ljung_box(series, lags: Optional[int] = None) -> TestResult:
    x = _array(series)
    lags = default_lags(x.size) if lags is None else int(lags)
    if not 1 <= lags < x.size:
        raise RandomWalkTestError(f'Ljung-Box requer N > lags >= 1 (N={x.size}, lags={lags})')
    if np.var(x) == 0:
        raise RandomWalkTestError('Ljung-Box: serie com variancia zero')
    table = acorr_ljungbox(x, lags=[lags], return_df=True)
    q = float(table['lb_stat'].iloc[-1])
    p = float(table['lb_pvalue'].iloc[-1])
    return _finish(TestResult('ljung_box', q, min(1.0, max(0.0, p)), params={'lags': lags}))


def _bonferroni(p_values) -> Tuple[float, float]:
    p_min = float(np.min(p_values))
    return p_min, min(1.0, p_min * len(p_values))


def variance_ratio(series, horizons: Sequence[int] = DEFAULT_HORIZONS) -> TestResult:
    """Lo-MacKinlay overlapping, de-biased VR on the cumulated increments.

    The headline z per horizon is the heteroskedasticity-robust one; the
    battery decision uses the Bonferroni-adjusted minimum p over horizons.
    """
    x = _array(series)
    horizons = tuple(int(k) for k in horizons)
    if not horizons or min(horizons) < 2:
        raise RandomWalkTestError(f'horizontes invalidos: {horizons}')
    if x.size < 10 * max(horizons):
        raise RandomWalkTestError(
            f'Variance Ratio requer N >= 10 * max(k) = {10 * max(horizons)}, recebeu {x.size}')
    if np.var(x) == 0:
        raise RandomWalkTestError('Variance Ratio: serie com variancia zero')
    levels = np.concatenate([[0.0], np.cumsum(x)])
    per_k = {}
    p_values = []
    for k in horizons:
        robust = VarianceRatio(levels, lags=k, trend='c', debiased=True, robust=True)
        homo = VarianceRatio(levels, lags=k, trend='c', debiased=True, robust=False)
        p = float(robust.pvalue)
        per_k[str(k)] = {'vr': float(robust.vr), 'z_homo': float(homo.stat),
                         'z_hetero': float(robust.stat), 'p_value': p}
        p_values.append(p)
    p_min, p_adj = _bonferroni(p_values)
    headline = per_k[str(horizons[int(np.argmin(p_values))])]
    return _finish(TestResult('variance_ratio', headline['z_hetero'], p_min, p_adj,
                              params={'horizons': list(horizons), 'robust': True,
                                      'note': 'p = minimo entre horizontes; decisao com Bonferroni'},
                              details=per_k))


def _indicators(x: np.ndarray, eps: float) -> np.ndarray:
    return np.abs(x[:, np.newaxis] - x[np.newaxis, :]) < eps


def _pair_mean(joint: np.ndarray) -> float:
    """Mean of the strict upper triangle of a symmetric 0/1 matrix."""
    n = joint.shape[0]
    pairs = n * (n - 1) // 2
    count = (int(np.count_nonzero(joint)) - int(np.count_nonzero(np.diagonal(joint)))) // 2
    return count / pairs


def _joint(indicators: np.ndarray, m: int) -> np.ndarray:
    joint = indicators
    for lag in range(1, m):
        joint = joint[:-1, :-1] & indicators[lag:, lag:]
    return joint


def correlation_integral(series, eps: float, m: int = 1) -> float:
    """Fraction of pairs of m-histories whose coordinates are all within eps."""
    x = _array(series)
    if m < 1 or m >= x.size:
        raise RandomWalkTestError(f'dimensao de imersao invalida: {m}')
    return _pair_mean(_joint(_indicators(x, eps), m))


def bds_test(series, dims: Sequence[int] = DEFAULT_BDS_DIMS,
             eps_factor: float = DEFAULT_EPS_FACTOR, min_length: int = MIN_BATTERY_LENGTH) -> TestResult:
    """BDS statistic per embedding dimension with eps = eps_factor * sd (ddof=1)."""
    x = _array(series)
    n = x.size
    dims = tuple(int(m) for m in dims)
    if n < min_length:
        raise RandomWalkTestError(f'BDS requer N >= {min_length}, recebeu {n}')
    if not dims or min(dims) < 2:
        raise RandomWalkTestError(f'dimensoes BDS invalidas: {dims}')
    sd = np.std(x, ddof=1)
    if sd == 0:
        raise RandomWalkTestError('BDS: serie com variancia zero')
    eps = eps_factor * sd
    indicators = _indicators(x, eps)
    c1_full = _pair_mean(indicators)
    if c1_full == 0:
        raise RandomWalkTestError(
            f'BDS: C_1(eps) = 0 com eps_factor={eps_factor}; aumente o fator')
    row_sums = indicators.sum(axis=1).astype(float)
    k = ((row_sums ** 2).sum() - 3.0 * row_sums.sum() + 2.0 * n) / (n * (n - 1.0) * (n - 2.0))
    per_m = {}
    p_values = []
    joint = indicators
    built = 1
    for m in sorted(dims):
        while built < m:
            joint = joint[:-1, :-1] & indicators[built:, built:]
            built += 1
        c_m = _pair_mean(joint)
        c_1 = _pair_mean(indicators[m - 1:, m - 1:])
        tail = sum(k ** (m - j) * c1_full ** (2 * j) for j in range(1, m))
        variance = 4.0 * (k ** m + 2.0 * tail + (m - 1) ** 2 * c1_full ** (2 * m)
                          - m ** 2 * k * c1_full ** (2 * m - 2))
        if not variance > 0:
            raise RandomWalkTestError(f'BDS: variancia assintotica nao positiva em m={m}')
        w = np.sqrt(n - m + 1) * (c_m - c_1 ** m) / np.sqrt(variance)
        p = _two_sided(w)
        per_m[str(m)] = {'w': float(w), 'p_value': p, 'c_m': c_m, 'c_1': c_1}
        p_values.append(p)
    p_min, p_adj = _bonferroni(p_values)
    headline = per_m[str(sorted(dims)[int(np.argmin(p_values))])]
    return _finish(TestResult('bds', headline['w'], p_min, p_adj,
                              params={'dims': list(dims), 'eps_factor': eps_factor, 'eps': float(eps),
                                      'note': 'p = minimo entre dimensoes; decisao com Bonferroni'},
                              details=per_m))


def mann_kendall(series) -> TestResult:
    """Mann-Kendall trend test with tie-corrected variance and continuity correction."""
    x = _array(series)
    n = x.size
    if n < 3:
        raise RandomWalkTestError(f'Mann-Kendall requer N >= 3, recebeu {n}')
    if n < 10:
        logger.warning('Mann-Kendall com N=%d < 10: aproximacao normal pouco confiavel', n)
    s = 0
    for lag in range(1, n):
        s += int(np.sign(x[lag:] - x[:-lag]).sum())
    _, ties = np.unique(x, return_counts=True)
    ties = ties[ties > 1].astype(float)
    variance = (n * (n - 1.0) * (2.0 * n + 5.0) - np.sum(ties * (ties - 1) * (2 * ties + 5))) / 18.0
    if variance <= 0:
        z, p = 0.0, 1.0
    else:
        if s > 0:
            z = (s - 1) / np.sqrt(variance)
        elif s < 0:
            z = (s + 1) / np.sqrt(variance)
        else:
            z = 0.0
        p = _two_sided(z)
    return _finish(TestResult('mann_kendall', float(z), p, details={'s': s, 'variance': float(variance)}))


@dataclass(frozen=True)
class BatteryConfig:
    ljung_box_lags: Optional[int] = None
    vr_horizons: Tuple[int, ...] = DEFAULT_HORIZONS
    bds_dims: Tuple[int, ...] = DEFAULT_BDS_DIMS
    bds_eps_factor: float = DEFAULT_EPS_FACTOR
    level: float = SIGNIFICANCE_LEVEL
    dfa_scale_min: int = 30
    dfa_order: int = 1
    bidirectional: bool = True
    dfa_weighting: str = 'segments'
    workers: int = 1


@dataclass
class TestReport:
    __test__ = False

    n: int
    tests: Dict[str, TestResult]
    hurst: Optional[float]
    hurst_r_squared: Optional[float]
    dfa_error: Optional[str] = None

    @property
    def rejections(self) -> int:
        return sum(1 for name in P_VALUE_TESTS
                   if name in self.tests and self.tests[name].reject)

    def to_dict(self) -> dict:
        tests = {name: result.to_dict() for name, result in self.tests.items()}
        tests['dfa'] = {'name': 'dfa', 'hurst': float_or_none(self.hurst),
                        'r_squared': float_or_none(self.hurst_r_squared), 'error': self.dfa_error}
        return {'n': self.n, 'tests': tests, 'rejections': self.rejections}

    def to_row(self) -> dict:
        row = {name: (self.tests[name].p_value if name in self.tests else None)
               for name in P_VALUE_TESTS}
        row['dfa_hurst'] = self.hurst
        row['rejections'] = self.rejections
        return row


def battery(series, config: Optional[BatteryConfig] = None) -> TestReport:
    """Run the five p-valued tests and the DFA Hurst exponent."""
    config = config or BatteryConfig()
    x = _array(series)
    if x.size < MIN_BATTERY_LENGTH:
        raise RandomWalkTestError(f'bateria requer N >= {MIN_BATTERY_LENGTH}, recebeu {x.size}')

    jobs: Dict[str, Callable[[], TestResult]] = {
        'runs': lambda: runs_test(x),
        'ljung_box': lambda: ljung_box(x, config.ljung_box_lags),
        'variance_ratio': lambda: variance_ratio(x, config.vr_horizons),
        'bds': lambda: bds_test(x, config.bds_dims, config.bds_eps_factor),
        'mann_kendall': lambda: mann_kendall(x),
    }

    def _run(name: str) -> TestResult:
        try:
            with warnings.catch_warnings():
                warnings.simplefilter('ignore', RuntimeWarning)
                return _finish(jobs[name](), config.level)
        except Exception as e:
            logger.warning('Teste %s falhou: %s: %s', name, type(e).__name__, e)
            return TestResult(name, error=f'{type(e).__name__}: {e}')

    results = parallel_map(_run, list(jobs), config.workers)
    tests = {r.name: r for r in results}

    hurst = r2 = dfa_error = None
    try:
        grid = ScaleGrid.log_spaced(x.size, s_min=config.dfa_scale_min)
        result = dfa(x, grid, config.dfa_order, config.bidirectional,
                     weighting=config.dfa_weighting)
        hurst, r2 = result.hurst, result.r_squared
    except Exception as e:
        dfa_error = f'{type(e).__name__}: {e}'
        logger.warning('DFA da bateria falhou: %s', dfa_error)
    return TestReport(int(x.size), tests, hurst, r2, dfa_error)
