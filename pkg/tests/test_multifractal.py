import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from errors import MultifractalError
from ingest import AlignedPair
from multifractal import (VERDICTS, AttributionConfig, EnsembleSummary, analyze_pair, analyze_series,
                          attribute_sources, finite_size_floor, legendre_spectrum, mass_exponents, mdm,
                          spectrum_from_scaling, widths)
from scaling_core import QGrid, ScalingConfig, ScalingResult
from synth import SynthSpec, cascade_oracle, generate

QS = QGrid.from_range(-4, 4, 0.25)


def scaling_with(h, qs=QS):
    h = np.asarray(h, dtype=float)
    n = len(qs)
    return ScalingResult(qs, h, np.zeros(n), np.ones(n), np.zeros(n), np.isfinite(h), (30, 300))


def test_mass_exponents_and_legendre_identities():
    h = 0.8 - 0.05 * QS.array
    tau = mass_exponents(scaling_with(h))
    i0 = QS.index(0.0)
    assert tau[i0] == -1.0
    alpha, f_alpha = legendre_spectrum(tau, QS)
    assert f_alpha[i0] == 1.0
    np.testing.assert_allclose(tau, QS.array * h - 1.0)


def test_monofractal_spectrum_collapses_to_a_point():
    spectrum = spectrum_from_scaling(scaling_with(np.full(len(QS), 0.6)))
    np.testing.assert_allclose(spectrum.alpha, 0.6, atol=1e-12)
    np.testing.assert_allclose(spectrum.f_alpha, 1.0, atol=1e-12)
    assert spectrum.delta_alpha == pytest.approx(0.0, abs=1e-12)
    assert spectrum.delta_h == 0.0
    assert spectrum.hurst == 0.6
    assert spectrum.mdm == pytest.approx(0.1)


def test_widths_are_literal_endpoint_differences():
    h = np.linspace(0.9, 0.4, len(QS))
    spectrum = spectrum_from_scaling(scaling_with(h))
    delta_h, delta_alpha = widths(h, spectrum)
    assert delta_h == pytest.approx(-0.5)
    assert spectrum.delta_h == pytest.approx(-0.5)
    assert spectrum.abs_delta_h == pytest.approx(0.5)
    assert spectrum.delta_alpha_literal == delta_alpha
    assert spectrum.delta_alpha == abs(delta_alpha)


def test_mdm_worked_example():
    assert mdm(0.7, 0.4) == pytest.approx(0.15)
    assert mdm(0.5, 0.5) == 0.0
    with pytest.raises(MultifractalError):
        mdm(np.nan, 0.5)


@settings(max_examples=30, deadline=None)
@given(st.floats(-2.0, 3.0), st.floats(-2.0, 3.0))
def test_mdm_bounds(h_qmin, h_qmax):
    value = mdm(h_qmin, h_qmax)
    assert 0.0 <= value <= 0.5 * (abs(h_qmin) + abs(h_qmax)) + 0.5
    assert (value == 0.0) == (h_qmin == 0.5 and h_qmax == 0.5)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.2, 0.45))
def test_legendre_alpha_of_cascade_oracle(p):
    q = QS.array
    tau = mass_exponents(cascade_oracle(p, q), QS)
    alpha, _ = legendre_spectrum(tau, QS)
    weights = np.vstack([p ** q, (1.0 - p) ** q])
    logs = np.log2([[p], [1.0 - p]])
    closed_form = -(weights * logs).sum(axis=0) / weights.sum(axis=0)
    np.testing.assert_allclose(alpha, closed_form, rtol=0, atol=2e-2)


def test_unavailable_q_blocks_spectrum():
    h = np.full(len(QS), 0.5)
    h[0] = np.nan
    with pytest.raises(MultifractalError, match='indisponivel'):
        spectrum_from_scaling(scaling_with(h))


def test_non_monotone_h_is_a_warning_not_an_error(caplog):
    h = np.full(len(QS), 0.5)
    h[-1] = 0.7
    with caplog.at_level(logging.WARNING, logger='multifractal'):
        spectrum = spectrum_from_scaling(scaling_with(h))
    assert spectrum.warnings == ['h(q) nao monotona']
    assert 'nao monotona' in caplog.text
    assert spectrum.delta_h == pytest.approx(0.2)


def test_spectrum_to_dict_keys():
    spectrum = spectrum_from_scaling(scaling_with(np.full(len(QS), 0.5)))
    data = spectrum.to_dict()
    for key in ('q', 'h', 'tau', 'alpha', 'f_alpha', 'delta_alpha', 'delta_h', 'abs_delta_h', 'mdm', 'hurst'):
        assert key in data
    assert len(data['q']) == 33


def test_cascade_is_strongly_multifractal():
    series = generate(SynthSpec('cascade', seed=1, params={'p': 0.3, 'depth': 12}))
    spectrum = analyze_series(series).spectrum
    assert spectrum.delta_h < -0.4
    assert spectrum.delta_alpha > 0.5
    i0 = QS.index(0.0)
    assert spectrum.f_alpha[i0] == 1.0
    assert spectrum.tau[i0] == -1.0


def test_pair_with_itself_matches_single_series():
    series = generate(SynthSpec('gaussian_iid', 2000, seed=2))
    pair = AlignedPair(series, series)
    single = analyze_series(series).spectrum
    joint = analyze_pair(pair).spectrum
    np.testing.assert_array_equal(single.h, joint.h)


def test_ensemble_summary_needs_two_members():
    spectrum = spectrum_from_scaling(scaling_with(np.full(len(QS), 0.5)))
    with pytest.raises(MultifractalError):
        EnsembleSummary.from_spectra([spectrum])
    summary = EnsembleSummary.from_spectra([spectrum, spectrum])
    assert summary.n == 2
    assert summary.sd['delta_alpha'] == 0.0
    np.testing.assert_allclose(summary.curves['h'], 0.5)


def test_finite_size_floor_is_seed_deterministic():
    config = ScalingConfig(q_min=-2, q_max=2, q_step=1)
    a = finite_size_floor(1000, config, n_sims=3, seed=7)
    b = finite_size_floor(1000, config, n_sims=3, seed=7)
    assert a.mean == b.mean
    assert a.n == 3


def _small_attribution(seed, workers=1):
    return AttributionConfig(scaling=ScalingConfig(q_min=-2, q_max=2, q_step=0.5),
                             ensemble_size=4, floor_ensemble_size=3, max_iterations=50,
                             master_seed=seed, workers=workers)


def test_attribution_structure_and_determinism():
    series = generate(SynthSpec('ar1', 1500, seed=3, params={'phi': 0.5}))
    first = attribute_sources(series, _small_attribution(11))
    again = attribute_sources(series, _small_attribution(11, workers=3))
    other = attribute_sources(series, _small_attribution(12))
    assert set(first.verdicts) == set(VERDICTS)
    assert first.shuffled.n == 4 and first.surrogate.n == 4 and first.floor.n == 3
    assert first.to_dict() == again.to_dict()
    assert first.to_dict()['shuffled'] != other.to_dict()['shuffled']
    for name, margin in first.margins.items():
        assert margin['margin'] == pytest.approx(2.0 * margin['pooled_sd'])
        assert first.verdicts[name] == (margin['difference'] > margin['margin'])


def test_attribution_config_rejects_tiny_ensembles():
    with pytest.raises(MultifractalError):
        AttributionConfig(ensemble_size=1)
    with pytest.raises(MultifractalError):
        AttributionConfig(floor_ensemble_size=1)


def test_attribution_width_measures_per_verdict():
    series = generate(SynthSpec('ar1', 1500, seed=3, params={'phi': 0.5}))
    result = attribute_sources(series, _small_attribution(11))
    temporal = result.margins['temporal_correlation_contributes']
    assert temporal['difference'] == pytest.approx(
        result.original.abs_delta_h - result.shuffled.mean['abs_delta_h'])
    distribution = result.margins['distribution_contributes']
    assert distribution['difference'] == pytest.approx(
        result.shuffled.mean['delta_alpha'] - result.floor.mean['delta_alpha'])
    assert result.to_dict()['measures'] == {
        'temporal_correlation_contributes': 'abs_delta_h',
        'nonlinear_correlation_contributes': 'abs_delta_h',
        'distribution_contributes': 'delta_alpha',
        'linear_correlation_contributes': 'delta_alpha',
    }

    legacy = AttributionConfig(scaling=ScalingConfig(q_min=-2, q_max=2, q_step=0.5), ensemble_size=4,
                               floor_ensemble_size=3, max_iterations=50, master_seed=11,
                               temporal_width='delta_alpha')
    on_alpha = attribute_sources(series, legacy)
    assert on_alpha.margins['nonlinear_correlation_contributes']['difference'] == pytest.approx(
        on_alpha.original.delta_alpha - on_alpha.surrogate.mean['delta_alpha'])


def test_attribution_config_rejects_unknown_width():
    with pytest.raises(MultifractalError, match='medida de largura'):
        AttributionConfig(temporal_width='delta_tau')


@pytest.mark.slow
def test_cascade_matches_closed_form_exponents():
    series = generate(SynthSpec('cascade', seed=5, params={'p': 0.3, 'depth': 16}))
    analysis = analyze_series(series)
    expected = cascade_oracle(0.3, QS.array)
    np.testing.assert_allclose(analysis.scaling.h, expected, atol=0.08)


@pytest.mark.slow
def test_gaussian_below_floor_and_cascade_far_above():
    n = 2 ** 13
    floor = finite_size_floor(n, n_sims=20, seed=20200101)
    threshold = floor.mean['delta_alpha'] + 3.0 * floor.sd['delta_alpha']
    gaussian = analyze_series(generate(SynthSpec('gaussian_iid', n, seed=99))).spectrum
    cascade = analyze_series(generate(SynthSpec('cascade', seed=99, params={'p': 0.3, 'depth': 13}))).spectrum
    assert gaussian.delta_alpha < threshold
    assert cascade.delta_alpha >= 3.0 * floor.mean['delta_alpha']


@pytest.mark.slow
@pytest.mark.parametrize('master_seed', [1, 2, 3, 4, 5])
def test_source_attribution_verdicts(master_seed):
    config = AttributionConfig(master_seed=master_seed)
    cascade = generate(SynthSpec('cascade', seed=master_seed, params={'p': 0.3, 'depth': 12}))
    assert attribute_sources(cascade, config).verdicts['temporal_correlation_contributes']

    heavy = attribute_sources(generate(SynthSpec('student_t', 4096, seed=master_seed)), config).verdicts
    assert heavy['distribution_contributes']
    assert not heavy['temporal_correlation_contributes']

    plain = attribute_sources(generate(SynthSpec('gaussian_iid', 4096, seed=master_seed)), config).verdicts
    assert not any(plain.values())
