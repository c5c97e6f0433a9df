import math
from fractions import Fraction

import numpy as np
import pytest

from nomad_canonical_flows.errors import ParameterDomainError, UnsupportedModelError
from nomad_canonical_flows.model_catalog import (
    LinearModelParams,
    QuantumComparisonParams,
    build_dho_model,
    build_example1_model,
    build_linear_model,
    hurwitz_violation,
    is_hurwitz,
    linear_drift_diffusion,
    linear_model_matrices,
    quantum_comparison,
    rational_sqrt,
)
from nomad_canonical_flows.poisson_algebra import (
    ModelSpec,
    NoiseChannel,
    poisson_bracket,
)
from nomad_canonical_flows.polynomial import PolynomialObservable

P = PolynomialObservable.parse


@pytest.mark.parametrize(
    'x, expected',
    [
        (Fraction(9, 16), Fraction(3, 4)),
        (4, Fraction(2)),
        (0, Fraction(0)),
        (Fraction(1, 2), None),
        (2, None),
    ],
)
def test_rational_sqrt(x, expected):
    assert rational_sqrt(x) == expected


def test_rational_sqrt_rejects_negative():
    with pytest.raises(ParameterDomainError):
        rational_sqrt(-1)


@pytest.mark.parametrize(
    'kwargs', [{'m': 0}, {'omega': -1}, {'gamma': 0}, {'epsilon': 0}, {'s': -2}]
)
def test_linear_params_domain(kwargs):
    with pytest.raises(ParameterDomainError):
        LinearModelParams(**kwargs)


def test_linear_model_exact():
    model = build_linear_model(LinearModelParams(gamma=Fraction(1, 4)), exact=True)
    (channel,) = model.channels
    assert channel.F == P('-p/2')
    assert channel.G == P('q/2')
    assert model.hamiltonian == P('p^2/2 + q^2/2')
    assert model.name == 'linear'


def test_linear_model_irrational_root():
    params = LinearModelParams(gamma=Fraction(1, 2))
    with pytest.raises(ParameterDomainError):
        build_linear_model(params, exact=True)
    model = build_linear_model(params)
    (channel,) = model.channels
    # the coupling {F, G} = gamma s holds exactly despite the float-derived root
    assert poisson_bracket(channel.F, channel.G) == PolynomialObservable.constant(
        Fraction(1, 2)
    )


@pytest.mark.parametrize(
    'params',
    [
        LinearModelParams(),
        LinearModelParams(m=2, omega=Fraction(1, 2), gamma=1, epsilon=2, s=3, z=1),
        LinearModelParams(gamma=Fraction(1, 4), z=Fraction(-1, 8)),
    ],
)
def test_closed_form_matrices_match_extracted(params):
    extracted = linear_drift_diffusion(build_linear_model(params))
    closed = linear_model_matrices(params)
    np.testing.assert_allclose(extracted.A, closed.A, rtol=1e-14, atol=1e-15)
    np.testing.assert_allclose(extracted.g, closed.g, rtol=1e-14, atol=1e-15)


def test_linear_drift_diffusion_of_quarter_model(quarter_linear_model):
    matrices = linear_drift_diffusion(quarter_linear_model)
    np.testing.assert_array_equal(matrices.A, [[0.0, 1.0], [-1.0, -0.25]])
    np.testing.assert_array_equal(matrices.g, [[0.25, 0.0], [0.0, 0.25]])
    assert len(matrices.noise_coefficients) == 2


def test_linear_drift_diffusion_rejects_nonlinear(dho_model):
    with pytest.raises(UnsupportedModelError):
        linear_drift_diffusion(dho_model)
    with pytest.raises(UnsupportedModelError):
        linear_drift_diffusion(ModelSpec(P('q^4 + p^2')))


def test_dho_model_drift_exact(dho_model):
    assert dho_model.name == 'dho'
    (channel,) = dho_model.channels
    assert channel.F == P('3/16*p^2 + 3/4*q^2')
    assert dho_model.hamiltonian == P('p^2/2 + q^2/2 + 9/32*q*p')


def test_dho_model_domain():
    with pytest.raises(ParameterDomainError):
        build_dho_model(1, 1, 0, 1)
    with pytest.raises(ParameterDomainError):
        build_dho_model(1, 1, Fraction(1, 2), 1, exact=True)


def test_example1_model():
    model = build_example1_model(P('p^2/2'), [1, 2], [3, 4])
    assert [c.F for c in model.channels] == [P('p + 3*q'), P('2*p + 4*q')]
    with pytest.raises(ParameterDomainError):
        build_example1_model(P('p'), [1], [])


@pytest.mark.parametrize(
    'A, hurwitz',
    [
        ([[0.0, 1.0], [-1.0, -0.5]], True),
        ([[0.25, 1.0], [-1.0, 0.25]], False),
        ([[-1.0, 0.0], [0.0, 1.0]], False),
    ],
)
def test_is_hurwitz(A, hurwitz):
    assert is_hurwitz(np.array(A)) is hurwitz
    assert (hurwitz_violation(np.array(A)) is None) is hurwitz


def test_quantum_matches_classical_at_half_gamma():
    report = quantum_comparison(
        QuantumComparisonParams(hbar=2, m=1, omega=1, gamma=0.5, n=0, mu=0.25)
    )
    np.testing.assert_allclose(report.drift_diffusion.A, [[0.0, 1.0], [-1.0, -0.5]])
    np.testing.assert_allclose(report.drift_diffusion.g, [[0.5, 0.0], [0.0, 0.5]])
    assert report.matches_classical
    assert report.drift_difference <= 1e-12
    assert report.diffusion_difference <= 1e-12
    assert report.matching_mu == pytest.approx(0.25, abs=1e-12)
    assert report.paper_mu == 0.5
    assert not report.paper_mu_reproduces_drift
    assert report.action_scale == 1.0
    assert report.epsilon == 1.0
    assert report.k_bt is None
    assert report.hurwitz


def test_quantum_temperature():
    report = quantum_comparison(
        QuantumComparisonParams(hbar=1, m=1, omega=1, gamma=0.5, n=1, mu=0.25)
    )
    assert report.k_bt == pytest.approx(1 / math.log(2), abs=1e-12)
    assert report.stationary_covariance is not None


def test_quantum_zero_mu_is_not_hurwitz():
    report = quantum_comparison(
        QuantumComparisonParams(hbar=1, m=1, omega=1, gamma=0.5, n=1, mu=0)
    )
    assert not report.hurwitz
    assert 'tr A' in report.hurwitz_violation
    assert report.stationary_covariance is None
    assert report.equipartition_ratio is None


@pytest.mark.parametrize(
    'kwargs',
    [
        {'hbar': 0, 'm': 1, 'omega': 1, 'gamma': 1},
        {'hbar': 1, 'm': 1, 'omega': 1, 'gamma': 1, 'n': -1},
        {'hbar': 1, 'm': 1, 'omega': float('inf'), 'gamma': 1},
    ],
)
def test_quantum_params_domain(kwargs):
    with pytest.raises(ParameterDomainError):
        QuantumComparisonParams(**kwargs)


def test_noise_channel_model_without_noise_is_linear():
    model = ModelSpec(P('p^2/2 + q^2/2'), (NoiseChannel.plain(P('q')),))
    matrices = linear_drift_diffusion(model)
    np.testing.assert_array_equal(matrices.g, [[0.0, 0.0], [0.0, 1.0]])
