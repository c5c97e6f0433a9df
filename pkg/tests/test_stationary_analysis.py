import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from scipy.linalg import solve_continuous_lyapunov

from nomad_canonical_flows import stationary_analysis
from nomad_canonical_flows.errors import (
    NonHurwitzError,
    ParameterDomainError,
    SingularFormulaError,
    UnsupportedModelError,
)
from nomad_canonical_flows.model_catalog import (
    LinearModelParams,
    build_linear_model,
    linear_model_matrices,
)
from nomad_canonical_flows.polynomial import PolynomialObservable
from nomad_canonical_flows.stationary_analysis import (
    AuditStatus,
    analyze_steady_state,
    audit_paper_formulas,
    closed_form_zero_cross_z,
    find_zero_cross_z,
    gaussian_expectation,
    gibbs_temperature,
    is_positive_definite,
    lyapunov_residual,
    lyapunov_solve,
    paper_covariance_generalz,
    paper_covariance_z0,
    paper_temperature,
    paper_zero_cross_z,
    stationarity_residuals,
)

SIGMA_Z0 = np.array([[1.125, -0.25], [-0.25, 1.0]])

UNIT_EPSILON_GRID = [
    LinearModelParams(m=m, omega=omega, gamma=gamma, s=s)
    for m, omega, gamma, s in itertools.product(
        (1, 2, Fraction(1, 2)), (1, 3), (Fraction(1, 2), 2), (1, Fraction(3, 2))
    )
]

GRID = [
    LinearModelParams(m=m, omega=omega, gamma=gamma, epsilon=epsilon)
    for m, omega, gamma, epsilon in itertools.product(
        (1, 2), (1, 2), (Fraction(1, 2), 1), (1, Fraction(1, 2), 3)
    )
]


def _sigma(params):
    matrices = linear_model_matrices(params)
    return lyapunov_solve(matrices.A, matrices.g)


def test_lyapunov_solution_at_z0(linear_params):
    sigma = _sigma(linear_params)
    np.testing.assert_allclose(sigma, SIGMA_Z0, atol=1e-14)


@pytest.mark.parametrize('params', GRID)
def test_lyapunov_solve_agrees_with_scipy(params):
    matrices = linear_model_matrices(params.with_z(Fraction(-1, 10)))
    sigma = lyapunov_solve(matrices.A, matrices.g)
    reference = solve_continuous_lyapunov(matrices.A, -matrices.g)
    np.testing.assert_allclose(sigma, reference, rtol=1e-10, atol=1e-12)
    assert lyapunov_residual(matrices.A, matrices.g, sigma) <= 1e-12
    assert sigma[0, 1] == sigma[1, 0]
    assert is_positive_definite(sigma)


def test_lyapunov_solve_rejects_non_hurwitz():
    with pytest.raises(NonHurwitzError):
        lyapunov_solve(np.array([[1.0, 0.0], [0.0, -2.0]]), np.eye(2))
    with pytest.raises(NonHurwitzError):
        lyapunov_solve(np.array([[0.0, 1.0], [-1.0, 0.0]]), np.eye(2))


@pytest.mark.parametrize(
    'matrix, expected',
    [
        ([[1.0, 0.0], [0.0, 1.0]], True),
        ([[1.0, 2.0], [2.0, 1.0]], False),
        ([[-1.0, 0.0], [0.0, -1.0]], False),
    ],
)
def test_is_positive_definite(matrix, expected):
    assert is_positive_definite(np.array(matrix)) is expected


@pytest.mark.parametrize('params', UNIT_EPSILON_GRID)
def test_z0_formula_matches_oracle_at_unit_epsilon(params):
    np.testing.assert_allclose(
        paper_covariance_z0(params), _sigma(params), rtol=1e-12, atol=1e-12
    )


@pytest.mark.parametrize('epsilon', [Fraction(1, 2), 2, 3])
def test_z0_formula_deviates_away_from_unit_epsilon(epsilon):
    params = LinearModelParams(epsilon=epsilon)
    difference = np.max(np.abs(paper_covariance_z0(params) - _sigma(params)))
    assert difference > 1e-3
    assert audit_paper_formulas(params)[0].status is AuditStatus.DISCREPANT


def test_z0_formula_needs_z0():
    with pytest.raises(ParameterDomainError):
        paper_covariance_z0(LinearModelParams(z=1))


def test_generalz_moments_at_z0(linear_params):
    moments = paper_covariance_generalz(linear_params)
    assert moments.y == pytest.approx(4.0)
    np.testing.assert_allclose(moments.as_matrix(), SIGMA_Z0, atol=1e-14)


def test_generalz_singular_denominator():
    params = LinearModelParams(
        m=1, omega=Fraction(5, 4), gamma=Fraction(3, 2), z=1
    )
    with pytest.raises(SingularFormulaError):
        paper_covariance_generalz(params)


@pytest.mark.parametrize(
    'omega, expected', [(1, -0.25), (2, -0.4), (Fraction(1, 2), -0.1)]
)
def test_zero_cross(omega, expected):
    params = LinearModelParams(omega=omega)
    assert closed_form_zero_cross_z(params) == pytest.approx(expected, abs=1e-15)
    result = find_zero_cross_z(params)
    assert result.z_star == pytest.approx(expected, abs=1e-9)
    assert abs(result.sigma[0, 1]) <= 1e-9
    left, right = result.bracket
    assert left < result.z_star < right


def test_zero_cross_covariance_is_gibbs(linear_params):
    result = find_zero_cross_z(linear_params)
    np.testing.assert_allclose(result.sigma, np.eye(2), atol=1e-8)
    assert result.k_bt == pytest.approx(1.0, abs=1e-8)


@pytest.mark.parametrize('params', GRID)
def test_bisection_agrees_with_closed_form(params):
    assert find_zero_cross_z(params).z_star == pytest.approx(
        closed_form_zero_cross_z(params), abs=1e-9
    )


def test_printed_zero_cross_and_temperature(linear_params):
    assert paper_zero_cross_z(linear_params) == pytest.approx(-1 / 3)
    assert paper_temperature(linear_params) == pytest.approx(1.5)


def test_audit_of_default_model(linear_params):
    verdicts = audit_paper_formulas(linear_params)
    items = [v.item for v in verdicts]
    assert items == [
        'z0_covariance',
        'generalz_moments[z=0]',
        'generalz_moments[z=gamma/4]',
        'generalz_moments[z=-gamma/4]',
        'generalz_moments[z=printed z*]',
        'zero_cross_z',
        'temperature',
    ]
    status = {v.item: v.status for v in verdicts}
    assert status['z0_covariance'] is AuditStatus.MATCH
    assert status['generalz_moments[z=0]'] is AuditStatus.MATCH
    assert status['zero_cross_z'] is AuditStatus.DISCREPANT
    assert status['temperature'] is AuditStatus.DISCREPANT
    temperature = verdicts[-1]
    assert float(temperature.paper_value[0]) == pytest.approx(1.5)
    assert float(temperature.oracle_value[0]) == pytest.approx(1.0, abs=1e-8)
    assert temperature.difference == pytest.approx(0.5, abs=1e-8)


def test_audit_ignores_z_of_input():
    verdicts = audit_paper_formulas(LinearModelParams(z=Fraction(-1, 4)))
    assert verdicts[0].status is AuditStatus.MATCH


def test_audit_outside_hurwitz_region_is_not_applicable():
    verdicts = {v.item: v for v in audit_paper_formulas(LinearModelParams(gamma=4))}
    outside = verdicts['generalz_moments[z=gamma/4]']
    assert outside.status is AuditStatus.NOT_APPLICABLE
    assert 'not Hurwitz' in outside.note
    assert outside.difference == math.inf
    inside = verdicts['generalz_moments[z=-gamma/4]']
    assert inside.status is not AuditStatus.NOT_APPLICABLE
    assert verdicts['zero_cross_z'].status is AuditStatus.DISCREPANT


def test_audit_with_singular_denominator_is_not_applicable(monkeypatch, linear_params):
    def singular(params):
        raise SingularFormulaError(f'Y(z) vanishes at z = {float(params.z)}')

    monkeypatch.setattr(stationary_analysis, 'paper_covariance_generalz', singular)
    verdicts = audit_paper_formulas(linear_params)
    general = [v for v in verdicts if v.item.startswith('generalz_moments')]
    assert len(general) == 4
    assert all(v.status is AuditStatus.NOT_APPLICABLE for v in general)
    assert all('vanishes' in v.note for v in general)
    assert verdicts[0].status is AuditStatus.MATCH


def test_gaussian_expectation():
    sigma = np.array([[2.0, 0.5], [0.5, 3.0]])
    poly = PolynomialObservable.parse('1 + q^2 - 2*q*p + p^2/3 + q')
    assert gaussian_expectation(poly, sigma) == pytest.approx(1 + 2 - 1 + 1)
    with pytest.raises(UnsupportedModelError):
        gaussian_expectation(PolynomialObservable.parse('q^3'), sigma)


def test_stationarity_residuals(linear_model):
    residuals = stationarity_residuals(linear_model, np.eye(2))
    np.testing.assert_allclose(residuals, (0.5, 0.0, -0.5), atol=1e-15)
    residuals = stationarity_residuals(linear_model, SIGMA_Z0)
    np.testing.assert_allclose(residuals, 0.0, atol=1e-14)


def test_stationarity_residuals_need_linear_model(dho_model):
    with pytest.raises(UnsupportedModelError):
        stationarity_residuals(dho_model, np.eye(2))


def test_gibbs_temperature():
    assert gibbs_temperature(np.eye(2), 1.0, 1.0) == 1.0
    assert gibbs_temperature(np.diag([2.0, 8.0]), 1.0, 2.0) == 8.0
    assert gibbs_temperature(SIGMA_Z0, 1.0, 1.0) is None
    assert gibbs_temperature(np.diag([1.0, 2.0]), 1.0, 1.0) is None


def test_analyze_steady_state(linear_model, linear_params):
    report = analyze_steady_state(linear_model, linear_params)
    np.testing.assert_allclose(report.sigma, SIGMA_Z0, atol=1e-14)
    assert report.residual_norm <= 1e-12
    assert report.hurwitz
    assert report.positive_definite
    assert report.temperature is None
    assert max(abs(r) for r in report.stationarity_residuals) <= 1e-12


def test_analyze_steady_state_at_zero_cross():
    params = LinearModelParams(z=Fraction(-1, 4))
    report = analyze_steady_state(build_linear_model(params), params)
    assert report.temperature == pytest.approx(1.0, abs=1e-12)


def test_analyze_steady_state_rejects_nonlinear(dho_model):
    with pytest.raises(UnsupportedModelError):
        analyze_steady_state(dho_model)
