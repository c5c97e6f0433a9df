#
# Copyright The NOMAD Authors.
#
# This file is part of NOMAD. See https://nomad-lab.eu for further info.
#
# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.
#
"""
Steady states of linear models.

The Lyapunov equation A sigma + sigma A^T = -g is the oracle. The closed forms
printed for the linear symplectic model are evaluated verbatim and compared with
it by `audit_paper_formulas`; discrepancies are reported, never corrected.
"""

import enum
import math
from dataclasses import dataclass

import numpy as np
import structlog
from scipy.optimize import bisect

from nomad_canonical_flows.errors import (
    NonHurwitzError,
    ParameterDomainError,
    SearchFailureError,
    SingularFormulaError,
    UnsupportedModelError,
)
from nomad_canonical_flows.model_catalog import (
    LinearModelParams,
    hurwitz_violation,
    is_hurwitz,
    linear_drift_diffusion,
    linear_model_matrices,
)
from nomad_canonical_flows.poisson_algebra import ModelSpec, apply_generator
from nomad_canonical_flows.polynomial import PolynomialObservable

logger = structlog.get_logger(__name__)

AUDIT_TOLERANCE = 1e-9

_Q2 = PolynomialObservable({(2, 0): 1})
_QP = PolynomialObservable({(1, 1): 1})
_P2 = PolynomialObservable({(0, 2): 1})


def lyapunov_residual(A: np.ndarray, g: np.ndarray, sigma: np.ndarray) -> float:
    """max-abs of A sigma + sigma A^T + g."""
    return float(np.max(np.abs(A @ sigma + sigma @ A.T + g)))


def lyapunov_solve(A: np.ndarray, g: np.ndarray) -> np.ndarray:
    """
    Solves A sigma + sigma A^T = -g for symmetric sigma through the 3x3 linear
    system in (sigma_qq, sigma_qp, sigma_pp).

    Raises:
        NonHurwitzError: A is not Hurwitz.
    """
    A = np.asarray(A, dtype=float)
    g = np.asarray(g, dtype=float)
    violation = hurwitz_violation(A)
    if violation is not None:
        raise NonHurwitzError(f'drift matrix is not Hurwitz: {violation}')
    (a11, a12), (a21, a22) = A
    system = np.array(
        [
            [2 * a11, 2 * a12, 0.0],
            [a21, a11 + a22, a12],
            [0.0, 2 * a21, 2 * a22],
        ]
    )
    rhs = -np.array([g[0, 0], 0.5 * (g[0, 1] + g[1, 0]), g[1, 1]])
    sqq, sqp, spp = np.linalg.solve(system, rhs)
    return np.array([[sqq, sqp], [sqp, spp]])


def is_positive_definite(matrix: np.ndarray) -> bool:
    """Leading-minor test for a symmetric 2x2 matrix."""
    matrix = np.asarray(matrix, dtype=float)
    return bool(
        matrix[0, 0] > 0
        and matrix[0, 0] * matrix[1, 1] - matrix[0, 1] * matrix[1, 0] > 0
    )


def paper_covariance_z0(params: LinearModelParams) -> np.ndarray:
    """
    The closed-form z = 0 covariance
    s/2 [[(1 + e^2 m^2 (w^2 + g^2)) / (e^2 m^2 w^2), -e m g],
         [-e m g, (1 + e^2 m^2 w^2) / e]].
    """
    if params.z != 0:
        raise ParameterDomainError(f'the z = 0 formula needs z = 0, got {params.z}')
    p = params.as_floats()
    m, w, g, e, s = p['m'], p['omega'], p['gamma'], p['epsilon'], p['s']
    e2m2 = e**2 * m**2
    return 0.5 * s * np.array(
        [
            [(1 + e2m2 * (w**2 + g**2)) / (e2m2 * w**2), -e * m * g],
            [-e * m * g, (1 + e2m2 * w**2) / e],
        ]
    )


@dataclass(frozen=True)
class GeneralZMoments:
    q2: float
    p2: float
    qp: float
    y: float

    def as_matrix(self) -> np.ndarray:
        return np.array([[self.q2, self.qp], [self.qp, self.p2]])


def paper_covariance_generalz(params: LinearModelParams) -> GeneralZMoments:
    """
    The printed general-z steady moments and their denominator Y(z), evaluated
    verbatim.

    Raises:
        SingularFormulaError: Y(z) = 0.
    """
    p = params.as_floats()
    m, w, g, e, s, z = p['m'], p['omega'], p['gamma'], p['epsilon'], p['s'], p['z']
    y = (2 * m**2 / (g * s)) * (
        z * w**2 - z**3 - 2 * z**2 * g - z * g**2 + 2 * w**2 * g
    )
    if y == 0:
        raise SingularFormulaError(f'Y(z) vanishes at z = {z}')
    e2m2 = e**2 * m**2
    q2 = (
        2 * e2m2 * w**2 + 2 * e2m2 * z**2 + 4 * e2m2 * g * z + 2 * e2m2 * g**2 + 2
    ) / y
    p2 = (2 * m**4 * w**4 * e**2 - m**2 * z**2 - m**2 * g * z + 2 * m**2 * w**2) / y
    qp = -(2 * m**3 * e**2 * w**2 * z + 2 * m**3 * e**2 * w**2 * g + m * z) / y
    return GeneralZMoments(q2=q2, p2=p2, qp=qp, y=y)


def paper_zero_cross_z(params: LinearModelParams) -> float:
    """The printed z* = -2 e^2 m^2 w^2 g / (2 e^2 m^2 w^2 + 1)."""
    p = params.as_floats()
    x = p['epsilon'] ** 2 * p['m'] ** 2 * p['omega'] ** 2
    return -2 * x * p['gamma'] / (2 * x + 1)


def paper_temperature(params: LinearModelParams) -> float:
    """The printed k_B T = s (2 e^2 m^2 w^2 + 1) / (2 e m)."""
    p = params.as_floats()
    x = p['epsilon'] ** 2 * p['m'] ** 2 * p['omega'] ** 2
    return 0.5 * p['s'] * (2 * x + 1) / (p['epsilon'] * p['m'])


def closed_form_zero_cross_z(params: LinearModelParams) -> float:
    """z* = -e^2 m^2 w^2 g / (1 + e^2 m^2 w^2), the root of sigma_qp(z) = 0."""
    p = params.as_floats()
    x = p['epsilon'] ** 2 * p['m'] ** 2 * p['omega'] ** 2
    return -x * p['gamma'] / (1 + x)


def _sigma_at(params: LinearModelParams, z: float) -> np.ndarray:
    matrices = linear_model_matrices(params.with_z(z))
    return lyapunov_solve(matrices.A, matrices.g)


@dataclass(frozen=True)
class ZeroCrossResult:
    z_star: float
    sigma: np.ndarray
    k_bt: float
    bracket: tuple[float, float]


def find_zero_cross_z(
    params: LinearModelParams, xtol: float = 1e-12, max_halvings: int = 60
) -> ZeroCrossResult:
    """
    Finds z < 0 with vanishing stationary cross-covariance by bisection of
    sigma_qp(z) inside the Hurwitz interval.

    For A(z) = [[z, 1/m], [-m w^2, -z - g]] the trace is -g and det A > 0 exactly
    for z in (z_-, z_+) with z_- = -(g + sqrt(g^2 + 4 w^2)) / 2. sigma_qp(0) < 0 and
    sigma_qp grows without bound near z_-, so the left end of the bracket is moved
    toward z_- until sigma_qp changes sign.

    Raises:
        SearchFailureError: No sign change was found.
    """
    p = params.as_floats()
    gamma, omega = p['gamma'], p['omega']
    boundary = -(gamma + math.sqrt(gamma**2 + 4 * omega**2)) / 2

    def cross(z: float) -> float:
        return float(_sigma_at(params, z)[0, 1])

    right = 0.0
    if cross(right) >= 0:
        raise SearchFailureError(
            'sigma_qp(0) is not negative', interval=(boundary, right)
        )
    left = None
    for k in range(1, max_halvings + 1):
        candidate = boundary * (1 - 2.0**-k)
        if cross(candidate) > 0:
            left = candidate
            break
    if left is None:
        raise SearchFailureError(
            f'no sign change of sigma_qp on ({boundary}, 0)',
            interval=(boundary, right),
        )
    z_star = bisect(cross, left, right, xtol=xtol, maxiter=200)
    sigma = _sigma_at(params, z_star)
    k_bt = p['m'] * omega**2 * float(sigma[0, 0])
    logger.debug(
        'stationary_analysis.zero_cross', z_star=z_star, bracket=(left, right)
    )
    return ZeroCrossResult(z_star=z_star, sigma=sigma, k_bt=k_bt, bracket=(left, right))


def gaussian_expectation(poly: PolynomialObservable, sigma: np.ndarray) -> float:
    """
    Expectation of a polynomial of degree at most 2 under the mean-zero Gaussian
    with covariance sigma.
    """
    if poly.degree > 2:
        raise UnsupportedModelError(
            f'expectation of {poly} couples to moments above second order'
        )
    return (
        float(poly.constant_term)
        + float(poly.coefficient(2, 0)) * sigma[0, 0]
        + float(poly.coefficient(1, 1)) * sigma[0, 1]
        + float(poly.coefficient(0, 2)) * sigma[1, 1]
    )


def stationarity_residuals(
    model: ModelSpec, sigma: np.ndarray
) -> tuple[float, float, float]:
    """
    E_sigma[L m] for m in (q^2, qp, p^2); all three vanish at a stationary
    Gaussian.

    Raises:
        UnsupportedModelError: The model is not linear.
    """
    linear_drift_diffusion(model)
    sigma = np.asarray(sigma, dtype=float)
    return tuple(
        gaussian_expectation(apply_generator(model, moment), sigma)
        for moment in (_Q2, _QP, _P2)
    )


@dataclass(frozen=True)
class SteadyStateReport:
    """Stationary covariance of a linear model and its diagnostics."""

    A: np.ndarray
    g: np.ndarray
    sigma: np.ndarray
    residual_norm: float
    hurwitz: bool
    positive_definite: bool
    temperature: float | None
    stationarity_residuals: tuple[float, float, float]


def gibbs_temperature(
    sigma: np.ndarray, m: float, omega: float, rtol: float = 1e-8
) -> float | None:
    """
    k_B T = m w^2 sigma_qq when sigma has the Gibbs form of H_0 (diagonal with
    sigma_pp = m^2 w^2 sigma_qq), otherwise None.
    """
    scale = max(abs(sigma[0, 0]), abs(sigma[1, 1]))
    if abs(sigma[0, 1]) > rtol * scale:
        return None
    if abs(sigma[1, 1] - m**2 * omega**2 * sigma[0, 0]) > rtol * abs(sigma[1, 1]):
        return None
    return m * omega**2 * float(sigma[0, 0])


def analyze_steady_state(
    model: ModelSpec, params: LinearModelParams | None = None
) -> SteadyStateReport:
    """
    Builds the steady-state report of a linear model. With `params` the Gibbs
    temperature of H_0 is reported when the covariance has Gibbs form.

    Raises:
        UnsupportedModelError: The model is not linear.
        NonHurwitzError: The drift matrix is not Hurwitz.
    """
    matrices = linear_drift_diffusion(model)
    sigma = lyapunov_solve(matrices.A, matrices.g)
    positive_definite = is_positive_definite(sigma)
    if is_positive_definite(matrices.g) and not positive_definite:
        logger.warning('stationary_analysis.sigma_not_positive_definite')
    temperature = None
    if params is not None:
        temperature = gibbs_temperature(
            sigma, float(params.m), float(params.omega)
        )
    return SteadyStateReport(
        A=matrices.A,
        g=matrices.g,
        sigma=sigma,
        residual_norm=lyapunov_residual(matrices.A, matrices.g, sigma),
        hurwitz=is_hurwitz(matrices.A),
        positive_definite=positive_definite,
        temperature=temperature,
        stationarity_residuals=stationarity_residuals(model, sigma),
    )


class AuditStatus(enum.Enum):
    MATCH = 'Match'
    DISCREPANT = 'Discrepant'
    NOT_APPLICABLE = 'NotApplicable'


@dataclass(frozen=True)
class AuditVerdict:
    """Comparison of one printed closed form with the oracle value."""

    item: str
    paper_value: np.ndarray
    oracle_value: np.ndarray
    status: AuditStatus
    tolerance: float
    note: str = ''

    @property
    def difference(self) -> float:
        diff = np.abs(np.asarray(self.paper_value) - np.asarray(self.oracle_value))
        if not np.all(np.isfinite(diff)):
            return math.inf
        return float(np.max(diff))


def _verdict(
    item: str, printed, oracle, tolerance: float, note: str = ''
) -> AuditVerdict:
    printed = np.atleast_1d(np.asarray(printed, dtype=float))
    oracle = np.atleast_1d(np.asarray(oracle, dtype=float))
    diff = np.abs(printed - oracle)
    if not np.all(np.isfinite(diff)):
        status = AuditStatus.NOT_APPLICABLE
    elif np.max(diff) <= tolerance:
        status = AuditStatus.MATCH
    else:
        status = AuditStatus.DISCREPANT
    return AuditVerdict(
        item=item,
        paper_value=printed,
        oracle_value=oracle,
        status=status,
        tolerance=tolerance,
        note=note,
    )


def audit_paper_formulas(
    params: LinearModelParams, tolerance: float = AUDIT_TOLERANCE
) -> list[AuditVerdict]:
    """
    Compares the printed closed forms of the linear model with the Lyapunov oracle:

    - `z0_covariance`: the z = 0 matrix;
    - `generalz_moments[z=...]`: the general-z triple (q^2, p^2, qp) at
      z in {0, gamma/4, -gamma/4, printed z*};
    - `zero_cross_z`: the printed z* against the bisection root;
    - `temperature`: the printed k_B T against m w^2 sigma_qq(z*).

    Verdict order is fixed by this list. An item that cannot be evaluated, because
    Y(z) vanishes or the drift at z is not Hurwitz, is `NotApplicable` and carries
    the reason in its note.
    """
    base = params.with_z(0)
    verdicts = []

    oracle_z0 = _sigma_at(base, 0.0)
    verdicts.append(
        _verdict('z0_covariance', paper_covariance_z0(base), oracle_z0, tolerance)
    )

    paper_z_star = paper_zero_cross_z(base)
    gamma = float(base.gamma)
    for label, z in (
        ('0', 0.0),
        ('gamma/4', gamma / 4),
        ('-gamma/4', -gamma / 4),
        ('printed z*', paper_z_star),
    ):
        item = f'generalz_moments[z={label}]'
        try:
            moments = paper_covariance_generalz(base.with_z(z))
            printed = (moments.q2, moments.p2, moments.qp)
            note = ''
        except SingularFormulaError as e:
            printed, note = (math.nan, math.nan, math.nan), str(e)
        try:
            sigma = _sigma_at(base, z)
            oracle = (sigma[0, 0], sigma[1, 1], sigma[0, 1])
        except NonHurwitzError as e:
            oracle, note = (math.nan, math.nan, math.nan), str(e)
        verdicts.append(_verdict(item, printed, oracle, tolerance, note))

    zero_cross = find_zero_cross_z(base)
    verdicts.append(
        _verdict('zero_cross_z', paper_z_star, zero_cross.z_star, tolerance)
    )
    verdicts.append(
        _verdict(
            'temperature', paper_temperature(base), zero_cross.k_bt, tolerance
        )
    )
    for verdict in verdicts:
        if verdict.status is AuditStatus.DISCREPANT:
            logger.warning(
                'stationary_analysis.audit_discrepant',
                item=verdict.item,
                difference=verdict.difference,
            )
        elif verdict.status is AuditStatus.NOT_APPLICABLE:
            logger.info(
                'stationary_analysis.audit_not_applicable',
                item=verdict.item,
                note=verdict.note,
            )
    return verdicts
