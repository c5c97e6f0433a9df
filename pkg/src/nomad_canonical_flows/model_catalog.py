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
Constructors for the named phase-space models: the damped oscillator driven by a
single plain channel, models with linear plain couplings, the linear symplectic
model with one conjugate pair, and the coefficient family of the quantum damped
oscillator written in classical Langevin form.
"""

import math
from collections.abc import Sequence
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
import structlog

from nomad_canonical_flows.errors import ParameterDomainError, UnsupportedModelError
from nomad_canonical_flows.poisson_algebra import (
    ModelSpec,
    NoiseChannel,
    drift_field,
    noise_fields,
)
from nomad_canonical_flows.polynomial import PolynomialObservable, Scalar, to_fraction

logger = structlog.get_logger(__name__)


def rational_sqrt(x: Scalar) -> Fraction | None:
    """Exact square root of a non-negative rational, or None if it is irrational."""
    x = to_fraction(x)
    if x < 0:
        raise ParameterDomainError(f'square root of negative number {x}')
    num, den = math.isqrt(x.numerator), math.isqrt(x.denominator)
    if num * num == x.numerator and den * den == x.denominator:
        return Fraction(num, den)
    return None


def _sqrt(x: Fraction, exact: bool, name: str) -> Fraction:
    root = rational_sqrt(x)
    if root is not None:
        return root
    if exact:
        raise ParameterDomainError(
            f'{name} = sqrt({x}) is irrational; pick a rational point with a rational '
            'square root or allow inexact coefficients'
        )
    logger.debug('model_catalog.inexact_sqrt', quantity=name, radicand=str(x))
    return Fraction(math.sqrt(x))


def _positive(name: str, value: Scalar) -> Fraction:
    value = to_fraction(value)
    if value <= 0:
        raise ParameterDomainError(f'{name} must be strictly positive, got {value}')
    return value


@dataclass(frozen=True)
class LinearModelParams:
    """
    Parameters of the linear symplectic model H = p^2/2m + m omega^2 q^2/2 + z q p.

    All values are stored as exact fractions; m, omega, gamma, epsilon and s are
    strictly positive.
    """

    m: Fraction = Fraction(1)
    omega: Fraction = Fraction(1)
    gamma: Fraction = Fraction(1, 2)
    epsilon: Fraction = Fraction(1)
    s: Fraction = Fraction(1)
    z: Fraction = Fraction(0)

    def __post_init__(self):
        for name in ('m', 'omega', 'gamma', 'epsilon', 's'):
            object.__setattr__(self, name, _positive(name, getattr(self, name)))
        object.__setattr__(self, 'z', to_fraction(self.z))

    def with_z(self, z: Scalar) -> 'LinearModelParams':
        return LinearModelParams(
            self.m, self.omega, self.gamma, self.epsilon, self.s, to_fraction(z)
        )

    def as_floats(self) -> dict[str, float]:
        return {
            'm': float(self.m),
            'omega': float(self.omega),
            'gamma': float(self.gamma),
            'epsilon': float(self.epsilon),
            's': float(self.s),
            'z': float(self.z),
        }


@dataclass(frozen=True)
class LinearDriftDiffusion:
    """
    Constant-coefficient form dx = A x dt + sum_k b_k dW_k of a linear model.

    Args:
        A (np.ndarray): 2x2 drift matrix.
        g (np.ndarray): 2x2 diffusion matrix sum_k b_k b_k^T.
        noise_coefficients (tuple[np.ndarray, ...]): The constant vectors b_k in
            increment order (dQ_1, dP_1, ...).
    """

    A: np.ndarray
    g: np.ndarray
    noise_coefficients: tuple[np.ndarray, ...] = field(default_factory=tuple)


def is_hurwitz(A: np.ndarray) -> bool:
    """tr A < 0 and det A > 0, exact for 2x2 matrices."""
    return hurwitz_violation(A) is None


def hurwitz_violation(A: np.ndarray) -> str | None:
    """Names the violated Hurwitz condition, or returns None."""
    A = np.asarray(A, dtype=float)
    trace = A[0, 0] + A[1, 1]
    det = A[0, 0] * A[1, 1] - A[0, 1] * A[1, 0]
    if not trace < 0:
        return f'tr A = {trace:.17g} is not negative'
    if not det > 0:
        return f'det A = {det:.17g} is not positive'
    return None


def _diffusion_from_coefficients(coefficients: Sequence[np.ndarray]) -> np.ndarray:
    g = np.zeros((2, 2))
    for b in coefficients:
        g += np.outer(b, b)
    return g


def build_linear_model(params: LinearModelParams, exact: bool = False) -> ModelSpec:
    """
    The linear model with one conjugate pair F = -sqrt(gamma s eps) p,
    G = sqrt(gamma s / eps) q.

    G is built as gamma s / a with a the coefficient of F, so s^-1 {F, G} = gamma
    holds exactly even when the square root is not rational.

    Args:
        params (LinearModelParams): The model parameters.
        exact (bool): Reject parameters whose square roots are irrational instead of
            using the correctly rounded float root.
    """
    m, omega, gamma, eps, s, z = (
        params.m,
        params.omega,
        params.gamma,
        params.epsilon,
        params.s,
        params.z,
    )
    a = _sqrt(gamma * s * eps, exact, 'sqrt(gamma*s*epsilon)')
    c = gamma * s / a
    hamiltonian = PolynomialObservable(
        {(0, 2): 1 / (2 * m), (2, 0): m * omega**2 / 2, (1, 1): z}
    )
    channel = NoiseChannel.pair(
        PolynomialObservable({(0, 1): -a}), PolynomialObservable({(1, 0): c})
    )
    return ModelSpec(hamiltonian, (channel,), s, name='linear')


def build_dho_model(
    m: Scalar,
    omega: Scalar,
    gamma: Scalar,
    z_scale: Scalar,
    exact: bool = False,
) -> ModelSpec:
    """
    Damped oscillator from a single plain channel:
    H = p^2/2m + m omega^2 q^2/2 + gamma q p / 2,
    F = sqrt(gamma) (p^2 / 2 z_scale + z_scale q^2 / 2).

    The Ito drift is v_DHO = (p/m, -m omega^2 q - gamma p).
    """
    m = _positive('m', m)
    omega = _positive('omega', omega)
    gamma = _positive('gamma', gamma)
    z_scale = _positive('z_scale', z_scale)
    root = _sqrt(gamma, exact, 'sqrt(gamma)')
    hamiltonian = PolynomialObservable(
        {(0, 2): 1 / (2 * m), (2, 0): m * omega**2 / 2, (1, 1): gamma / 2}
    )
    F = PolynomialObservable({(0, 2): root / (2 * z_scale), (2, 0): root * z_scale / 2})
    return ModelSpec(hamiltonian, (NoiseChannel.plain(F),), name='dho')


def build_example1_model(
    hamiltonian: PolynomialObservable,
    alphas: Sequence[Scalar],
    betas: Sequence[Scalar],
) -> ModelSpec:
    """Plain channels F_k = alpha_k p + beta_k q; the drift is the field of H."""
    if len(alphas) != len(betas):
        raise ParameterDomainError(
            f'got {len(alphas)} alphas but {len(betas)} betas'
        )
    channels = tuple(
        NoiseChannel.plain(PolynomialObservable({(0, 1): alpha, (1, 0): beta}))
        for alpha, beta in zip(alphas, betas)
    )
    return ModelSpec(hamiltonian, channels, name='example1')


def linear_model_matrices(params: LinearModelParams) -> LinearDriftDiffusion:
    """Closed-form A, g and noise vectors of `build_linear_model(params)`."""
    p = params.as_floats()
    m, omega, gamma, eps, s, z = (
        p['m'],
        p['omega'],
        p['gamma'],
        p['epsilon'],
        p['s'],
        p['z'],
    )
    A = np.array([[z, 1 / m], [-m * omega**2, -z - gamma]])
    coefficients = (
        np.array([-math.sqrt(gamma * s * eps), 0.0]),
        np.array([0.0, -math.sqrt(gamma * s / eps)]),
    )
    return LinearDriftDiffusion(
        A, _diffusion_from_coefficients(coefficients), coefficients
    )


def linear_drift_diffusion(model: ModelSpec) -> LinearDriftDiffusion:
    """
    Extracts A, g and the noise vectors of a model whose drift is homogeneous
    linear and whose noise fields are constant.

    Raises:
        UnsupportedModelError: The model is not of that form.
    """
    drift = drift_field(model)
    A = np.zeros((2, 2))
    for row, component in enumerate((drift.vq, drift.vp)):
        if component.degree > 1 or component.constant_term != 0:
            raise UnsupportedModelError(
                f'drift component {component} is not homogeneous linear'
            )
        A[row, 0] = float(component.coefficient(1, 0))
        A[row, 1] = float(component.coefficient(0, 1))
    coefficients = []
    for sigma in noise_fields(model):
        if not (sigma.vq.is_constant() and sigma.vp.is_constant()):
            raise UnsupportedModelError(
                f'noise field ({sigma.vq}, {sigma.vp}) is not constant'
            )
        coefficients.append(
            np.array([float(sigma.vq.constant_term), float(sigma.vp.constant_term)])
        )
    coefficients = tuple(coefficients)
    return LinearDriftDiffusion(
        A, _diffusion_from_coefficients(coefficients), coefficients
    )


@dataclass(frozen=True)
class QuantumComparisonParams:
    """Parameters of the quantum damped oscillator in classical Langevin form."""

    hbar: float
    m: float
    omega: float
    gamma: float
    n: float = 0.0
    mu: float = 0.0

    def __post_init__(self):
        for name in ('hbar', 'm', 'omega', 'gamma', 'n', 'mu'):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise ParameterDomainError(f'{name} must be finite, got {value}')
            object.__setattr__(self, name, value)
        for name in ('hbar', 'm', 'omega', 'gamma'):
            if getattr(self, name) <= 0:
                raise ParameterDomainError(f'{name} must be strictly positive')
        if self.n < 0:
            raise ParameterDomainError(f'n must be non-negative, got {self.n}')


@dataclass(frozen=True)
class QuantumComparisonReport:
    """
    Coefficients of the quantum Langevin equations and their relation to the
    classical linear model.
    """

    params: QuantumComparisonParams
    drift_diffusion: LinearDriftDiffusion
    hurwitz: bool
    hurwitz_violation: str | None
    action_scale: float
    epsilon: float
    classical: LinearDriftDiffusion
    matching_mu: float
    matching_mu_residual: float
    paper_mu: float
    paper_mu_reproduces_drift: bool
    drift_difference: float
    diffusion_difference: float
    matches_classical: bool
    k_bt: float | None
    stationary_covariance: np.ndarray | None
    equipartition_ratio: float | None


def _quantum_drift(params: QuantumComparisonParams, mu: float) -> np.ndarray:
    m, omega, gamma = params.m, params.omega, params.gamma
    return np.array(
        [[gamma / 2 - mu, 1 / m], [-m * omega**2, -(gamma / 2 + mu)]]
    )


def _relative_difference(a: np.ndarray, b: np.ndarray) -> float:
    scale = max(float(np.max(np.abs(b))), 1.0)
    return float(np.max(np.abs(a - b))) / scale


def quantum_comparison(
    params: QuantumComparisonParams, tolerance: float = 1e-12
) -> QuantumComparisonReport:
    """
    Builds the classical-form coefficients of the quantum damped oscillator with
    couplings L_1 = sqrt(gamma (n+1)) a, L_2 = -sqrt(gamma n) a^dagger and
    H = H_0 + mu (qp + pq)/2, and compares them with the linear symplectic model
    at z = 0 under s = hbar/2, epsilon = 1/(m omega).

    The value of mu that reproduces the classical drift is solved for, not assumed.
    """
    from nomad_canonical_flows.stationary_analysis import lyapunov_solve

    hbar, m, omega, gamma, n = (
        params.hbar,
        params.m,
        params.omega,
        params.gamma,
        params.n,
    )
    A = _quantum_drift(params, params.mu)
    coefficients = (
        np.array([-math.sqrt(gamma * (n + 1) * hbar / (2 * m * omega)), 0.0]),
        np.array([0.0, -math.sqrt(gamma * (n + 1) * hbar * m * omega / 2)]),
        np.array([-math.sqrt(gamma * n * hbar / (2 * m * omega)), 0.0]),
        np.array([0.0, math.sqrt(gamma * n * hbar * m * omega / 2)]),
    )
    quantum = LinearDriftDiffusion(
        A, _diffusion_from_coefficients(coefficients), coefficients
    )

    action_scale = hbar / 2
    epsilon = 1 / (m * omega)
    classical = linear_model_matrices(
        LinearModelParams(
            m=Fraction(m),
            omega=Fraction(omega),
            gamma=Fraction(gamma),
            epsilon=Fraction(epsilon),
            s=Fraction(action_scale),
        )
    )

    # A(mu) = A(0) + mu * A1 is affine in mu
    A1 = _quantum_drift(params, 1.0) - _quantum_drift(params, 0.0)
    target = classical.A - _quantum_drift(params, 0.0)
    solution, residual, _, _ = np.linalg.lstsq(
        A1.reshape(-1, 1), target.reshape(-1), rcond=None
    )
    matching_mu = float(solution[0])
    matching_residual = float(np.sqrt(residual[0])) if residual.size else 0.0

    drift_difference = _relative_difference(A, classical.A)
    diffusion_difference = _relative_difference(quantum.g, classical.g)
    violation = hurwitz_violation(A)

    sigma = None
    ratio = None
    if violation is None:
        sigma = lyapunov_solve(A, quantum.g)
        ratio = float(sigma[1, 1] / (m**2 * omega**2 * sigma[0, 0]))

    k_bt = hbar * omega / math.log1p(1 / n) if n > 0 else None
    report = QuantumComparisonReport(
        params=params,
        drift_diffusion=quantum,
        hurwitz=violation is None,
        hurwitz_violation=violation,
        action_scale=action_scale,
        epsilon=epsilon,
        classical=classical,
        matching_mu=matching_mu,
        matching_mu_residual=matching_residual,
        paper_mu=gamma,
        paper_mu_reproduces_drift=math.isclose(gamma, matching_mu, rel_tol=1e-9),
        drift_difference=drift_difference,
        diffusion_difference=diffusion_difference,
        matches_classical=max(drift_difference, diffusion_difference) <= tolerance,
        k_bt=k_bt,
        stationary_covariance=sigma,
        equipartition_ratio=ratio,
    )
    logger.info(
        'model_catalog.quantum_comparison',
        matching_mu=matching_mu,
        hurwitz=report.hurwitz,
        matches_classical=report.matches_classical,
    )
    return report
