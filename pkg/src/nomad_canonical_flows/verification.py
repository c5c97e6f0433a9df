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
Verification suites run by `canonical-flows verify`.

The algebraic suites draw random polynomials from a seeded generator and check
identities exactly; a trial passes only if the residual is the zero polynomial.
The integrator suite checks statistical and convergence properties of the
Euler-Maruyama engine, and the paper-formula suite audits printed closed forms
against the Lyapunov oracle.
"""

import enum
import math
from collections.abc import Callable
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
import structlog

from nomad_canonical_flows.errors import ParameterDomainError
from nomad_canonical_flows.model_catalog import (
    LinearModelParams,
    QuantumComparisonParams,
    build_dho_model,
    build_example1_model,
    build_linear_model,
    linear_drift_diffusion,
    quantum_comparison,
)
from nomad_canonical_flows.poisson_algebra import (
    HALF,
    ModelSpec,
    NoiseChannel,
    VectorField,
    apply_first_order,
    apply_generator,
    divergence,
    dissipation,
    drift_field,
    gauge_field,
    hamiltonian_vector_field,
    increment_bracket,
    is_hamiltonian,
    noise_fields,
    poisson_bracket,
    squared_field,
    theorem1_divergence,
    theorem2_dissipation_rhs,
)
from nomad_canonical_flows.polynomial import (
    MOMENTUM,
    ONE,
    POSITION,
    ZERO,
    PolynomialObservable,
    random_polynomial,
)
from nomad_canonical_flows.reporting import format_value, render_report, render_table
from nomad_canonical_flows.sde_engine import (
    IntegratorConfig,
    jacobian_canonicality_study,
    run_ensemble,
    simulate_path,
    strong_convergence_study,
)
from nomad_canonical_flows.stationary_analysis import (
    AuditStatus,
    AuditVerdict,
    audit_paper_formulas,
    lyapunov_solve,
)

logger = structlog.get_logger(__name__)

SUITE_NAMES = ('core', 'theorem1', 'theorem2', 'integrator', 'paper-formulas')
STRONG_ORDER_WINDOW = (0.8, 1.2)
MIN_JACOBIAN_ORDER = 0.4
EXAMPLE2 = {'m': 1, 'omega': 1, 'gamma': Fraction(9, 16), 'z_scale': 2}


class CheckKind(enum.Enum):
    ARTIFACT = 'artifact'
    AUDIT = 'audit'


@dataclass(frozen=True)
class CheckResult:
    """
    Outcome of one check. Artifact checks pass or fail; audit checks compare a
    printed formula with an oracle and match, are discrepant, or cannot be
    evaluated (`applicable` false, counted as passed).
    """

    suite: str
    name: str
    passed: bool
    detail: str
    kind: CheckKind = CheckKind.ARTIFACT
    applicable: bool = True

    @property
    def status(self) -> str:
        if self.kind is CheckKind.AUDIT:
            if not self.applicable:
                return 'N/A'
            return 'MATCH' if self.passed else 'DISCREPANT'
        return 'PASS' if self.passed else 'FAIL'


@dataclass(frozen=True)
class VerifyOptions:
    trials: int = 100
    degree: int = 4
    seed: int = 0
    paths: int = 10_000

    def __post_init__(self):
        if self.trials < 1:
            raise ParameterDomainError(f'trials must be positive, got {self.trials}')
        if self.degree < 1:
            raise ParameterDomainError(f'degree must be positive, got {self.degree}')
        if self.paths < 2:
            raise ParameterDomainError(f'paths must be at least 2, got {self.paths}')


@dataclass
class VerificationReport:
    results: list[CheckResult] = field(default_factory=list)
    audit_verdicts: list[AuditVerdict] = field(default_factory=list)

    @property
    def failures(self) -> list[CheckResult]:
        return [
            r for r in self.results if r.kind is CheckKind.ARTIFACT and not r.passed
        ]

    @property
    def discrepancies(self) -> list[CheckResult]:
        return [r for r in self.results if r.kind is CheckKind.AUDIT and not r.passed]

    def exit_code(self, strict: bool = False) -> int:
        """1 on a failed artifact check, or on a discrepant audit with `strict`."""
        if self.failures or (strict and self.discrepancies):
            return 1
        return 0

    def render(self) -> str:
        lines = '\n'.join(
            f'{r.status:<10} {r.suite}.{r.name}: {r.detail}' for r in self.results
        )
        sections = [lines]
        if self.audit_verdicts:
            sections.append(
                render_table(
                    ('item', 'paper value', 'oracle value', '|diff|', 'status'),
                    (
                        (
                            v.item,
                            v.paper_value,
                            v.oracle_value,
                            v.difference,
                            v.status,
                        )
                        for v in self.audit_verdicts
                    ),
                )
            )
        sections.append(
            f'{len(self.results)} checks: '
            f'{sum(r.passed for r in self.results)} passed or matched, '
            f'{len(self.failures)} failed, {len(self.discrepancies)} discrepant'
        )
        entries = {f'check.{r.suite}.{r.name}': r.status for r in self.results}
        for k, v in enumerate(self.audit_verdicts):
            entries[f'audit.{k}.item'] = v.item
            entries[f'audit.{k}.paper'] = v.paper_value
            entries[f'audit.{k}.oracle'] = v.oracle_value
            entries[f'audit.{k}.diff'] = v.difference
            entries[f'audit.{k}.status'] = v.status
        entries['summary.checks'] = len(self.results)
        entries['summary.failed'] = len(self.failures)
        entries['summary.discrepant'] = len(self.discrepancies)
        return render_report('Verification report', sections, entries)


def _field_residual(v: VectorField) -> PolynomialObservable:
    return v.vq if not v.vq.is_zero() else v.vp


def _identity_check(
    suite: str,
    name: str,
    trials: int,
    residual: Callable[[], PolynomialObservable],
) -> CheckResult:
    """Runs `residual` `trials` times; each trial must return the zero polynomial."""
    failures = 0
    first = None
    for trial in range(trials):
        value = residual()
        if not value.is_zero():
            failures += 1
            if first is None:
                first = (trial, value)
    detail = f'{trials - failures}/{trials} trials exact'
    if first is not None:
        detail += f'; trial {first[0]} leaves residual {first[1]}'
    return CheckResult(suite, name, failures == 0, detail)


def _single_check(suite: str, name: str, residual: PolynomialObservable) -> CheckResult:
    if residual.is_zero():
        return CheckResult(suite, name, True, 'exact')
    return CheckResult(suite, name, False, f'residual {residual}')


def _positive_rational(rng: np.random.Generator) -> Fraction:
    return Fraction(int(rng.integers(1, 6)), int(rng.integers(1, 4)))


def _random_field(rng: np.random.Generator, degree: int) -> VectorField:
    return VectorField(random_polynomial(rng, degree), random_polynomial(rng, degree))


def _random_plain_model(rng: np.random.Generator, degree: int) -> ModelSpec:
    channels = tuple(
        NoiseChannel.plain(random_polynomial(rng, degree))
        for _ in range(int(rng.integers(1, 3)))
    )
    return ModelSpec(random_polynomial(rng, degree), channels)


def _random_pair_model(rng: np.random.Generator, degree: int) -> ModelSpec:
    """One conjugate pair, optionally preceded by a plain channel."""
    channels = []
    if rng.random() < 0.5:
        channels.append(NoiseChannel.plain(random_polynomial(rng, degree)))
    channels.append(
        NoiseChannel.pair(
            random_polynomial(rng, degree), random_polynomial(rng, degree)
        )
    )
    return ModelSpec(random_polynomial(rng, degree), channels, _positive_rational(rng))


def core_suite(options: VerifyOptions, rng: np.random.Generator) -> list[CheckResult]:
    """Bracket axioms and the dissipation of first-order generators."""
    d, n = options.degree, options.trials

    def draw():
        return random_polynomial(rng, d)

    def antisymmetry():
        f, g = draw(), draw()
        return poisson_bracket(f, g) + poisson_bracket(g, f)

    def leibniz():
        f, g, h = draw(), draw(), draw()
        return poisson_bracket(f, g * h) - (
            poisson_bracket(f, g) * h + g * poisson_bracket(f, h)
        )

    def jacobi():
        f, g, h = draw(), draw(), draw()
        return (
            poisson_bracket(poisson_bracket(f, g), h)
            + poisson_bracket(poisson_bracket(g, h), f)
            + poisson_bracket(poisson_bracket(h, f), g)
        )

    def first_order_dissipation():
        v, f, g = _random_field(rng, d), draw(), draw()
        return dissipation(v, f, g) + divergence(v) * poisson_bracket(f, g)

    def hamiltonian_round_trip():
        H = draw()
        recovered = is_hamiltonian(hamiltonian_vector_field(H))
        if recovered is None:
            return ONE
        return recovered - (H - H.constant_term)

    def hamiltonian_no_dissipation():
        v, f, g = hamiltonian_vector_field(draw()), draw(), draw()
        return dissipation(v, f, g)

    def non_hamiltonian_rejected():
        v = _random_field(rng, d)
        free = divergence(v).is_zero()
        return ZERO if (is_hamiltonian(v) is not None) == free else ONE

    return [
        _identity_check('core', 'antisymmetry', n, antisymmetry),
        _identity_check('core', 'leibniz', n, leibniz),
        _identity_check('core', 'jacobi', n, jacobi),
        _identity_check('core', 'first_order_dissipation', n, first_order_dissipation),
        _identity_check('core', 'hamiltonian_round_trip', n, hamiltonian_round_trip),
        _identity_check(
            'core', 'hamiltonian_no_dissipation', n, hamiltonian_no_dissipation
        ),
        _identity_check(
            'core', 'non_hamiltonian_rejected', n, non_hamiltonian_rejected
        ),
    ]


def theorem1_suite(
    options: VerifyOptions, rng: np.random.Generator
) -> list[CheckResult]:
    """Plain-channel models: the damped oscillator dilation and the divergence law."""
    d, n = options.degree, options.trials
    dho = build_dho_model(**EXAMPLE2, exact=True)
    gamma = EXAMPLE2['gamma']
    expected = VectorField(MOMENTUM, -POSITION - MOMENTUM * gamma)

    def divergence_law():
        model = _random_plain_model(rng, d)
        return theorem1_divergence(model) - divergence(drift_field(model))

    def linear_couplings_hamiltonian():
        H = random_polynomial(rng, d)
        count = int(rng.integers(1, 4))
        model = build_example1_model(
            H,
            [Fraction(int(rng.integers(-5, 6)), 2) for _ in range(count)],
            [Fraction(int(rng.integers(-5, 6)), 3) for _ in range(count)],
        )
        drift = drift_field(model)
        recovered = is_hamiltonian(drift)
        if recovered is None:
            return ONE
        residual = _field_residual(drift - hamiltonian_vector_field(recovered))
        return residual if not residual.is_zero() else theorem1_divergence(model)

    return [
        _single_check(
            'theorem1',
            'dho_dilation_drift',
            _field_residual(drift_field(dho) - expected),
        ),
        _single_check(
            'theorem1',
            'dho_dilation_divergence',
            theorem1_divergence(dho) + PolynomialObservable.constant(gamma),
        ),
        _identity_check('theorem1', 'divergence_law', n, divergence_law),
        _identity_check(
            'theorem1', 'linear_couplings_hamiltonian', n, linear_couplings_hamiltonian
        ),
    ]


def _explicit_drift(model: ModelSpec) -> VectorField:
    """(H_p + 1/2 sum {F_p, F}, -H_q - 1/2 sum {F_q, F}) + u."""
    H = model.hamiltonian
    vq, vp = H.diff_p(), -H.diff_q()
    for channel in model.channels:
        for F in channel.generators:
            vq = vq + HALF * poisson_bracket(F.diff_p(), F)
            vp = vp - HALF * poisson_bracket(F.diff_q(), F)
    return VectorField(vq, vp) + gauge_field(model)


def theorem2_suite(
    options: VerifyOptions, rng: np.random.Generator
) -> list[CheckResult]:
    """Models with conjugate-pair noise: dissipation law, gauge and drift."""
    d, n = options.degree, options.trials
    observable_degree = min(3, d)

    def draw_model_and_pair():
        model = _random_pair_model(rng, d)
        f = random_polynomial(rng, observable_degree)
        g = random_polynomial(rng, observable_degree)
        return model, f, g

    def dissipation_law():
        model, f, g = draw_model_and_pair()
        return dissipation(model, f, g) - theorem2_dissipation_rhs(model, f, g)

    def increment_rule():
        model, f, g = draw_model_and_pair()
        return dissipation(model, f, g) - increment_bracket(model, f, g)

    def squared_field_law():
        model, f, g = draw_model_and_pair()
        expected = ZERO
        for sigma in noise_fields(model):
            expected = expected + apply_first_order(sigma, f) * apply_first_order(
                sigma, g
            )
        return squared_field(model, f, g) - expected

    def gauge_law():
        model = _random_pair_model(rng, d)
        coupling = ZERO
        for channel in model.pairs:
            coupling = coupling + poisson_bracket(channel.F, channel.G)
        return divergence(gauge_field(model)) + coupling / model.action_scale

    def drift_law():
        model = _random_pair_model(rng, d)
        return _field_residual(drift_field(model) - _explicit_drift(model))

    linear = build_linear_model(LinearModelParams(gamma=Fraction(1, 4)), exact=True)
    linear_drift = VectorField(MOMENTUM, -POSITION - MOMENTUM / 4)
    linear_dissipation = dissipation(linear, POSITION, MOMENTUM) - Fraction(1, 4)
    return [
        _identity_check('theorem2', 'dissipation_law', n, dissipation_law),
        _identity_check('theorem2', 'increment_rule', n, increment_rule),
        _identity_check('theorem2', 'squared_field', n, squared_field_law),
        _identity_check('theorem2', 'gauge_law', n, gauge_law),
        _identity_check('theorem2', 'drift_law', n, drift_law),
        _single_check(
            'theorem2',
            'linear_model_drift',
            _field_residual(drift_field(linear) - linear_drift),
        ),
        _single_check('theorem2', 'linear_model_dissipation', linear_dissipation),
        _single_check(
            'theorem2',
            'linear_model_generator',
            apply_generator(linear, POSITION * POSITION)
            - (2 * POSITION * MOMENTUM + Fraction(1, 4)),
        ),
    ]


def _bounded_check(name: str, value: float, bound: float, label: str) -> CheckResult:
    passed = bool(math.isfinite(value) and value <= bound)
    return CheckResult(
        'integrator', name, passed, f'{label} = {format_value(value)} <= {bound:g}'
    )


def integrator_suite(
    options: VerifyOptions, rng: np.random.Generator
) -> list[CheckResult]:
    """Convergence, pathwise canonicality and stationary statistics of the engine."""
    seed = options.seed
    linear_params = LinearModelParams()
    linear = build_linear_model(linear_params)
    dho = build_dho_model(**EXAMPLE2, exact=True)
    results = []

    study = strong_convergence_study(linear, (1.0, 0.0), seed=seed)
    low, high = STRONG_ORDER_WINDOW
    results.append(
        CheckResult(
            'integrator',
            'strong_order',
            low <= study.order <= high,
            f'order = {study.order:.4f} in [{low}, {high}]',
        )
    )

    cfg = IntegratorConfig(
        dt=1e-5, t_final=1.0, with_jacobian=True, deterministic=True, block_size=4096
    )
    trajectory = simulate_path(dho, (1.0, 0.0), cfg)
    det = float(np.linalg.det(trajectory.jacobians[-1]))
    expected = math.exp(-float(EXAMPLE2['gamma']))
    results.append(
        _bounded_check(
            'det_j_deterministic_dho',
            abs(det - expected),
            1e-4,
            '|det J - e^(-gamma T)|',
        )
    )

    study = jacobian_canonicality_study(dho, (1.0, 0.0), seed=seed)
    results.append(
        CheckResult(
            'integrator',
            'det_j_plain_canonical',
            study.order >= MIN_JACOBIAN_ORDER,
            f'median |det J - 1| decreases at order {study.order:.4f} '
            f'>= {MIN_JACOBIAN_ORDER}',
        )
    )

    cfg = IntegratorConfig(dt=1e-4, t_final=1.0, seed=seed, with_jacobian=True)
    ensemble = run_ensemble(linear, (1.0, 0.0), cfg, 4)
    expected = math.exp(-float(linear_params.gamma))
    results.append(
        _bounded_check(
            'det_j_linear_pair',
            float(np.max(np.abs(ensemble.terminal_det_j - expected))),
            1e-3,
            'max |det J - e^(-gamma T)|',
        )
    )

    cfg = IntegratorConfig(dt=1e-3, t_final=40.0, seed=seed)
    summary = run_ensemble(linear, (0.0, 0.0), cfg, options.paths).summary
    drift_diffusion = linear_drift_diffusion(linear)
    sigma = lyapunov_solve(drift_diffusion.A, drift_diffusion.g)
    results.append(
        CheckResult(
            'integrator',
            'mc_covariance',
            summary.covariance_within(sigma, 3.0),
            f'{options.paths} paths, sample covariance '
            f'{format_value(summary.sample_covariance)} vs Lyapunov '
            f'{format_value(sigma)} within 3 standard errors',
        )
    )
    return results


def quantum_mu_verdict(tolerance: float = 1e-9) -> AuditVerdict:
    """
    The printed choice mu = gamma against the mu that reproduces the classical drift
    at hbar = 2, m = omega = 1, gamma = 1/2.
    """
    report = quantum_comparison(
        QuantumComparisonParams(hbar=2.0, m=1.0, omega=1.0, gamma=0.5)
    )
    difference = abs(report.paper_mu - report.matching_mu)
    return AuditVerdict(
        item='quantum_matching_mu',
        paper_value=np.array([report.paper_mu]),
        oracle_value=np.array([report.matching_mu]),
        status=AuditStatus.MATCH if difference <= tolerance else AuditStatus.DISCREPANT,
        tolerance=tolerance,
        note='mu that makes the quantum drift equal the classical one',
    )


def paper_formula_suite(
    options: VerifyOptions, rng: np.random.Generator
) -> tuple[list[CheckResult], list[AuditVerdict]]:
    verdicts = audit_paper_formulas(LinearModelParams())
    verdicts.append(quantum_mu_verdict())
    results = [
        CheckResult(
            'paper-formulas',
            v.item,
            v.status is not AuditStatus.DISCREPANT,
            v.note
            if v.status is AuditStatus.NOT_APPLICABLE
            else f'printed {format_value(v.paper_value)} vs oracle '
            f'{format_value(v.oracle_value)}',
            kind=CheckKind.AUDIT,
            applicable=v.status is not AuditStatus.NOT_APPLICABLE,
        )
        for v in verdicts
    ]
    return results, verdicts


_SUITES = {
    'core': core_suite,
    'theorem1': theorem1_suite,
    'theorem2': theorem2_suite,
    'integrator': integrator_suite,
}


def suite_generator(seed: int, suite: str) -> np.random.Generator:
    """Each suite draws from its own stream, so suites can run in any selection."""
    index = SUITE_NAMES.index(suite)
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


def run_verification(
    suite: str = 'all', options: VerifyOptions | None = None
) -> VerificationReport:
    """
    Runs one suite, or all of them in the order of `SUITE_NAMES`.

    Raises:
        ParameterDomainError: Unknown suite name.
    """
    options = options or VerifyOptions()
    if suite == 'all':
        names = SUITE_NAMES
    elif suite in SUITE_NAMES:
        names = (suite,)
    else:
        raise ParameterDomainError(f'unknown suite {suite!r}')
    report = VerificationReport()
    for name in names:
        rng = suite_generator(options.seed, name)
        if name == 'paper-formulas':
            results, verdicts = paper_formula_suite(options, rng)
            report.audit_verdicts.extend(verdicts)
        else:
            results = _SUITES[name](options, rng)
        report.results.extend(results)
        logger.info(
            'verification.suite_done',
            suite=name,
            checks=len(results),
            passed=sum(r.passed for r in results),
        )
    return report
