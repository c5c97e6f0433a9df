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
The `canonical-flows` command line.

`run(argv)` is the programmatic entry point and returns the exit code:
0 on success, 1 when a check fails, 2 on usage or input errors and 3 on numeric
failures.
"""

import logging
import sys
import time
from collections.abc import Sequence
from pathlib import Path
from typing import Any

import click
import numpy as np
import structlog
from pydantic import ValidationError

from nomad_canonical_flows.errors import (
    CanonicalFlowError,
    NumericalError,
    ParameterDomainError,
)
from nomad_canonical_flows.model_catalog import (
    LinearModelParams,
    QuantumComparisonParams,
    QuantumComparisonReport,
    linear_drift_diffusion,
    quantum_comparison,
)
from nomad_canonical_flows.model_config import ModelConfig, load_model_config
from nomad_canonical_flows.poisson_algebra import ModelSpec
from nomad_canonical_flows.reporting import (
    RunManifest,
    render_report,
    render_table,
    summary_path,
)
from nomad_canonical_flows.sde_engine import (
    EnsembleSummary,
    IntegratorConfig,
    exact_linear_moments,
    expected_jacobian_determinant,
    iter_trajectories,
    run_ensemble,
    summarize_terminal_states,
    write_trajectory_csv,
)
from nomad_canonical_flows.stationary_analysis import (
    SteadyStateReport,
    ZeroCrossResult,
    analyze_steady_state,
    closed_form_zero_cross_z,
    find_zero_cross_z,
)
from nomad_canonical_flows.verification import (
    SUITE_NAMES,
    VerifyOptions,
    run_verification,
)

logger = structlog.get_logger(__name__)

DEFAULT_DT = 1e-3
DEFAULT_T_FINAL = 40.0
DEFAULT_PATHS = 10_000
DEFAULT_TRIALS = 100
DEFAULT_DEGREE = 4
DEFAULT_SEED = 0
MC_STANDARD_ERRORS = 3.0

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_USAGE = 2
EXIT_NUMERIC = 3


def configure_logging(verbose: bool = False) -> None:
    """Routes structlog events to stderr so reports on stdout stay clean."""
    structlog.configure(
        processors=[
            structlog.processors.add_log_level,
            structlog.dev.ConsoleRenderer(colors=False),
        ],
        wrapper_class=structlog.make_filtering_bound_logger(
            logging.INFO if verbose else logging.WARNING
        ),
        logger_factory=structlog.PrintLoggerFactory(sys.stderr),
        cache_logger_on_first_use=False,
    )


def _integrator_config(**kwargs: Any) -> IntegratorConfig:
    try:
        return IntegratorConfig(**kwargs)
    except ValidationError as e:
        raise ParameterDomainError(f'invalid integrator settings: {e}') from e


def _load_model(path: str) -> tuple[ModelConfig, ModelSpec]:
    config = load_model_config(path)
    return config, config.build()


def _emit(text: str, out: str | None, manifest: RunManifest, started: float) -> None:
    click.echo(text, nl=False)
    if out is not None:
        Path(out).write_text(text, encoding='utf-8')
        manifest.duration_seconds = time.perf_counter() - started
        manifest.write(out)


def _summary_entries(summary: EnsembleSummary) -> dict[str, Any]:
    entries = {
        'paths': summary.path_count,
        'mean': summary.mean_state,
        'mean_se': summary.mean_standard_errors,
        'covariance': summary.sample_covariance,
        'covariance_se': summary.standard_errors,
    }
    if summary.det_j_stats is not None:
        entries['det_j.expected'] = summary.det_j_stats.expected
        entries['det_j.median_abs_error'] = summary.det_j_stats.median
        entries['det_j.p95_abs_error'] = summary.det_j_stats.p95
    return entries


def _summary_table(summary: EnsembleSummary) -> str:
    rows = [
        ('mean q', summary.mean_state[0], summary.mean_standard_errors[0]),
        ('mean p', summary.mean_state[1], summary.mean_standard_errors[1]),
        ('cov qq', summary.sample_covariance[0, 0], summary.standard_errors[0, 0]),
        ('cov qp', summary.sample_covariance[0, 1], summary.standard_errors[0, 1]),
        ('cov pp', summary.sample_covariance[1, 1], summary.standard_errors[1, 1]),
    ]
    if summary.det_j_stats is not None:
        stats = summary.det_j_stats
        rows.append(('median |detJ - expected|', stats.median, None))
        rows.append(('p95 |detJ - expected|', stats.p95, None))
    return render_table(('quantity', 'value', 'standard error'), rows)


def render_simulation_summary(
    model: ModelSpec,
    cfg: IntegratorConfig,
    x0: tuple[float, float],
    summary: EnsembleSummary | None,
    terminal: np.ndarray,
) -> str:
    """Ensemble report of a `simulate` run, with exact moments for linear models."""
    sections = [
        render_table(
            ('setting', 'value'),
            (
                ('model', model.name),
                ('paths', len(terminal)),
                ('dt', cfg.dt),
                ('tFinal', cfg.t_final),
                ('steps', cfg.step_count),
                ('seed', cfg.seed),
                ('x0', list(x0)),
            ),
        )
    ]
    entries: dict[str, Any] = {'model': model.name, 'steps': cfg.step_count}
    if summary is None:
        sections.append(f'terminal state {terminal[0][0]!r}, {terminal[0][1]!r}')
        entries['terminal'] = terminal[0]
        return render_report('Simulation summary', sections, entries)
    sections.append(_summary_table(summary))
    entries.update(_summary_entries(summary))
    try:
        matrices = linear_drift_diffusion(model)
    except CanonicalFlowError:
        matrices = None
    if matrices is not None and not cfg.deterministic:
        mean, covariance = exact_linear_moments(
            matrices.A, matrices.g, np.asarray(x0), np.zeros((2, 2)), cfg.t_final
        )
        within = summary.covariance_within(covariance, MC_STANDARD_ERRORS)
        sections.append(
            render_table(
                ('exact linear moments at tFinal', 'value'),
                (
                    ('mean', mean),
                    ('covariance', covariance),
                    ('sample covariance within 3 SE', within),
                ),
            )
        )
        entries['exact.mean'] = mean
        entries['exact.covariance'] = covariance
        entries['exact.covariance_within_3se'] = within
    return render_report('Simulation summary', sections, entries)


def render_steady_report(
    report: SteadyStateReport,
    zero_cross: ZeroCrossResult | None = None,
    closed_form_z: float | None = None,
    mc_summary: EnsembleSummary | None = None,
) -> str:
    rows = [
        ('A', report.A),
        ('g', report.g),
        ('sigma', report.sigma),
        ('Lyapunov residual', report.residual_norm),
        ('Hurwitz', report.hurwitz),
        ('sigma positive definite', report.positive_definite),
        ('k_B T (Gibbs form)', report.temperature),
        ('E[L q^2], E[L qp], E[L p^2]', report.stationarity_residuals),
    ]
    entries: dict[str, Any] = {
        'A': report.A,
        'g': report.g,
        'sigma': report.sigma,
        'residual': report.residual_norm,
        'hurwitz': report.hurwitz,
        'positive_definite': report.positive_definite,
        'kBT': report.temperature,
        'stationarity_residuals': report.stationarity_residuals,
    }
    sections = [render_table(('quantity', 'value'), rows)]
    if zero_cross is not None:
        sections.append(
            render_table(
                ('zero cross-covariance', 'value'),
                (
                    ('z* (bisection)', zero_cross.z_star),
                    ('z* (closed form)', closed_form_z),
                    ('sigma(z*)', zero_cross.sigma),
                    ('k_B T', zero_cross.k_bt),
                    ('bracket', list(zero_cross.bracket)),
                ),
            )
        )
        entries['z_star'] = zero_cross.z_star
        entries['z_star.closed_form'] = closed_form_z
        entries['sigma_at_z_star'] = zero_cross.sigma
        entries['kBT_at_z_star'] = zero_cross.k_bt
    if mc_summary is not None:
        within = mc_summary.covariance_within(report.sigma, MC_STANDARD_ERRORS)
        sections.append(_summary_table(mc_summary))
        sections.append(
            f'sample covariance within 3 SE of sigma: {str(within).lower()}'
        )
        entries.update({f'mc.{k}': v for k, v in _summary_entries(mc_summary).items()})
        entries['mc.within_3se'] = within
    return render_report('Steady state', sections, entries)


def render_quantum_report(report: QuantumComparisonReport) -> str:
    p = report.params
    rows = [
        ('A', report.drift_diffusion.A),
        ('g', report.drift_diffusion.g),
        ('Hurwitz', report.hurwitz),
        ('Hurwitz violation', report.hurwitz_violation),
        ('s = hbar/2', report.action_scale),
        ('epsilon = 1/(m omega)', report.epsilon),
        ('classical A (z = 0)', report.classical.A),
        ('classical g', report.classical.g),
        ('max relative drift difference', report.drift_difference),
        ('max relative diffusion difference', report.diffusion_difference),
        ('matches classical model', report.matches_classical),
        ('mu reproducing the classical drift', report.matching_mu),
        ('printed choice mu = gamma', report.paper_mu),
        ('printed choice reproduces drift', report.paper_mu_reproduces_drift),
        ('k_B T = hbar omega / ln(1 + 1/n)', report.k_bt),
        ('stationary covariance', report.stationary_covariance),
        ('<p^2> / (m^2 omega^2 <q^2>)', report.equipartition_ratio),
    ]
    sections = [render_table(('quantity', 'value'), rows)]
    if not report.paper_mu_reproduces_drift:
        sections.append(
            f'note: the printed choice mu = gamma = {p.gamma!r} does not reproduce '
            f'the classical drift; mu = {report.matching_mu!r} does'
        )
    entries = {
        'hbar': p.hbar,
        'm': p.m,
        'omega': p.omega,
        'gamma': p.gamma,
        'n': p.n,
        'mu': p.mu,
        'A': report.drift_diffusion.A,
        'g': report.drift_diffusion.g,
        'hurwitz': report.hurwitz,
        's': report.action_scale,
        'epsilon': report.epsilon,
        'drift_difference': report.drift_difference,
        'diffusion_difference': report.diffusion_difference,
        'matches_classical': report.matches_classical,
        'matching_mu': report.matching_mu,
        'paper_mu': report.paper_mu,
        'paper_mu_reproduces_drift': report.paper_mu_reproduces_drift,
        'kBT': report.k_bt,
        'equipartition_ratio': report.equipartition_ratio,
    }
    return render_report('Quantum comparison', sections, entries)


@click.group(context_settings={'help_option_names': ['-h', '--help']})
@click.option('-v', '--verbose', is_flag=True, help='Log progress to stderr.')
def cli(verbose: bool):
    """Canonical stochastic flows on phase space."""
    configure_logging(verbose)


@cli.command()
@click.option(
    '--suite',
    type=click.Choice([*SUITE_NAMES, 'all']),
    default='all',
    show_default=True,
    help='Suite to run.',
)
@click.option('--trials', type=int, default=DEFAULT_TRIALS, show_default=True)
@click.option(
    '--degree',
    type=int,
    default=DEFAULT_DEGREE,
    show_default=True,
    help='Maximal degree of random polynomials.',
)
@click.option('--seed', type=int, default=DEFAULT_SEED, show_default=True)
@click.option(
    '--paths',
    type=int,
    default=DEFAULT_PATHS,
    show_default=True,
    help='Paths of the Monte Carlo covariance check.',
)
@click.option(
    '--strict', is_flag=True, help='Exit with 1 when a printed formula is discrepant.'
)
def verify(suite: str, trials: int, degree: int, seed: int, paths: int, strict: bool):
    """Run identity, integrator and formula checks."""
    options = VerifyOptions(trials=trials, degree=degree, seed=seed, paths=paths)
    report = run_verification(suite, options)
    click.echo(report.render(), nl=False)
    return report.exit_code(strict)


@cli.command()
@click.option('--model', 'model_path', required=True, help='Model config file.')
@click.option('--t-final', type=float, default=DEFAULT_T_FINAL, show_default=True)
@click.option('--dt', type=float, default=DEFAULT_DT, show_default=True)
@click.option('--paths', type=int, default=DEFAULT_PATHS, show_default=True)
@click.option('--seed', type=int, default=DEFAULT_SEED, show_default=True)
@click.option('--jacobian', is_flag=True, help='Co-integrate the Jacobian.')
@click.option('--record-stride', type=int, default=1, show_default=True)
@click.option(
    '--x0', type=(float, float), default=(0.0, 0.0), show_default=True, help='(q, p).'
)
@click.option('--workers', type=int, default=1, show_default=True)
@click.option('--out', required=True, help='Trajectory CSV file.')
def simulate(
    model_path: str,
    t_final: float,
    dt: float,
    paths: int,
    seed: int,
    jacobian: bool,
    record_stride: int,
    x0: tuple[float, float],
    workers: int,
    out: str,
):
    """Integrate an ensemble of paths and write trajectories to CSV."""
    started = time.perf_counter()
    _, model = _load_model(model_path)
    if paths < 1:
        raise ParameterDomainError(f'--paths must be positive, got {paths}')
    if workers < 1:
        raise ParameterDomainError(f'--workers must be positive, got {workers}')
    cfg = _integrator_config(
        dt=dt,
        t_final=t_final,
        seed=seed,
        with_jacobian=jacobian,
        record_stride=record_stride,
    )
    manifest = RunManifest.for_inputs(
        'simulate',
        {
            'model': model_path,
            'tFinal': t_final,
            'dt': dt,
            'paths': paths,
            'jacobian': jacobian,
            'recordStride': record_stride,
            'x0': list(x0),
            'workers': workers,
            'blockSize': cfg.block_size,
            'out': out,
        },
        inputs=[model_path],
        seed=seed,
    )
    terminal, final_jacobians = write_trajectory_csv(
        out, iter_trajectories(model, x0, cfg, paths, workers=workers)
    )
    summary = None
    if paths >= 2:
        det_j = None
        if jacobian:
            det_j = np.linalg.det(final_jacobians)
        summary = summarize_terminal_states(
            terminal,
            det_j,
            expected_jacobian_determinant(model, cfg) if jacobian else None,
        )
    text = render_simulation_summary(model, cfg, x0, summary, terminal)
    summary_path(out).write_text(text, encoding='utf-8')
    click.echo(text, nl=False)
    manifest.duration_seconds = time.perf_counter() - started
    manifest.write(out)
    logger.info('cli.simulate_done', out=out, paths=paths)
    return EXIT_OK


@cli.command()
@click.option('--model', 'model_path', required=True, help='Model config file.')
@click.option(
    '--find-z', is_flag=True, help='Search z with vanishing cross-covariance.'
)
@click.option(
    '--mc-check',
    type=int,
    default=0,
    show_default=True,
    help='Compare with N Monte Carlo paths (0 disables).',
)
@click.option('--seed', type=int, default=DEFAULT_SEED, show_default=True)
@click.option('--out', default=None, help='Report file.')
def steady(model_path: str, find_z: bool, mc_check: int, seed: int, out: str | None):
    """Stationary covariance of a linear model."""
    started = time.perf_counter()
    config, model = _load_model(model_path)
    params: LinearModelParams | None = None
    if config.type == 'linear':
        params = config.linear_params()
    if find_z and params is None:
        raise ParameterDomainError('--find-z needs a model config of type linear')
    if mc_check < 0 or mc_check == 1:
        raise ParameterDomainError('--mc-check needs 0 or at least 2 paths')
    report = analyze_steady_state(model, params)

    zero_cross = closed_form_z = None
    if find_z:
        zero_cross = find_zero_cross_z(params)
        closed_form_z = closed_form_zero_cross_z(params)

    mc_summary = None
    if mc_check:
        cfg = _integrator_config(dt=DEFAULT_DT, t_final=DEFAULT_T_FINAL, seed=seed)
        mc_summary = run_ensemble(model, (0.0, 0.0), cfg, mc_check).summary

    manifest = RunManifest.for_inputs(
        'steady',
        {
            'model': model_path,
            'findZ': find_z,
            'mcCheck': mc_check,
            'dt': DEFAULT_DT,
            'tFinal': DEFAULT_T_FINAL,
            'out': out,
        },
        inputs=[model_path],
        seed=seed,
    )
    text = render_steady_report(report, zero_cross, closed_form_z, mc_summary)
    _emit(text, out, manifest, started)
    if mc_summary is not None and not mc_summary.covariance_within(
        report.sigma, MC_STANDARD_ERRORS
    ):
        return EXIT_CHECK_FAILED
    return EXIT_OK


@cli.command('compare-quantum')
@click.option('--hbar', type=float, required=True)
@click.option('--m', 'mass', type=float, required=True)
@click.option('--omega', type=float, required=True)
@click.option('--gamma', type=float, required=True)
@click.option(
    '--n', 'occupation', type=float, required=True, help='Thermal occupation.'
)
@click.option('--mu', type=float, required=True)
@click.option('--out', default=None, help='Report file.')
def compare_quantum(
    hbar: float,
    mass: float,
    omega: float,
    gamma: float,
    occupation: float,
    mu: float,
    out: str | None,
):
    """Compare the quantum damped oscillator with the classical linear model."""
    started = time.perf_counter()
    params = QuantumComparisonParams(
        hbar=hbar, m=mass, omega=omega, gamma=gamma, n=occupation, mu=mu
    )
    manifest = RunManifest.for_inputs(
        'compare-quantum',
        {
            'hbar': hbar,
            'm': mass,
            'omega': omega,
            'gamma': gamma,
            'n': occupation,
            'mu': mu,
            'out': out,
        },
    )
    _emit(render_quantum_report(quantum_comparison(params)), out, manifest, started)
    return EXIT_OK


def run(argv: Sequence[str] | None = None) -> int:
    """
    Runs the CLI on `argv` (default `sys.argv[1:]`) and returns the exit code
    instead of exiting.
    """
    args = list(sys.argv[1:] if argv is None else argv)
    try:
        result = cli.main(args=args, prog_name='canonical-flows', standalone_mode=False)
    except click.exceptions.Abort:
        click.echo('Aborted!', err=True)
        return EXIT_USAGE
    except click.ClickException as e:
        e.show()
        return EXIT_USAGE
    except NumericalError as e:
        click.echo(f'Numeric failure: {e}', err=True)
        return EXIT_NUMERIC
    except CanonicalFlowError as e:
        click.echo(f'Error: {e}', err=True)
        return EXIT_USAGE
    except OSError as e:
        click.echo(f'Error: {e}', err=True)
        return EXIT_USAGE
    return result if isinstance(result, int) else EXIT_OK


def main() -> None:
    sys.exit(run())
