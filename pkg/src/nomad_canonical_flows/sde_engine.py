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
Euler-Maruyama integration of phase-space SDEs

    dx = v(x) dt + sum_k sigma_k(x) dQ_k + sum_pairs varsigma_k(x) dP_k

with optional co-integration of the Jacobian J_t = d(q_t, p_t) / d(q_0, p_0).

Every path owns a counter-based Philox stream derived from the master seed and the
path index, so results do not depend on how paths are batched or distributed over
worker processes. Paths are advanced in batches with element-wise numpy
arithmetic only.
"""

import csv
import functools
import itertools
import math
from collections import deque
from collections.abc import Callable, Iterable, Iterator, Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import structlog
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.linalg import expm

from nomad_canonical_flows.errors import NonFiniteValueError, ParameterDomainError
from nomad_canonical_flows.model_catalog import linear_drift_diffusion
from nomad_canonical_flows.poisson_algebra import (
    ModelSpec,
    divergence,
    drift_field,
    noise_fields,
)
from nomad_canonical_flows.polynomial import PolynomialObservable

logger = structlog.get_logger(__name__)

State = tuple[float, float]
_Term = float | Callable[[np.ndarray, np.ndarray], np.ndarray]

# recorded (q, p) states held per batch by `iter_trajectories`
RECORD_BUDGET = 1 << 20


class IntegratorConfig(BaseModel):
    """
    Time grid, seed and output options of an integration.

    The grid has `ceil(t_final / dt)` steps; the last step is shortened so that the
    path ends exactly at `t_final`.
    """

    model_config = ConfigDict(
        extra='forbid', frozen=True, populate_by_name=True, allow_inf_nan=False
    )

    dt: float = Field(1e-3, gt=0, description='Step size')
    t_final: float = Field(40.0, gt=0, alias='tFinal', description='Final time')
    seed: int = Field(0, ge=0, lt=2**64, description='64-bit master seed')
    with_jacobian: bool = Field(
        False, alias='withJacobian', description='Co-integrate the Jacobian'
    )
    record_stride: int = Field(
        1, ge=1, alias='recordStride', description='Record every k-th step'
    )
    deterministic: bool = Field(
        False, description='Freeze all increments to zero, keeping the Ito drift'
    )
    block_size: int = Field(
        256, ge=1, alias='blockSize', description='Steps of increments drawn at once'
    )

    @model_validator(mode='after')
    def _check_grid(self):
        if self.dt > self.t_final * (1 + 1e-12):
            raise ValueError(f'dt = {self.dt} exceeds t_final = {self.t_final}')
        return self

    @property
    def step_count(self) -> int:
        return max(1, math.ceil(self.t_final / self.dt - 1e-9))

    @property
    def record_count(self) -> int:
        """Number of recorded times, t = 0 and t_final included."""
        n = self.step_count
        return n // self.record_stride + 1 + (1 if n % self.record_stride else 0)

    def step_sizes(self) -> np.ndarray:
        n = self.step_count
        sizes = np.full(n, self.dt)
        sizes[-1] = self.t_final - (n - 1) * self.dt
        return sizes

    def time_at(self, step: int) -> float:
        if step >= self.step_count:
            return self.t_final
        return step * self.dt


@dataclass(frozen=True)
class Trajectory:
    """
    A recorded path. `jacobians[k]` is J at `times[k]`; J_0 is the identity.
    """

    times: np.ndarray
    states: np.ndarray
    jacobians: np.ndarray | None = None
    path_index: int = 0


@dataclass(frozen=True)
class DetJStats:
    median: float
    p95: float
    expected: float


@dataclass(frozen=True)
class EnsembleSummary:
    """Terminal-time sample moments of an ensemble with Monte Carlo errors."""

    path_count: int
    mean_state: np.ndarray
    mean_standard_errors: np.ndarray
    sample_covariance: np.ndarray
    standard_errors: np.ndarray
    det_j_stats: DetJStats | None = None

    def covariance_within(self, target: np.ndarray, k: float = 3.0) -> bool:
        """True when every covariance entry lies within k standard errors of target."""
        deviation = np.abs(self.sample_covariance - np.asarray(target, dtype=float))
        return bool(np.all(deviation <= k * self.standard_errors))

    def mean_within(self, target: np.ndarray, k: float = 3.0) -> bool:
        deviation = np.abs(self.mean_state - np.asarray(target, dtype=float))
        return bool(np.all(deviation <= k * self.mean_standard_errors))


def _compile_term(poly: PolynomialObservable) -> _Term:
    if poly.is_constant():
        return float(poly.constant_term)
    return poly.to_numpy()


def _evaluate(term: _Term, q: np.ndarray, p: np.ndarray):
    if isinstance(term, float):
        return term
    return term(q, p)


def _compile_jacobian(v) -> tuple[_Term, _Term, _Term, _Term]:
    (a, b), (c, d) = v.jacobian()
    return tuple(_compile_term(x) for x in (a, b, c, d))


@dataclass(frozen=True)
class CompiledModel:
    """Float evaluators of the drift, noise fields and their Jacobians."""

    model: ModelSpec
    drift: tuple[_Term, _Term]
    noise: tuple[tuple[_Term, _Term], ...]
    drift_jacobian: tuple[_Term, _Term, _Term, _Term]
    noise_jacobians: tuple[tuple[_Term, _Term, _Term, _Term] | None, ...]
    drift_divergence: PolynomialObservable

    @property
    def noise_dimension(self) -> int:
        return len(self.noise)


@functools.lru_cache(maxsize=64)
def compile_model(model: ModelSpec) -> CompiledModel:
    drift = drift_field(model)
    fields = noise_fields(model)
    noise_jacobians = []
    for sigma in fields:
        jac = _compile_jacobian(sigma)
        noise_jacobians.append(None if all(x == 0.0 for x in jac) else jac)
    return CompiledModel(
        model=model,
        drift=(_compile_term(drift.vq), _compile_term(drift.vp)),
        noise=tuple((_compile_term(s.vq), _compile_term(s.vp)) for s in fields),
        drift_jacobian=_compile_jacobian(drift),
        noise_jacobians=tuple(noise_jacobians),
        drift_divergence=divergence(drift),
    )


def path_generator(seed: int, path_index: int) -> np.random.Generator:
    """
    The Philox stream of one path, keyed by hashing (seed, path_index) through
    `numpy.random.SeedSequence`. Normals come from numpy's ziggurat sampler.
    """
    sequence = np.random.SeedSequence(entropy=seed, spawn_key=(path_index,))
    return np.random.Generator(np.random.Philox(sequence))


def _matrix_terms(terms, q, p):
    return tuple(_evaluate(t, q, p) for t in terms)


def _advance(compiled: CompiledModel, q, p, jac, h: float, dW):
    """One Euler-Maruyama step from the pre-step state; returns (q, p, jac)."""
    vq = _evaluate(compiled.drift[0], q, p)
    vp = _evaluate(compiled.drift[1], q, p)
    new_q = q + vq * h
    new_p = p + vp * h
    if dW is not None:
        for k, (sq, sp) in enumerate(compiled.noise):
            w = dW[:, k]
            new_q = new_q + _evaluate(sq, q, p) * w
            new_p = new_p + _evaluate(sp, q, p) * w
    if jac is not None:
        drift_jacobian = _matrix_terms(compiled.drift_jacobian, q, p)
        m11, m12, m21, m22 = (x * h for x in drift_jacobian)
        if dW is not None:
            for k, terms in enumerate(compiled.noise_jacobians):
                if terms is None:
                    continue
                w = dW[:, k]
                n11, n12, n21, n22 = _matrix_terms(terms, q, p)
                m11 = m11 + n11 * w
                m12 = m12 + n12 * w
                m21 = m21 + n21 * w
                m22 = m22 + n22 * w
        j11, j12, j21, j22 = jac
        jac = (
            j11 + (m11 * j11 + m12 * j21),
            j12 + (m11 * j12 + m12 * j22),
            j21 + (m21 * j11 + m22 * j21),
            j22 + (m21 * j12 + m22 * j22),
        )
    return new_q, new_p, jac


def _as_batch(value, size: int) -> np.ndarray:
    return np.broadcast_to(np.asarray(value, dtype=float), (size,)).copy()


def em_step(
    model: ModelSpec,
    state: State,
    dt: float,
    increments: Sequence[float],
) -> State:
    """
    One Euler-Maruyama step: state + v dt + sum sigma_k dQ_k + sum varsigma_k dP_k,
    all fields evaluated at the pre-step state.

    Args:
        model (ModelSpec): The model.
        state (tuple[float, float]): (q, p) before the step.
        dt (float): Step size, may be zero.
        increments (Sequence[float]): One dQ per plain channel, (dQ, dP) per pair,
            in channel order.

    Raises:
        NonFiniteValueError: A state component or increment is not finite.
    """
    compiled = compile_model(model)
    increments = np.asarray(increments, dtype=float).reshape(-1)
    if increments.size != compiled.noise_dimension:
        raise ParameterDomainError(
            f'expected {compiled.noise_dimension} increments, got {increments.size}'
        )
    if not (np.all(np.isfinite(increments)) and np.all(np.isfinite(state))):
        raise NonFiniteValueError('non-finite state or increment', step=0)
    if dt < 0:
        raise ParameterDomainError(f'dt must be non-negative, got {dt}')
    q, p, _ = _advance(
        compiled,
        _as_batch(state[0], 1),
        _as_batch(state[1], 1),
        None,
        float(dt),
        increments.reshape(1, -1) if increments.size else None,
    )
    if not (np.isfinite(q[0]) and np.isfinite(p[0])):
        raise NonFiniteValueError('state became non-finite', step=1)
    return float(q[0]), float(p[0])


@dataclass
class _BatchResult:
    path_indices: list[int]
    times: np.ndarray
    states: np.ndarray
    jacobians: np.ndarray | None


def _integrate_batch(
    model: ModelSpec,
    x0: State,
    cfg: IntegratorConfig,
    path_indices: Sequence[int],
    record: bool,
) -> _BatchResult:
    """
    Integrates a batch of paths. With `record` the states are kept every
    `record_stride` steps (plus t = 0 and the final time), otherwise only the
    terminal state is returned.
    """
    compiled = compile_model(model)
    size = len(path_indices)
    q = _as_batch(x0[0], size)
    p = _as_batch(x0[1], size)
    jac = None
    if cfg.with_jacobian:
        jac = (np.ones(size), np.zeros(size), np.zeros(size), np.ones(size))
    dimension = compiled.noise_dimension
    noisy = dimension > 0 and not cfg.deterministic
    generators = [path_generator(cfg.seed, i) for i in path_indices] if noisy else []
    sizes = cfg.step_sizes()
    roots = np.sqrt(sizes)
    n = sizes.size

    times, states, jacobians = [], [], []

    def keep(step):
        times.append(cfg.time_at(step))
        states.append(np.stack([q, p], axis=-1))
        if jac is not None:
            jacobians.append(
                np.stack([np.stack(jac[:2], -1), np.stack(jac[2:], -1)], axis=-2)
            )

    if record:
        keep(0)
    for start in range(0, n, cfg.block_size):
        count = min(cfg.block_size, n - start)
        if noisy:
            block = np.stack(
                [g.standard_normal((count, dimension)) for g in generators], axis=1
            )
        for offset in range(count):
            step = start + offset
            dW = block[offset] * roots[step] if noisy else None
            q, p, jac = _advance(compiled, q, p, jac, sizes[step], dW)
            finite = np.isfinite(q) & np.isfinite(p)
            if not finite.all():
                bad = int(np.argmin(finite))
                raise NonFiniteValueError(
                    f'state of path {path_indices[bad]} became non-finite at step '
                    f'{step + 1}',
                    step=step + 1,
                    path_index=path_indices[bad],
                )
            if record and ((step + 1) % cfg.record_stride == 0 or step + 1 == n):
                keep(step + 1)
    if not record:
        keep(n)
    return _BatchResult(
        path_indices=list(path_indices),
        times=np.asarray(times),
        states=np.stack(states),
        jacobians=np.stack(jacobians) if jac is not None else None,
    )


def _batches(path_count: int, batch_size: int) -> list[range]:
    return [
        range(start, min(start + batch_size, path_count))
        for start in range(0, path_count, batch_size)
    ]


def _iter_batches(
    model: ModelSpec,
    x0: State,
    cfg: IntegratorConfig,
    path_count: int,
    record: bool,
    workers: int,
    batch_size: int,
) -> Iterator[_BatchResult]:
    """
    Yields batch results in path-index order. At most `workers + 1` batches are
    in flight, so memory stays bounded by the batch size.
    """
    batches = _batches(path_count, batch_size)
    if workers <= 1 or len(batches) == 1:
        for batch in batches:
            yield _integrate_batch(model, x0, cfg, list(batch), record)
        return
    with ProcessPoolExecutor(max_workers=workers) as executor:
        pending = deque()
        for batch in batches:
            pending.append(
                executor.submit(_integrate_batch, model, x0, cfg, list(batch), record)
            )
            if len(pending) > workers:
                yield pending.popleft().result()
        while pending:
            yield pending.popleft().result()


def _run_batches(
    model: ModelSpec,
    x0: State,
    cfg: IntegratorConfig,
    path_count: int,
    record: bool,
    workers: int,
    batch_size: int,
) -> list[_BatchResult]:
    return list(
        _iter_batches(model, x0, cfg, path_count, record, workers, batch_size)
    )


def simulate_path(
    model: ModelSpec, x0: State, cfg: IntegratorConfig, path_index: int = 0
) -> Trajectory:
    """
    Simulates one Euler-Maruyama path with dQ, dP ~ N(0, dt) drawn from the stream
    of `path_index`; path `i` of an ensemble is bit-identical to
    `simulate_path(..., path_index=i)`.

    Raises:
        NonFiniteValueError: The state blew up; carries the step index.
    """
    result = _integrate_batch(model, x0, cfg, [path_index], record=True)
    return Trajectory(
        times=result.times,
        states=result.states[:, 0, :],
        jacobians=result.jacobians[:, 0] if result.jacobians is not None else None,
        path_index=path_index,
    )


def recorded_batch_size(cfg: IntegratorConfig, batch_size: int) -> int:
    """Paths per batch such that a batch holds at most `RECORD_BUDGET` states."""
    return max(1, min(batch_size, RECORD_BUDGET // cfg.record_count))


def iter_trajectories(
    model: ModelSpec,
    x0: State,
    cfg: IntegratorConfig,
    path_count: int,
    workers: int = 1,
    batch_size: int = 2048,
) -> Iterator[Trajectory]:
    """
    Recorded trajectories of paths 0 .. path_count - 1, produced lazily in
    path-index order. Only the batches in flight are held in memory.
    """
    if path_count < 1:
        raise ParameterDomainError('path_count must be positive')
    batch_size = recorded_batch_size(cfg, batch_size)
    for result in _iter_batches(model, x0, cfg, path_count, True, workers, batch_size):
        jacobians = result.jacobians
        for column, index in enumerate(result.path_indices):
            yield Trajectory(
                times=result.times,
                states=result.states[:, column, :],
                jacobians=jacobians[:, column] if jacobians is not None else None,
                path_index=index,
            )


def simulate_paths(
    model: ModelSpec,
    x0: State,
    cfg: IntegratorConfig,
    path_count: int,
    workers: int = 1,
    batch_size: int = 2048,
) -> list[Trajectory]:
    """All recorded trajectories at once; see `iter_trajectories`."""
    if path_count < 1:
        raise ParameterDomainError('path_count must be positive')
    return list(iter_trajectories(model, x0, cfg, path_count, workers, batch_size))


def expected_jacobian_determinant(
    model: ModelSpec, cfg: IntegratorConfig
) -> float | None:
    """
    The exact value of det J at t_final where the model fixes it: 1 for models
    driven by plain channels (canonical for the system bracket), exp(c t) when the
    increments are frozen or the noise is additive and the drift has constant
    divergence c. None otherwise.
    """
    compiled = compile_model(model)
    if not model.has_pairs and not cfg.deterministic:
        return 1.0
    additive = cfg.deterministic or all(j is None for j in compiled.noise_jacobians)
    if additive and compiled.drift_divergence.is_constant():
        return math.exp(float(compiled.drift_divergence.constant_term) * cfg.t_final)
    return None


def summarize_terminal_states(
    states: np.ndarray,
    det_j: np.ndarray | None = None,
    expected_det: float | None = None,
) -> EnsembleSummary:
    """Sample mean, covariance (ddof 1) and their standard errors."""
    states = np.asarray(states, dtype=float)
    count = states.shape[0]
    if count < 2:
        raise ParameterDomainError('an ensemble needs at least two paths')
    mean = states.mean(axis=0)
    deviations = states - mean
    products = deviations[:, :, None] * deviations[:, None, :]
    covariance = products.sum(axis=0) / (count - 1)
    errors = products.std(axis=0, ddof=1) / math.sqrt(count)
    stats = None
    if det_j is not None and expected_det is not None:
        error = np.abs(det_j - expected_det)
        stats = DetJStats(
            median=float(np.median(error)),
            p95=float(np.percentile(error, 95)),
            expected=expected_det,
        )
    return EnsembleSummary(
        path_count=count,
        mean_state=mean,
        mean_standard_errors=states.std(axis=0, ddof=1) / math.sqrt(count),
        sample_covariance=covariance,
        standard_errors=errors,
        det_j_stats=stats,
    )


@dataclass(frozen=True)
class EnsembleResult:
    """Terminal states (in path-index order) and their summary."""

    summary: EnsembleSummary
    terminal_states: np.ndarray
    terminal_det_j: np.ndarray | None


def run_ensemble(
    model: ModelSpec,
    x0: State,
    cfg: IntegratorConfig,
    path_count: int,
    workers: int = 1,
    batch_size: int = 2048,
) -> EnsembleResult:
    """Like `simulate_ensemble` but also returns the per-path terminal values."""
    if path_count < 2:
        raise ParameterDomainError('an ensemble needs at least two paths')
    logger.info(
        'sde_engine.ensemble_start',
        model=model.name,
        paths=path_count,
        steps=cfg.step_count,
        workers=workers,
    )
    results = _run_batches(model, x0, cfg, path_count, False, workers, batch_size)
    terminal = np.concatenate([r.states[-1] for r in results], axis=0)
    det_j = None
    if cfg.with_jacobian:
        jacobians = np.concatenate([r.jacobians[-1] for r in results], axis=0)
        det_j = np.linalg.det(jacobians)
    summary = summarize_terminal_states(
        terminal,
        det_j,
        expected_jacobian_determinant(model, cfg) if det_j is not None else None,
    )
    logger.info('sde_engine.ensemble_done', model=model.name, paths=path_count)
    return EnsembleResult(summary, terminal, det_j)


def simulate_ensemble(
    model: ModelSpec,
    x0: State,
    cfg: IntegratorConfig,
    path_count: int,
    workers: int = 1,
    batch_size: int = 2048,
) -> EnsembleSummary:
    """
    Runs `path_count` independent paths and summarizes the terminal states.

    The result depends only on (model, x0, cfg, path_count), not on `workers` or
    `batch_size`.

    Raises:
        NonFiniteValueError: A path blew up; carries its path index.
    """
    return run_ensemble(model, x0, cfg, path_count, workers, batch_size).summary


def exact_linear_transition(
    A: np.ndarray, g: np.ndarray, h: float
) -> tuple[np.ndarray, np.ndarray]:
    """
    Transition matrix e^{Ah} and noise covariance int_0^h e^{As} g e^{A^T s} ds of a
    linear diffusion, both from one exponential of the augmented matrix
    [[A, g], [0, -A^T]].
    """
    A = np.asarray(A, dtype=float)
    g = np.asarray(g, dtype=float)
    dim = A.shape[0]
    augmented = np.zeros((2 * dim, 2 * dim))
    augmented[:dim, :dim] = A
    augmented[:dim, dim:] = g
    augmented[dim:, dim:] = -A.T
    upper = expm(augmented * h)[:dim, :]
    phi = upper[:, :dim]
    covariance = upper[:, dim:] @ phi.T
    return phi, 0.5 * (covariance + covariance.T)


def exact_linear_moments(
    A: np.ndarray,
    g: np.ndarray,
    mean0: np.ndarray,
    cov0: np.ndarray,
    t: float,
    max_step: float = 1.0,
) -> tuple[np.ndarray, np.ndarray]:
    """
    Mean e^{At} m_0 and covariance e^{At} C_0 e^{A^T t} + int_0^t e^{As} g e^{A^T s} ds
    of a linear diffusion at time t, composed from transitions of length at most
    `max_step`.
    """
    if t < 0:
        raise ParameterDomainError(f't must be non-negative, got {t}')
    mean = np.array(mean0, dtype=float)
    cov = np.array(cov0, dtype=float)
    if t == 0:
        return mean, cov
    count = max(1, math.ceil(t / max_step))
    phi, noise = exact_linear_transition(A, g, t / count)
    for _ in range(count):
        mean = phi @ mean
        cov = phi @ cov @ phi.T + noise
    return mean, 0.5 * (cov + cov.T)


@dataclass(frozen=True)
class ConvergenceResult:
    step_sizes: np.ndarray
    errors: np.ndarray
    order: float


def _fit_order(step_sizes, errors) -> float:
    return float(np.polyfit(np.log(step_sizes), np.log(errors), 1)[0])


def strong_convergence_study(
    model: ModelSpec,
    x0: State,
    t_final: float = 1.0,
    step_sizes: Sequence[float] = (1e-2, 5e-3, 2.5e-3, 1.25e-3),
    path_count: int = 2000,
    seed: int = 0,
    refinement: int = 32,
    block_size: int = 256,
) -> ConvergenceResult:
    """
    Empirical strong order of Euler-Maruyama on a linear additive-noise model.

    The reference runs on the grid min(step_sizes) / refinement with the
    exponential integrator x <- e^{Ah} (x + B dW); every coarse scheme is driven
    by sums of the same fine increments. The error of step size dt is
    E|x_EM(T) - x_ref(T)|.

    Raises:
        UnsupportedModelError: The model is not linear with additive noise.
    """
    matrices = linear_drift_diffusion(model)
    A = matrices.A
    B = np.stack(matrices.noise_coefficients, axis=1)
    fine = min(step_sizes) / refinement
    ratios = [round(dt / fine) for dt in step_sizes]
    fine_steps = round(t_final / fine)
    for dt, ratio in zip(step_sizes, ratios):
        if not math.isclose(ratio * fine, dt, rel_tol=1e-9) or fine_steps % ratio:
            raise ParameterDomainError(
                f'step size {dt} is not commensurate with the reference grid'
            )
    phi = expm(A * fine)
    dimension = B.shape[1]
    generators = [path_generator(seed, i) for i in range(path_count)]
    start = np.broadcast_to(np.asarray(x0, dtype=float), (path_count, 2))
    reference = start.copy()
    coarse = [start.copy() for _ in step_sizes]
    accumulated = [np.zeros((path_count, dimension)) for _ in step_sizes]
    root = math.sqrt(fine)
    for block_start in range(0, fine_steps, block_size):
        count = min(block_size, fine_steps - block_start)
        block = np.stack(
            [g.standard_normal((count, dimension)) for g in generators], axis=1
        )
        for offset in range(count):
            step = block_start + offset
            dW = block[offset] * root
            reference = (reference + dW @ B.T) @ phi.T
            for i, (dt, ratio) in enumerate(zip(step_sizes, ratios)):
                accumulated[i] += dW
                if (step + 1) % ratio == 0:
                    drift = (coarse[i] @ A.T) * dt
                    coarse[i] = coarse[i] + drift + accumulated[i] @ B.T
                    accumulated[i][:] = 0.0
    errors = np.array(
        [np.mean(np.linalg.norm(c - reference, axis=1)) for c in coarse]
    )
    sizes = np.asarray(step_sizes, dtype=float)
    result = ConvergenceResult(sizes, errors, _fit_order(sizes, errors))
    logger.info('sde_engine.strong_order', order=result.order)
    return result


def jacobian_canonicality_study(
    model: ModelSpec,
    x0: State,
    t_final: float = 1.0,
    step_sizes: Sequence[float] = (1 / 20, 1 / 80, 1 / 320, 1 / 1280),
    path_count: int = 400,
    seed: int = 0,
) -> ConvergenceResult:
    """
    Median over paths of |det J_T - expected| for each step size, and the fitted
    order of its decrease.

    Raises:
        ParameterDomainError: The model does not fix det J_T.
    """
    medians = []
    for dt in step_sizes:
        cfg = IntegratorConfig(
            dt=dt, t_final=t_final, seed=seed, with_jacobian=True
        )
        summary = simulate_ensemble(model, x0, cfg, path_count)
        if summary.det_j_stats is None:
            raise ParameterDomainError(
                'the model does not determine the Jacobian determinant'
            )
        medians.append(summary.det_j_stats.median)
    sizes = np.asarray(step_sizes, dtype=float)
    errors = np.asarray(medians)
    return ConvergenceResult(sizes, errors, _fit_order(sizes, errors))


def write_trajectory_csv(
    path: str | Path, trajectories: Iterable[Trajectory]
) -> tuple[np.ndarray, np.ndarray | None]:
    """
    Writes `path,t,q,p` rows (plus `J11,J12,J21,J22,detJ` when Jacobians were
    recorded) with 17 significant digits. Trajectories are consumed one at a time,
    so a lazy iterable is written without holding all paths in memory.

    Returns:
        tuple[np.ndarray, np.ndarray | None]: Terminal states (paths x 2) and
            terminal Jacobians (paths x 2 x 2, None without Jacobians), in the
            order written.
    """
    trajectories = iter(trajectories)
    first = next(trajectories, None)
    with_jacobian = first is not None and first.jacobians is not None
    header = ['path', 't', 'q', 'p']
    if with_jacobian:
        header += ['J11', 'J12', 'J21', 'J22', 'detJ']
    terminal, final_jacobians = [], []
    with open(path, 'w', newline='', encoding='utf-8') as file:
        writer = csv.writer(file, lineterminator='\n')
        writer.writerow(header)
        if first is None:
            return np.empty((0, 2)), None
        for trajectory in itertools.chain([first], trajectories):
            for k, t in enumerate(trajectory.times):
                row = [str(trajectory.path_index)]
                row += [f'{x:.17g}' for x in (t, *trajectory.states[k])]
                if with_jacobian:
                    j = trajectory.jacobians[k]
                    det = j[0, 0] * j[1, 1] - j[0, 1] * j[1, 0]
                    row += [f'{x:.17g}' for x in (*j.reshape(-1), det)]
                writer.writerow(row)
            terminal.append(np.array(trajectory.states[-1]))
            if with_jacobian:
                final_jacobians.append(np.array(trajectory.jacobians[-1]))
    return np.stack(terminal), np.stack(final_jacobians) if with_jacobian else None
