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
Poisson-bracket algebra of canonical stochastic flows on the phase space R^2.

Every function here is exact: inputs and outputs are `PolynomialObservable` values
with rational coefficients, and identities are checked by comparing with the zero
polynomial.
"""

import enum
from dataclasses import dataclass, field
from fractions import Fraction
from functools import singledispatch

from nomad_canonical_flows.errors import ParameterDomainError, UnsupportedModelError
from nomad_canonical_flows.polynomial import (
    MOMENTUM,
    POSITION,
    ZERO,
    PolynomialObservable,
    Scalar,
    to_fraction,
)

HALF = Fraction(1, 2)


@dataclass(frozen=True)
class VectorField:
    """A polynomial vector field v = (v^q, v^p) on phase space."""

    vq: PolynomialObservable = ZERO
    vp: PolynomialObservable = ZERO

    def __add__(self, other: 'VectorField') -> 'VectorField':
        return VectorField(self.vq + other.vq, self.vp + other.vp)

    def __sub__(self, other: 'VectorField') -> 'VectorField':
        return VectorField(self.vq - other.vq, self.vp - other.vp)

    def scale(self, factor: Scalar) -> 'VectorField':
        return VectorField(self.vq * factor, self.vp * factor)

    def is_zero(self) -> bool:
        return self.vq.is_zero() and self.vp.is_zero()

    def jacobian(self) -> tuple[tuple[PolynomialObservable, ...], ...]:
        """The matrix [[dv^q/dq, dv^q/dp], [dv^p/dq, dv^p/dp]]."""
        return (
            (self.vq.diff_q(), self.vq.diff_p()),
            (self.vp.diff_q(), self.vp.diff_p()),
        )


class ChannelKind(enum.Enum):
    PLAIN = 'plain'
    CONJUGATE_PAIR = 'conjugate_pair'


class Gauge(enum.Enum):
    """Particular solution of div u = -s^-1 sum {F_k, G_k}."""

    P_ANTIDERIVATIVE = 'p_antiderivative'


@dataclass(frozen=True)
class NoiseChannel:
    """
    A noise channel: one Wiener process coupled through F (plain), or a canonically
    conjugate pair (Q_k, P_k) coupled through (F, G).
    """

    kind: ChannelKind
    F: PolynomialObservable
    G: PolynomialObservable | None = None

    def __post_init__(self):
        if self.kind is ChannelKind.PLAIN and self.G is not None:
            raise ParameterDomainError('plain noise channels carry no G')
        if self.kind is ChannelKind.CONJUGATE_PAIR and self.G is None:
            raise ParameterDomainError('conjugate-pair noise channels need G')

    @classmethod
    def plain(cls, F: PolynomialObservable) -> 'NoiseChannel':
        return cls(ChannelKind.PLAIN, F)

    @classmethod
    def pair(cls, F: PolynomialObservable, G: PolynomialObservable) -> 'NoiseChannel':
        return cls(ChannelKind.CONJUGATE_PAIR, F, G)

    @property
    def generators(self) -> tuple[PolynomialObservable, ...]:
        """Generating functions in increment order: F (dQ) then G (dP)."""
        if self.G is None:
            return (self.F,)
        return (self.F, self.G)


@dataclass(frozen=True)
class ModelSpec:
    """
    A stochastic phase-space model.

    Args:
        hamiltonian (PolynomialObservable): H.
        channels (tuple[NoiseChannel, ...]): Ordered noise channels.
        action_scale (Fraction): s > 0; only conjugate pairs depend on it.
        gauge (Gauge): Choice of the gauge field u.
    """

    hamiltonian: PolynomialObservable
    channels: tuple[NoiseChannel, ...] = ()
    action_scale: Fraction = Fraction(1)
    gauge: Gauge = Gauge.P_ANTIDERIVATIVE
    name: str = field(default='custom', compare=False)

    def __post_init__(self):
        object.__setattr__(self, 'channels', tuple(self.channels))
        object.__setattr__(self, 'action_scale', to_fraction(self.action_scale))
        if self.action_scale <= 0:
            raise ParameterDomainError(
                f'action scale s must be positive, got {self.action_scale}'
            )

    @property
    def pairs(self) -> tuple[NoiseChannel, ...]:
        return tuple(
            c for c in self.channels if c.kind is ChannelKind.CONJUGATE_PAIR
        )

    @property
    def has_pairs(self) -> bool:
        return bool(self.pairs)

    @property
    def noise_dimension(self) -> int:
        """Number of scalar Wiener increments per step."""
        return sum(len(c.generators) for c in self.channels)

    def without_channels(self) -> 'ModelSpec':
        return ModelSpec(
            self.hamiltonian, (), self.action_scale, self.gauge, name=self.name
        )


def poisson_bracket(
    f: PolynomialObservable, g: PolynomialObservable
) -> PolynomialObservable:
    """{f, g} = f_q g_p - g_q f_p."""
    return f.diff_q() * g.diff_p() - g.diff_q() * f.diff_p()


def hamiltonian_vector_field(F: PolynomialObservable) -> VectorField:
    """The field (dF/dp, -dF/dq), whose action on f is {f, F}."""
    return VectorField(F.diff_p(), -F.diff_q())


def divergence(v: VectorField) -> PolynomialObservable:
    return v.vq.diff_q() + v.vp.diff_p()


def is_hamiltonian(v: VectorField) -> PolynomialObservable | None:
    """
    Returns the Hamiltonian of a divergence-free field, normalized by H(0, 0) = 0,
    or None if the field has non-zero divergence.
    """
    if not divergence(v).is_zero():
        return None
    partial = v.vq.integrate_p()
    # div v = 0 makes the remainder independent of p
    remainder = -v.vp - partial.diff_q()
    if remainder.diff_p() != ZERO:
        raise AssertionError('divergence-free field with p-dependent remainder')
    return partial + remainder.integrate_q()


def apply_first_order(v: VectorField, f: PolynomialObservable) -> PolynomialObservable:
    """v . grad f."""
    return v.vq * f.diff_q() + v.vp * f.diff_p()


def gauge_field(model: ModelSpec) -> VectorField:
    """
    The gauge field u = (0, Phi) with Phi the p-antiderivative of
    phi = -s^-1 sum_pairs {F_k, G_k}, vanishing on p = 0.
    """
    if not model.has_pairs:
        return VectorField()
    phi = ZERO
    for channel in model.pairs:
        phi = phi + poisson_bracket(channel.F, channel.G)
    phi = -phi / model.action_scale
    return VectorField(ZERO, phi.integrate_p())


def apply_generator(model: ModelSpec, f: PolynomialObservable) -> PolynomialObservable:
    """
    L f = {f, H} + 1/2 sum {{f, F_k}, F_k} (+ {{f, G_k}, G_k} for pairs) + u . grad f.
    """
    result = poisson_bracket(f, model.hamiltonian)
    for channel in model.channels:
        for generator in channel.generators:
            inner = poisson_bracket(f, generator)
            result = result + HALF * poisson_bracket(inner, generator)
    if model.has_pairs:
        result = result + apply_first_order(gauge_field(model), f)
    return result


def drift_field(model: ModelSpec) -> VectorField:
    """The Ito drift (L q, L p)."""
    return VectorField(
        apply_generator(model, POSITION), apply_generator(model, MOMENTUM)
    )


def noise_fields(model: ModelSpec) -> tuple[VectorField, ...]:
    """Noise vector fields sigma_k, varsigma_k in increment order."""
    return tuple(
        hamiltonian_vector_field(generator)
        for channel in model.channels
        for generator in channel.generators
    )


def diffusion_tensor(model: ModelSpec) -> tuple[tuple[PolynomialObservable, ...], ...]:
    """g^{ab} = sum over noise fields of sigma^a sigma^b."""
    gqq, gqp, gpp = ZERO, ZERO, ZERO
    for sigma in noise_fields(model):
        gqq = gqq + sigma.vq * sigma.vq
        gqp = gqp + sigma.vq * sigma.vp
        gpp = gpp + sigma.vp * sigma.vp
    return ((gqq, gqp), (gqp, gpp))


@singledispatch
def dissipation(
    generator, f: PolynomialObservable, g: PolynomialObservable
) -> PolynomialObservable:
    """
    D_L(f, g) = L{f, g} - {L f, g} - {f, L g}.

    The first argument is a `ModelSpec` (L is its generator) or a `VectorField`
    (L = v . grad).
    """
    raise TypeError(
        f'dissipation is defined for ModelSpec or VectorField, '
        f'not {type(generator).__name__}'
    )


@dissipation.register
def _(generator: ModelSpec, f, g):
    return (
        apply_generator(generator, poisson_bracket(f, g))
        - poisson_bracket(apply_generator(generator, f), g)
        - poisson_bracket(f, apply_generator(generator, g))
    )


@dissipation.register
def _(generator: VectorField, f, g):
    return (
        apply_first_order(generator, poisson_bracket(f, g))
        - poisson_bracket(apply_first_order(generator, f), g)
        - poisson_bracket(f, apply_first_order(generator, g))
    )


def squared_field(
    model: ModelSpec, f: PolynomialObservable, g: PolynomialObservable
) -> PolynomialObservable:
    """Gamma_L(f, g) = L(fg) - L(f) g - f L(g)."""
    return (
        apply_generator(model, f * g)
        - apply_generator(model, f) * g
        - f * apply_generator(model, g)
    )


def theorem2_dissipation_rhs(
    model: ModelSpec, f: PolynomialObservable, g: PolynomialObservable
) -> PolynomialObservable:
    """
    sum_k {{f, F_k}, {g, F_k}} + sum_pairs {{f, G_k}, {g, G_k}}
    + s^-1 sum_pairs {F_k, G_k} {f, g}.
    """
    result = ZERO
    for channel in model.channels:
        for generator in channel.generators:
            result = result + poisson_bracket(
                poisson_bracket(f, generator), poisson_bracket(g, generator)
            )
    if model.has_pairs:
        coupling = ZERO
        for channel in model.pairs:
            coupling = coupling + poisson_bracket(channel.F, channel.G)
        result = result + coupling * poisson_bracket(f, g) / model.action_scale
    return result


def increment_bracket(
    model: ModelSpec, f: PolynomialObservable, g: PolynomialObservable
) -> PolynomialObservable:
    """
    The rate {df, dg} / dt of the Ito bracket of two increments under the full
    bracket of system and noise, where {dQ_j, dP_k} = s^-1 delta_jk dt and
    same-type increments commute.
    """
    result = ZERO
    for channel in model.channels:
        for generator in channel.generators:
            result = result + poisson_bracket(
                poisson_bracket(f, generator), poisson_bracket(g, generator)
            )
    for channel in model.pairs:
        cross = poisson_bracket(f, channel.F) * poisson_bracket(
            g, channel.G
        ) - poisson_bracket(f, channel.G) * poisson_bracket(g, channel.F)
        result = result + cross / model.action_scale
    return result


def theorem1_divergence(model: ModelSpec) -> PolynomialObservable:
    """
    -sum_k (F_qq F_pp - F_qp^2), the divergence of the Ito drift of a model driven
    by plain channels only.

    Raises:
        UnsupportedModelError: The model has conjugate-pair channels.
    """
    if model.has_pairs:
        raise UnsupportedModelError(
            'theorem1_divergence applies to plain-channel models only'
        )
    result = ZERO
    for channel in model.channels:
        F = channel.F
        F_qp = F.diff_q().diff_p()
        result = result - (F.diff_q().diff_q() * F.diff_p().diff_p() - F_qp * F_qp)
    return result
