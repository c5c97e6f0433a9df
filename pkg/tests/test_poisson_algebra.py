from fractions import Fraction

import pytest
from hypothesis import given, settings
from strategies import models, polynomials, positive_rationals, rationals, vector_fields

from nomad_canonical_flows.errors import ParameterDomainError, UnsupportedModelError
from nomad_canonical_flows.model_catalog import build_example1_model
from nomad_canonical_flows.poisson_algebra import (
    ChannelKind,
    ModelSpec,
    NoiseChannel,
    VectorField,
    apply_first_order,
    apply_generator,
    diffusion_tensor,
    dissipation,
    divergence,
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
)

q, p = POSITION, MOMENTUM
P = PolynomialObservable.parse


def dho_field(gamma):
    return VectorField(p, -q - p * gamma)


@pytest.mark.parametrize(
    'f, g, expected',
    [
        (q, p, ONE),
        (p * p, q, -2 * p),
        (P('p^2/2 + q^2/2'), q * p, q * q - p * p),
    ],
)
def test_poisson_bracket(f, g, expected):
    assert poisson_bracket(f, g) == expected


@pytest.mark.parametrize(
    'F, expected',
    [
        (P('2*p + 3*q'), VectorField(P('2'), P('-3'))),
        (ZERO, VectorField()),
        (P('3/16*p^2 + 3/4*q^2'), VectorField(P('3/8*p'), P('-3/2*q'))),
    ],
)
def test_hamiltonian_vector_field(F, expected):
    assert hamiltonian_vector_field(F) == expected


@pytest.mark.parametrize(
    'v, expected',
    [
        (dho_field(Fraction(1, 2)), P('-1/2')),
        (hamiltonian_vector_field(P('q^3*p - p^4 + q')), ZERO),
        (VectorField(q, p), P('2')),
    ],
)
def test_divergence(v, expected):
    assert divergence(v) == expected


@pytest.mark.parametrize(
    'v, expected',
    [
        (VectorField(p, -q), P('p^2/2 + q^2/2')),
        (dho_field(Fraction(1, 2)), None),
        (VectorField(P('2'), P('-3')), P('2*p + 3*q')),
    ],
)
def test_is_hamiltonian(v, expected):
    assert is_hamiltonian(v) == expected


@pytest.mark.parametrize(
    'v, f, expected',
    [
        (VectorField(ONE, ZERO), q * q, 2 * q),
        (dho_field(Fraction(1, 2)), q, p),
        (VectorField(p, -q), q * p, p * p - q * q),
    ],
)
def test_apply_first_order(v, f, expected):
    assert apply_first_order(v, f) == expected


def test_drift_field_dho(dho_model):
    assert drift_field(dho_model) == dho_field(Fraction(9, 16))


def test_drift_field_linear(quarter_linear_model):
    assert drift_field(quarter_linear_model) == VectorField(p, -q - p / 4)


def test_drift_field_linear_couplings():
    H = P('q^4 - q*p^3 + 2*p')
    model = build_example1_model(H, [1, Fraction(-2, 3)], [3, Fraction(1, 2)])
    assert drift_field(model) == hamiltonian_vector_field(H)


def test_gauge_field(quarter_linear_model, dho_model):
    assert gauge_field(quarter_linear_model) == VectorField(ZERO, -p / 4)
    assert gauge_field(dho_model) == VectorField()
    model = ModelSpec(ZERO, (NoiseChannel.pair(q * q, p * p),))
    u = gauge_field(model)
    assert u == VectorField(ZERO, P('-2*q*p^2'))
    assert divergence(u) == P('-4*q*p')


def test_apply_generator(dho_model, quarter_linear_model):
    assert apply_generator(dho_model, q) == p
    assert apply_generator(dho_model, P('7/2')) == ZERO
    assert apply_generator(quarter_linear_model, q * q) == 2 * q * p + Fraction(1, 4)


def test_dissipation(quarter_linear_model):
    assert dissipation(dho_field(Fraction(1, 2)), q, p) == P('1/2')
    H = P('q^3 + q*p - p^2')
    f, g = P('q^2*p'), P('p^3 - q')
    assert dissipation(hamiltonian_vector_field(H), f, g) == ZERO
    assert dissipation(ModelSpec(H), f, g) == ZERO
    assert dissipation(quarter_linear_model, q, p) == P('1/4')


def test_dissipation_rejects_other_generators():
    with pytest.raises(TypeError):
        dissipation(q, q, p)


def test_squared_field(quarter_linear_model):
    H = P('p^2/2 + q^2/2')
    assert squared_field(ModelSpec(H), q * p, p) == ZERO
    assert squared_field(quarter_linear_model, q, q) == P('1/4')
    assert squared_field(quarter_linear_model, ONE, P('q^3*p')) == ZERO


def test_theorem2_dissipation_rhs(quarter_linear_model, dho_model):
    assert theorem2_dissipation_rhs(quarter_linear_model, q, p) == P('1/4')
    f = P('q*p^2 + q')
    assert theorem2_dissipation_rhs(quarter_linear_model, f, f) == dissipation(
        quarter_linear_model, f, f
    )
    assert theorem2_dissipation_rhs(dho_model, q, p) == P('9/16')


@pytest.mark.parametrize(
    'F, expected',
    [
        (P('3*p^2/16 + 3*q^2/4'), P('-9/16')),
        (P('2*p - 5*q'), ZERO),
        (P('q^2*p^2'), P('12*q^2*p^2')),
    ],
)
def test_theorem1_divergence(F, expected):
    model = ModelSpec(P('p^2/2 + q^2/2'), (NoiseChannel.plain(F),))
    assert theorem1_divergence(model) == expected


def test_theorem1_divergence_rejects_pairs(quarter_linear_model):
    with pytest.raises(UnsupportedModelError):
        theorem1_divergence(quarter_linear_model)


def test_noise_fields_and_diffusion(quarter_linear_model):
    assert noise_fields(quarter_linear_model) == (
        VectorField(P('-1/2'), ZERO),
        VectorField(ZERO, P('-1/2')),
    )
    assert diffusion_tensor(quarter_linear_model) == (
        (P('1/4'), ZERO),
        (ZERO, P('1/4')),
    )


def test_channel_validation():
    with pytest.raises(ParameterDomainError):
        NoiseChannel(ChannelKind.PLAIN, q, p)
    with pytest.raises(ParameterDomainError):
        NoiseChannel(ChannelKind.CONJUGATE_PAIR, q)
    with pytest.raises(ParameterDomainError):
        ModelSpec(q, (), Fraction(0))


def test_model_properties(quarter_linear_model, dho_model):
    assert quarter_linear_model.has_pairs
    assert quarter_linear_model.noise_dimension == 2
    assert not dho_model.has_pairs
    assert dho_model.noise_dimension == 1
    assert not quarter_linear_model.without_channels().channels


@given(polynomials(4), polynomials(4))
def test_antisymmetry(f, g):
    assert poisson_bracket(f, g) == -poisson_bracket(g, f)


@given(polynomials(), polynomials(), polynomials())
def test_leibniz(f, g, h):
    assert poisson_bracket(f, g * h) == (
        poisson_bracket(f, g) * h + g * poisson_bracket(f, h)
    )


@given(polynomials(), polynomials(), polynomials())
def test_jacobi(f, g, h):
    total = (
        poisson_bracket(poisson_bracket(f, g), h)
        + poisson_bracket(poisson_bracket(g, h), f)
        + poisson_bracket(poisson_bracket(h, f), g)
    )
    assert total.is_zero()


@given(vector_fields(), polynomials(), polynomials())
def test_first_order_dissipation(v, f, g):
    assert dissipation(v, f, g) == -divergence(v) * poisson_bracket(f, g)


@given(polynomials(4))
def test_hamiltonian_round_trip(H):
    v = hamiltonian_vector_field(H)
    recovered = is_hamiltonian(v)
    assert recovered == H - H.constant_term
    assert hamiltonian_vector_field(recovered) == v


@pytest.mark.slow
@settings(max_examples=100)
@given(polynomials(6), polynomials(6), polynomials(6))
def test_jacobi_high_degree(f, g, h):
    total = (
        poisson_bracket(poisson_bracket(f, g), h)
        + poisson_bracket(poisson_bracket(g, h), f)
        + poisson_bracket(poisson_bracket(h, f), g)
    )
    assert total.is_zero()


@pytest.mark.slow
@settings(max_examples=100)
@given(models(4), polynomials(3), polynomials(3))
def test_dissipation_law_high_degree(model, f, g):
    assert dissipation(model, f, g) == theorem2_dissipation_rhs(model, f, g)


@given(models(), polynomials(2), polynomials(2))
def test_dissipation_law(model, f, g):
    assert dissipation(model, f, g) == theorem2_dissipation_rhs(model, f, g)


@given(models(), polynomials(2), polynomials(2))
def test_increment_bracket(model, f, g):
    assert dissipation(model, f, g) == increment_bracket(model, f, g)


@given(models(), polynomials(2), polynomials(2))
def test_squared_field_identity(model, f, g):
    expected = ZERO
    for sigma in noise_fields(model):
        expected = expected + apply_first_order(sigma, f) * apply_first_order(sigma, g)
    assert squared_field(model, f, g) == expected


@given(models())
def test_drift_consistency(model):
    drift = drift_field(model)
    assert drift.vq == apply_generator(model, q)
    assert drift.vp == apply_generator(model, p)


@given(models())
def test_gauge_law(model):
    coupling = ZERO
    for channel in model.pairs:
        coupling = coupling + poisson_bracket(channel.F, channel.G)
    assert divergence(gauge_field(model)) == -coupling / model.action_scale


@given(models(pairs=False))
def test_theorem1_divergence_law(model):
    assert theorem1_divergence(model) == divergence(drift_field(model))


@given(polynomials(4), rationals, rationals, rationals, rationals)
def test_linear_couplings_give_hamiltonian_drift(H, a1, b1, a2, b2):
    model = build_example1_model(H, [a1, a2], [b1, b2])
    assert is_hamiltonian(drift_field(model)) is not None
    assert theorem1_divergence(model) == ZERO


@given(polynomials(2), positive_rationals)
def test_action_scale_ignored_without_pairs(F, s):
    H = P('p^2/2 + q^2/2')
    channels = (NoiseChannel.plain(F),)
    assert drift_field(ModelSpec(H, channels, s)) == drift_field(ModelSpec(H, channels))
