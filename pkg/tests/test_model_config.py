import json
from fractions import Fraction

import pytest

from nomad_canonical_flows.errors import ModelConfigError
from nomad_canonical_flows.model_catalog import LinearModelParams, build_linear_model
from nomad_canonical_flows.model_config import (
    ModelConfig,
    dump_model_config,
    load_model_config,
    model_to_config,
    parse_model_config,
)
from nomad_canonical_flows.poisson_algebra import ChannelKind, ModelSpec, NoiseChannel
from nomad_canonical_flows.polynomial import PolynomialObservable

P = PolynomialObservable.parse


def test_linear_config():
    config = parse_model_config(
        '{"type": "linear", "params": {"gamma": "1/4", "z": -0.125}}'
    )
    params = config.linear_params()
    assert params.gamma == Fraction(1, 4)
    assert params.z == Fraction(-1, 8)
    assert params.m == 1
    assert config.build() == build_linear_model(params)


def test_decimal_numbers_are_read_as_written():
    config = parse_model_config('{"type": "linear", "params": {"gamma": 0.1}}')
    assert config.linear_params().gamma == Fraction(1, 10)


def test_dho_config():
    config = parse_model_config(
        '{"type": "dho", "params": {"gamma": "9/16", "zScale": 2}, "exact": true}'
    )
    model = config.build()
    assert model.name == 'dho'
    assert model.channels[0].F == P('3/16*p^2 + 3/4*q^2')


def test_example1_config():
    config = parse_model_config(
        json.dumps(
            {
                'type': 'example1',
                'hamiltonian': 'p^2/2 + q^4/4',
                'params': {'alphas': [1, '1/2'], 'betas': [0, 2]},
            }
        )
    )
    model = config.build()
    assert [c.F for c in model.channels] == [P('p'), P('p/2 + 2*q')]


def test_custom_config():
    config = parse_model_config(
        json.dumps(
            {
                'type': 'custom',
                'hamiltonian': 'p^2/2 + q^2/2',
                'channels': [{'F': 'q'}, {'F': '-p', 'G': 'q'}],
                's': '1/2',
            }
        )
    )
    model = config.build()
    assert [c.kind for c in model.channels] == [
        ChannelKind.PLAIN,
        ChannelKind.CONJUGATE_PAIR,
    ]
    assert model.action_scale == Fraction(1, 2)


@pytest.mark.parametrize(
    'text',
    [
        'not json',
        '[1, 2]',
        '{"type": "quadratic"}',
        '{"type": "linear", "unknown": 1}',
        '{"type": "linear", "params": {"gamma": 0}}',
        '{"type": "linear", "params": {"mass": 1}}',
        '{"type": "linear", "hamiltonian": "p^2"}',
        '{"type": "linear", "channels": []}',
        '{"type": "dho", "params": {}}',
        '{"type": "example1", "params": {"alphas": [1], "betas": []}}',
        '{"type": "custom"}',
        '{"type": "custom", "hamiltonian": "p^2 + sin(q)"}',
        '{"type": "custom", "hamiltonian": "p^2", "params": {"m": 1}}',
        '{"type": "custom", "hamiltonian": "p^2", "s": 0}',
        '{"type": "custom", "hamiltonian": "p^2", "channels": [{"G": "q"}]}',
    ],
)
def test_invalid_configs(text):
    with pytest.raises(ModelConfigError):
        parse_model_config(text).build()


def test_linear_params_of_other_type():
    config = ModelConfig(type='custom', hamiltonian='p^2')
    with pytest.raises(ModelConfigError):
        config.linear_params()


def test_round_trip_through_custom_config():
    model = ModelSpec(
        P('p^2/2 + q^2/2 + 1/3*q*p'),
        (NoiseChannel.plain(P('q^2')), NoiseChannel.pair(P('-p/2'), P('q/2'))),
        Fraction(3, 2),
    )
    text = dump_model_config(model_to_config(model))
    assert parse_model_config(text).build() == model


def test_linear_model_survives_custom_export():
    model = build_linear_model(LinearModelParams(gamma=Fraction(1, 4)), exact=True)
    rebuilt = parse_model_config(dump_model_config(model_to_config(model))).build()
    assert rebuilt == model


def test_load_model_config(tmp_path):
    path = tmp_path / 'model.json'
    path.write_text('{"type": "linear"}', encoding='utf-8')
    assert load_model_config(path).type == 'linear'

    with pytest.raises(ModelConfigError, match='cannot read'):
        load_model_config(tmp_path / 'missing.json')

    broken = tmp_path / 'broken.json'
    broken.write_text('{"type": ', encoding='utf-8')
    with pytest.raises(ModelConfigError, match='broken.json'):
        load_model_config(broken)
