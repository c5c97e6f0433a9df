from fractions import Fraction

import pytest
from hypothesis import HealthCheck, settings

from nomad_canonical_flows.model_catalog import (
    LinearModelParams,
    build_dho_model,
    build_linear_model,
)
from nomad_canonical_flows.poisson_algebra import ModelSpec

settings.register_profile(
    'algebra',
    max_examples=40,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile('algebra')


@pytest.fixture
def linear_params() -> LinearModelParams:
    return LinearModelParams()


@pytest.fixture
def linear_model(linear_params) -> ModelSpec:
    return build_linear_model(linear_params)


@pytest.fixture
def quarter_linear_model() -> ModelSpec:
    """Linear model at m = omega = epsilon = s = 1, gamma = 1/4, z = 0."""
    return build_linear_model(LinearModelParams(gamma=Fraction(1, 4)), exact=True)


@pytest.fixture
def dho_model() -> ModelSpec:
    """The damped oscillator dilation at m = omega = 1, gamma = 9/16, zScale = 2."""
    return build_dho_model(1, 1, Fraction(9, 16), 2, exact=True)
