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
Reader and printer for model config files.

A config is a JSON object with the keys `type` (`linear`, `dho`, `example1` or
`custom`), `params`, and for `custom`/`example1` models `hamiltonian`, `channels`
and `s`. Unknown keys are rejected.
"""

import json
from fractions import Fraction
from pathlib import Path
from typing import Annotated, Any, Literal

from pydantic import (
    BaseModel,
    BeforeValidator,
    ConfigDict,
    Field,
    PlainSerializer,
    ValidationError,
)

from nomad_canonical_flows.errors import (
    CanonicalFlowError,
    ModelConfigError,
    ParameterDomainError,
)
from nomad_canonical_flows.model_catalog import (
    LinearModelParams,
    build_dho_model,
    build_example1_model,
    build_linear_model,
)
from nomad_canonical_flows.poisson_algebra import ModelSpec, NoiseChannel
from nomad_canonical_flows.polynomial import PolynomialObservable, to_fraction


def _read_number(value: Any) -> Fraction:
    if isinstance(value, float):
        # JSON decimals are read through their shortest repr, not the binary value
        value = repr(value)
    try:
        return to_fraction(value)
    except (TypeError, ValueError, ZeroDivisionError) as e:
        raise ValueError(f'not a decimal or rational number: {value!r}') from e


def _write_number(value: Fraction) -> str | int:
    if value.denominator == 1:
        return value.numerator
    return f'{value.numerator}/{value.denominator}'


Number = Annotated[
    Fraction,
    BeforeValidator(_read_number),
    PlainSerializer(_write_number, when_used='json'),
]


class _Strict(BaseModel):
    model_config = ConfigDict(
        extra='forbid', frozen=True, arbitrary_types_allowed=True
    )


class LinearParamsConfig(_Strict):
    m: Number = Fraction(1)
    omega: Number = Fraction(1)
    gamma: Number = Fraction(1, 2)
    epsilon: Number = Fraction(1)
    s: Number = Fraction(1)
    z: Number = Fraction(0)


class DHOParamsConfig(_Strict):
    m: Number = Fraction(1)
    omega: Number = Fraction(1)
    gamma: Number
    zScale: Number = Fraction(1)


class Example1ParamsConfig(_Strict):
    alphas: list[Number] = Field(default_factory=list)
    betas: list[Number] = Field(default_factory=list)


class ChannelConfig(_Strict):
    F: str
    G: str | None = None


class ModelConfig(_Strict):
    """Validated content of a model config file."""

    type: Literal['linear', 'dho', 'example1', 'custom']
    params: dict[str, Any] = Field(default_factory=dict)
    hamiltonian: str | None = None
    channels: list[ChannelConfig] | None = None
    s: Number | None = None
    exact: bool = False

    def linear_params(self) -> LinearModelParams:
        """
        Raises:
            ModelConfigError: The config is not of type `linear`.
        """
        if self.type != 'linear':
            raise ModelConfigError(
                f'linear parameters requested from a {self.type!r} model'
            )
        params = _validate(LinearParamsConfig, self.params)
        return LinearModelParams(**params.model_dump(mode='python'))

    def build(self) -> ModelSpec:
        """
        Builds the model.

        Raises:
            ModelConfigError: Missing or superfluous keys, invalid polynomials or
                parameters outside their domain.
        """
        try:
            return self._build()
        except ParameterDomainError as e:
            raise ModelConfigError(str(e)) from e

    def _build(self) -> ModelSpec:
        if self.type != 'custom' and (self.channels is not None or self.s is not None):
            raise ModelConfigError(
                '`channels` and `s` are only allowed for custom models, '
                f'not {self.type!r}'
            )
        if self.type in ('linear', 'dho') and self.hamiltonian is not None:
            raise ModelConfigError(f'`hamiltonian` is not allowed for {self.type!r}')
        if self.type == 'linear':
            return build_linear_model(self.linear_params(), exact=self.exact)
        if self.type == 'dho':
            params = _validate(DHOParamsConfig, self.params)
            return build_dho_model(
                params.m, params.omega, params.gamma, params.zScale, exact=self.exact
            )
        if self.hamiltonian is None:
            raise ModelConfigError(f'{self.type!r} models need a `hamiltonian`')
        hamiltonian = PolynomialObservable.parse(self.hamiltonian)
        if self.type == 'example1':
            params = _validate(Example1ParamsConfig, self.params)
            return build_example1_model(hamiltonian, params.alphas, params.betas)
        if self.params:
            raise ModelConfigError('custom models take no `params`')
        channels = tuple(
            NoiseChannel.plain(PolynomialObservable.parse(c.F))
            if c.G is None
            else NoiseChannel.pair(
                PolynomialObservable.parse(c.F), PolynomialObservable.parse(c.G)
            )
            for c in self.channels or ()
        )
        return ModelSpec(
            hamiltonian, channels, self.s if self.s is not None else Fraction(1)
        )


def _validate(model: type[BaseModel], data: dict[str, Any]):
    try:
        return model.model_validate(data)
    except ValidationError as e:
        raise ModelConfigError(f'invalid params: {e}') from e


def parse_model_config(text: str) -> ModelConfig:
    """
    Raises:
        ModelConfigError: The text is not a valid model config.
    """
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ModelConfigError(f'model config is not valid JSON: {e}') from e
    if not isinstance(data, dict):
        raise ModelConfigError('model config must be a JSON object')
    try:
        return ModelConfig.model_validate(data)
    except ValidationError as e:
        raise ModelConfigError(f'invalid model config: {e}') from e


def load_model_config(path: str | Path) -> ModelConfig:
    """
    Raises:
        ModelConfigError: The file is missing, unreadable or invalid.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding='utf-8')
    except OSError as e:
        raise ModelConfigError(f'cannot read model config {str(path)!r}: {e}') from e
    try:
        return parse_model_config(text)
    except CanonicalFlowError as e:
        raise ModelConfigError(f'{path}: {e}') from e


def model_to_config(model: ModelSpec) -> ModelConfig:
    """The `custom` config that rebuilds exactly this model."""
    return ModelConfig(
        type='custom',
        hamiltonian=str(model.hamiltonian),
        channels=[
            ChannelConfig(F=str(c.F), G=None if c.G is None else str(c.G))
            for c in model.channels
        ],
        s=model.action_scale,
    )


def dump_model_config(config: ModelConfig) -> str:
    return (
        json.dumps(
            config.model_dump(mode='json', exclude_defaults=True),
            indent=2,
            sort_keys=True,
        )
        + '\n'
    )
