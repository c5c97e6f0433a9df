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
"""Exception hierarchy shared by the library, the CLI and the NOMAD sections."""


class CanonicalFlowError(Exception):
    """Base class of every error raised by `nomad_canonical_flows`."""


class ParameterDomainError(CanonicalFlowError, ValueError):
    """A model or integrator parameter lies outside its domain."""


class ModelConfigError(CanonicalFlowError):
    """A model config file or a polynomial text could not be read."""


class UnsupportedModelError(CanonicalFlowError):
    """The operation is not defined for this kind of model."""


class NumericalError(CanonicalFlowError):
    """Base class of numeric failures."""


class NonFiniteValueError(NumericalError):
    """
    A state or increment became non-finite during integration.

    Attributes:
        step (int | None): Index of the offending step.
        path_index (int | None): Index of the offending path in its ensemble.
    """

    def __init__(
        self, message: str, step: int | None = None, path_index: int | None = None
    ):
        super().__init__(message)
        self.step = step
        self.path_index = path_index


class NonHurwitzError(NumericalError):
    """The drift matrix is not Hurwitz, so no unique stationary covariance exists."""


class SingularFormulaError(NumericalError):
    """A closed-form expression has a vanishing denominator."""


class SearchFailureError(NumericalError):
    """
    A root search found no sign change.

    Attributes:
        interval (tuple[float, float]): The scanned interval.
    """

    def __init__(self, message: str, interval: tuple[float, float]):
        super().__init__(message)
        self.interval = interval
