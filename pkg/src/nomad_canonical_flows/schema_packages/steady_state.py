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

from typing import (
    TYPE_CHECKING,
)

if TYPE_CHECKING:
    from nomad.datamodel.datamodel import (
        EntryArchive,
    )
    from structlog.stdlib import (
        BoundLogger,
    )

import numpy as np
from nomad.config import config
from nomad.datamodel.data import (
    ArchiveSection,
    EntryData,
)
from nomad.datamodel.metainfo.annotations import (
    ELNAnnotation,
    ELNComponentEnum,
)
from nomad.metainfo import (
    MEnum,
    Quantity,
    SchemaPackage,
    Section,
    SubSection,
)
from nomad_measurements.utils import merge_sections

from nomad_canonical_flows.errors import CanonicalFlowError
from nomad_canonical_flows.model_config import ModelConfig, parse_model_config
from nomad_canonical_flows.stationary_analysis import (
    analyze_steady_state,
    audit_paper_formulas,
    closed_form_zero_cross_z,
    find_zero_cross_z,
)

configuration = config.get_plugin_entry_point(
    'nomad_canonical_flows.schema_packages:steady_state_schema'
)

m_package = SchemaPackage()

_LINEAR_PARAMETERS = ('m', 'omega', 'gamma', 'epsilon', 's', 'z')


class SteadyStateResult(ArchiveSection):
    """
    Stationary covariance of a linear model dx = A x dt + noise with diffusion g.
    """

    drift_matrix = Quantity(type=np.float64, shape=[2, 2], description='A')
    diffusion_matrix = Quantity(type=np.float64, shape=[2, 2], description='g')
    covariance = Quantity(
        type=np.float64,
        shape=[2, 2],
        description='Solution sigma of A sigma + sigma A^T = -g',
    )
    lyapunov_residual = Quantity(
        type=np.float64, description='max-abs of A sigma + sigma A^T + g'
    )
    hurwitz = Quantity(type=bool)
    positive_definite = Quantity(type=bool)
    temperature = Quantity(
        type=np.float64,
        description='k_B T when the covariance has the Gibbs form of H_0',
    )
    stationarity_residuals = Quantity(
        type=np.float64,
        shape=[3],
        description='Gaussian expectations of L q^2, L qp and L p^2',
    )


class ZeroCrossSolution(ArchiveSection):
    """
    The Hamiltonian parameter z with vanishing stationary cross-covariance.
    """

    z_star = Quantity(type=np.float64, description='Root found by bisection')
    z_star_closed_form = Quantity(type=np.float64)
    covariance = Quantity(type=np.float64, shape=[2, 2])
    temperature = Quantity(type=np.float64, description='m omega^2 sigma_qq(z*)')


class FormulaAudit(ArchiveSection):
    """
    Comparison of one printed closed form with the Lyapunov oracle.
    """

    item = Quantity(type=str)
    paper_value = Quantity(type=np.float64, shape=['*'])
    oracle_value = Quantity(type=np.float64, shape=['*'])
    difference = Quantity(type=np.float64)
    status = Quantity(type=MEnum('Match', 'Discrepant', 'NotApplicable'))
    note = Quantity(type=str)


class SteadyStateAnalysis(EntryData):
    """
    Steady state of a linear phase-space model, given either inline by the
    parameters of the linear symplectic model or by a model config file.
    """

    m_def = Section(
        label='Steady State of a Linear Phase-Space Model',
        a_eln=ELNAnnotation(
            lane_width='600px',
        ),
    )

    data_file = Quantity(
        type=str,
        description='Model config file (*.canonicalflow.json)',
        a_eln=ELNAnnotation(
            component=ELNComponentEnum.FileEditQuantity,
        ),
    )
    m = Quantity(
        type=np.float64,
        description='Mass',
        a_eln=ELNAnnotation(component=ELNComponentEnum.NumberEditQuantity),
    )
    omega = Quantity(
        type=np.float64,
        description='Angular frequency',
        a_eln=ELNAnnotation(component=ELNComponentEnum.NumberEditQuantity),
    )
    gamma = Quantity(
        type=np.float64,
        description='Damping rate',
        a_eln=ELNAnnotation(component=ELNComponentEnum.NumberEditQuantity),
    )
    epsilon = Quantity(
        type=np.float64,
        description='Ratio of position to momentum noise strength',
        a_eln=ELNAnnotation(component=ELNComponentEnum.NumberEditQuantity),
    )
    s = Quantity(
        type=np.float64,
        description='Action scale of the conjugate noise pair',
        a_eln=ELNAnnotation(component=ELNComponentEnum.NumberEditQuantity),
    )
    z = Quantity(
        type=np.float64,
        description='Coefficient of qp in the Hamiltonian',
        a_eln=ELNAnnotation(component=ELNComponentEnum.NumberEditQuantity),
    )
    model_type = Quantity(type=str, description='Type of the analyzed model config')

    results = SubSection(section_def=SteadyStateResult)
    zero_cross = SubSection(section_def=ZeroCrossSolution)
    audit = SubSection(section_def=FormulaAudit, repeats=True)

    def get_model_config(
        self, archive: 'EntryArchive', logger: 'BoundLogger'
    ) -> ModelConfig | None:
        """
        Reads the model config from `data_file`, or assembles a linear config from
        the inline parameters. Unset parameters take their defaults.
        """
        if self.data_file is not None:
            with archive.m_context.raw_file(self.data_file) as file:
                return parse_model_config(file.read())
        params = {
            name: float(getattr(self, name))
            for name in _LINEAR_PARAMETERS
            if getattr(self, name) is not None
        }
        if not params:
            logger.warning('steady_state.no_model', entry=self.m_def.name)
            return None
        return ModelConfig.model_validate({'type': 'linear', 'params': params})

    def write_steady_state(
        self, model_config: ModelConfig, logger: 'BoundLogger'
    ) -> None:
        """
        Populates the results, and for linear configs the zero-cross solution and
        the formula audit.

        Raises:
            CanonicalFlowError: The model cannot be analyzed.
        """
        params = None
        if model_config.type == 'linear':
            params = model_config.linear_params()
        report = analyze_steady_state(model_config.build(), params)
        analysis = SteadyStateAnalysis(
            model_type=model_config.type,
            results=SteadyStateResult(
                drift_matrix=report.A,
                diffusion_matrix=report.g,
                covariance=report.sigma,
                lyapunov_residual=report.residual_norm,
                hurwitz=report.hurwitz,
                positive_definite=report.positive_definite,
                temperature=report.temperature,
                stationarity_residuals=np.asarray(report.stationarity_residuals),
            ),
        )
        if params is not None:
            for name, value in params.as_floats().items():
                setattr(analysis, name, value)
            if configuration.find_zero_cross:
                solution = find_zero_cross_z(params)
                analysis.zero_cross = ZeroCrossSolution(
                    z_star=solution.z_star,
                    z_star_closed_form=closed_form_zero_cross_z(params),
                    covariance=solution.sigma,
                    temperature=solution.k_bt,
                )
            analysis.audit = [
                FormulaAudit(
                    item=verdict.item,
                    paper_value=verdict.paper_value,
                    oracle_value=verdict.oracle_value,
                    difference=verdict.difference,
                    status=verdict.status.value,
                    note=verdict.note or None,
                )
                for verdict in audit_paper_formulas(
                    params, configuration.audit_tolerance
                )
            ]
        merge_sections(self, analysis, logger)

    def normalize(self, archive: 'EntryArchive', logger: 'BoundLogger') -> None:
        """
        The normalize function of the `SteadyStateAnalysis` section.

        Args:
            archive (EntryArchive): The archive containing the section that is being
            normalized.
            logger (BoundLogger): A structlog logger.
        """
        if self.results is None:
            try:
                model_config = self.get_model_config(archive, logger)
                if model_config is not None:
                    self.write_steady_state(model_config, logger)
            except CanonicalFlowError as e:
                logger.warning('steady_state.analysis_failed', error=str(e))
        super().normalize(archive, logger)


m_package.__init_metainfo__()
