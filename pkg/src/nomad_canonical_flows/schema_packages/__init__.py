from nomad.config.models.plugins import SchemaPackageEntryPoint
from pydantic import Field


class SteadyStateSchemaEntryPoint(SchemaPackageEntryPoint):
    audit_tolerance: float = Field(
        1e-9, description='Absolute tolerance of the printed-formula audit'
    )
    find_zero_cross: bool = Field(
        True, description='Search the z with vanishing stationary cross-covariance'
    )

    def load(self):
        from nomad_canonical_flows.schema_packages.steady_state import m_package

        return m_package


steady_state_schema = SteadyStateSchemaEntryPoint(
    name='SteadyStateSchema',
    description='Stationary covariance and formula audit of linear phase-space models.',
)
