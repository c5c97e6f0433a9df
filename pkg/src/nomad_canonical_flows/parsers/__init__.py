from nomad.config.models.plugins import ParserEntryPoint


class ModelConfigParserEntryPoint(ParserEntryPoint):
    def load(self):
        from nomad_canonical_flows.parsers.model_parser import ModelConfigParser

        return ModelConfigParser(**self.dict())


model_parser = ModelConfigParserEntryPoint(
    name='ModelConfigParser',
    description='Parser creating steady-state entries from model config files.',
    mainfile_name_re=r'.*\.canonicalflow\.json',
)
