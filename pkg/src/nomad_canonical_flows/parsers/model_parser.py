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

from pathlib import Path
from typing import TYPE_CHECKING

from nomad.datamodel import EntryMetadata
from nomad.parsing.parser import MatchingParser

from nomad_canonical_flows.errors import CanonicalFlowError
from nomad_canonical_flows.model_config import load_model_config
from nomad_canonical_flows.schema_packages.steady_state import SteadyStateAnalysis

if TYPE_CHECKING:
    from nomad.datamodel.datamodel import EntryArchive
    from structlog.stdlib import BoundLogger


class ModelConfigParser(MatchingParser):
    """
    Parser for model config files, creating a `SteadyStateAnalysis` entry.
    """

    def parse(
        self,
        mainfile: str,
        archive: 'EntryArchive',
        logger: 'BoundLogger',
        child_archives: dict[str, 'EntryArchive'] = None,
    ) -> None:
        data_file = Path(mainfile).name
        logger.info('ModelConfigParser.parse', mainfile=data_file)
        entry = SteadyStateAnalysis(data_file=data_file)
        try:
            entry.write_steady_state(load_model_config(mainfile), logger)
        except CanonicalFlowError as e:
            logger.warning('ModelConfigParser.analysis_failed', error=str(e))
        archive.data = entry
        if archive.metadata is None:
            archive.metadata = EntryMetadata()
        archive.metadata.entry_name = f'{data_file} steady state'
