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
Plain-text reports and run manifests.

Every report is a human-readable table followed by a machine-readable block of
`key=value` lines. Floats are printed with 17 significant digits so that a value
read back from a report is the value that was computed. Reports carry no
timestamps; wall-clock time only goes into the manifest.
"""

import hashlib
import json
import math
from collections.abc import Iterable, Mapping, Sequence
from pathlib import Path
from typing import Any

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from nomad_canonical_flows import __version__

MACHINE_READABLE_HEADER = '# machine-readable'


def format_value(value: Any) -> str:
    """Formats scalars, vectors and matrices for reports."""
    if value is None:
        return 'none'
    if isinstance(value, bool | np.bool_):
        return 'true' if value else 'false'
    if isinstance(value, int | np.integer):
        return str(int(value))
    if isinstance(value, float | np.floating):
        value = float(value)
        if math.isnan(value):
            return 'nan'
        return f'{value:.17g}'
    if isinstance(value, np.ndarray | list | tuple):
        array = np.asarray(value, dtype=float)
        if array.ndim == 2:
            rows = (', '.join(format_value(float(x)) for x in row) for row in array)
            return '[' + '; '.join(rows) + ']'
        return '[' + ', '.join(format_value(float(x)) for x in array.reshape(-1)) + ']'
    if hasattr(value, 'value'):
        return str(value.value)
    return str(value)


def render_table(headers: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    cells = [list(headers)] + [[format_value(c) for c in row] for row in rows]
    widths = [max(len(row[i]) for row in cells) for i in range(len(headers))]
    lines = []
    for k, row in enumerate(cells):
        lines.append('  '.join(c.ljust(w) for c, w in zip(row, widths)).rstrip())
        if k == 0:
            lines.append('  '.join('-' * w for w in widths))
    return '\n'.join(lines)


def key_value_block(entries: Mapping[str, Any]) -> str:
    lines = [MACHINE_READABLE_HEADER]
    lines += [f'{key}={format_value(value)}' for key, value in entries.items()]
    return '\n'.join(lines)


def parse_key_value_block(text: str) -> dict[str, str]:
    """Reads back the machine-readable block of a report."""
    _, _, block = text.partition(MACHINE_READABLE_HEADER)
    entries = {}
    for line in block.splitlines():
        key, separator, value = line.partition('=')
        if separator:
            entries[key.strip()] = value.strip()
    return entries


def render_report(
    title: str, sections: Sequence[str], entries: Mapping[str, Any]
) -> str:
    parts = [f'{title}\n{"=" * len(title)}', *sections, key_value_block(entries)]
    return '\n\n'.join(p for p in parts if p) + '\n'


def file_digest(path: str | Path) -> str:
    digest = hashlib.sha256()
    with open(path, 'rb') as file:
        for chunk in iter(lambda: file.read(1 << 20), b''):
            digest.update(chunk)
    return digest.hexdigest()


class RunManifest(BaseModel):
    """
    Provenance of one CLI run, written next to each output file.

    Two runs whose manifests agree in everything but `duration_seconds` produce
    identical outputs.
    """

    model_config = ConfigDict(extra='forbid')

    command: str = Field(description='Subcommand name')
    parameters: dict[str, Any] = Field(
        default_factory=dict, description='Fully resolved options, defaults included'
    )
    seed: int | None = Field(None, description='Master seed')
    version: str = Field(__version__, description='Package version')
    input_digests: dict[str, str] = Field(
        default_factory=dict, description='sha256 of every input file'
    )
    duration_seconds: float = Field(0.0, ge=0, description='Wall-clock duration')

    @classmethod
    def for_inputs(
        cls,
        command: str,
        parameters: Mapping[str, Any],
        inputs: Sequence[str] = (),
        seed: int | None = None,
    ) -> 'RunManifest':
        return cls(
            command=command,
            parameters=dict(parameters),
            seed=seed,
            input_digests={str(path): file_digest(path) for path in inputs},
        )

    def to_json(self) -> str:
        return json.dumps(self.model_dump(mode='json'), indent=2, sort_keys=True) + '\n'

    def write(self, output: str | Path) -> Path:
        path = manifest_path(output)
        path.write_text(self.to_json(), encoding='utf-8')
        return path


def manifest_path(output: str | Path) -> Path:
    return Path(f'{output}.manifest.json')


def summary_path(output: str | Path) -> Path:
    return Path(f'{output}.summary.txt')
