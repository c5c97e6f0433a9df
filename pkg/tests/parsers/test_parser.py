import numpy as np
import pytest
import structlog
from nomad.datamodel import EntryArchive

from nomad_canonical_flows.parsers.model_parser import ModelConfigParser


def test_parse_file():
    parser = ModelConfigParser()
    archive = EntryArchive()
    parser.parse(
        'tests/data/linear.canonicalflow.json', archive, structlog.get_logger()
    )

    data = archive.data
    assert data.data_file == 'linear.canonicalflow.json'
    assert data.omega == 2.0
    assert data.results.positive_definite
    assert np.asarray(data.results.stationarity_residuals) == pytest.approx(
        [0.0, 0.0, 0.0], abs=1e-12
    )
    assert data.zero_cross.z_star_closed_form == pytest.approx(-0.4)
    assert data.zero_cross.z_star == pytest.approx(-0.4, abs=1e-9)
    assert archive.metadata.entry_name == 'linear.canonicalflow.json steady state'


def test_parse_invalid_file(tmp_path):
    mainfile = tmp_path / 'broken.canonicalflow.json'
    mainfile.write_text('{"type": "linear", "params": {"gamma": 0}}')
    archive = EntryArchive()
    ModelConfigParser().parse(str(mainfile), archive, structlog.get_logger())

    assert archive.data.data_file == 'broken.canonicalflow.json'
    assert archive.data.results is None
