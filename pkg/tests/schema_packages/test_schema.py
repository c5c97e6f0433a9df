import os.path

import numpy as np
import pytest
from nomad.client import normalize_all, parse


def test_schema():
    test_file = os.path.join('tests', 'data', 'test.archive.yaml')
    entry_archive = parse(test_file)[0]
    normalize_all(entry_archive)

    data = entry_archive.data
    assert data.model_type == 'linear'
    np.testing.assert_allclose(
        data.results.covariance, [[1.125, -0.25], [-0.25, 1.0]], atol=1e-12
    )
    assert data.results.hurwitz
    assert data.results.lyapunov_residual <= 1e-12
    assert data.zero_cross.z_star == pytest.approx(-0.25, abs=1e-9)
    assert data.zero_cross.temperature == pytest.approx(1.0, abs=1e-8)

    status = {audit.item: audit.status for audit in data.audit}
    assert status['z0_covariance'] == 'Match'
    assert status['zero_cross_z'] == 'Discrepant'
    assert status['temperature'] == 'Discrepant'
