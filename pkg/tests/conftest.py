import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from gwchart.censoring import CensoringScheme, censor  # noqa: E402
from gwchart.datasets import load_bladder  # noqa: E402


@pytest.fixture(scope="session")
def bladder():
    return load_bladder(125)


@pytest.fixture(scope="session")
def bladder_hybrid(bladder):
    return censor(np.sort(bladder), CensoringScheme.hybrid(125, 75, 7.6))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
