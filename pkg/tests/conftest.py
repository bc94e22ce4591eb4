import json
from pathlib import Path

import numpy as np
import pytest

REPO_ROOT = Path(__file__).resolve().parents[1]
CONFORMANCE_DIR = REPO_ROOT / "conformance"


@pytest.fixture(scope="session")
def alignment_cases():
    with open(CONFORMANCE_DIR / "alignment_cases.json") as fh:
        return json.load(fh)["cases"]


@pytest.fixture
def rng():
    return np.random.default_rng(0)
