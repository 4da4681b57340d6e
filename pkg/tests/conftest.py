import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from dmimochan.geometry import Deployment


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_deployment():
    """Two anchors, full numerology."""
    return Deployment(np.array([[2.0, 1.5, 4.0], [18.0, 10.5, 4.0]]))


@pytest.fixture
def hall_deployment():
    from dmimochan.config import DEFAULT_ANCHORS

    return Deployment(DEFAULT_ANCHORS)
