"""
Shared fixtures for the tomography test suite.

Puts the project root on sys.path so `from tools.x import ...` works the same
way it does for the command-line tools.
"""
import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from tools.measurement_model import build_plan  # noqa: E402
from tools.qstate import bell_state, maximally_mixed  # noqa: E402


@pytest.fixture
def plan():
    return build_plan()


@pytest.fixture
def bell0():
    return bell_state(0.0)


@pytest.fixture
def mixed():
    return maximally_mixed()


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
