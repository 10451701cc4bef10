import logging
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from helpers import load  # noqa: E402
from stripecsc import build_dct_dictionary  # noqa: E402


@pytest.fixture(autouse=True)
def _quiet_solvers(caplog):
    caplog.set_level(logging.WARNING, logger="stripecsc")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def dct24():
    return build_dct_dictionary(2, 4)


@pytest.fixture(scope="session")
def camera32():
    return load("camera32.pgm")


@pytest.fixture(scope="session")
def camera64():
    return load("camera64.pgm")


@pytest.fixture(scope="session")
def mask32():
    return (load("mask32.pgm") > 127).astype(float)
