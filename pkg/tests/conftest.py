"""Shared fixtures: the two-variable instance, tolerances and seeded streams."""

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent.parent))

from slope_recovery.src.numerics import SeededRng, Tolerances  # noqa: E402
from slope_recovery.src.sorted_l1 import TuningSequence  # noqa: E402

DATA_DIR = Path(__file__).resolve().parent.parent / "data"
CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"


@pytest.fixture
def tol():
    return Tolerances()


@pytest.fixture
def two_var_X():
    """Columns (1, 0) and (0.6, 0.8): X′X = [[1, 0.6], [0.6, 1]]."""
    return np.array([[1.0, 0.6], [0.0, 0.8]])


@pytest.fixture
def lam_42():
    return TuningSequence(np.array([4.0, 2.0]), name="4,2")


@pytest.fixture
def beta_bar():
    return np.array([5.0, 3.0])


@pytest.fixture
def beta_fail():
    return np.array([5.0, 0.0])


@pytest.fixture
def rng():
    return SeededRng(12345).generator()


def random_orthogonal(n, p, seed=0):
    Q, _ = np.linalg.qr(SeededRng(seed).generator().standard_normal((n, p)))
    return Q


@pytest.fixture
def data_dir():
    return DATA_DIR


@pytest.fixture
def config_dir():
    return CONFIG_DIR
