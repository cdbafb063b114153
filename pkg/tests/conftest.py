"""Shared pytest fixtures."""

from __future__ import annotations

import numpy as np
import pytest

from kfusion_lab.config import reset_settings
from kfusion_lab.generators import build_sequence_example
from kfusion_lab.models import Tolerance


@pytest.fixture(autouse=True)
def _reset_settings():
    """Every test starts from a fresh settings singleton."""
    reset_settings()
    yield
    reset_settings()


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)


@pytest.fixture
def tol() -> Tolerance:
    return Tolerance()


@pytest.fixture
def sequence_spec():
    """n = 4, alpha = 2, beta = 3, K = diag(1/sqrt(i+1)); S = diag(6/(i+1))."""
    return build_sequence_example(4, 2.0, 3.0)


@pytest.fixture
def identity_k_spec():
    return build_sequence_example(4, 2.0, 3.0, k="identity")
