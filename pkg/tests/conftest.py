import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from srepcc.models import CodingModel, tiny_config

settings.register_profile(
    "default", deadline=None, suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large]
)
settings.load_profile("default")

REPO = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
RUNS = os.environ.get("SREPCC_RUNS", os.path.join(REPO, "runs", "tiny"))


@pytest.fixture(scope="session")
def toy_model():
    """Untrained tiny-profile model (deterministic init)."""
    return CodingModel(tiny_config(0), seed=0)


@pytest.fixture(scope="session")
def trained_family():
    """The five trained tiny models; trains them (about an hour) if absent."""
    from srepcc.training.pipeline import load_or_train

    return load_or_train(RUNS, log=lambda *_: None)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
