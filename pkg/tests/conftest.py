import os

import hypothesis
import numpy as np
import pytest

from src.dag import Dag
from tests.oracle import D1_TOKEN_PROBS, D1_TRANSITIONS

hypothesis.settings.register_profile("fast", max_examples=20, deadline=None)
hypothesis.settings.register_profile("dev", max_examples=100, deadline=None)
hypothesis.settings.register_profile("thorough", max_examples=500, deadline=None)
hypothesis.settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "dev"))


@pytest.fixture
def d1() -> Dag:
    return Dag.from_probs(D1_TOKEN_PROBS, D1_TRANSITIONS)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)
