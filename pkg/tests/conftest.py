import os
import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("default", max_examples=50, deadline=None)
settings.register_profile("ci", max_examples=200, deadline=None)
settings.load_profile(os.getenv("HYPOTHESIS_PROFILE", "default"))


def random_tour(rng: np.random.Generator, n: int):
    from vitsp.core import Tour

    return Tour(rng.permutation(n))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
