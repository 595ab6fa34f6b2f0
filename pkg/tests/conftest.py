import os
import tempfile

# Must run before src is imported: config modules read the environment at import.
os.environ["WEAKEQ_THREADS"] = "1"
os.environ["WEAKEQ_CACHE_DIR"] = tempfile.mkdtemp(prefix="weakeq-test-cache-")
os.environ.pop("WEAKEQ_LOG_FILE", None)
os.environ.pop("WEAKEQ_NUMERIC_MODE", None)

import numpy as np
import pytest

from src.action_models import MPAction, WeightedSpace


@pytest.fixture
def uniform2() -> WeightedSpace:
    return WeightedSpace.uniform(2)


@pytest.fixture
def identity2(uniform2: WeightedSpace) -> MPAction:
    return MPAction.build(uniform2, [[0, 1]], t=4)


@pytest.fixture
def swap2(uniform2: WeightedSpace) -> MPAction:
    return MPAction.build(uniform2, [[1, 0]], t=4)


@pytest.fixture
def cycle3() -> MPAction:
    return MPAction.build(WeightedSpace.uniform(3), [[1, 2, 0]], t=4)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)
