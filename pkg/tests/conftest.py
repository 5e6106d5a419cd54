# tests/conftest.py

import pytest

from src.autodiff.tensor import get_tape
from src.dataset.generator import generate_dataset


@pytest.fixture(autouse=True)
def fresh_tape():
    # forward passes that never reach backward leave records behind
    get_tape().clear()
    yield
    get_tape().clear()


@pytest.fixture(scope="session")
def tiny_dataset_dir(tmp_path_factory):
    """
    Two training views and one test view at 16x16; shared, never modified.
    """
    out = tmp_path_factory.mktemp("tiny")
    generate_dataset(seed=7, n_train_views=2, n_test_views=1, size=16, out_dir=out)
    return out
