import numpy as np
import pytest

from ensim.core import Image


@pytest.fixture
def gen():
    return np.random.default_rng(20260808)


def make_image(data) -> Image:
    return Image(np.asarray(data, dtype=np.float64))
