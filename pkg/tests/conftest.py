import numpy as np
import pytest

from soccer3d.geometry import Camera


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def random_camera(rng, image_size=(640, 480)):
    """Random camera looking roughly along +z with a modest rotation."""
    rvec = rng.uniform(-0.5, 0.5, size=3)
    t = rng.uniform(-2.0, 2.0, size=3)
    focal = rng.uniform(300.0, 1500.0)
    return Camera(focal, rvec, t, image_size=image_size)
