import numpy as np
import pytest
from hypothesis import HealthCheck, settings
from scipy.spatial.transform import Rotation

from nucv.geometry import CameraView

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def random_camera(rng, h=8, w=8, image=None, depth_range=(1.0, 10.0), jitter=0.15):
    f = rng.uniform(0.8, 1.5) * w
    K = np.array([[f, rng.uniform(-0.5, 0.5), w / 2 + rng.uniform(-1, 1)],
                  [0.0, f * rng.uniform(0.9, 1.1), h / 2 + rng.uniform(-1, 1)],
                  [0.0, 0.0, 1.0]])
    T = np.eye(4)
    T[:3, :3] = Rotation.from_rotvec(rng.normal(size=3) * jitter).as_matrix()
    T[:3, 3] = rng.normal(size=3) * jitter
    if image is None:
        image = rng.uniform(size=(h, w))
    return CameraView(K, T, image, depth_range)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
