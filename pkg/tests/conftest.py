import numpy as np
import pytest

from satpose.geometry import camera_from_fov, make_box_mesh
from satpose.keypoints import select_keypoints


@pytest.fixture(scope="session")
def unit_cube():
    return make_box_mesh([1.0, 1.0, 1.0])


@pytest.fixture(scope="session")
def barrel_mesh():
    # Rough cargo-vehicle proportions, long axis along +z.
    return make_box_mesh([3.0, 3.0, 6.3])


@pytest.fixture(scope="session")
def wide_cam():
    return camera_from_fov(39.6, 1024, 1024)


@pytest.fixture(scope="session")
def narrow_cam():
    return camera_from_fov(35.1, 1900, 1200)


@pytest.fixture(scope="session")
def barrel_kps(barrel_mesh):
    return select_keypoints(barrel_mesh, 20, seed=0)


@pytest.fixture()
def rng():
    return np.random.default_rng(12345)
