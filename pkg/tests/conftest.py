import numpy as np
import pytest

from vgq.dataset import RenderConfig, records_of, render_dataset
from vgq.meshes import generate_primitive_set, make_box, make_cylinder, make_sphere
from vgq.quality import QualityConfig


@pytest.fixture(scope="session")
def cube():
    return make_box([0.05, 0.05, 0.05], "cube")


@pytest.fixture(scope="session")
def short_box():
    return make_box([0.05, 0.05, 0.04], "short_box")


@pytest.fixture(scope="session")
def sphere():
    return make_sphere(0.03, subdivisions=2, object_id="sphere")


@pytest.fixture(scope="session")
def mini_quality():
    # light-budget labeler for pipeline tests
    return QualityConfig(samples=5)


@pytest.fixture(scope="session")
def mini_render_config(mini_quality):
    return RenderConfig(
        cameras_per_pose=3,
        grasps_per_object=25,
        max_stable_poses=2,
        image_size=120,
        quality=mini_quality,
    )


@pytest.fixture(scope="session")
def mini_meshes():
    return generate_primitive_set(6, seed=5)


@pytest.fixture(scope="session")
def mini_shards(mini_meshes, mini_render_config):
    return render_dataset(mini_meshes, mini_render_config, seed=77)


@pytest.fixture(scope="session")
def mini_records(mini_shards):
    return records_of(mini_shards)


def rng(seed=0):
    return np.random.default_rng(seed)
