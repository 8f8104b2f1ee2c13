import numpy as np
import pytest

from vgq.cropping import CropConfig
from vgq.dataset import split_objects
from vgq.training_data import build_arrays, build_training_data, split_records


def test_vgq_arrays_center_grasps(mini_shards, mini_records):
    crop = CropConfig()
    images, poses, labels = build_arrays(mini_shards, mini_records[:50], "vgq", crop)
    assert images.shape == (50, 1, 32, 32)
    assert poses.shape == (50, 5)
    assert images.dtype == np.float32
    for i, r in enumerate(mini_records[:50]):
        assert poses[i, 0] == pytest.approx(r.z, abs=1e-6)
        assert labels[i] == int(r.positive)


def test_fvgq_arrays_displace_within_kappa(mini_shards, mini_records):
    crop = CropConfig(kappa=8.0)
    rng = np.random.default_rng(0)
    images, poses, labels = build_arrays(mini_shards, mini_records[:200], "fvgq", crop, rng)
    assert poses.shape == (200, 7)
    assert np.abs(poses[:, 0]).max() <= 8.0
    assert np.abs(poses[:, 1]).max() <= 8.0
    # displacements cover the range rather than collapsing to the center
    assert np.abs(poses[:, 0]).max() > 4.0


def test_fvgq_requires_rng(mini_shards, mini_records):
    with pytest.raises(ValueError):
        build_arrays(mini_shards, mini_records[:5], "fvgq", CropConfig())


def test_kappa_zero_matches_vgq_crop(mini_shards, mini_records):
    crop = CropConfig(kappa=0.0)
    rng = np.random.default_rng(1)
    f_images, f_poses, _ = build_arrays(mini_shards, mini_records[:20], "fvgq", crop, rng, kappa=0.0)
    v_images, _, _ = build_arrays(mini_shards, mini_records[:20], "vgq", crop)
    assert np.allclose(f_poses[:, :2], 0.0)
    assert np.array_equal(f_images, v_images)


def test_split_records_object_wise(mini_shards, mini_records):
    ids = sorted({r.object_id for r in mini_records})
    manifest = split_objects(ids, (0.5, 0.25, 0.25), np.random.default_rng(2))
    train, val, test = split_records(mini_records, manifest)
    assert len(train) + len(val) + len(test) == len(mini_records)
    assert {r.object_id for r in train}.isdisjoint({r.object_id for r in test})
    data, val_recs, test_recs = build_training_data(
        mini_shards, mini_records, manifest, "vgq", CropConfig()
    )
    assert len(data.train_images) == len(train)
    assert len(val_recs) == len(val)
    assert len(test_recs) == len(test)
