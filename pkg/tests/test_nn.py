import math

import numpy as np
import pytest

from vgq.nn import (
    Checkpoint,
    NormStats,
    ShapeError,
    TrainConfig,
    TrainingData,
    forward,
    forward_backward,
    fvgq_spec,
    init_params,
    learning_rate,
    load_checkpoint,
    loss,
    normalize_poses,
    random_checkpoint,
    save_checkpoint,
    sgd_step,
    train,
    vgq_spec,
)
from vgq.fileio import ShardFormatError


@pytest.fixture(scope="module")
def scaled():
    return vgq_spec(scaled=True)


def smooth_setup(spec, seed=42, batch=4, dtype=np.float64):
    """Parameters/inputs placed away from relu kinks and pool ties so central
    differences measure the true local gradient."""
    rng = np.random.default_rng(seed)
    params = init_params(spec, rng, dtype=dtype)
    for k in params:
        if k.endswith(".b"):
            params[k] = params[k] + 1.0
        else:
            params[k] = params[k] * 0.05
    images = rng.standard_normal((batch, 1, 32, 32)).astype(dtype) * 0.1
    poses = rng.standard_normal((batch, spec.pose_input_dim)).astype(dtype) * 0.1
    labels = rng.integers(0, 2, batch)
    return rng, params, images, poses, labels


# ---------------------------------------------------------------------------
# architecture bookkeeping


def test_full_spec_parameter_count_near_quoted_total():
    n = vgq_spec().param_count()
    assert 6_000_000 <= n <= 7_000_000


def test_extra_merge_layer_parameter_delta():
    with_extra = vgq_spec().param_count()
    without = vgq_spec(extra_fc=False).param_count()
    assert with_extra - without == 1024 * 1024 + 1024


def test_variants_share_image_stream():
    a, b = vgq_spec(), fvgq_spec()
    assert a.image_stream == b.image_stream
    assert a.pose_input_dim == 5
    assert b.pose_input_dim == 7
    sa, sb = vgq_spec(scaled=True), fvgq_spec(scaled=True)
    assert sa.image_stream == sb.image_stream


def test_spec_hash_roundtrip():
    spec = fvgq_spec(scaled=True)
    clone = spec.from_dict(spec.to_dict())
    assert clone == spec
    assert clone.spec_hash() == spec.spec_hash()
    assert clone.spec_hash() != vgq_spec(scaled=True).spec_hash()


# ---------------------------------------------------------------------------
# forward behavior


def test_zeroed_output_layer_predicts_half(scaled):
    rng = np.random.default_rng(0)
    params = init_params(scaled, rng)
    params["out.W"][:] = 0
    params["out.b"][:] = 0
    images = rng.standard_normal((6, 1, 32, 32)).astype(np.float32)
    poses = rng.standard_normal((6, 5)).astype(np.float32)
    _, probs = forward(scaled, params, images, poses)
    assert np.allclose(probs, 0.5, atol=1e-7)


def test_duplicated_rows_give_identical_outputs(scaled):
    rng = np.random.default_rng(1)
    params = init_params(scaled, rng)
    img = rng.standard_normal((1, 1, 32, 32)).astype(np.float32)
    pose = rng.standard_normal((1, 5)).astype(np.float32)
    images = np.repeat(img, 5, axis=0)
    poses = np.repeat(pose, 5, axis=0)
    _, probs = forward(scaled, params, images, poses)
    assert np.allclose(probs, probs[0], atol=1e-7)


def test_batched_forward_matches_single_rows(scaled):
    rng = np.random.default_rng(2)
    params = init_params(scaled, rng)
    images = rng.standard_normal((7, 1, 32, 32)).astype(np.float32)
    poses = rng.standard_normal((7, 5)).astype(np.float32)
    _, batch_probs = forward(scaled, params, images, poses)
    singles = np.concatenate(
        [forward(scaled, params, images[i : i + 1], poses[i : i + 1])[1] for i in range(7)]
    )
    assert np.abs(batch_probs - singles).max() < 1e-6


def test_softmax_rows_sum_to_one(scaled):
    rng = np.random.default_rng(3)
    params = init_params(scaled, rng)
    images = rng.standard_normal((16, 1, 32, 32)).astype(np.float32)
    poses = rng.standard_normal((16, 5)).astype(np.float32)
    _, probs = forward(scaled, params, images, poses)
    assert np.abs(probs.sum(axis=1) - 1.0).max() < 1e-6


def test_shape_mismatch_names_the_layer(scaled):
    rng = np.random.default_rng(4)
    params = init_params(scaled, rng)
    with pytest.raises(ShapeError, match="image input"):
        forward(scaled, params, rng.standard_normal((2, 1, 16, 16)), rng.standard_normal((2, 5)))
    with pytest.raises(ShapeError, match="pose input"):
        forward(
            scaled,
            params,
            rng.standard_normal((2, 1, 32, 32)),
            rng.standard_normal((2, 7)),
        )


# ---------------------------------------------------------------------------
# loss


def test_perfect_prediction_loss_tends_to_zero(scaled):
    logits = np.array([[20.0, -20.0], [-20.0, 20.0]])
    labels = np.array([0, 1])
    assert loss(logits, labels, {}, 0.0) < 1e-8


def test_uniform_prediction_loss_is_ln2():
    logits = np.zeros((8, 2))
    labels = np.array([0, 1] * 4)
    assert loss(logits, labels, {}, 0.0) == pytest.approx(math.log(2.0), abs=1e-12)


def test_l2_term_scales_linearly(scaled):
    rng = np.random.default_rng(5)
    params = init_params(scaled, rng)
    logits = np.zeros((4, 2))
    labels = np.array([0, 1, 0, 1])
    base = loss(logits, labels, params, 0.0)
    l1 = loss(logits, labels, params, 0.0005) - base
    l2 = loss(logits, labels, params, 0.0010) - base
    assert l2 == pytest.approx(2.0 * l1, rel=1e-9)
    assert base == pytest.approx(math.log(2.0), abs=1e-7)


def test_bias_excluded_from_penalty(scaled):
    rng = np.random.default_rng(6)
    params = init_params(scaled, rng)
    logits = np.zeros((2, 2))
    labels = np.array([0, 1])
    before = loss(logits, labels, params, 0.01)
    params["out.b"][:] = 1000.0
    after = loss(logits, labels, params, 0.01)
    assert before == after


# ---------------------------------------------------------------------------
# gradients


def test_output_layer_gradient_analytic(scaled):
    # constant labels, zeroed output layer: dL/d(out.b) = probs - onehot = (0.5, -0.5)
    rng = np.random.default_rng(7)
    params = init_params(scaled, rng, dtype=np.float64)
    params["out.W"][:] = 0
    params["out.b"][:] = 0
    images = rng.standard_normal((8, 1, 32, 32))
    poses = rng.standard_normal((8, 5))
    labels = np.ones(8, dtype=int)
    _, _, grads = forward_backward(scaled, params, images, poses, labels, 0.0)
    assert np.allclose(grads["out.b"], [0.5, -0.5], atol=1e-12)


def test_l2_gradient_is_two_l2_w(scaled):
    rng = np.random.default_rng(8)
    params = init_params(scaled, rng, dtype=np.float64)
    images = rng.standard_normal((2, 1, 32, 32))
    poses = rng.standard_normal((2, 5))
    labels = np.array([0, 1])
    _, _, g0 = forward_backward(scaled, params, images, poses, labels, 0.0)
    _, _, g1 = forward_backward(scaled, params, images, poses, labels, 0.25)
    for k in g0:
        if k.endswith(".W"):
            assert np.allclose(g1[k] - g0[k], 2 * 0.25 * params[k], atol=1e-9)
        else:
            assert np.allclose(g1[k], g0[k], atol=1e-12)


def test_finite_difference_agreement_all_layer_kinds(scaled):
    rng, params, images, poses, labels = smooth_setup(scaled)
    _, _, grads = forward_backward(scaled, params, images, poses, labels, 0.0005)

    def loss_at(p):
        logits, _ = forward(scaled, p, images, poses)
        return loss(logits, labels, p, 0.0005)

    h = 1e-3
    per_kind = {
        "conv": ["img0.W", "img1.W", "img3.W", "img4.W", "img1.b"],
        "pool_path": ["img3.b"],
        "fc": ["img6.W", "pose0.W", "merge0.W", "merge1.W"],
        "softmax_out": ["out.W", "out.b"],
    }
    for kind, names in per_kind.items():
        for name in names:
            g = grads[name]
            for flat in rng.choice(g.size, size=min(12, g.size), replace=False):
                idx = np.unravel_index(flat, g.shape)
                orig = params[name][idx]
                params[name][idx] = orig + h
                up = loss_at(params)
                params[name][idx] = orig - h
                down = loss_at(params)
                params[name][idx] = orig
                fd = (up - down) / (2 * h)
                rel = abs(fd - g[idx]) / max(abs(fd), abs(g[idx]), 1e-6)
                assert rel < 1e-3, f"{kind}/{name}{idx}: rel err {rel:.2e}"


# ---------------------------------------------------------------------------
# optimizer


def test_vanilla_sgd_step():
    cfg = TrainConfig(momentum=0.0, base_lr=0.1, decay_interval=10**9)
    params = {"w": np.array([1.0, 2.0])}
    grads = {"w": np.array([0.5, -0.5])}
    params, _ = sgd_step(params, grads, cfg, iteration=0)
    assert np.allclose(params["w"], [1.0 - 0.05, 2.0 + 0.05])


def test_learning_rate_schedule():
    cfg = TrainConfig(base_lr=0.001, lr_decay=0.95, decay_interval=100)
    assert learning_rate(cfg, 0) == pytest.approx(0.001)
    assert learning_rate(cfg, 99) == pytest.approx(0.001)
    assert learning_rate(cfg, 100) == pytest.approx(0.001 * 0.95)
    assert learning_rate(cfg, 200) == pytest.approx(0.001 * 0.95**2, rel=1e-12)


def test_momentum_velocity_accumulates():
    cfg = TrainConfig(momentum=0.9, base_lr=0.001, decay_interval=10**9)
    params = {"w": np.zeros(3)}
    g = np.array([1.0, -1.0, 2.0])
    params, vel = sgd_step(params, {"w": g.copy()}, cfg, 0)
    params, vel = sgd_step(params, {"w": g.copy()}, cfg, 1, vel)
    assert np.allclose(vel["w"], g * 1.9, atol=1e-12)


# ---------------------------------------------------------------------------
# training loop


def planted_rule_data(n=3000, seed=0):
    rng = np.random.default_rng(seed)
    images = (rng.standard_normal((n, 1, 32, 32)) * 0.05).astype(np.float32)
    poses = rng.standard_normal((n, 5)).astype(np.float32)
    labels = (poses[:, 1] > 0.2).astype(int)
    cut = int(0.8 * n)
    return TrainingData(images[:cut], poses[:cut], labels[:cut], images[cut:], poses[cut:], labels[cut:])


def test_training_learns_separable_rule_and_is_deterministic(scaled):
    data = planted_rule_data()
    cfg = TrainConfig(max_iterations=300, val_interval=100, batch_size=32, seed=11)
    a = train(scaled, data, cfg)
    b = train(scaled, data, cfg)
    assert a.best_val_ba > 0.8
    assert [row[1] for row in a.history] == [row[1] for row in b.history]  # loss trace
    assert [row[2] for row in a.history] == [row[2] for row in b.history]  # lr trace


def test_training_log_csv(tmp_path, scaled):
    data = planted_rule_data(800)
    cfg = TrainConfig(max_iterations=60, val_interval=30, batch_size=32, seed=1)
    train(scaled, data, cfg, log_path=tmp_path / "log.csv")
    lines = (tmp_path / "log.csv").read_text().splitlines()
    assert lines[0] == "iteration,loss,lr,val_tpr,val_tnr,val_ba"
    assert len(lines) >= 3


def test_training_rejects_empty_split(scaled):
    data = planted_rule_data(100)
    empty = TrainingData(
        data.train_images[:0], data.train_poses[:0], data.train_labels[:0],
        data.val_images, data.val_poses, data.val_labels,
    )
    with pytest.raises(ValueError):
        train(scaled, empty, TrainConfig(max_iterations=10))


# ---------------------------------------------------------------------------
# checkpoints


def test_checkpoint_roundtrip(tmp_path, scaled):
    rng = np.random.default_rng(12)
    ckpt = random_checkpoint(scaled, rng, NormStats(0.6, 0.1, 0.7, 0.2))
    path = tmp_path / "m.ckpt"
    save_checkpoint(ckpt, path)
    back = load_checkpoint(path)
    assert back.spec == scaled
    assert back.stats == ckpt.stats
    assert back.iteration == ckpt.iteration
    for k in ckpt.params:
        assert np.array_equal(back.params[k], ckpt.params[k])


def test_checkpoint_spec_mismatch_rejected(tmp_path, scaled):
    rng = np.random.default_rng(13)
    save_checkpoint(random_checkpoint(scaled, rng), tmp_path / "m.ckpt")
    with pytest.raises(ShardFormatError):
        load_checkpoint(tmp_path / "m.ckpt", expected_spec=fvgq_spec(scaled=True))


def test_pose_normalization_contract():
    stats = NormStats(0.0, 1.0, 0.7, 0.2)
    vgq_rows = np.array([[0.9, 1.0, 0.0, 0.0, 0.0]], dtype=np.float32)
    out = normalize_poses(vgq_rows, stats)
    assert out[0, 0] == pytest.approx((0.9 - 0.7) / 0.2, abs=1e-6)
    assert np.allclose(out[0, 1:], vgq_rows[0, 1:])  # quaternion untouched
    fvgq_rows = np.array([[8.0, -16.0, 0.9, 1.0, 0.0, 0.0, 0.0]], dtype=np.float32)
    out = normalize_poses(fvgq_rows, stats)
    assert out[0, 0] == pytest.approx(0.5)
    assert out[0, 1] == pytest.approx(-1.0)
    assert out[0, 2] == pytest.approx(1.0)
