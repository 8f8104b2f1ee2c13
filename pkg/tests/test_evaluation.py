from decimal import ROUND_HALF_UP, Decimal

import numpy as np
import pytest

from vgq.cropping import CropConfig
from vgq.dataset import GraspRecord, SplitManifest
from vgq.evaluation import (
    EvalSet,
    build_eval_set,
    evaluate,
    grid_report,
    metrics,
    subset_eval,
)
from vgq.geometry import UnitQuaternion
from vgq.nn import random_checkpoint, vgq_spec


def synth_predictions(tpr, tnr, n_pos=1000, n_neg=1000):
    labels = np.array([1] * n_pos + [0] * n_neg)
    preds = np.zeros(n_pos + n_neg)
    preds[: int(round(tpr * n_pos))] = 0.9
    preds[n_pos + int(round(tnr * n_neg)) :] = 0.9
    return preds, labels


def record_at(cam_r=0.6, cam_elev=30.0, beta=10.0, positive=False):
    return GraspRecord(
        image_id=0, u=0.0, v=0.0, z=0.7, q=UnitQuaternion(1, 0, 0, 0),
        beta=beta, psi=20.0, cam_r=cam_r, cam_polar=0.0, cam_elev=cam_elev,
        rho=0.05 if positive else 0.0, positive=positive,
        object_id="o", stable_pose_id="s00",
    )


# ---------------------------------------------------------------------------
# metrics arithmetic


def test_published_rates_average_to_reported_balanced_accuracy():
    preds, labels = synth_predictions(0.739, 0.902)
    m = metrics(preds, labels)
    assert m.tpr == pytest.approx(0.739, abs=1e-12)
    assert m.tnr == pytest.approx(0.902, abs=1e-12)
    assert m.balanced_accuracy == pytest.approx(0.8205, abs=1e-12)
    rounded = Decimal(f"{m.balanced_accuracy * 100:.2f}").quantize(Decimal("0.1"), ROUND_HALF_UP)
    assert rounded == Decimal("82.1")


def test_all_negative_predictor_on_imbalanced_split():
    labels = np.array([0] * 81 + [1] * 19)
    preds = np.zeros(100)
    m = metrics(preds, labels)
    assert m.accuracy == pytest.approx(0.81, abs=1e-12)
    assert m.balanced_accuracy == pytest.approx(0.5, abs=1e-12)
    assert m.tpr == 0.0
    assert m.tnr == 1.0


def test_perfect_predictor():
    labels = np.array([0, 1, 1, 0])
    preds = np.array([0.1, 0.9, 0.8, 0.2])
    m = metrics(preds, labels)
    assert (m.tpr, m.tnr, m.balanced_accuracy) == (1.0, 1.0, 1.0)


def test_single_class_labels_rejected():
    with pytest.raises(ValueError, match="single class"):
        metrics([0.1, 0.9], [1, 1])


def test_balanced_accuracy_invariant_to_duplication():
    rng = np.random.default_rng(0)
    preds = rng.random(500)
    labels = rng.integers(0, 2, 500)
    m1 = metrics(preds, labels)
    m2 = metrics(np.concatenate([preds, preds]), np.concatenate([labels, labels]))
    assert m2.balanced_accuracy == pytest.approx(m1.balanced_accuracy, abs=1e-12)


def test_threshold_half_equals_argmax():
    rng = np.random.default_rng(1)
    logits = rng.standard_normal((200, 2))
    e = np.exp(logits - logits.max(axis=1, keepdims=True))
    probs = e / e.sum(axis=1, keepdims=True)
    labels = rng.integers(0, 2, 200)
    m = metrics(probs[:, 1], labels, threshold=0.5)
    argmax_pred = probs.argmax(axis=1)
    tp = np.sum((argmax_pred == 1) & (labels == 1))
    fn = np.sum((argmax_pred == 0) & (labels == 1))
    tn = np.sum((argmax_pred == 0) & (labels == 0))
    fp = np.sum((argmax_pred == 1) & (labels == 0))
    assert m.counts.tp == tp and m.counts.fn == fn and m.counts.tn == tn and m.counts.fp == fp


def test_length_mismatch_rejected():
    with pytest.raises(ValueError):
        metrics([0.5], [0, 1])


# ---------------------------------------------------------------------------
# grid report


def test_grid_cells_with_planted_error_rates():
    # synthetic oracle: construct two cells with known per-cell TPR/TNR
    rng = np.random.default_rng(2)
    records, preds = [], []
    for cam_r, cam_elev, tpr, tnr in [(0.45, 10.0, 0.8, 0.9), (0.9, 50.0, 0.6, 0.7)]:
        for i in range(200):
            positive = i < 100
            records.append(record_at(cam_r, cam_elev, positive=positive))
            if positive:
                preds.append(0.9 if i < 100 * tpr else 0.1)
            else:
                preds.append(0.1 if i - 100 < 100 * tnr else 0.9)
    report = grid_report(np.array(preds), records)
    assert len(report.cells) == 2
    by_bin = {(c.r_bin, c.elev_bin): c for c in report.cells}
    c1 = by_bin[(1, 2)]  # r=0.45 -> bin 1; elev=10 -> bin 2
    assert c1.tpr == pytest.approx(0.8, abs=1e-9)
    assert c1.tnr == pytest.approx(0.9, abs=1e-9)
    c2 = by_bin[(10, 10)]
    assert c2.tpr == pytest.approx(0.6, abs=1e-9)
    assert c2.tnr == pytest.approx(0.7, abs=1e-9)
    assert sum(c.count for c in report.cells) == len(records)


def test_single_cell_summary_std_zero():
    records = [record_at(positive=(i % 2 == 0)) for i in range(50)]
    preds = np.array([0.9 if r.positive else 0.1 for r in records])
    report = grid_report(preds, records)
    s = report.summary()
    assert s["cells"] == 1
    assert s["tpr_std"] == 0.0
    assert s["tnr_std"] == 0.0


def test_grid_matrix_output_shape():
    records = [record_at(0.45, 10.0, positive=i % 2 == 0) for i in range(20)]
    records += [record_at(0.9, 50.0, positive=i % 2 == 0) for i in range(20)]
    preds = np.array([0.9 if r.positive else 0.1 for r in records])
    report = grid_report(preds, records)
    matrix = report.to_matrix("tpr")
    assert len(matrix.strip().splitlines()) == 2


# ---------------------------------------------------------------------------
# subset evaluation


def eval_set_from_records(records, rng):
    images = rng.standard_normal((len(records), 1, 32, 32)).astype(np.float32)
    poses = rng.standard_normal((len(records), 5)).astype(np.float32)
    labels = np.array([int(r.positive) for r in records])
    return EvalSet(images=images, poses=poses, labels=labels, records=records)


def test_top_grasp_preset_filters(mini_shards, mini_records):
    ckpt = random_checkpoint(vgq_spec(scaled=True), np.random.default_rng(3))
    rng = np.random.default_rng(4)
    records = [record_at(beta=30.0, cam_elev=3.0, positive=i % 2 == 0) for i in range(10)]
    records += [record_at(beta=2.0, cam_elev=3.0, positive=i % 2 == 0) for i in range(10)]
    evalset = eval_set_from_records(records, rng)
    result = subset_eval(ckpt, evalset, preset="top_grasp")
    assert result.n == 10  # every beta=30 record filtered out


def test_full_preset_equals_plain_metrics():
    ckpt = random_checkpoint(vgq_spec(scaled=True), np.random.default_rng(5))
    rng = np.random.default_rng(6)
    records = [record_at(positive=i % 3 == 0) for i in range(30)]
    evalset = eval_set_from_records(records, rng)
    full = subset_eval(ckpt, evalset, preset="full")
    _, direct = evaluate(ckpt, evalset)
    assert full.metrics.balanced_accuracy == pytest.approx(direct.balanced_accuracy, abs=1e-12)


def test_single_class_subset_reported_undefined():
    ckpt = random_checkpoint(vgq_spec(scaled=True), np.random.default_rng(7))
    rng = np.random.default_rng(8)
    records = [record_at(beta=2.0, cam_elev=3.0, positive=False) for _ in range(10)]
    evalset = eval_set_from_records(records, rng)
    result = subset_eval(ckpt, evalset, preset="top_grasp")
    assert result.metrics is None
    assert "undefined" in result.note


def test_build_eval_set_from_shards(mini_shards, mini_records):
    crop = CropConfig()
    sub = mini_records[:40]
    evalset = build_eval_set(mini_shards, sub, "vgq", crop)
    assert evalset.images.shape == (40, 1, 32, 32)
    assert evalset.poses.shape == (40, 5)
    assert len(evalset.labels) == 40
