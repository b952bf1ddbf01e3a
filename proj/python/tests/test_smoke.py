"""Smoke tests for the python bindings."""

import math

import numpy as np
import pytest

import docsegtr

TINY_CONFIG = (
    "grid_size=2\nnum_layers=1\nc_stem=2\nc_fpn=4\nc_mask=2\n"
    "num_heads=2\nmlp_ratio=2\n"
)


def test_attention_score_count():
    assert docsegtr.attention_score_count(32, 32, "full") == (32 * 32) ** 2
    assert docsegtr.attention_score_count(32, 32, "twin") == 2 * 32**3
    assert docsegtr.attention_score_count(2, 8, "full") == 256
    assert docsegtr.attention_score_count(2, 8, "twin") == 160
    with pytest.raises(ValueError):
        docsegtr.attention_score_count(2, 2, "dense")


def test_mask_iou_fixture():
    a = np.array([[1, 1], [0, 0]], dtype=np.uint8)
    b = np.array([[1, 0], [1, 0]], dtype=np.uint8)
    assert docsegtr.mask_iou(a, a) == 1.0
    assert docsegtr.mask_iou(a, b) == pytest.approx(1.0 / 3.0, abs=1e-15)


def test_rle_roundtrip():
    mask = np.array([[1, 0], [0, 1]], dtype=np.uint8)
    counts = docsegtr.rle_encode(mask)
    assert counts == [0, 1, 2, 1]
    back = docsegtr.rle_decode(counts, 2, 2)
    assert np.array_equal(back, mask)

    rng = np.random.default_rng(3)
    rand = (rng.random((7, 5)) > 0.5).astype(np.uint8)
    assert np.array_equal(docsegtr.rle_decode(docsegtr.rle_encode(rand), 7, 5), rand)


def test_dynamic_conv_matches_einsum():
    rng = np.random.default_rng(11)
    f = rng.standard_normal((4, 5, 3))
    kernels = rng.standard_normal((2, 2, 3))  # theta=1 -> b = c_mask
    out = docsegtr.dynamic_conv(f, kernels, theta=1)
    want = np.einsum("ywc,ijc->ywij", f, kernels)
    assert out.shape == (4, 5, 2, 2)
    np.testing.assert_allclose(out, want, atol=1e-12)


def test_matrix_nms_duplicate_fixture():
    mask = np.full((2, 2), 0.9)
    out = docsegtr.matrix_nms(
        np.stack([mask, mask]), [1.0, 0.8], [0, 0], sigma=2.0, method="gaussian"
    )
    assert out[0]["score"] == 1.0
    assert out[1]["score"] == pytest.approx(0.8 * math.exp(-0.5), abs=1e-9)


def test_loss_fixtures():
    p = np.full((1, 1, 1), 0.5)
    y = np.ones((1, 1, 1))
    assert docsegtr.focal_loss(p, y) == pytest.approx(0.25 * 0.25 * math.log(2.0), abs=1e-12)
    a = np.array([1.0, 0.0])
    assert docsegtr.dice_loss(a, a) == pytest.approx(0.0, abs=1e-9)
    assert docsegtr.dice_loss(a, np.array([0.0, 1.0])) == pytest.approx(1.0, abs=1e-9)
    assert docsegtr.dice_loss(a, np.array([1.0, 1.0])) == pytest.approx(1.0 / 3.0, abs=1e-9)


def test_lr_schedule():
    assert docsegtr.lr_at(0, 0.005, warmup_iters=100) == pytest.approx(0.005 / 100)
    assert docsegtr.lr_at(99, 0.005, warmup_iters=100) == 0.005
    lr = docsegtr.lr_at(350, 0.005, warmup_iters=100, milestones=[200, 300])
    assert lr == pytest.approx(0.005 * 0.01)


def test_coco_map_perfect():
    mask = np.zeros((8, 8), dtype=np.uint8)
    mask[1:5, 2:7] = 1
    gt = [{"image_id": "a", "instances": [{"class_id": 0, "mask": mask}]}]
    pred = [{"image_id": "a", "instances": [{"class_id": 0, "score": 0.9, "mask": mask}]}]
    report = docsegtr.coco_map(pred, gt)
    assert report["ap"] == pytest.approx(1.0, abs=1e-12)
    assert report["ap50"] == pytest.approx(1.0, abs=1e-12)


def test_generate_sample_deterministic():
    a = docsegtr.generate_sample(height=64, width=64, seed=5, index=2)
    b = docsegtr.generate_sample(height=64, width=64, seed=5, index=2)
    assert a["image"].shape == (3, 64, 64)
    assert np.array_equal(a["image"], b["image"])
    assert len(a["instances"]) >= 2
    names = docsegtr.class_names()
    assert len(names) == 5
    for inst in a["instances"]:
        assert 0 <= inst["class_id"] < len(names)
        assert inst["mask"].shape == (64, 64)
        assert inst["mask"].sum() > 0


def test_model_predict_and_checkpoint(tmp_path):
    model = docsegtr.Model(TINY_CONFIG + "score_thr=0.0\n")
    sample = docsegtr.generate_sample(height=64, width=64, seed=5, index=0)
    instances = model.predict(sample["image"])
    for inst in instances:
        assert 0.0 <= inst["score"] <= 1.0
        assert inst["soft_mask"].shape == (16, 16)

    path = str(tmp_path / "m.dsgt")
    model.save(path)
    back = docsegtr.Model.load(path)
    assert back.config == model.config
    a, b = model.named_params(), back.named_params()
    assert a.keys() == b.keys()
    for name in a:
        np.testing.assert_array_equal(a[name], b[name])

    with pytest.raises(docsegtr.FormatError):
        docsegtr.Model.load(str(tmp_path / "missing.dsgt"))
    with pytest.raises(docsegtr.ConfigError):
        docsegtr.Model("theta=2\n")
