import numpy as np
import pytest

import gavs


def tiny_config():
    cfg = gavs.default_config()
    cfg["encoder"].update(image_size=16, patch_size=2, d_v=16, n_layers=1, n_heads=2, d_m=8, audio_hidden=16)
    cfg["sap"]["cue_hidden"] = 8
    cfg["decoder"].update(n_layers=1, n_heads=2, mlp_dim=32, cola_rank=4, attn_adapter_rank=4)
    cfg["data"].update(image_size=16, num_classes=4, num_scenes=40, seed=5)
    cfg["split"].update(num_unseen=1, seen_test=5)
    cfg["train"].update(steps=3, batch_size=4, pretrain=False)
    return cfg


@pytest.fixture(scope="module")
def data():
    cfg = tiny_config()
    ds = gavs.generate_dataset(cfg)
    return cfg, ds, gavs.make_split(ds, cfg)


def test_dataset_and_split(data):
    cfg, ds, split = data
    assert len(ds) == 40
    assert ds.frame(0).shape == (16, 16, 3)
    assert ds.mask(0).shape == (ds.mask_size, ds.mask_size)
    assert ds.audio(0).shape == (ds.audio_dim,)
    assert not set(split.train) & set(split.test)
    assert not set(split.train) & set(split.seen_test)
    assert gavs.generate_dataset(cfg).ids == ds.ids


def test_metrics_match_hand_values():
    pred = np.array([[1, 1], [0, 0]], dtype=np.uint8)
    gt = np.array([[0, 1], [0, 1]], dtype=np.uint8)
    assert gavs.mask_iou(pred, gt) == pytest.approx(1 / 3)
    assert gavs.miou([pred, gt], [gt, gt]) == pytest.approx((1 / 3 + 1) / 2)
    assert gavs.fscore([gt], [gt]) == pytest.approx(1.0)
    assert gavs.mask_iou(np.zeros((2, 2)), np.zeros((2, 2))) == 1.0


def test_train_eval_and_checkpoint(data, tmp_path):
    cfg, ds, split = data
    model = gavs.Model(cfg)
    assert "decoder.pos" in model.parameter_names
    assert not any(n.startswith("encoder.visual.patch") for n in model.trainable_names)
    log = gavs.train(model, ds, split.train)
    assert len(log) == 3 and all(np.isfinite(r["loss"]) for r in log)

    report = gavs.evaluate(model, ds, split.seen_test)
    assert 0.0 <= report["miou"] <= 1.0
    assert len(report["per_sample"]) == len(split.seen_test)

    probs = model.predict(ds, split.seen_test[:2])
    assert probs.shape == (2, ds.mask_size, ds.mask_size)
    assert ((probs >= 0) & (probs <= 1)).all()

    path = tmp_path / "m.ckpt"
    model.save(path)
    back = gavs.load_checkpoint(path)
    np.testing.assert_array_equal(back.predict(ds, split.seen_test[:2]), probs)


def test_forward_shapes_and_errors(data):
    cfg, ds, _ = data
    model = gavs.Model(cfg)
    frames = np.random.default_rng(0).random((2, 3, 16, 16))
    audio = np.zeros((2, ds.audio_dim))
    assert model.forward(frames, audio).shape == (2, ds.mask_size, ds.mask_size)
    with pytest.raises(ValueError):
        model.forward(frames[:, :, :8], audio)
    bad = tiny_config()
    bad["train"]["stepz"] = 1
    with pytest.raises(ValueError):
        gavs.Model(bad)


def test_gradcheck_ops():
    results = gavs.gradcheck(seed=7, ops_only=True)
    assert results and all(r["passed"] for r in results)
