import math

import numpy as np
import pytest

import tsfm


def test_metric_examples():
    assert tsfm.auroc([0, 0, 1, 1], [0.1, 0.4, 0.35, 0.8]) == 0.75
    assert tsfm.cohens_kappa([0, 0, 1, 1], [0, 1, 1, 1]) == 0.5
    assert tsfm.weighted_f1([0, 0, 1], [0, 1, 1]) == pytest.approx(2 / 3, abs=1e-15)
    assert tsfm.auc_pr([0, 0, 1, 1], [0.1, 0.4, 0.35, 0.8]) == pytest.approx(5 / 6, abs=1e-15)
    assert tsfm.balanced_accuracy(np.array([0, 0, 1, 1]), np.array([0, 1, 1, 1])) == 0.75


def test_auroc_matches_sklearn():
    sklearn_metrics = pytest.importorskip("sklearn.metrics")
    rng = np.random.default_rng(0)
    for _ in range(20):
        y = rng.integers(0, 2, 50)
        y[:2] = [0, 1]
        s = np.round(rng.random(50), 1)
        assert tsfm.auroc(y, s) == pytest.approx(sklearn_metrics.roc_auc_score(y, s), abs=1e-12)
        assert tsfm.auc_pr(y, s) == pytest.approx(sklearn_metrics.average_precision_score(y, s), abs=1e-12)


def test_compute_metric_two_class_uses_class_one():
    y = np.array([0, 1, 1, 0])
    p1 = np.array([0.2, 0.9, 0.6, 0.4])
    scores = np.stack([1 - p1, p1], axis=1)
    assert tsfm.compute_metric("auroc", y, scores) == tsfm.auroc(y, p1)


def test_signal_ops():
    t = np.arange(1000) / 100.0
    x = np.sin(2 * np.pi * 5 * t)
    y = tsfm.lowpass_filter(x, 100.0)
    assert y.shape == x.shape
    assert np.abs(y[200:800] - x[200:800]).max() < 0.05
    up = tsfm.resample(x, 100.0, 200.0)
    assert up.shape == (2000,)
    back = tsfm.resample(up, 200.0, 100.0)
    assert np.sqrt(np.mean((back - x) ** 2)) / np.sqrt(np.mean(x**2)) < 0.01


def test_losses_and_schedule():
    z = np.tile([1.0, 2.0, -1.0], (8, 1))
    assert tsfm.info_nce(z, z, 0.1) == pytest.approx(math.log(8), abs=1e-6)
    assert tsfm.cosine_warmup_lr(0, 100, 0.2, 1e-3) == 0.0
    assert tsfm.cosine_warmup_lr(20, 100, 0.2, 1e-3) == pytest.approx(1e-3, abs=1e-15)


def test_gen_synthetic_deterministic():
    spec = {"n_subjects": 3, "samples_per_subject": 2, "channels": 2, "length": 100, "sample_rate_hz": 100.0, "seed": 4}
    a, b = tsfm.gen_synthetic(spec), tsfm.gen_synthetic(spec)
    assert a["data"].shape == (6, 2, 100)
    np.testing.assert_array_equal(a["data"], b["data"])
    assert len(set(a["subject_ids"])) == 3


@pytest.mark.parametrize("kind, width", [("mantis", 2 * 32), ("cbramod", 2 * 5 * 40)])
def test_encoder_shapes_and_determinism(kind, width):
    enc = tsfm.Encoder(kind, "mini", seed=1)
    x = tsfm.gen_synthetic({"n_subjects": 1, "samples_per_subject": 3, "length": 200})["data"]
    z = enc.encode(x)
    assert z.shape == (3, width) == (3, enc.feature_dim(2, 200))
    np.testing.assert_array_equal(z, enc.encode(x))
    assert enc.kind == kind
    assert enc.num_parameters > 0


def test_errors_map_to_python_exceptions():
    with pytest.raises(tsfm.ConfigError):
        tsfm.Encoder("resnet")
    with pytest.raises(tsfm.DimensionError):
        tsfm.Encoder("mantis").encode(np.zeros((2, 3)))
    with pytest.raises(tsfm.Error):
        tsfm.auroc([1, 1], [0.1, 0.2])


def test_gradcheck_training_harness():
    results = tsfm.gradcheck("training-harness", 1)
    assert results and all(r["passed"] for r in results)


def test_cli_usage_error():
    assert tsfm.run_cli(["frobnicate"]) == 1
