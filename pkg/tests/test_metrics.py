# tests/test_metrics.py

import json
import math

import numpy as np
import pandas as pd
import pytest

from src.dataset.loader import load_dataset
from src.engine.field import FieldConfig, field_init
from src.engine.rendering import RenderConfig
from src.engine.models import HeatmapStack, Joint2D, Skeleton2D
from src.evaluation.evaluator import METRIC_KEYS, EvalReport, evaluate, ground_truth_skeleton, view_pck
from src.evaluation.metrics import mse, psnr, ssim, to_luma
from src.extraction.skeleton_extractor import SkeletonConfig


# --------- Pixel metrics --------- #

def test_mse_examples():
    assert mse(np.zeros((2, 2)), np.zeros((2, 2))) == 0.0
    assert mse([0.0, 1.0], [1.0, 1.0]) == 0.5
    rng = np.random.default_rng(0)
    a, b = rng.random((4, 5, 3)), rng.random((4, 5, 3))
    total = 0.0
    for x, y in zip(a.reshape(-1), b.reshape(-1)):
        total += (x - y) ** 2
    assert mse(a, b) == pytest.approx(total / a.size, abs=1e-15)
    with pytest.raises(ValueError):
        mse(np.zeros(3), np.zeros(4))


def test_psnr_examples():
    a = np.full((4, 4, 3), 0.5)
    assert psnr(a, a) == math.inf
    assert psnr(a, a + 0.1) == pytest.approx(20.0, abs=1e-9)
    rng = np.random.default_rng(1)
    x, y = rng.random((8, 8)), rng.random((8, 8))
    assert psnr(x, y) == psnr(y, x)
    assert psnr(x, y, peak=2.0) == pytest.approx(psnr(x, y) + 20.0 * math.log10(2.0), abs=1e-9)


def test_luma():
    np.testing.assert_allclose(to_luma(np.ones((2, 2, 3))), 1.0, atol=1e-15)
    assert to_luma(np.array([[[1.0, 0.0, 0.0]]]))[0, 0] == pytest.approx(0.299)
    with pytest.raises(ValueError):
        to_luma(np.ones((2, 2, 4)))


def test_ssim_identical_is_one():
    image = np.random.default_rng(2).random((16, 24, 3))
    assert ssim(image, image) == pytest.approx(1.0, abs=1e-12)


def test_ssim_of_constant_images():
    a, b = 0.2, 0.7
    expected = (2 * a * b + 1e-4) / (a * a + b * b + 1e-4)
    assert ssim(np.full((8, 8), a), np.full((8, 8), b)) == pytest.approx(expected, abs=1e-12)


def test_ssim_matches_block_loop():
    rng = np.random.default_rng(3)
    a, b = rng.random((19, 26)), rng.random((19, 26))
    c1, c2 = 1e-4, 9e-4
    scores = []
    for r in range(0, 16, 8):
        for c in range(0, 24, 8):
            x = a[r:r + 8, c:c + 8].ravel()
            y = b[r:r + 8, c:c + 8].ravel()
            mx, my = x.mean(), y.mean()
            vx = ((x - mx) ** 2).mean()
            vy = ((y - my) ** 2).mean()
            cov = ((x - mx) * (y - my)).mean()
            scores.append((2 * mx * my + c1) * (2 * cov + c2) / ((mx * mx + my * my + c1) * (vx + vy + c2)))
    assert ssim(a, b) == pytest.approx(float(np.mean(scores)), abs=1e-12)


def test_ssim_needs_one_full_window():
    with pytest.raises(ValueError):
        ssim(np.zeros((7, 16)), np.zeros((7, 16)))
    assert ssim(np.zeros((4, 4)), np.zeros((4, 4)), window=4) == pytest.approx(1.0)


# --------- Evaluation --------- #

TINY = FieldConfig(trunk_width=8, trunk_depth=2, skip_at=1, head_width=4, K=16, L_x=1, L_d=1)


def test_ground_truth_skeleton_follows_teacher_channels(tiny_dataset_dir):
    dataset = load_dataset(tiny_dataset_dir)
    view = dataset.test_views[0]
    gt = ground_truth_skeleton(dataset.joints3d, view, dataset.bones)
    assert gt.K == 16 and gt.bones == dataset.bones
    for k, joint in enumerate(gt.joints):
        assert joint.present == bool(view.heatmaps.values[k].max() > 0.0)


def test_evaluate_writes_reports(tiny_dataset_dir, tmp_path):
    dataset = load_dataset(tiny_dataset_dir)
    params = field_init(TINY, seed=0)
    report = evaluate(params, dataset, SkeletonConfig(), RenderConfig(eval_samples=4), out_dir=tmp_path)

    assert list(report.per_view["view"]) == ["view_002"]
    assert set(report.means) == set(METRIC_KEYS)
    data = json.loads((tmp_path / "metrics.json").read_text(encoding="utf-8"))
    assert set(data["mean"]) == set(METRIC_KEYS)
    assert set(data["views"]["view_002"]) == set(METRIC_KEYS)
    assert (data["sigma_g"], data["tau"], data["alpha"], data["eval_samples"]) == (1.5, 0.3, 0.1, 4)
    assert list(pd.read_csv(tmp_path / "metrics.csv").columns) == ["view"] + METRIC_KEYS
    assert (tmp_path / "skeletons" / "view_002.json").exists()
    assert 0.0 <= report.means["mse_color"] <= 1.0

    again = evaluate(params, dataset, SkeletonConfig(), RenderConfig(eval_samples=4))
    pd.testing.assert_frame_equal(report.per_view, again.per_view)


def test_evaluate_needs_test_views(tiny_dataset_dir):
    dataset = load_dataset(tiny_dataset_dir)
    dataset.manifest.test.clear()
    with pytest.raises(ValueError, match="no test views"):
        evaluate(field_init(TINY, seed=0), dataset, SkeletonConfig(), RenderConfig(eval_samples=4))


def test_view_pck_is_nan_without_extent():
    def skel(points):
        return Skeleton2D(joints=[
            Joint2D(k=k, u=p[0], v=p[1], confidence=1.0, present=True) if p else Joint2D(k=k)
            for k, p in enumerate(points)
        ])

    pred = skel([(4.0, 4.0), (9.0, 4.0), None])
    assert math.isnan(view_pck(pred, skel([(4.0, 4.0), None, None]), 0.1))
    assert math.isnan(view_pck(pred, skel([(4.0, 4.0), (4.0, 4.0), None]), 0.1))
    assert math.isnan(view_pck(pred, skel([None, None, None]), 0.1))
    assert view_pck(pred, skel([(4.0, 4.0), (9.0, 4.0), (9.0, 16.0)]), 0.1) == pytest.approx(2 / 3)


def test_report_json_turns_nan_into_null():
    per_view = pd.DataFrame(
        [{"view": "a", "psnr": math.inf, "ssim": 1.0, "mse_color": 0.0, "mse_heat": 0.0, "pck": math.nan}],
        columns=["view"] + METRIC_KEYS,
    )
    report = EvalReport(per_view=per_view, means={k: float(per_view[k][0]) for k in METRIC_KEYS})
    data = json.loads(json.dumps(report.to_json(), allow_nan=False))
    assert data["views"]["a"]["pck"] is None and data["views"]["a"]["psnr"] is None
    assert data["mean"]["pck"] is None and data["mean"]["ssim"] == 1.0


def test_evaluate_survives_single_joint_view(tiny_dataset_dir, tmp_path):
    dataset = load_dataset(tiny_dataset_dir)
    view = dataset.test_views[0]
    keep = next(k for k in range(view.heatmaps.K) if view.heatmaps.values[k].max() > 0.0)
    values = np.zeros_like(view.heatmaps.values)
    values[keep] = view.heatmaps.values[keep]
    view.heatmaps = HeatmapStack(values)

    report = evaluate(field_init(TINY, seed=0), dataset, SkeletonConfig(), RenderConfig(eval_samples=4), out_dir=tmp_path)
    assert math.isnan(report.means["pck"])
    text = (tmp_path / "metrics.json").read_text(encoding="utf-8")
    assert "NaN" not in text
    data = json.loads(text)
    assert data["views"]["view_002"]["pck"] is None and data["mean"]["pck"] is None
    assert data["mean"]["mse_heat"] is not None
