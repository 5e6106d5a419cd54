# src/evaluation/evaluator.py

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from src.dataset.loader import Dataset, View
from src.dataset.synthetic import project_joints
from src.engine.field import FieldParams
from src.engine.models import HeatmapStack, Joint2D, Skeleton2D
from src.engine.rendering import RenderConfig, render_image
from src.extraction.skeleton_extractor import (
    SkeletonConfig,
    extract_skeleton,
    pck,
    reference_scale,
    save_skeleton_json,
    skeleton_to_json,
)

from .metrics import mse, psnr, ssim

logger = logging.getLogger(__name__)

METRIC_KEYS = ["psnr", "ssim", "mse_color", "mse_heat", "pck"]


def ground_truth_skeleton(
    joints3d: np.ndarray,
    view: View,
    bones: Sequence[Tuple[int, int]],
) -> Skeleton2D:
    """
    Projected 3D joints; a joint counts as present when it lands on the image
    and (if the view has one) its teacher channel is not empty.
    """
    u, v, on_image = project_joints(joints3d, view.camera)
    joints = []
    for k in range(len(joints3d)):
        present = bool(on_image[k])
        if present and view.heatmaps is not None:
            present = bool(view.heatmaps.values[k].max() > 0.0)
        if present:
            joints.append(Joint2D(k=k, u=float(u[k]), v=float(v[k]), confidence=1.0, present=True))
        else:
            joints.append(Joint2D(k=k))
    return Skeleton2D(joints=joints, bones=list(bones))


def view_pck(pred: Skeleton2D, gt: Skeleton2D, alpha: float) -> float:
    """
    PCK for one view, NaN when the ground truth has no extent (no present
    joints, or all of them on one point).
    """
    scale = reference_scale(gt)
    if scale <= 0:
        logger.warning("skipping PCK: ground-truth skeleton has reference scale %.3f", scale)
        return math.nan
    return pck(pred, gt, alpha, ref_scale=scale)


def mean_over_views(column: pd.Series) -> float:
    values = column.to_numpy(dtype=np.float64)
    values = values[~np.isnan(values)]
    return float(values.mean()) if len(values) else math.nan


def finite_or_none(value) -> Optional[float]:
    value = float(value)
    return value if math.isfinite(value) else None


@dataclass
class EvalReport:
    per_view: pd.DataFrame
    means: Dict[str, float]
    settings: Dict[str, float] = field(default_factory=dict)

    def to_json(self) -> Dict:
        """
        Report as plain JSON values; NaN and infinite metrics become null.
        """
        views = {
            row["view"]: {k: finite_or_none(row[k]) for k in METRIC_KEYS}
            for _, row in self.per_view.iterrows()
        }
        means = {k: finite_or_none(v) for k, v in self.means.items()}
        return {"views": views, "mean": means, **self.settings}


def evaluate_view(
    params: FieldParams,
    dataset: Dataset,
    view: View,
    skeleton_cfg: SkeletonConfig,
    render_cfg: RenderConfig,
) -> Tuple[Dict[str, float], HeatmapStack, Skeleton2D]:
    image, heat, _ = render_image(
        params, view.camera, params.cfg, dataset.source,
        n_samples=render_cfg.eval_samples, chunk=render_cfg.chunk, workers=render_cfg.workers,
    )
    pred = extract_skeleton(heat, dataset.bones, skeleton_cfg.sigma_g, skeleton_cfg.tau)
    gt = ground_truth_skeleton(dataset.joints3d, view, dataset.bones)
    row = {
        "psnr": psnr(image, view.image),
        "ssim": ssim(image, view.image),
        "mse_color": mse(image, view.image),
        "mse_heat": mse(heat.values, view.heatmaps.values) if view.heatmaps is not None else math.nan,
        "pck": view_pck(pred, gt, skeleton_cfg.alpha),
    }
    return row, heat, pred


def evaluate(
    params: FieldParams,
    dataset: Dataset,
    skeleton_cfg: SkeletonConfig,
    render_cfg: RenderConfig,
    out_dir: Optional[Path] = None,
) -> EvalReport:
    """
    Render every test view and score colour, heatmaps and skeletons.
    """
    views = dataset.test_views
    if not views:
        raise ValueError("dataset has no test views to evaluate")

    rows = []
    for view in views:
        row, _, pred = evaluate_view(params, dataset, view, skeleton_cfg, render_cfg)
        rows.append({"view": view.name, **row})
        logger.info("%s: %s", view.name, ", ".join(f"{k}={row[k]:.4f}" for k in METRIC_KEYS))
        if out_dir is not None:
            save_skeleton_json(
                Path(out_dir) / "skeletons" / f"{view.name}.json",
                skeleton_to_json(pred, skeleton_cfg.sigma_g, skeleton_cfg.tau, dataset.manifest.joint_names),
            )

    per_view = pd.DataFrame(rows, columns=["view"] + METRIC_KEYS)
    means = {k: mean_over_views(per_view[k]) for k in METRIC_KEYS}
    settings = {
        "sigma_g": skeleton_cfg.sigma_g,
        "tau": skeleton_cfg.tau,
        "alpha": skeleton_cfg.alpha,
        "eval_samples": render_cfg.eval_samples,
    }
    report = EvalReport(per_view=per_view, means=means, settings=settings)

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        text = json.dumps(report.to_json(), indent=2, allow_nan=False)
        (out / "metrics.json").write_text(text + "\n", encoding="utf-8")
        per_view.to_csv(out / "metrics.csv", index=False)
    return report
