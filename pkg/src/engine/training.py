# src/engine/training.py

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Mapping, Optional

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field

from src.autodiff.checkpoint import save_checkpoint
from src.autodiff.tensor import ShapeError, add, backward, mul, squared_error
from src.geometry.camera import pixel_directions
from src.utils.errors import DatasetError

from .field import FieldConfig, FieldParams, field_init
from .models import LossTerms, RenderedBatch
from .rendering import render_rays

logger = logging.getLogger(__name__)

# total_mean averages the batch totals since the previous row
LOG_COLUMNS = ["iter", "l_c", "l_h", "total", "total_mean"]


class TrainingDivergedError(RuntimeError):
    """
    Loss became NaN or infinite.
    """


class TrainConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    lambda_h: float = Field(0.5, ge=0.0)
    lr: float = Field(5e-4, gt=0.0)
    beta1: float = Field(0.9, ge=0.0, lt=1.0)
    beta2: float = Field(0.999, ge=0.0, lt=1.0)
    eps: float = Field(1e-8, gt=0.0)
    iters: int = Field(2000, ge=1)
    rays_per_batch: int = Field(512, ge=1)
    n_samples: int = Field(64, ge=1)
    seed: int = 0
    log_every: int = Field(100, ge=1)
    checkpoint_every: int = Field(1000, ge=1)


# --------- Loss --------- #

def loss(pred: RenderedBatch, gt_color, teacher_heat, lambda_h: float) -> LossTerms:
    """
    l = l_c + lambda_h * l_h, both mean squared errors over the batch.
    """
    gt_color = np.asarray(gt_color, dtype=np.float64)
    teacher_heat = np.asarray(teacher_heat, dtype=np.float64)
    if pred.color.shape != gt_color.shape:
        raise ShapeError(f"loss: predicted colours {pred.color.shape} vs targets {gt_color.shape}")
    if pred.heat.shape != teacher_heat.shape:
        raise ShapeError(f"loss: predicted heat {pred.heat.shape} vs teacher {teacher_heat.shape}")

    l_c = squared_error(pred.color, gt_color)
    l_h = squared_error(pred.heat, teacher_heat)
    total = add(l_c, mul(l_h, float(lambda_h)))
    return LossTerms(l_c=l_c.item(), l_h=l_h.item(), total=total.item(), tensor=total)


# --------- Adam --------- #

@dataclass
class AdamState:
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0


def adam_step(
    params: Mapping[str, np.ndarray],
    grads: Mapping[str, np.ndarray],
    state: AdamState,
    t: int,
    hyper: TrainConfig,
) -> None:
    """
    One bias-corrected Adam update; params and state are modified in place.
    """
    if t < 1:
        raise ValueError(f"Adam step index must be >= 1, got {t}")
    bc1 = 1.0 - hyper.beta1 ** t
    bc2 = 1.0 - hyper.beta2 ** t

    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ShapeError(f"adam_step: gradient {g.shape} for parameter {name!r} {p.shape}")
        if name not in state.m:
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)

        state.m[name] *= hyper.beta1
        state.m[name] += (1.0 - hyper.beta1) * g
        state.v[name] *= hyper.beta2
        state.v[name] += (1.0 - hyper.beta2) * (g * g)

        m_hat = state.m[name] / bc1
        v_hat = state.v[name] / bc2
        p -= hyper.lr * m_hat / (np.sqrt(v_hat) + hyper.eps)
    state.t = t


# --------- Ray pool --------- #

class RayPool:
    """
    Every (view, pixel) of the training views with its ray and targets.
    """

    def __init__(self, views) -> None:
        origins: List[np.ndarray] = []
        dirs: List[np.ndarray] = []
        colors: List[np.ndarray] = []
        heats: List[np.ndarray] = []
        near, far = [], []
        for view in views:
            cam = view.camera
            vs, us = np.meshgrid(np.arange(cam.height), np.arange(cam.width), indexing="ij")
            d = pixel_directions(cam, us.reshape(-1), vs.reshape(-1))
            dirs.append(d)
            origins.append(np.broadcast_to(cam.center, d.shape))
            colors.append(view.image.reshape(-1, 3))
            heats.append(view.heatmaps.values.reshape(view.heatmaps.K, -1).T)
            near.append(cam.near)
            far.append(cam.far)

        self.origins = np.concatenate(origins)
        self.dirs = np.concatenate(dirs)
        self.colors = np.concatenate(colors)
        self.heats = np.concatenate(heats)
        # one shared depth range keeps the sampler a single batched call
        self.near = float(min(near))
        self.far = float(max(far))

    def __len__(self) -> int:
        return self.dirs.shape[0]


@dataclass
class TrainResult:
    params: FieldParams
    log: pd.DataFrame
    checkpoint: Optional[Path] = None


def _check_trainable(dataset, field_cfg: FieldConfig) -> None:
    views = dataset.train_views
    if not views:
        raise DatasetError("dataset has no training views")
    for view in views:
        if view.heatmaps is None:
            raise DatasetError(f"training view {view.name!r} has no teacher heatmaps")
        if view.image is None:
            raise DatasetError(f"training view {view.name!r} has no image")
        if view.heatmaps.K != field_cfg.K:
            raise DatasetError(f"view {view.name!r} has {view.heatmaps.K} heat channels, field expects K={field_cfg.K}")
    src_cam, fm = dataset.source
    if fm is None:
        raise DatasetError(f"source view {src_cam.name!r} has no feature map")
    if fm.dim != field_cfg.F_dim:
        raise DatasetError(f"feature maps have {fm.dim} channels, field expects F_dim={field_cfg.F_dim}")


def train(
    dataset,
    field_cfg: FieldConfig,
    train_cfg: TrainConfig,
    out_dir: Optional[Path] = None,
    init_params: Optional[FieldParams] = None,
) -> TrainResult:
    """
    Distillation loop: random ray batches from the training views, combined
    colour + heatmap loss, Adam. Deterministic for a fixed seed.
    """
    _check_trainable(dataset, field_cfg)
    params = init_params if init_params is not None else field_init(field_cfg, train_cfg.seed)
    pool = RayPool(dataset.train_views)
    source = dataset.source

    batch_seq, jitter_seq = np.random.SeedSequence(train_cfg.seed).spawn(2)
    batch_rng = np.random.default_rng(batch_seq)
    jitter_rng = np.random.default_rng(jitter_seq)
    state = AdamState()
    rows: List[Dict[str, float]] = []
    out = Path(out_dir) if out_dir is not None else None
    checkpoint: Optional[Path] = None
    window: List[float] = []

    logger.info(
        "training %d parameters on %d rays from %d view(s)",
        params.count(), len(pool), len(dataset.train_views),
    )
    for it in range(1, train_cfg.iters + 1):
        idx = batch_rng.integers(0, len(pool), size=train_cfg.rays_per_batch)
        params.zero_grad()
        pred = render_rays(
            params, pool.origins[idx], pool.dirs[idx], pool.near, pool.far,
            field_cfg, source, train_cfg.n_samples, jitter=True, rng=jitter_rng,
        )
        terms = loss(pred, pool.colors[idx], pool.heats[idx], train_cfg.lambda_h)
        if not np.isfinite(terms.total):
            raise TrainingDivergedError(f"non-finite loss at iteration {it}: {terms}")

        window.append(terms.total)
        backward(terms.tensor)
        adam_step(params.arrays(), params.grads(), state, it, train_cfg)

        if it % train_cfg.log_every == 0 or it == train_cfg.iters:
            total_mean = float(np.mean(window))
            window.clear()
            rows.append({"iter": it, "l_c": terms.l_c, "l_h": terms.l_h, "total": terms.total, "total_mean": total_mean})
            logger.info(
                "iter %d  l_c=%.6f  l_h=%.6f  total=%.6f  mean=%.6f", it, terms.l_c, terms.l_h, terms.total, total_mean,
            )
        if out is not None and (it % train_cfg.checkpoint_every == 0 or it == train_cfg.iters):
            checkpoint = save_checkpoint(out / f"ckpt_{it:06d}.hfnerf", params.tensors)
            logger.info("checkpoint written: %s", checkpoint)

    log = pd.DataFrame(rows, columns=LOG_COLUMNS)
    if out is not None:
        log.to_csv(out / "metrics.csv", index=False)
        checkpoint = save_checkpoint(out / "final.hfnerf", params.tensors)
    return TrainResult(params=params, log=log, checkpoint=checkpoint)
