# src/engine/rendering.py

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from src.autodiff.tensor import (
    DiffTensor,
    ShapeError,
    add,
    as_tensor,
    concat,
    exp,
    matmul,
    mul,
    neg,
    no_grad,
    reshape,
    sigmoid,
    sum as tsum,
)
from src.encoding.features import FeatureMap, point_features
from src.encoding.positional import positional_encode
from src.geometry.camera import Camera, Ray, pixel_directions, stratified_depths

from .field import FieldConfig, FieldParams, field_forward
from .models import EncodedPoint, FieldOutput, HeatmapStack, RenderedBatch, RenderedPixel

logger = logging.getLogger(__name__)

FieldFn = Callable[[FieldParams, EncodedPoint], FieldOutput]
Source = Tuple[Camera, FeatureMap]


class RenderConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    eval_samples: int = Field(96, ge=1)
    chunk: int = Field(1024, ge=1)
    workers: int = Field(1, ge=1)


# --------- Compositing --------- #

def composite_weights(sigmas, deltas) -> DiffTensor:
    """
    w_i = T_i * alpha_i with alpha_i = 1 - exp(-sigma_i delta_i) and
    T_i = exp(-sum_{j<i} sigma_j delta_j). Inputs shaped (R, n).
    """
    sigmas, deltas = as_tensor(sigmas), as_tensor(deltas)
    if sigmas.values.ndim != 2 or sigmas.shape != deltas.shape:
        raise ShapeError(f"composite: sigmas {sigmas.shape} and deltas {deltas.shape} do not conform")
    if np.any(sigmas.values < 0):
        raise ValueError("composite: densities must be non-negative")
    if np.any(deltas.values < 0):
        raise ValueError("composite: sample spacings must be non-negative")
    if not (np.all(np.isfinite(sigmas.values)) and np.all(np.isfinite(deltas.values))):
        raise ValueError("composite: densities and spacings must be finite")

    n = sigmas.shape[1]
    optical = mul(sigmas, deltas)
    # exclusive prefix sum along the ray
    prefix = np.triu(np.ones((n, n)), k=1)
    transmittance = exp(neg(matmul(optical, prefix)))
    alpha = add(1.0, neg(exp(neg(optical))))
    return mul(transmittance, alpha)


def accumulate(weights: DiffTensor, values) -> DiffTensor:
    """
    sum_i w_i * values_i; weights (R, n), values (R, n, M) -> (R, M).
    """
    values = as_tensor(values)
    R, n = weights.shape
    if values.values.ndim != 3 or values.shape[:2] != (R, n):
        raise ShapeError(f"composite: weights {weights.shape} and values {values.shape} do not conform")
    return tsum(mul(reshape(weights, (R, n, 1)), values), axis=1)


def composite(sigmas, deltas, values) -> Tuple[DiffTensor, DiffTensor, DiffTensor]:
    """
    Alpha-composite per-sample values. Accepts a single ray ((n,), (n,), (n, M))
    or a batch ((R, n), (R, n), (R, n, M)). Returns (out, opacity, weights).
    """
    sigmas, deltas, values = as_tensor(sigmas), as_tensor(deltas), as_tensor(values)
    single = sigmas.values.ndim == 1
    if single:
        n = sigmas.shape[0]
        if values.values.ndim != 2:
            raise ShapeError(f"composite: values {values.shape} must be (n, M) for a single ray")
        sigmas = reshape(sigmas, (1, n))
        deltas = reshape(deltas, (1, n))
        values = reshape(values, (1,) + values.shape)

    weights = composite_weights(sigmas, deltas)
    out = accumulate(weights, values)
    opacity = tsum(weights, axis=1)
    if single:
        return reshape(out, out.shape[1:]), reshape(opacity, ()), reshape(weights, weights.shape[1:])
    return out, opacity, weights


# --------- Ray rendering --------- #

def encode_samples(points: np.ndarray, dirs: np.ndarray, cfg: FieldConfig, source: Source) -> EncodedPoint:
    cam, fm = source
    return EncodedPoint(
        gamma_x=positional_encode(points, cfg.L_x),
        gamma_d=positional_encode(dirs, cfg.L_d),
        feature=point_features(points, cam, fm),
    )


def render_rays(
    params: FieldParams,
    origins: np.ndarray,
    dirs: np.ndarray,
    near: float,
    far: float,
    cfg: FieldConfig,
    source: Source,
    n_samples: int,
    jitter: bool = False,
    rng: Optional[np.random.Generator] = None,
    field_fn: FieldFn = field_forward,
) -> RenderedBatch:
    """
    Differentiable render of a ray batch. Colour is composited over white,
    heat channels (sigmoid per sample, same weights) over zero.
    """
    origins = np.asarray(origins, dtype=np.float64).reshape(-1, 3)
    dirs = np.asarray(dirs, dtype=np.float64).reshape(-1, 3)
    R = dirs.shape[0]
    if origins.shape[0] == 1 and R > 1:
        origins = np.broadcast_to(origins, dirs.shape)

    t, delta = stratified_depths(near, far, R, n_samples, jitter, rng)
    points = origins[:, None, :] + t[..., None] * dirs[:, None, :]
    sample_dirs = np.broadcast_to(dirs[:, None, :], points.shape)
    enc = encode_samples(points.reshape(-1, 3), sample_dirs.reshape(-1, 3), cfg, source)
    out = field_fn(params, enc)

    weights = composite_weights(reshape(out.sigma, (R, n_samples)), delta)
    opacity = tsum(weights, axis=1)
    color = accumulate(weights, reshape(out.color, (R, n_samples, 3)))
    background = reshape(add(1.0, neg(opacity)), (R, 1))
    color = add(color, background)
    K = out.heatmap_logits.shape[1]
    heat = accumulate(weights, reshape(sigmoid(out.heatmap_logits), (R, n_samples, K)))
    return RenderedBatch(color=color, heat=heat, opacity=opacity)


def render_ray(
    params: FieldParams,
    ray: Ray,
    cfg: FieldConfig,
    source: Source,
    n_samples: int = 96,
    jitter: bool = False,
    seed: int = 0,
    field_fn: FieldFn = field_forward,
) -> RenderedPixel:
    rng = np.random.default_rng(seed) if jitter else None
    with no_grad():
        batch = render_rays(
            params, ray.origin[None, :], ray.direction[None, :], ray.near, ray.far,
            cfg, source, n_samples, jitter=jitter, rng=rng, field_fn=field_fn,
        )
    return batch.pixel(0)


def render_image(
    params: FieldParams,
    cam: Camera,
    cfg: FieldConfig,
    source: Source,
    n_samples: int = 96,
    chunk: int = 1024,
    workers: int = 1,
    field_fn: FieldFn = field_forward,
) -> Tuple[np.ndarray, HeatmapStack, np.ndarray]:
    """
    Evaluation render of every pixel (row-major, no jitter).
    Returns (rgb (H, W, 3), heatmaps (K, H, W), opacity (H, W)).
    """
    vs, us = np.meshgrid(np.arange(cam.height), np.arange(cam.width), indexing="ij")
    dirs = pixel_directions(cam, us.reshape(-1), vs.reshape(-1))
    origin = cam.center[None, :]
    starts = list(range(0, dirs.shape[0], chunk))

    def render_chunk(start: int) -> RenderedBatch:
        with no_grad():
            return render_rays(
                params, origin, dirs[start:start + chunk], cam.near, cam.far,
                cfg, source, n_samples, jitter=False, field_fn=field_fn,
            )

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            batches = list(pool.map(render_chunk, starts))
    else:
        batches = [render_chunk(s) for s in starts]

    color = np.concatenate([b.color.values for b in batches], axis=0)
    heat = np.concatenate([b.heat.values for b in batches], axis=0)
    opacity = np.concatenate([b.opacity.values for b in batches], axis=0)
    H, W = cam.height, cam.width
    image = np.clip(color, 0.0, 1.0).reshape(H, W, 3)
    heatmaps = HeatmapStack(np.clip(heat, 0.0, 1.0).T.reshape(-1, H, W))
    logger.debug("rendered %dx%d image in %d chunk(s)", W, H, len(starts))
    return image, heatmaps, np.clip(opacity, 0.0, 1.0).reshape(H, W)
