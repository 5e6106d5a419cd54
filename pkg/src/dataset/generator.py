# src/dataset/generator.py

from __future__ import annotations

import logging
from pathlib import Path
from typing import Optional, Union

import numpy as np

from src.encoding.features import builtin_pyramid_encoder, save_feature_map
from src.engine.models import HeatmapStack
from src.geometry.camera import Camera

from .formats import load_image, save_heatmaps, save_image
from .manifest import MANIFEST_NAME, CameraModel, DatasetManifest, ViewEntry, write_manifest
from .synthetic import (
    Scene,
    SkeletonTable,
    build_ring_rig,
    generate_scene,
    joint_visibility,
    render_ground_truth,
    teacher_heatmaps,
)

logger = logging.getLogger(__name__)


def default_sigma_h(size: int) -> float:
    """
    2 px at 64x64, scaled with resolution.
    """
    return 2.0 * size / 64.0


def nearest_pixel(x):
    """
    Index of the grid point closest to x; exact halves go to the lower index,
    the same way argmax breaks ties.
    """
    return np.ceil(np.asarray(x, dtype=np.float64) - 0.5).astype(int)


def check_teacher_peaks(scene: Scene, cam: Camera, stack: HeatmapStack, occlusion_cull: bool = False) -> None:
    """
    Every in-view channel must peak at the rounded projection of its joint.
    """
    u, v, visible = joint_visibility(scene, cam, occlusion_cull)
    for k in np.flatnonzero(visible):
        peak_v, peak_u = np.unravel_index(int(np.argmax(stack.values[k])), stack.values[k].shape)
        if (peak_u, peak_v) != (int(nearest_pixel(u[k])), int(nearest_pixel(v[k]))):
            raise RuntimeError(
                f"teacher peak for joint {k} at ({peak_u}, {peak_v}), projection ({u[k]:.3f}, {v[k]:.3f})"
            )


def generate_dataset(
    seed: int,
    n_train_views: int,
    n_test_views: int,
    size: int,
    out_dir: Union[str, Path],
    sigma_h: Optional[float] = None,
    image_format: str = "png",
    occlusion_cull: bool = False,
    table: Optional[SkeletonTable] = None,
) -> DatasetManifest:
    """
    Write a synthetic multi-view scene: images, teacher heatmaps, built-in
    encoder feature maps and manifest.json. No timestamps enter any file.
    """
    if n_train_views < 1:
        raise ValueError(f"need at least one training view, got {n_train_views}")
    if n_test_views < 0 or size < 1:
        raise ValueError(f"invalid rig: {n_test_views} test views at size {size}")
    if image_format not in ("png", "ppm"):
        raise ValueError(f"image format must be png or ppm, got {image_format!r}")

    out = Path(out_dir)
    table = table or SkeletonTable()
    scene = generate_scene(seed, K=table.K, table=table)
    sigma = default_sigma_h(size) if sigma_h is None else float(sigma_h)

    entries = []
    for name, split, cam in build_ring_rig(n_train_views, n_test_views, size):
        image_rel = f"images/{name}.{image_format}"
        heat_rel = f"heatmaps/{name}.hfheat"
        feat_rel = f"features/{name}.hffeat"

        image_path = save_image(out / image_rel, render_ground_truth(scene, cam))
        stack = teacher_heatmaps(scene, cam, sigma, occlusion_cull=occlusion_cull)
        check_teacher_peaks(scene, cam, stack, occlusion_cull)
        save_heatmaps(out / heat_rel, stack)
        # encode what was written, so re-encoding the stored image reproduces the map
        save_feature_map(out / feat_rel, builtin_pyramid_encoder(load_image(image_path), source_view=name))

        entries.append(
            ViewEntry(
                name=name,
                split=split,
                camera=CameraModel.from_camera(cam),
                image=image_rel,
                features=feat_rel,
                heatmaps=heat_rel,
            )
        )
        logger.info("generated %s (%s)", name, split)

    manifest = DatasetManifest(
        scene_id=f"capsule-figure-{seed}",
        seed=seed,
        K=scene.K,
        width=size,
        height=size,
        sigma_h=sigma,
        occlusion_cull=occlusion_cull,
        source_view=0,
        joint_names=scene.joint_names,
        bones=scene.bones,
        joints3d=scene.joints3d.tolist(),
        views=entries,
        train=[i for i, e in enumerate(entries) if e.split == "train"],
        test=[i for i, e in enumerate(entries) if e.split == "test"],
    )
    write_manifest(out / MANIFEST_NAME, manifest)
    return manifest
