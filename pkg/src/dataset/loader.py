# src/dataset/loader.py

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np

from src.encoding.features import FeatureMap, load_feature_map
from src.engine.models import HeatmapStack
from src.geometry.camera import Camera
from src.utils.errors import DatasetError

from .formats import load_heatmaps, load_image
from .manifest import DatasetManifest, read_manifest

logger = logging.getLogger(__name__)


@dataclass
class View:
    name: str
    split: str
    camera: Camera
    image: np.ndarray
    heatmaps: Optional[HeatmapStack] = None
    features: Optional[FeatureMap] = None


@dataclass
class Dataset:
    manifest: DatasetManifest
    root: Path
    views: List[View] = field(default_factory=list)

    @property
    def K(self) -> int:
        return self.manifest.K

    @property
    def bones(self) -> List[Tuple[int, int]]:
        return [(int(a), int(b)) for a, b in self.manifest.bones]

    @property
    def joints3d(self) -> np.ndarray:
        return np.asarray(self.manifest.joints3d, dtype=np.float64)

    @property
    def train_views(self) -> List[View]:
        return [self.views[i] for i in self.manifest.train]

    @property
    def test_views(self) -> List[View]:
        return [self.views[i] for i in self.manifest.test]

    @property
    def source(self) -> Tuple[Camera, Optional[FeatureMap]]:
        view = self.views[self.manifest.source_view]
        return view.camera, view.features

    def view(self, key: Union[int, str]) -> View:
        if isinstance(key, int) or (isinstance(key, str) and key.isdigit()):
            idx = int(key)
            if not 0 <= idx < len(self.views):
                raise DatasetError(f"view index {idx} outside 0..{len(self.views) - 1}")
            return self.views[idx]
        for v in self.views:
            if v.name == key:
                return v
        raise DatasetError(f"no view named {key!r}")


def _resolve(root: Path, rel: str) -> Path:
    path = root / rel
    if not path.exists():
        raise FileNotFoundError(f"Referenced file not found: {path}")
    return path


def load_dataset(manifest_path: Union[str, Path], features_dir: Union[str, Path, None] = None) -> Dataset:
    """
    Load every view and validate sizes, K and value ranges against the manifest.
    `features_dir` swaps in externally computed feature maps (<view name>.hffeat).
    """
    manifest_file = Path(manifest_path)
    manifest = read_manifest(manifest_file)
    root = manifest_file if manifest_file.is_dir() else manifest_file.parent
    dataset = Dataset(manifest=manifest, root=root)

    feature_dims = set()
    for entry in manifest.views:
        cam = entry.camera.to_camera(name=entry.name)
        if (cam.width, cam.height) != (manifest.width, manifest.height):
            raise DatasetError(f"view {entry.name}: camera is {cam.width}x{cam.height}, manifest says {manifest.width}x{manifest.height}")

        image_path = _resolve(root, entry.image)
        image = load_image(image_path)
        if image.shape[:2] != (manifest.height, manifest.width):
            raise DatasetError(f"{image_path}: image is {image.shape[1]}x{image.shape[0]}, manifest says {manifest.width}x{manifest.height}")

        heatmaps = None
        if entry.heatmaps is not None:
            heat_path = _resolve(root, entry.heatmaps)
            heatmaps = load_heatmaps(heat_path)
            if heatmaps.K != manifest.K:
                raise DatasetError(f"{heat_path}: {heatmaps.K} channels, manifest K={manifest.K}")
            if (heatmaps.width, heatmaps.height) != (manifest.width, manifest.height):
                raise DatasetError(f"{heat_path}: heatmaps are {heatmaps.width}x{heatmaps.height}, manifest says {manifest.width}x{manifest.height}")

        features = None
        if features_dir is not None:
            feat_path = Path(features_dir) / f"{entry.name}.hffeat"
            if feat_path.exists():
                features = load_feature_map(feat_path, source_view=entry.name)
        elif entry.features is not None:
            features = load_feature_map(_resolve(root, entry.features), source_view=entry.name)
        if features is not None:
            if (features.width, features.height) != (manifest.width, manifest.height):
                raise DatasetError(f"view {entry.name}: feature map is {features.width}x{features.height}, manifest says {manifest.width}x{manifest.height}")
            feature_dims.add(features.dim)

        dataset.views.append(View(entry.name, entry.split, cam, image, heatmaps, features))

    if len(feature_dims) > 1:
        raise DatasetError(f"feature maps disagree on channel count: {sorted(feature_dims)}")
    if dataset.source[1] is None:
        raise FileNotFoundError(f"No feature map for source view {manifest.views[manifest.source_view].name}")
    logger.info("loaded %d view(s) from %s", len(dataset.views), root)
    return dataset
