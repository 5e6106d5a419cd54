# src/dataset/manifest.py

from __future__ import annotations

from pathlib import Path
from typing import List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, ConfigDict, Field, model_validator

from src.geometry.camera import Camera
from src.utils.errors import DatasetError

MANIFEST_NAME = "manifest.json"


class CameraModel(BaseModel):
    model_config = ConfigDict(extra="forbid")

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    near: float
    far: float
    cam_to_world: List[List[float]]

    def to_camera(self, name: Optional[str] = None) -> Camera:
        return Camera.from_dict(self.model_dump(), name=name)

    @classmethod
    def from_camera(cls, cam: Camera) -> "CameraModel":
        return cls.model_validate(cam.to_dict())


class ViewEntry(BaseModel):
    """
    One camera with its files (paths relative to the manifest directory).
    """
    model_config = ConfigDict(extra="forbid")

    name: str
    split: Literal["train", "test"]
    camera: CameraModel
    image: str
    features: Optional[str] = None
    heatmaps: Optional[str] = None


class DatasetManifest(BaseModel):
    model_config = ConfigDict(extra="forbid")

    scene_id: str
    seed: int
    K: int = Field(ge=1)
    width: int = Field(gt=0)
    height: int = Field(gt=0)
    sigma_h: float = Field(gt=0.0)
    occlusion_cull: bool = False
    source_view: int = 0
    joint_names: List[str]
    bones: List[Tuple[int, int]]
    joints3d: List[List[float]]
    views: List[ViewEntry]
    train: List[int]
    test: List[int]

    @model_validator(mode="after")
    def _check_split(self) -> "DatasetManifest":
        if set(self.train) & set(self.test):
            raise ValueError("train and test splits overlap")
        indices = set(self.train) | set(self.test)
        if any(i < 0 or i >= len(self.views) for i in indices):
            raise ValueError("split index outside the view list")
        for i in self.train:
            if self.views[i].split != "train":
                raise ValueError(f"view {self.views[i].name} listed in train but marked {self.views[i].split}")
        for i in self.test:
            if self.views[i].split != "test":
                raise ValueError(f"view {self.views[i].name} listed in test but marked {self.views[i].split}")
        if not 0 <= self.source_view < len(self.views):
            raise ValueError(f"source_view {self.source_view} outside the view list")
        if len(self.joint_names) != self.K or len(self.joints3d) != self.K:
            raise ValueError(f"K={self.K} disagrees with joint_names/joints3d")
        if any(a >= self.K or b >= self.K or a < 0 or b < 0 for a, b in self.bones):
            raise ValueError("bone index outside 0..K-1")
        return self


def write_manifest(path: Union[str, Path], manifest: DatasetManifest) -> Path:
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(manifest.model_dump_json(indent=2) + "\n", encoding="utf-8")
    return out


def read_manifest(path: Union[str, Path]) -> DatasetManifest:
    src = Path(path)
    if src.is_dir():
        src = src / MANIFEST_NAME
    if not src.exists():
        raise FileNotFoundError(f"Manifest not found: {src}")
    try:
        return DatasetManifest.model_validate_json(src.read_text(encoding="utf-8"))
    except ValueError as exc:
        raise DatasetError(f"{src}: invalid manifest: {exc}") from exc
