# src/encoding/features.py

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict

from src.geometry.camera import Camera, project_points
from src.utils.errors import FormatError

logger = logging.getLogger(__name__)

FEATURE_MAGIC = b"HFFEAT1\n"
PYRAMID_FACTORS = (4, 16)


@dataclass
class FeatureMap:
    """
    Dense per-pixel feature image, values shaped (height, width, dim).
    """
    values: np.ndarray
    source_view: Optional[str] = None

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 3 or min(self.values.shape) <= 0:
            raise ValueError(f"feature map must be (H, W, D) with positive sizes, got {self.values.shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("feature map contains non-finite values")

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def dim(self) -> int:
        return self.values.shape[2]


# --------- Built-in encoder --------- #

def _box_downsample(image: np.ndarray, factor: int) -> np.ndarray:
    """
    Mean over factor x factor blocks; partial edge blocks average their own pixels.
    """
    h, w = image.shape[:2]
    rows = np.arange(0, h, factor)
    cols = np.arange(0, w, factor)
    sums = np.add.reduceat(np.add.reduceat(image, rows, axis=0), cols, axis=1)
    counts = np.outer(np.diff(np.append(rows, h)), np.diff(np.append(cols, w)))
    return sums / counts[:, :, None]


def _bilinear_weights(n_fine: int, n_coarse: int, factor: int) -> np.ndarray:
    """
    (n_fine, n_coarse) interpolation matrix with half-pixel centres and edge clamping.
    """
    pos = (np.arange(n_fine) + 0.5) / factor - 0.5
    pos = np.clip(pos, 0.0, n_coarse - 1)
    i0 = np.floor(pos).astype(int)
    i1 = np.minimum(i0 + 1, n_coarse - 1)
    frac = pos - i0
    weights = np.zeros((n_fine, n_coarse))
    weights[np.arange(n_fine), i0] += 1.0 - frac
    weights[np.arange(n_fine), i1] += frac
    return weights


def resample_level(image: np.ndarray, factor: int) -> np.ndarray:
    """
    Box-downsample by `factor`, then bilinearly upsample back to full size.
    """
    coarse = _box_downsample(image, factor)
    wy = _bilinear_weights(image.shape[0], coarse.shape[0], factor)
    wx = _bilinear_weights(image.shape[1], coarse.shape[1], factor)
    return np.einsum("yi,ijc,xj->yxc", wy, coarse, wx)


def builtin_pyramid_encoder(image: np.ndarray, source_view: Optional[str] = None) -> FeatureMap:
    """
    9-channel feature map: RGB, RGB at 1/4 scale, RGB at 1/16 scale (both
    resampled back to full resolution).
    """
    rgb = np.asarray(image, dtype=np.float64)
    if rgb.ndim != 3 or rgb.shape[2] != 3 or rgb.shape[0] == 0 or rgb.shape[1] == 0:
        raise ValueError(f"encoder expects a non-empty (H, W, 3) image, got {rgb.shape}")
    levels = [rgb] + [resample_level(rgb, f) for f in PYRAMID_FACTORS]
    return FeatureMap(np.concatenate(levels, axis=-1), source_view=source_view)


class EncoderConfig(BaseModel):
    """
    builtin: pyramid maps written by gen-data. external: maps loaded from a
    directory of <view name>.hffeat files (e.g. dumped from a pretrained CNN).
    """
    model_config = ConfigDict(frozen=True, extra="forbid")

    encoder: Literal["builtin", "external"] = "builtin"


# --------- Lookup --------- #

def sample_features(fm: FeatureMap, us: np.ndarray, vs: np.ndarray) -> np.ndarray:
    """
    Bilinear lookup at continuous image positions (texel centres at integer+0.5).
    Positions outside [0, width] x [0, height] (or NaN) yield zero vectors.
    """
    us = np.asarray(us, dtype=np.float64).reshape(-1)
    vs = np.asarray(vs, dtype=np.float64).reshape(-1)
    inside = (us >= 0) & (us <= fm.width) & (vs >= 0) & (vs <= fm.height)
    x = np.where(inside, us, 0.5) - 0.5
    y = np.where(inside, vs, 0.5) - 0.5
    x0 = np.floor(x)
    y0 = np.floor(y)
    wx = (x - x0)[:, None]
    wy = (y - y0)[:, None]
    xa = np.clip(x0, 0, fm.width - 1).astype(int)
    xb = np.clip(x0 + 1, 0, fm.width - 1).astype(int)
    ya = np.clip(y0, 0, fm.height - 1).astype(int)
    yb = np.clip(y0 + 1, 0, fm.height - 1).astype(int)

    f = fm.values
    top = (1.0 - wx) * f[ya, xa] + wx * f[ya, xb]
    bottom = (1.0 - wx) * f[yb, xa] + wx * f[yb, xb]
    out = (1.0 - wy) * top + wy * bottom
    out[~inside] = 0.0
    return out


def sample_feature(fm: FeatureMap, u: float, v: float) -> np.ndarray:
    return sample_features(fm, np.array([u]), np.array([v]))[0]


def point_features(points: np.ndarray, source_cam: Camera, fm: FeatureMap) -> np.ndarray:
    """
    Project world points into the source view and sample the feature map.
    Points behind the camera or outside the image get zero features.
    """
    if fm.source_view is not None and source_cam.name is not None and fm.source_view != source_cam.name:
        raise ValueError(f"feature map belongs to view {fm.source_view!r}, camera is {source_cam.name!r}")
    u, v, _, in_front = project_points(source_cam, points)
    feats = sample_features(fm, u + 0.5, v + 0.5)
    feats[~in_front] = 0.0
    return feats


def point_feature(x, source_cam: Camera, fm: FeatureMap) -> np.ndarray:
    return point_features(np.asarray(x, dtype=np.float64).reshape(1, 3), source_cam, fm)[0]


# --------- File format --------- #

def encode_feature_map(fm: FeatureMap) -> bytes:
    header = np.array([fm.width, fm.height, fm.dim], dtype="<u4").tobytes()
    return FEATURE_MAGIC + header + np.ascontiguousarray(fm.values, dtype="<f4").tobytes()


def decode_feature_map(blob: bytes, source: str = "<bytes>", source_view: Optional[str] = None) -> FeatureMap:
    if not blob.startswith(FEATURE_MAGIC):
        raise FormatError(f"{source}: not a feature map (bad magic)")
    offset = len(FEATURE_MAGIC)
    if len(blob) < offset + 12:
        raise FormatError(f"{source}: truncated header")
    width, height, dim = (int(x) for x in np.frombuffer(blob, dtype="<u4", count=3, offset=offset))
    payload = blob[offset + 12:]
    expected = 4 * width * height * dim
    if len(payload) != expected:
        raise FormatError(f"{source}: expected {expected} payload bytes, found {len(payload)}")
    values = np.frombuffer(payload, dtype="<f4").reshape(height, width, dim).astype(np.float64)
    try:
        return FeatureMap(values, source_view=source_view)
    except ValueError as exc:
        raise FormatError(f"{source}: {exc}") from exc


def save_feature_map(path: Union[str, Path], fm: FeatureMap) -> Path:
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_bytes(encode_feature_map(fm))
    logger.debug("wrote feature map %s (%dx%dx%d)", out, fm.width, fm.height, fm.dim)
    return out


def load_feature_map(path: Union[str, Path], source_view: Optional[str] = None) -> FeatureMap:
    src = Path(path)
    if not src.exists():
        raise FileNotFoundError(f"Feature map not found: {src}")
    return decode_feature_map(src.read_bytes(), source=str(src), source_view=source_view)
