# src/geometry/camera.py

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, NamedTuple, Optional, Tuple

import numpy as np


@dataclass
class Camera:
    """
    Pinhole camera. Camera frame: +x right, +y up, looking along -z.
    Image v grows downward; pixel (u, v) has its centre at (u+0.5, v+0.5).
    """
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    cam_to_world: np.ndarray = field(default_factory=lambda: np.eye(4))
    near: float = 0.1
    far: float = 6.0
    name: Optional[str] = None

    def __post_init__(self) -> None:
        self.cam_to_world = np.array(self.cam_to_world, dtype=np.float64)
        if self.cam_to_world.shape != (4, 4):
            raise ValueError(f"cam_to_world must be 4x4, got {self.cam_to_world.shape}")
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if self.width <= 0 or self.height <= 0:
            raise ValueError(f"image size must be positive, got {self.width}x{self.height}")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValueError(f"principal point ({self.cx}, {self.cy}) outside {self.width}x{self.height}")
        if not (0 < self.near < self.far):
            raise ValueError(f"need 0 < near < far, got near={self.near}, far={self.far}")
        R = self.rotation
        if not np.allclose(R.T @ R, np.eye(3), atol=1e-9, rtol=0.0) or np.linalg.det(R) <= 0:
            raise ValueError("cam_to_world rotation must be orthonormal with det +1")

    @property
    def rotation(self) -> np.ndarray:
        return self.cam_to_world[:3, :3]

    @property
    def center(self) -> np.ndarray:
        return self.cam_to_world[:3, 3].copy()

    def to_dict(self) -> Dict:
        return {
            "fx": self.fx,
            "fy": self.fy,
            "cx": self.cx,
            "cy": self.cy,
            "width": self.width,
            "height": self.height,
            "near": self.near,
            "far": self.far,
            "cam_to_world": self.cam_to_world.tolist(),
        }

    @classmethod
    def from_dict(cls, data: Dict, name: Optional[str] = None) -> "Camera":
        return cls(
            fx=float(data["fx"]),
            fy=float(data["fy"]),
            cx=float(data["cx"]),
            cy=float(data["cy"]),
            width=int(data["width"]),
            height=int(data["height"]),
            cam_to_world=np.array(data["cam_to_world"], dtype=np.float64),
            near=float(data.get("near", 0.1)),
            far=float(data.get("far", 6.0)),
            name=name,
        )


@dataclass
class Ray:
    origin: np.ndarray
    direction: np.ndarray
    near: float
    far: float

    def __post_init__(self) -> None:
        self.origin = np.asarray(self.origin, dtype=np.float64)
        self.direction = np.asarray(self.direction, dtype=np.float64)
        if not (0 < self.near < self.far):
            raise ValueError(f"ray needs 0 < near < far, got near={self.near}, far={self.far}")
        if abs(np.linalg.norm(self.direction) - 1.0) > 1e-12:
            raise ValueError("ray direction must be unit length")

    def at(self, t: float) -> np.ndarray:
        return self.origin + t * self.direction


class Projection(NamedTuple):
    u: float
    v: float
    depth: float
    behind_camera: bool


class Samples(NamedTuple):
    t: np.ndarray
    delta: np.ndarray


# --------- Rig construction --------- #

def look_at(eye, target=(0.0, 0.0, 0.0), up=(0.0, 1.0, 0.0)) -> np.ndarray:
    """
    cam_to_world for a camera at `eye` whose -z axis points at `target`.
    """
    eye = np.asarray(eye, dtype=np.float64)
    forward = np.asarray(target, dtype=np.float64) - eye
    forward /= np.linalg.norm(forward)
    right = np.cross(forward, np.asarray(up, dtype=np.float64))
    norm = np.linalg.norm(right)
    if norm < 1e-12:
        raise ValueError("look_at: up vector is parallel to the viewing direction")
    right /= norm
    true_up = np.cross(right, forward)

    m = np.eye(4)
    m[:3, 0] = right
    m[:3, 1] = true_up
    m[:3, 2] = -forward
    m[:3, 3] = eye
    return m


# --------- Rays --------- #

def pixel_directions(cam: Camera, us: np.ndarray, vs: np.ndarray) -> np.ndarray:
    """
    Unit world-frame directions for arrays of pixel positions (index space).
    """
    us = np.asarray(us, dtype=np.float64)
    vs = np.asarray(vs, dtype=np.float64)
    local = np.stack(
        [
            (us + 0.5 - cam.cx) / cam.fx,
            -(vs + 0.5 - cam.cy) / cam.fy,
            -np.ones_like(us),
        ],
        axis=-1,
    )
    world = local @ cam.rotation.T
    return world / np.linalg.norm(world, axis=-1, keepdims=True)


def ray_for_pixel(cam: Camera, u: float, v: float) -> Ray:
    if not (0 <= u < cam.width and 0 <= v < cam.height):
        raise ValueError(f"pixel ({u}, {v}) outside image {cam.width}x{cam.height}")
    direction = pixel_directions(cam, np.array(u), np.array(v))
    return Ray(origin=cam.center, direction=direction, near=cam.near, far=cam.far)


def project_points(cam: Camera, points: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """
    Vectorised projection. Returns (u, v, depth, in_front); u, v are NaN
    where the point is at or behind the camera.
    """
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    local = (pts - cam.center) @ cam.rotation
    depth = -local[:, 2]
    in_front = depth > 1e-9
    safe = np.where(in_front, depth, 1.0)
    u = np.where(in_front, cam.fx * local[:, 0] / safe + cam.cx - 0.5, np.nan)
    v = np.where(in_front, -cam.fy * local[:, 1] / safe + cam.cy - 0.5, np.nan)
    return u, v, depth, in_front


def project(cam: Camera, p_world) -> Projection:
    p = np.asarray(p_world, dtype=np.float64)
    if not np.all(np.isfinite(p)):
        raise ValueError(f"project: point must be finite, got {p}")
    u, v, depth, in_front = project_points(cam, p.reshape(1, 3))
    return Projection(float(u[0]), float(v[0]), float(depth[0]), not bool(in_front[0]))


# --------- Sampling --------- #

def stratified_depths(
    near: float,
    far: float,
    n_rays: int,
    n: int,
    jitter: bool,
    rng: Optional[np.random.Generator] = None,
) -> Samples:
    """
    Depths of shape (n_rays, n): one per equal bin of [near, far], bin
    midpoints unless jittered. delta_i = t_{i+1} - t_i and delta_n = far - t_n.
    """
    if n < 1:
        raise ValueError(f"need at least one sample per ray, got {n}")
    width = (far - near) / n
    offsets = np.full((n_rays, n), 0.5)
    if jitter:
        if rng is None:
            raise ValueError("jittered sampling needs a generator")
        offsets = rng.random((n_rays, n))
    t = near + (np.arange(n)[None, :] + offsets) * width
    delta = np.empty_like(t)
    delta[:, :-1] = t[:, 1:] - t[:, :-1]
    delta[:, -1] = far - t[:, -1]
    return Samples(t, delta)


def stratified_samples(ray: Ray, n: int, jitter: bool = False, rng_seed: int = 0) -> Samples:
    rng = np.random.default_rng(rng_seed) if jitter else None
    t, delta = stratified_depths(ray.near, ray.far, 1, n, jitter, rng)
    return Samples(t[0], delta[0])
