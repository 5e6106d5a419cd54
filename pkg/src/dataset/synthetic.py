# src/dataset/synthetic.py

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
import yaml

from src.engine.models import HeatmapStack
from src.geometry.camera import Camera, look_at, pixel_directions, project_points

logger = logging.getLogger(__name__)

DEFAULT_TABLE = Path(__file__).resolve().parents[2] / "data" / "skeleton.yml"
LIGHT_DIRECTION = np.array([1.0, 1.0, 1.0]) / math.sqrt(3.0)
SCENE_BOUND = 0.9


@dataclass
class BoneSpec:
    parent: int
    child: int
    length: float
    radius: float
    albedo: np.ndarray
    direction: np.ndarray
    swing_deg: float


class SkeletonTable:
    """
    Loads data/skeleton.yml: joint order, bone tree, canonical limb lengths,
    capsule radii, albedo colours and pose bounds.
    """

    def __init__(self, table_path: Union[str, Path] = DEFAULT_TABLE):
        self.table_path = Path(table_path)
        if not self.table_path.exists():
            raise FileNotFoundError(f"Skeleton table not found: {self.table_path}")

        with self.table_path.open("r", encoding="utf-8") as f:
            data: Dict[str, Any] = yaml.safe_load(f) or {}

        self.joint_names: List[str] = list(data.get("joints", []))
        if len(set(self.joint_names)) != len(self.joint_names) or not self.joint_names:
            raise ValueError(f"{self.table_path}: joint names must be unique and non-empty")
        index = {name: i for i, name in enumerate(self.joint_names)}

        self.root = index[data.get("root", "pelvis")]
        self.length_jitter = float(data.get("length_jitter", 0.10))
        self.max_yaw_deg = float(data.get("max_yaw_deg", 0.0))

        self.bones: List[BoneSpec] = []
        placed = {self.root}
        for entry in data.get("bones", []):
            parent, child = entry["parent"], entry["child"]
            if parent not in index or child not in index:
                raise ValueError(f"{self.table_path}: bone {parent}->{child} names an unknown joint")
            if index[parent] not in placed or index[child] in placed:
                raise ValueError(f"{self.table_path}: bones must form a tree listed parent-first ({parent}->{child})")
            placed.add(index[child])
            direction = np.asarray(entry["direction"], dtype=np.float64)
            self.bones.append(
                BoneSpec(
                    parent=index[parent],
                    child=index[child],
                    length=float(entry["length"]),
                    radius=float(entry["radius"]),
                    albedo=np.asarray(entry["albedo"], dtype=np.float64),
                    direction=direction / np.linalg.norm(direction),
                    swing_deg=float(entry.get("swing_deg", 0.0)),
                )
            )
        if len(placed) != len(self.joint_names):
            raise ValueError(f"{self.table_path}: bone tree does not reach every joint")

    @property
    def K(self) -> int:
        return len(self.joint_names)

    @property
    def connectivity(self) -> List[Tuple[int, int]]:
        return [(b.parent, b.child) for b in self.bones]

    @property
    def canonical_lengths(self) -> np.ndarray:
        return np.array([b.length for b in self.bones])


@dataclass
class Scene:
    joints3d: np.ndarray
    bones: List[Tuple[int, int]]
    radii: np.ndarray
    albedo: np.ndarray
    scale: float = 1.0
    joint_names: List[str] = field(default_factory=list)
    seed: Optional[int] = None

    def __post_init__(self) -> None:
        self.joints3d = np.asarray(self.joints3d, dtype=np.float64)
        self.radii = np.asarray(self.radii, dtype=np.float64)
        self.albedo = np.asarray(self.albedo, dtype=np.float64)
        if np.any(np.abs(self.joints3d) > 1.0):
            raise ValueError("scene joints must lie inside [-1, 1]^3")
        if len(self.radii) != len(self.bones) or len(self.albedo) != len(self.bones):
            raise ValueError("need one radius and one albedo per bone")

    @property
    def K(self) -> int:
        return self.joints3d.shape[0]

    def bone_lengths(self) -> np.ndarray:
        return np.array([np.linalg.norm(self.joints3d[c] - self.joints3d[p]) for p, c in self.bones])


# --------- Scene generation --------- #

def _swing(rest: np.ndarray, angle: float, azimuth: float) -> np.ndarray:
    helper = np.array([1.0, 0.0, 0.0]) if abs(rest[0]) < 0.9 else np.array([0.0, 0.0, 1.0])
    e1 = np.cross(rest, helper)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(rest, e1)
    return math.cos(angle) * rest + math.sin(angle) * (math.cos(azimuth) * e1 + math.sin(azimuth) * e2)


def generate_scene(seed: int, K: int = 16, table: Optional[SkeletonTable] = None) -> Scene:
    """
    Seeded articulated capsule figure: jittered limb lengths, random pose
    within the table's swing bounds, centred and fitted into [-0.9, 0.9]^3.
    """
    table = table or SkeletonTable()
    if K != table.K:
        raise ValueError(f"skeleton table {table.table_path} defines {table.K} joints, asked for {K}")
    rng = np.random.default_rng(seed)

    jitter = table.length_jitter
    lengths = table.canonical_lengths * rng.uniform(1.0 - jitter, 1.0 + jitter, size=len(table.bones))
    yaw = math.radians(rng.uniform(-table.max_yaw_deg, table.max_yaw_deg))
    c, s = math.cos(yaw), math.sin(yaw)
    yaw_rot = np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])

    joints = np.zeros((table.K, 3))
    for bone, length in zip(table.bones, lengths):
        angle = math.radians(rng.uniform(0.0, bone.swing_deg))
        azimuth = rng.uniform(0.0, 2.0 * math.pi)
        direction = yaw_rot @ _swing(bone.direction, angle, azimuth)
        joints[bone.child] = joints[bone.parent] + length * direction

    joints -= 0.5 * (joints.max(axis=0) + joints.min(axis=0))
    extent = float(np.abs(joints).max())
    scale = min(1.0, SCENE_BOUND / extent) if extent > 0 else 1.0
    joints *= scale

    return Scene(
        joints3d=joints,
        bones=table.connectivity,
        radii=np.array([b.radius for b in table.bones]) * scale,
        albedo=np.stack([b.albedo for b in table.bones]),
        scale=scale,
        joint_names=list(table.joint_names),
        seed=seed,
    )


# --------- Ray-capsule tracing --------- #

def _sphere_hits(origins: np.ndarray, dirs: np.ndarray, center: np.ndarray, r: float) -> np.ndarray:
    oc = origins - center
    b = np.einsum("ij,ij->i", dirs, oc)
    c = np.einsum("ij,ij->i", oc, oc) - r * r
    h = b * b - c
    t = -b - np.sqrt(np.maximum(h, 0.0))
    return np.where((h >= 0) & (t > 0), t, np.inf)


def capsule_hits(origins: np.ndarray, dirs: np.ndarray, a: np.ndarray, b: np.ndarray, r: float) -> np.ndarray:
    """
    Entry distance of each unit-direction ray into the capsule (segment a-b,
    radius r); inf on a miss.
    """
    origins = np.broadcast_to(np.asarray(origins, dtype=np.float64), dirs.shape)
    ba = b - a
    baba = float(ba @ ba)
    oa = origins - a
    bard = dirs @ ba
    baoa = oa @ ba
    rdoa = np.einsum("ij,ij->i", dirs, oa)
    oaoa = np.einsum("ij,ij->i", oa, oa)

    k2 = baba - bard * bard
    k1 = baba * rdoa - baoa * bard
    k0 = baba * oaoa - baoa * baoa - r * r * baba
    h = k1 * k1 - k2 * k0
    lateral = (k2 > 1e-12) & (h >= 0)
    t = (-k1 - np.sqrt(np.maximum(h, 0.0))) / np.where(k2 > 1e-12, k2, 1.0)
    y = baoa + t * bard
    body = np.where(lateral & (t > 0) & (y > 0) & (y < baba), t, np.inf)

    return np.minimum(body, np.minimum(_sphere_hits(origins, dirs, a, r), _sphere_hits(origins, dirs, b, r)))


def trace_capsules(scene: Scene, origins: np.ndarray, dirs: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Nearest capsule hit per ray: (distance, bone index or -1, unit normal).
    """
    dirs = np.asarray(dirs, dtype=np.float64).reshape(-1, 3)
    origins = np.broadcast_to(np.asarray(origins, dtype=np.float64), dirs.shape)
    best_t = np.full(dirs.shape[0], np.inf)
    best_bone = np.full(dirs.shape[0], -1, dtype=int)
    for i, (p, c) in enumerate(scene.bones):
        t = capsule_hits(origins, dirs, scene.joints3d[p], scene.joints3d[c], float(scene.radii[i]))
        closer = t < best_t
        best_t = np.where(closer, t, best_t)
        best_bone = np.where(closer, i, best_bone)

    normals = np.zeros_like(dirs)
    hit = best_bone >= 0
    if hit.any():
        pts = origins[hit] + best_t[hit, None] * dirs[hit]
        parents = np.array([scene.bones[i][0] for i in best_bone[hit]])
        children = np.array([scene.bones[i][1] for i in best_bone[hit]])
        a = scene.joints3d[parents]
        ba = scene.joints3d[children] - a
        s = np.clip(np.einsum("ij,ij->i", pts - a, ba) / np.einsum("ij,ij->i", ba, ba), 0.0, 1.0)
        n = pts - (a + s[:, None] * ba)
        normals[hit] = n / np.linalg.norm(n, axis=1, keepdims=True)
    return best_t, best_bone, normals


def render_ground_truth(scene: Scene, cam: Camera) -> np.ndarray:
    """
    Lambert-shaded capsules on white: albedo * (0.3 + 0.7 max(0, n.l)).
    """
    vs, us = np.meshgrid(np.arange(cam.height), np.arange(cam.width), indexing="ij")
    dirs = pixel_directions(cam, us.reshape(-1), vs.reshape(-1))
    _, bone, normals = trace_capsules(scene, cam.center, dirs)

    image = np.ones((dirs.shape[0], 3))
    hit = bone >= 0
    shade = 0.3 + 0.7 * np.maximum(0.0, normals[hit] @ LIGHT_DIRECTION)
    image[hit] = np.clip(scene.albedo[bone[hit]] * shade[:, None], 0.0, 1.0)
    return image.reshape(cam.height, cam.width, 3)


# --------- Teacher heatmaps --------- #

def project_joints(joints3d: np.ndarray, cam: Camera) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Pixel projections of 3D joints and whether each rounds to a pixel of the image.
    """
    u, v, _, in_front = project_points(cam, joints3d)
    with np.errstate(invalid="ignore"):
        on_image = in_front & (u >= -0.5) & (u < cam.width - 0.5) & (v >= -0.5) & (v < cam.height - 0.5)
    return u, v, on_image


def joint_visibility(scene: Scene, cam: Camera, occlusion_cull: bool = False) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Projected joints (u, v) and whether each lands on the image
    (optionally also unoccluded by another capsule).
    """
    u, v, visible = project_joints(scene.joints3d, cam)
    if occlusion_cull and visible.any():
        to_joint = scene.joints3d - cam.center
        dist = np.linalg.norm(to_joint, axis=1)
        t_hit, _, _ = trace_capsules(scene, cam.center, to_joint / dist[:, None])
        for k in np.flatnonzero(visible):
            margin = max(float(scene.radii[i]) for i, (p, c) in enumerate(scene.bones) if k in (p, c))
            if t_hit[k] < dist[k] - margin - 1e-6:
                visible[k] = False
    return u, v, visible


def teacher_heatmaps(scene: Scene, cam: Camera, sigma_h: float, occlusion_cull: bool = False) -> HeatmapStack:
    """
    Analytic stand-in for a 2D pose detector: one isotropic Gaussian per
    in-view joint, centred on its projection; off-screen joints give zero channels.
    """
    if sigma_h <= 0:
        raise ValueError(f"sigma_h must be positive, got {sigma_h}")
    u, v, visible = joint_visibility(scene, cam, occlusion_cull)
    vv, uu = np.meshgrid(np.arange(cam.height, dtype=np.float64), np.arange(cam.width, dtype=np.float64), indexing="ij")
    stack = np.zeros((scene.K, cam.height, cam.width))
    for k in np.flatnonzero(visible):
        d2 = (uu - u[k]) ** 2 + (vv - v[k]) ** 2
        stack[k] = np.exp(-d2 / (2.0 * sigma_h * sigma_h))
    return HeatmapStack(np.clip(stack, 0.0, 1.0))


# --------- Camera rig --------- #

def ring_camera(azimuth: float, elevation: float, size: int, radius: float = 3.0, name: Optional[str] = None) -> Camera:
    eye = radius * np.array([
        math.cos(elevation) * math.sin(azimuth),
        math.sin(elevation),
        math.cos(elevation) * math.cos(azimuth),
    ])
    focal = 1.1 * size
    reach = math.sqrt(3.0)
    return Camera(
        fx=focal, fy=focal, cx=size / 2.0, cy=size / 2.0, width=size, height=size,
        cam_to_world=look_at(eye), near=radius - reach, far=radius + reach, name=name,
    )


def build_ring_rig(n_train: int, n_test: int, size: int, radius: float = 3.0) -> List[Tuple[str, str, Camera]]:
    """
    Training cameras evenly spaced around the ring, alternating between two
    elevations; test cameras sit between them at an intermediate elevation.
    """
    elevations = (math.radians(10.0), math.radians(30.0))
    rig: List[Tuple[str, str, Camera]] = []
    for i in range(n_train):
        az = 2.0 * math.pi * i / n_train
        name = f"view_{len(rig):03d}"
        rig.append((name, "train", ring_camera(az, elevations[i % 2], size, radius, name)))
    for j in range(n_test):
        az = 2.0 * math.pi * (j + 0.5) / n_test + math.pi / max(n_train, 1)
        name = f"view_{len(rig):03d}"
        rig.append((name, "test", ring_camera(az, math.radians(20.0), size, radius, name)))
    return rig
