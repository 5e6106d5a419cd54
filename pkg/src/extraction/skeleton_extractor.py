# src/extraction/skeleton_extractor.py

from __future__ import annotations

import base64
import io
import json
import math
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from PIL import Image
from pydantic import BaseModel, ConfigDict, Field
from scipy.ndimage import correlate1d

from src.engine.models import HeatmapStack, Joint2D, Skeleton2D


class SkeletonConfig(BaseModel):
    """
    Post-processing knobs, echoed into every skeleton/metrics file.
    """
    model_config = ConfigDict(frozen=True, extra="forbid")

    sigma_g: float = Field(1.5, gt=0.0)
    tau: float = Field(0.30, gt=0.0, lt=1.0)
    alpha: float = Field(0.1, gt=0.0)


# --------- Filtering --------- #

def gaussian_kernel(sigma_g: float) -> np.ndarray:
    """
    Normalised 1-D Gaussian with radius ceil(3 sigma).
    """
    if sigma_g <= 0:
        raise ValueError(f"sigma_g must be positive, got {sigma_g}")
    radius = int(math.ceil(3.0 * sigma_g))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-(x * x) / (2.0 * sigma_g * sigma_g))
    return k / k.sum()


def gaussian_blur(channel: np.ndarray, sigma_g: float) -> np.ndarray:
    """
    Separable Gaussian; at the border the kernel is renormalised over the
    taps that fall inside the image.
    """
    m = np.asarray(channel, dtype=np.float64)
    k = gaussian_kernel(sigma_g)
    ones = np.ones_like(m)
    out = m
    for axis in (0, 1):
        num = correlate1d(out, k, axis=axis, mode="constant", cval=0.0)
        den = correlate1d(ones, k, axis=axis, mode="constant", cval=0.0)
        out = num / den
    # a convex combination cannot leave the input range
    return np.clip(out, m.min(), m.max())


# --------- Peak picking --------- #

def extract_joint(channel: np.ndarray, sigma_g: float, tau: float) -> Optional[Tuple[int, int, float]]:
    """
    Mask = blurred channel >= tau; joint = argmax of the unblurred channel
    inside the mask, ties to the smallest (v, u). None when the mask is empty.
    """
    if not 0.0 < tau < 1.0:
        raise ValueError(f"threshold must lie in (0, 1), got {tau}")
    m = np.asarray(channel, dtype=np.float64)
    mask = gaussian_blur(m, sigma_g) >= tau
    if not mask.any():
        return None
    masked = np.where(mask, m, -np.inf)
    # argmax returns the first hit in row-major order
    v, u = np.unravel_index(int(np.argmax(masked)), m.shape)
    return int(u), int(v), float(m[v, u])


def extract_skeleton(
    stack: HeatmapStack,
    connectivity: Sequence[Tuple[int, int]],
    sigma_g: float,
    tau: float,
) -> Skeleton2D:
    joints: List[Joint2D] = []
    for k in range(stack.K):
        hit = extract_joint(stack.values[k], sigma_g, tau)
        if hit is None:
            joints.append(Joint2D(k=k))
        else:
            u, v, conf = hit
            joints.append(Joint2D(k=k, u=float(u), v=float(v), confidence=conf, present=True))
    return Skeleton2D(joints=joints, bones=[(int(a), int(b)) for a, b in connectivity])


# --------- Evaluation --------- #

def reference_scale(gt: Skeleton2D) -> float:
    """
    Diagonal of the bounding box of the present ground-truth joints.
    """
    pts = np.array([[j.u, j.v] for j in gt.joints if j.present], dtype=np.float64)
    if len(pts) == 0:
        return 0.0
    return float(np.linalg.norm(pts.max(axis=0) - pts.min(axis=0)))


def pck(pred: Skeleton2D, gt: Skeleton2D, alpha: float, ref_scale: Optional[float] = None) -> float:
    """
    Fraction of present ground-truth joints predicted within alpha * ref_scale.
    NaN when no ground-truth joint is present.
    """
    if pred.K != gt.K:
        raise ValueError(f"pck: skeletons have {pred.K} and {gt.K} joints")
    scale = reference_scale(gt) if ref_scale is None else float(ref_scale)
    if scale <= 0:
        raise ValueError(f"pck: reference scale must be positive, got {scale}")
    radius = alpha * scale

    hits = 0
    total = 0
    for p, g in zip(pred.joints, gt.joints):
        if not g.present:
            continue
        total += 1
        if p.present and math.hypot(p.u - g.u, p.v - g.v) <= radius:
            hits += 1
    return hits / total if total else float("nan")


# --------- Output --------- #

def skeleton_to_json(skel: Skeleton2D, sigma_g: float, tau: float, joint_names: Optional[Sequence[str]] = None) -> Dict:
    data = skel.to_dict()
    data["sigma_g"] = sigma_g
    data["tau"] = tau
    if joint_names is not None:
        data["joint_names"] = list(joint_names)
    return data


def save_skeleton_json(path: Union[str, Path], data: Dict) -> Path:
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(data, indent=2), encoding="utf-8")
    return out


def render_svg(
    skel: Skeleton2D,
    width: int,
    height: int,
    image: Optional[np.ndarray] = None,
    joint_names: Optional[Sequence[str]] = None,
) -> str:
    """
    SVG with bones and joints drawn at pixel centres, optionally over the RGB image.
    """
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">'
    ]
    if image is not None:
        buf = io.BytesIO()
        rgb8 = np.round(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)
        Image.fromarray(rgb8).save(buf, format="PNG")
        encoded = base64.b64encode(buf.getvalue()).decode("ascii")
        parts.append(
            f'<image width="{width}" height="{height}" style="image-rendering:pixelated" '
            f'href="data:image/png;base64,{encoded}"/>'
        )
    stroke = max(width, height) / 128.0
    for a, b in skel.bones:
        ja, jb = skel.joints[a], skel.joints[b]
        if ja.present and jb.present:
            parts.append(
                f'<line x1="{ja.u + 0.5}" y1="{ja.v + 0.5}" x2="{jb.u + 0.5}" y2="{jb.v + 0.5}" '
                f'stroke="#d62728" stroke-width="{stroke:.3f}" stroke-linecap="round"/>'
            )
    for j in skel.joints:
        if not j.present:
            continue
        title = joint_names[j.k] if joint_names is not None else f"joint {j.k}"
        parts.append(
            f'<circle cx="{j.u + 0.5}" cy="{j.v + 0.5}" r="{1.5 * stroke:.3f}" fill="#1f77b4">'
            f"<title>{title} ({j.confidence:.3f})</title></circle>"
        )
    parts.append("</svg>")
    return "\n".join(parts)
