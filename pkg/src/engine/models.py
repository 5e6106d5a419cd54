# src/engine/models.py

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from src.autodiff.tensor import DiffTensor


@dataclass
class EncodedPoint:
    """
    Conditioning inputs for a batch of N sample points.
    gamma_x: (N, 3 + 6 L_x), gamma_d: (N, 3 + 6 L_d), feature: (N, F_dim).
    """
    gamma_x: np.ndarray
    gamma_d: np.ndarray
    feature: np.ndarray

    def __post_init__(self) -> None:
        self.gamma_x = np.atleast_2d(np.asarray(self.gamma_x, dtype=np.float64))
        self.gamma_d = np.atleast_2d(np.asarray(self.gamma_d, dtype=np.float64))
        self.feature = np.atleast_2d(np.asarray(self.feature, dtype=np.float64))
        n = self.gamma_x.shape[0]
        if self.gamma_d.shape[0] != n or self.feature.shape[0] != n:
            raise ValueError(
                f"encoded batch sizes differ: {self.gamma_x.shape}, {self.gamma_d.shape}, {self.feature.shape}"
            )

    def __len__(self) -> int:
        return self.gamma_x.shape[0]


@dataclass
class FieldOutput:
    """
    Per-sample network output. color (N, 3) in [0, 1], sigma (N, 1) >= 0,
    heatmap_logits (N, K) before activation.
    """
    color: DiffTensor
    sigma: DiffTensor
    heatmap_logits: DiffTensor


@dataclass
class RenderedBatch:
    """
    Differentiable render of R rays: color (R, 3), heat (R, K), opacity (R,).
    """
    color: DiffTensor
    heat: DiffTensor
    opacity: DiffTensor

    def pixel(self, i: int) -> "RenderedPixel":
        return RenderedPixel(
            color=self.color.values[i].copy(),
            heat=self.heat.values[i].copy(),
            opacity=float(self.opacity.values[i]),
        )


@dataclass
class RenderedPixel:
    color: np.ndarray
    heat: np.ndarray
    opacity: float


@dataclass
class LossTerms:
    """
    total = l_c + lambda_h * l_h. `tensor` keeps the differentiable total.
    """
    l_c: float
    l_h: float
    total: float
    tensor: Optional[DiffTensor] = field(default=None, repr=False)


@dataclass
class HeatmapStack:
    """
    K joint channels over an image, values shaped (K, height, width) in [0, 1].
    """
    values: np.ndarray

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 3:
            raise ValueError(f"heatmap stack must be (K, H, W), got {self.values.shape}")
        if self.values.size and (self.values.min() < 0.0 or self.values.max() > 1.0):
            raise ValueError("heatmap values must lie in [0, 1]")

    @property
    def K(self) -> int:
        return self.values.shape[0]

    @property
    def height(self) -> int:
        return self.values.shape[1]

    @property
    def width(self) -> int:
        return self.values.shape[2]


# --------- Skeleton models --------- #

@dataclass
class Joint2D:
    k: int
    u: float = 0.0
    v: float = 0.0
    confidence: float = 0.0
    present: bool = False


@dataclass
class Skeleton2D:
    joints: List[Joint2D] = field(default_factory=list)
    bones: List[Tuple[int, int]] = field(default_factory=list)

    def __post_init__(self) -> None:
        K = len(self.joints)
        for a, b in self.bones:
            if not (0 <= a < K and 0 <= b < K):
                raise ValueError(f"bone ({a}, {b}) references a joint outside 0..{K - 1}")
        for j in self.joints:
            if not j.present and j.confidence != 0.0:
                raise ValueError(f"absent joint {j.k} must have zero confidence")

    @property
    def K(self) -> int:
        return len(self.joints)

    def to_dict(self) -> Dict:
        """
        Helper for JSON output.
        """
        return {
            "joints": [asdict(j) for j in self.joints],
            "bones": [[int(a), int(b)] for a, b in self.bones],
        }

    @classmethod
    def from_dict(cls, data: Dict) -> "Skeleton2D":
        joints = [Joint2D(**j) for j in data.get("joints", [])]
        bones = [(int(a), int(b)) for a, b in data.get("bones", [])]
        return cls(joints=joints, bones=bones)
