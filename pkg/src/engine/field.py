# src/engine/field.py

from __future__ import annotations

from collections import OrderedDict
from typing import Dict, Iterator, List, Mapping, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from src.autodiff.tensor import (
    DiffTensor,
    as_tensor,
    concat,
    init_parameters,
    matmul,
    relu,
    sigmoid,
    softplus,
)
from src.encoding.positional import encoded_width

from .models import EncodedPoint, FieldOutput


class FieldConfig(BaseModel):
    """
    Shape of the radiance + heatmap network.
    """
    model_config = ConfigDict(frozen=True, extra="forbid")

    trunk_width: int = Field(128, gt=0)
    trunk_depth: int = Field(6, ge=2)
    skip_at: int = 3
    head_width: int = Field(64, gt=0)
    K: int = Field(16, ge=1)
    L_x: int = Field(10, ge=0)
    L_d: int = Field(4, ge=0)
    F_dim: int = Field(9, ge=1)

    @model_validator(mode="after")
    def _check_skip(self) -> "FieldConfig":
        if not 0 < self.skip_at < self.trunk_depth:
            raise ValueError(f"skip_at must satisfy 0 < skip_at < trunk_depth, got {self.skip_at}")
        return self

    @property
    def position_dim(self) -> int:
        return encoded_width(self.L_x)

    @property
    def direction_dim(self) -> int:
        return encoded_width(self.L_d)

    @property
    def input_dim(self) -> int:
        return self.position_dim + self.F_dim

    def layer_shapes(self) -> List[Tuple[str, int, int]]:
        """
        (name prefix, fan_in, fan_out) for every dense layer, in checkpoint order.
        """
        shapes = [("trunk.0", self.input_dim, self.trunk_width)]
        for i in range(1, self.trunk_depth):
            fan_in = self.trunk_width + (self.input_dim if i == self.skip_at else 0)
            shapes.append((f"trunk.{i}", fan_in, self.trunk_width))
        shapes.append(("heat.0", self.trunk_width, self.head_width))
        shapes.append(("heat.1", self.head_width, self.K))
        shapes.append(("color", self.trunk_width + self.direction_dim, 3))
        shapes.append(("sigma", self.trunk_width, 1))
        return shapes

    def parameter_count(self) -> int:
        return sum(fan_in * fan_out + fan_out for _, fan_in, fan_out in self.layer_shapes())


class FieldParams:
    """
    Named, ordered parameter set: "trunk.0.w", "trunk.0.b", ..., "heat.0.w", ...,
    "color.w", "color.b", "sigma.w", "sigma.b".
    """

    def __init__(self, cfg: FieldConfig, tensors: Mapping[str, DiffTensor]):
        self.cfg = cfg
        self.tensors: "OrderedDict[str, DiffTensor]" = OrderedDict()
        for prefix, fan_in, fan_out in cfg.layer_shapes():
            for suffix, shape in (("w", (fan_in, fan_out)), ("b", (fan_out,))):
                name = f"{prefix}.{suffix}"
                if name not in tensors:
                    raise KeyError(f"missing parameter {name!r}")
                tensor = tensors[name]
                if tensor.shape != shape:
                    raise ValueError(f"parameter {name!r} has shape {tensor.shape}, expected {shape}")
                tensor.name = name
                self.tensors[name] = tensor
        extra = set(tensors) - set(self.tensors)
        if extra:
            raise KeyError(f"unexpected parameter(s): {sorted(extra)}")

    def __getitem__(self, name: str) -> DiffTensor:
        return self.tensors[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self.tensors)

    def items(self):
        return self.tensors.items()

    def count(self) -> int:
        return sum(t.size for t in self.tensors.values())

    def zero_grad(self) -> None:
        for t in self.tensors.values():
            t.zero_grad()

    def arrays(self) -> Dict[str, np.ndarray]:
        return {name: t.values for name, t in self.tensors.items()}

    def grads(self) -> Dict[str, np.ndarray]:
        """
        Gradients after backward; parameters the loss never reached get zeros.
        """
        return {
            name: (t.grad if t.grad is not None else np.zeros_like(t.values))
            for name, t in self.tensors.items()
        }

    @classmethod
    def from_arrays(cls, cfg: FieldConfig, arrays: Mapping[str, np.ndarray]) -> "FieldParams":
        return cls(cfg, {name: DiffTensor(a, requires_grad=True) for name, a in arrays.items()})


def field_init(cfg: FieldConfig, seed: int) -> FieldParams:
    shapes = cfg.layer_shapes()
    layer_seeds = np.random.SeedSequence(seed).generate_state(len(shapes))
    tensors: Dict[str, DiffTensor] = {}
    for (prefix, fan_in, fan_out), layer_seed in zip(shapes, layer_seeds):
        w, b = init_parameters([fan_in, fan_out], int(layer_seed))
        tensors[f"{prefix}.w"] = w
        tensors[f"{prefix}.b"] = b
    return FieldParams(cfg, tensors)


def _dense(params: FieldParams, prefix: str, x: DiffTensor) -> DiffTensor:
    return matmul(x, params[f"{prefix}.w"]) + params[f"{prefix}.b"]


def field_forward(params: FieldParams, enc: EncodedPoint) -> FieldOutput:
    """
    trunk input = [gamma(x), f(x)], re-injected at layer skip_at;
    sigma = softplus(density head), color = sigmoid(color head on [trunk, gamma(d)]),
    heatmap logits = 2-layer head on the output of layer skip_at.
    """
    cfg = params.cfg
    if enc.gamma_x.shape[1] != cfg.position_dim:
        raise ValueError(f"gamma_x has length {enc.gamma_x.shape[1]}, config expects {cfg.position_dim}")
    if enc.gamma_d.shape[1] != cfg.direction_dim:
        raise ValueError(f"gamma_d has length {enc.gamma_d.shape[1]}, config expects {cfg.direction_dim}")
    if enc.feature.shape[1] != cfg.F_dim:
        raise ValueError(f"feature has length {enc.feature.shape[1]}, config expects {cfg.F_dim}")

    x_in = as_tensor(np.concatenate([enc.gamma_x, enc.feature], axis=1))
    h = x_in
    tap = None
    for i in range(cfg.trunk_depth):
        if i == cfg.skip_at:
            h = concat([x_in, h])
        h = relu(_dense(params, f"trunk.{i}", h))
        if i == cfg.skip_at:
            tap = h

    sigma = softplus(_dense(params, "sigma", h))
    color = sigmoid(_dense(params, "color", concat([h, as_tensor(enc.gamma_d)])))
    heat_logits = _dense(params, "heat.1", relu(_dense(params, "heat.0", tap)))
    return FieldOutput(color=color, sigma=sigma, heatmap_logits=heat_logits)
