# src/autodiff/checkpoint.py

from __future__ import annotations

from pathlib import Path
from typing import Dict, Mapping, Union

import numpy as np

from src.utils.errors import FormatError

from .tensor import DiffTensor

CHECKPOINT_MAGIC = b"HFNERF1\n"

ArrayLike = Union[np.ndarray, DiffTensor]


def _u32(value: int) -> bytes:
    return np.array([value], dtype="<u4").tobytes()


def encode_checkpoint(params: Mapping[str, ArrayLike]) -> bytes:
    chunks = [CHECKPOINT_MAGIC]
    for name, tensor in params.items():
        values = tensor.values if isinstance(tensor, DiffTensor) else np.asarray(tensor, dtype=np.float64)
        raw_name = name.encode("utf-8")
        chunks.append(_u32(len(raw_name)))
        chunks.append(raw_name)
        chunks.append(_u32(values.ndim))
        chunks.append(np.array(values.shape, dtype="<u4").tobytes())
        chunks.append(np.ascontiguousarray(values, dtype="<f8").tobytes())
    return b"".join(chunks)


def decode_checkpoint(blob: bytes, source: str = "<bytes>") -> Dict[str, np.ndarray]:
    if not blob.startswith(CHECKPOINT_MAGIC):
        raise FormatError(f"{source}: not a checkpoint (bad magic)")

    params: Dict[str, np.ndarray] = {}
    pos = len(CHECKPOINT_MAGIC)

    def take(n: int) -> bytes:
        nonlocal pos
        if pos + n > len(blob):
            raise FormatError(f"{source}: truncated at byte {pos}")
        chunk = blob[pos:pos + n]
        pos += n
        return chunk

    while pos < len(blob):
        name_len = int(np.frombuffer(take(4), dtype="<u4")[0])
        name = take(name_len).decode("utf-8")
        rank = int(np.frombuffer(take(4), dtype="<u4")[0])
        dims = tuple(int(d) for d in np.frombuffer(take(4 * rank), dtype="<u4"))
        count = int(np.prod(dims)) if dims else 1
        values = np.frombuffer(take(8 * count), dtype="<f8").astype(np.float64).reshape(dims)
        if name in params:
            raise FormatError(f"{source}: duplicate parameter {name!r}")
        params[name] = values
    return params


def save_checkpoint(path: Union[str, Path], params: Mapping[str, ArrayLike]) -> Path:
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_bytes(encode_checkpoint(params))
    return out


def load_checkpoint(path: Union[str, Path]) -> Dict[str, np.ndarray]:
    src = Path(path)
    if not src.exists():
        raise FileNotFoundError(f"Checkpoint not found: {src}")
    return decode_checkpoint(src.read_bytes(), source=str(src))
