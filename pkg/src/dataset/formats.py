# src/dataset/formats.py

from __future__ import annotations

import io
from pathlib import Path
from typing import Union

import numpy as np
from PIL import Image

from src.engine.models import HeatmapStack
from src.utils.errors import FormatError

HEATMAP_MAGIC = b"HFHEAT1\n"

PathLike = Union[str, Path]


# --------- Heatmap stacks --------- #

def encode_heatmaps(stack: HeatmapStack) -> bytes:
    header = np.array([stack.K, stack.width, stack.height], dtype="<u4").tobytes()
    return HEATMAP_MAGIC + header + np.ascontiguousarray(stack.values, dtype="<f4").tobytes()


def decode_heatmaps(blob: bytes, source: str = "<bytes>") -> HeatmapStack:
    if not blob.startswith(HEATMAP_MAGIC):
        raise FormatError(f"{source}: not a heatmap stack (bad magic)")
    offset = len(HEATMAP_MAGIC)
    if len(blob) < offset + 12:
        raise FormatError(f"{source}: truncated header")
    K, width, height = (int(x) for x in np.frombuffer(blob, dtype="<u4", count=3, offset=offset))
    payload = blob[offset + 12:]
    expected = 4 * K * width * height
    if len(payload) != expected:
        raise FormatError(f"{source}: expected {expected} payload bytes, found {len(payload)}")
    values = np.frombuffer(payload, dtype="<f4").reshape(K, height, width).astype(np.float64)
    try:
        return HeatmapStack(values)
    except ValueError as exc:
        raise FormatError(f"{source}: {exc}") from exc


def save_heatmaps(path: PathLike, stack: HeatmapStack) -> Path:
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_bytes(encode_heatmaps(stack))
    return out


def load_heatmaps(path: PathLike) -> HeatmapStack:
    src = Path(path)
    if not src.exists():
        raise FileNotFoundError(f"Heatmap stack not found: {src}")
    return decode_heatmaps(src.read_bytes(), source=str(src))


# --------- Images --------- #

def to_uint8(image: np.ndarray) -> np.ndarray:
    return np.round(np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0) * 255.0).astype(np.uint8)


def encode_ppm(image: np.ndarray) -> bytes:
    """
    ASCII PPM (P3), one pixel row per line.
    """
    rgb = to_uint8(image)
    height, width = rgb.shape[:2]
    lines = ["P3", f"{width} {height}", "255"]
    for row in rgb.reshape(height, width * 3):
        lines.append(" ".join(str(int(x)) for x in row))
    return ("\n".join(lines) + "\n").encode("ascii")


def decode_ppm(blob: bytes, source: str = "<bytes>") -> np.ndarray:
    tokens = []
    for line in blob.decode("ascii", errors="replace").splitlines():
        tokens.extend(line.split("#", 1)[0].split())
    if not tokens or tokens[0] != "P3":
        raise FormatError(f"{source}: not an ASCII PPM (P3)")
    try:
        width, height, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
        data = np.array([int(t) for t in tokens[4:]], dtype=np.float64)
    except (IndexError, ValueError) as exc:
        raise FormatError(f"{source}: malformed PPM header or payload") from exc
    if data.size != width * height * 3 or maxval <= 0:
        raise FormatError(f"{source}: expected {width * height * 3} samples, found {data.size}")
    return data.reshape(height, width, 3) / maxval


def save_image(path: PathLike, image: np.ndarray) -> Path:
    """
    8-bit PNG, or ASCII PPM when the suffix is .ppm.
    """
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    if out.suffix.lower() == ".ppm":
        out.write_bytes(encode_ppm(image))
        return out
    arr = to_uint8(image)
    buf = io.BytesIO()
    Image.fromarray(arr).save(buf, format="PNG")
    out.write_bytes(buf.getvalue())
    return out


def load_image(path: PathLike) -> np.ndarray:
    """
    RGB float image in [0, 1], shape (H, W, 3). Accepts PNG and PPM.
    """
    src = Path(path)
    if not src.exists():
        raise FileNotFoundError(f"Image not found: {src}")
    blob = src.read_bytes()
    if blob[:2] == b"P3":
        return decode_ppm(blob, source=str(src))
    try:
        with Image.open(io.BytesIO(blob)) as img:
            rgb = np.asarray(img.convert("RGB"), dtype=np.float64)
    except OSError as exc:
        raise FormatError(f"{src}: unreadable image ({exc})") from exc
    return rgb / 255.0


def heatmap_preview(stack: HeatmapStack) -> np.ndarray:
    """
    Max over channels on a black-red-yellow-white ramp, (H, W, 3).
    """
    m = stack.values.max(axis=0)
    return np.stack([np.clip(3.0 * m - i, 0.0, 1.0) for i in range(3)], axis=-1)


def gray_to_rgb(values: np.ndarray) -> np.ndarray:
    g = np.clip(np.asarray(values, dtype=np.float64), 0.0, 1.0)
    return np.repeat(g[..., None], 3, axis=-1)
