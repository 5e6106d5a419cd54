# src/encoding/positional.py

"""
Frequency positional encoding:

    gamma(p) = [p, sin(2^0 pi p), cos(2^0 pi p), ..., sin(2^(L-1) pi p), cos(2^(L-1) pi p)]

Raw coordinates are always kept; output width is 3 + 6L for 3D inputs.
"""

from __future__ import annotations

import numpy as np


def encoded_width(L: int, input_dim: int = 3) -> int:
    return input_dim + 2 * input_dim * L


def positional_encode(p, L: int) -> np.ndarray:
    """
    Encode a point (shape (3,)) or a batch of points (shape (N, 3)).
    """
    if L < 0:
        raise ValueError(f"band count must be >= 0, got {L}")
    coords = np.asarray(p, dtype=np.float64)
    out = [coords]
    for band in range(L):
        freq = (2.0 ** band) * np.pi
        out.append(np.sin(freq * coords))
        out.append(np.cos(freq * coords))
    return np.concatenate(out, axis=-1)
