"""Binary portable graymap (P5) heatmaps."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import InvalidInputError

UPSCALE = 8
MID_GRAY = 128


def heatmap_pixels(values, mask=None, upscale=UPSCALE):
    """8-bit image of ``values`` (rows = x index), min-max normalized.

    A constant image maps to mid-gray.  Cells where ``mask`` is true are
    drawn white.  Each cell becomes an ``upscale`` x ``upscale`` block.
    """
    v = np.asarray(values, dtype=float)
    if v.ndim != 2:
        raise InvalidInputError(f"heatmap needs a 2-D array, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise InvalidInputError("heatmap values must be finite")
    lo, hi = v.min(), v.max()
    if hi > lo:
        px = np.rint(255.0 * (v - lo) / (hi - lo)).astype(np.uint8)
    else:
        px = np.full(v.shape, MID_GRAY, dtype=np.uint8)
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != v.shape:
            raise InvalidInputError("mask shape differs from the field shape")
        px[mask] = 255
    return np.kron(px, np.ones((upscale, upscale), dtype=np.uint8))


def render_heatmap(values, out_path, mask=None, upscale=UPSCALE):
    """Write ``values`` as a P5 image; returns the path."""
    px = heatmap_pixels(values, mask, upscale)
    h, w = px.shape
    out_path = Path(out_path)
    out_path.write_bytes(f"P5\n{w} {h}\n255\n".encode("ascii") + px.tobytes())
    return out_path


def read_pgm(path):
    """Minimal P5 reader returning a ``uint8`` array of shape ``(height, width)``."""
    data = Path(path).read_bytes()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while data[pos:pos + 1].isspace():
            pos += 1
        if data[pos:pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        end = pos
        while not data[end:end + 1].isspace():
            end += 1
        tokens.append(data[pos:end])
        pos = end
    if tokens[0] != b"P5":
        raise InvalidInputError(f"{path}: not a binary graymap")
    w, h, maxval = (int(t) for t in tokens[1:])
    if maxval > 255:
        raise InvalidInputError("16-bit graymaps are not supported")
    pos += 1
    return np.frombuffer(data, dtype=np.uint8, count=w * h, offset=pos).reshape(h, w)
