"""Shared helpers for the sidecar scripts.

The sidecar talks to the main pipeline only through files: the tensor
format for activation/gradient export, the prompt JSON schema, and 8-bit
mask PNGs. The writers here implement those contracts independently.
"""

import json
import struct
from pathlib import Path

import numpy as np
from PIL import Image

TENSOR_MAGIC = b"LSTEN01\x00"


def write_tensor(array, path) -> None:
    """Serialize a float array: magic, u32 ndim, u32 dims, little-endian f32 payload."""
    arr = np.ascontiguousarray(array, dtype=np.float32)
    if not 1 <= arr.ndim <= 4:
        raise ValueError(f"tensor rank must be 1..4, got {arr.ndim}")
    if not np.isfinite(arr).all():
        raise ValueError("refusing to write non-finite tensor")
    with open(path, "wb") as fh:
        fh.write(TENSOR_MAGIC)
        fh.write(struct.pack("<I", arr.ndim))
        fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        fh.write(arr.astype("<f4", copy=False).tobytes(order="C"))


def read_prompt(path) -> dict:
    """Load and validate a prompt JSON emitted by the fusion stage."""
    payload = json.loads(Path(path).read_text())
    kind = payload.get("kind")
    if kind == "box":
        box = payload.get("box")
        if not (isinstance(box, list) and len(box) == 4):
            raise ValueError(f"box prompt needs [x0, y0, x1, y1], got {box!r}")
        x0, y0, x1, y1 = box
        if x0 > x1 or y0 > y1:
            raise ValueError(f"degenerate prompt box {box}")
    elif kind == "points":
        points = payload.get("points")
        if not points:
            raise ValueError("point prompt without points")
        if any(len(p) != 2 for p in points):
            raise ValueError("points must be [x, y] pairs")
    else:
        raise ValueError(f"unknown prompt kind {kind!r}")
    return payload


def load_manifest(path) -> list:
    entries = []
    for line in Path(path).read_text().splitlines():
        if line.strip():
            entries.append(json.loads(line))
    return entries


def load_image_rgb(path) -> np.ndarray:
    """8-bit RGB array; grayscale inputs are replicated across channels."""
    with Image.open(path) as im:
        if im.mode == "L":
            im = im.convert("RGB")
        if im.mode != "RGB":
            raise ValueError(f"unsupported image mode {im.mode!r}: {path}")
        return np.asarray(im, dtype=np.uint8)


def save_mask_png(mask, path) -> None:
    arr = (np.asarray(mask).astype(np.uint8)) * 255
    Image.fromarray(arr, mode="L").save(path, format="PNG")


def resize_rgb(img: np.ndarray, size: int) -> np.ndarray:
    return np.asarray(
        Image.fromarray(img, mode="RGB").resize((size, size), Image.BILINEAR),
        dtype=np.uint8,
    )
