"""Core raster types and file I/O: PNG images, binary masks, regions, tensor files.

Conventions used across the package:

* intensity images are float64 arrays of shape (H, W) or (H, W, 3) with
  samples in [0, 1];
* binary masks are bool arrays of shape (H, W);
* pixel coordinates are zero-based (row, col); serialized prompts use
  (x=col, y=row) instead (see :mod:`lesionseg.fusion`);
* foreground connectivity is 8-connected, background 4-connected.
"""

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image as PILImage
from PIL import UnidentifiedImageError
from scipy import ndimage

from .validation import check_image, check_mask

TENSOR_MAGIC = b"LSTEN01\x00"

_STRUCT_8 = np.ones((3, 3), dtype=bool)  # 8-connected foreground
_STRUCT_4 = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)  # 4-connected background


# ---------------------------------------------------------------------------
# Regions


@dataclass(frozen=True)
class Region:
    """One 8-connected foreground component.

    pixels   -- int32 array of shape (n, 2) holding (row, col) in raster order
    bbox     -- (row_min, col_min, row_max, col_max), inclusive
    centroid -- (row, col) pixel-coordinate mean
    aspect_ratio -- bbox height / bbox width
    """

    pixels: np.ndarray
    bbox: tuple
    centroid: tuple
    aspect_ratio: float

    @classmethod
    def from_pixels(cls, rows, cols) -> "Region":
        rows = np.asarray(rows, dtype=np.int32)
        cols = np.asarray(cols, dtype=np.int32)
        if rows.size == 0:
            raise ValueError("region must contain at least one pixel")
        order = np.lexsort((cols, rows))
        pix = np.stack([rows[order], cols[order]], axis=1)
        r0, c0 = int(pix[:, 0].min()), int(pix[:, 1].min())
        r1, c1 = int(pix[:, 0].max()), int(pix[:, 1].max())
        ratio = (r1 - r0 + 1) / (c1 - c0 + 1)
        centroid = (float(pix[:, 0].mean()), float(pix[:, 1].mean()))
        return cls(pixels=pix, bbox=(r0, c0, r1, c1), centroid=centroid, aspect_ratio=ratio)

    @property
    def area(self) -> int:
        return int(self.pixels.shape[0])


def connected_components(mask) -> list:
    """Split the foreground of ``mask`` into maximal 8-connected regions.

    Regions are returned sorted by bbox (row_min, col_min, row_max, col_max),
    which makes the output order deterministic. An empty mask yields [].
    """
    mask = check_mask(mask)
    labels, count = ndimage.label(mask, structure=_STRUCT_8)
    regions = []
    for index, slc in enumerate(ndimage.find_objects(labels), start=1):
        ys, xs = np.nonzero(labels[slc] == index)
        regions.append(Region.from_pixels(ys + slc[0].start, xs + slc[1].start))
    regions.sort(key=lambda r: r.bbox)
    return regions


def region_to_mask(region: Region, width: int, height: int) -> np.ndarray:
    """Rasterize one region onto a (height, width) canvas."""
    pix = region.pixels
    if (
        pix[:, 0].min() < 0
        or pix[:, 1].min() < 0
        or pix[:, 0].max() >= height
        or pix[:, 1].max() >= width
    ):
        raise ValueError(
            f"region pixels exceed canvas bounds {height}x{width}: bbox={region.bbox}"
        )
    mask = np.zeros((height, width), dtype=bool)
    mask[pix[:, 0], pix[:, 1]] = True
    return mask


def regions_to_dict(regions, width: int, height: int) -> dict:
    """JSON-ready region table. Pixels are stored as per-row runs [row, c0, c1]."""
    table = []
    for reg in regions:
        runs = []
        for row in np.unique(reg.pixels[:, 0]):
            cols = reg.pixels[reg.pixels[:, 0] == row, 1]
            start = prev = int(cols[0])
            for c in cols[1:]:
                c = int(c)
                if c == prev + 1:
                    prev = c
                    continue
                runs.append([int(row), start, prev])
                start = prev = c
            runs.append([int(row), start, prev])
        table.append(
            {
                "bbox": list(reg.bbox),
                "centroid": list(reg.centroid),
                "aspect_ratio": reg.aspect_ratio,
                "area": reg.area,
                "runs": runs,
            }
        )
    return {"width": int(width), "height": int(height), "regions": table}


def regions_from_dict(payload: dict):
    """Inverse of :func:`regions_to_dict`. Returns (regions, width, height)."""
    regions = []
    for entry in payload["regions"]:
        rows, cols = [], []
        for row, c0, c1 in entry["runs"]:
            span = np.arange(c0, c1 + 1, dtype=np.int32)
            cols.append(span)
            rows.append(np.full(span.shape, row, dtype=np.int32))
        regions.append(Region.from_pixels(np.concatenate(rows), np.concatenate(cols)))
    return regions, int(payload["width"]), int(payload["height"])


def save_regions_json(regions, width: int, height: int, path) -> None:
    Path(path).write_text(dump_json(regions_to_dict(regions, width, height)))


def load_regions_json(path):
    return regions_from_dict(json.loads(Path(path).read_text()))


def dump_json(payload) -> str:
    """Canonical JSON used for all artifacts: stable key order, no whitespace drift."""
    return json.dumps(payload, sort_keys=True, separators=(",", ": "), indent=1) + "\n"


# ---------------------------------------------------------------------------
# PNG I/O


def load_png(path) -> np.ndarray:
    """Load an 8-bit grayscale or RGB PNG as a float image in [0, 1]."""
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"image file not found: {p}")
    try:
        with PILImage.open(p) as im:
            fmt = im.format
            mode = im.mode
            if fmt != "PNG":
                raise ValueError(f"not a PNG file: {p} (format={fmt})")
            if mode in ("I", "I;16", "I;16B", "I;16L", "F"):
                raise ValueError(f"unsupported PNG bit depth (expected 8-bit): {p}")
            if mode not in ("L", "RGB"):
                raise ValueError(f"unsupported PNG mode {mode!r} (expected L or RGB): {p}")
            arr = np.asarray(im, dtype=np.float64)
    except (UnidentifiedImageError, OSError) as exc:
        raise ValueError(f"malformed PNG: {p} ({exc})") from exc
    return arr / 255.0


def save_image_png(img, path) -> None:
    """Save a [0, 1] float image as 8-bit grayscale or RGB PNG (rounded)."""
    arr = check_image(img)
    quantized = np.floor(arr * 255.0 + 0.5).astype(np.uint8)
    PILImage.fromarray(quantized, mode="L" if arr.ndim == 2 else "RGB").save(path, format="PNG")


def save_mask_png(mask, path) -> None:
    """Save a binary mask as an 8-bit grayscale PNG with foreground=255."""
    mask = check_mask(mask)
    PILImage.fromarray(mask.astype(np.uint8) * 255, mode="L").save(path, format="PNG")


def load_mask_png(path) -> np.ndarray:
    """Load a mask PNG; any pixel at intensity >= 0.5 counts as foreground."""
    img = load_png(path)
    if img.ndim == 3:
        img = img.mean(axis=2)
    return img >= 0.5


# ---------------------------------------------------------------------------
# Tensor files
#
# Byte layout (little-endian, no padding, no footer):
#   8 bytes  magic  "LSTEN01\0"
#   u32      ndim   (1..4)
#   u32*ndim dims
#   f32*prod(dims)  payload, row-major (last index fastest)


def write_tensor(tensor, path) -> None:
    arr = np.ascontiguousarray(tensor, dtype=np.float32)
    if not 1 <= arr.ndim <= 4:
        raise ValueError(f"tensor rank must be 1..4, got {arr.ndim}")
    if not np.isfinite(arr).all():
        raise ValueError("tensor contains non-finite values")
    with open(path, "wb") as fh:
        fh.write(TENSOR_MAGIC)
        fh.write(struct.pack("<I", arr.ndim))
        fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        fh.write(arr.astype("<f4", copy=False).tobytes(order="C"))


def read_tensor(path) -> np.ndarray:
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"tensor file not found: {p}")
    blob = p.read_bytes()
    if blob[:8] != TENSOR_MAGIC:
        raise ValueError(f"bad magic in tensor file: {p}")
    if len(blob) < 12:
        raise ValueError(f"tensor file truncated before header end: {p}")
    (ndim,) = struct.unpack_from("<I", blob, 8)
    if not 1 <= ndim <= 4:
        raise ValueError(f"tensor rank must be 1..4, got {ndim}: {p}")
    header_end = 12 + 4 * ndim
    if len(blob) < header_end:
        raise ValueError(f"tensor file truncated inside dims: {p}")
    dims = struct.unpack_from(f"<{ndim}I", blob, 12)
    expected = int(np.prod(dims, dtype=np.int64)) * 4
    payload = blob[header_end:]
    if len(payload) != expected:
        raise ValueError(
            f"tensor payload length mismatch: expected {expected} bytes, got {len(payload)}: {p}"
        )
    arr = np.frombuffer(payload, dtype="<f4").reshape(dims).astype(np.float32)
    if not np.isfinite(arr).all():
        raise ValueError(f"tensor contains non-finite values: {p}")
    return arr


# ---------------------------------------------------------------------------
# Resampling


def _axis_coords(n_in: int, n_out: int) -> np.ndarray:
    # half-pixel-center mapping: output pixel o samples input coordinate
    # (o + 0.5) * n_in / n_out - 0.5
    return (np.arange(n_out, dtype=np.float64) + 0.5) * (n_in / n_out) - 0.5


def resize(img, width: int, height: int, mode: str = "bilinear") -> np.ndarray:
    """Resample an image to (height, width) with bilinear or nearest interpolation."""
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim not in (2, 3):
        raise ValueError(f"resize: expected a 2-D or 3-D array, got shape {arr.shape}")
    if width < 1 or height < 1:
        raise ValueError(f"resize: target dimensions must be >= 1, got {width}x{height}")
    if mode not in ("bilinear", "nearest"):
        raise ValueError(f"resize: unknown mode {mode!r}")

    h_in, w_in = arr.shape[:2]
    rows = _axis_coords(h_in, height)
    cols = _axis_coords(w_in, width)

    if mode == "nearest":
        ri = np.clip(np.floor(rows + 0.5).astype(np.int64), 0, h_in - 1)
        ci = np.clip(np.floor(cols + 0.5).astype(np.int64), 0, w_in - 1)
        return arr[np.ix_(ri, ci)]

    r0 = np.floor(rows).astype(np.int64)
    c0 = np.floor(cols).astype(np.int64)
    fr = rows - r0
    fc = cols - c0
    r0c = np.clip(r0, 0, h_in - 1)
    r1c = np.clip(r0 + 1, 0, h_in - 1)
    c0c = np.clip(c0, 0, w_in - 1)
    c1c = np.clip(c0 + 1, 0, w_in - 1)

    extra = (1,) * (arr.ndim - 2)
    fr = fr.reshape(-1, 1, *extra)
    fc = fc.reshape(1, -1, *extra)

    v00 = arr[np.ix_(r0c, c0c)]
    v01 = arr[np.ix_(r0c, c1c)]
    v10 = arr[np.ix_(r1c, c0c)]
    v11 = arr[np.ix_(r1c, c1c)]
    # v + f*(v' - v) keeps constants exact bit-for-bit
    top = v00 + fc * (v01 - v00)
    bottom = v10 + fc * (v11 - v10)
    return top + fr * (bottom - top)


def resize_mask(mask, width: int, height: int) -> np.ndarray:
    """Nearest-neighbor mask resize (labels must not be interpolated)."""
    mask = check_mask(mask)
    return resize(mask.astype(np.float64), width, height, mode="nearest") >= 0.5
