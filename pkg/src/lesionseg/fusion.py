"""Fusion of morphological candidates with CAM localization, and prompt emission.

The fused pseudo-label is the morphological region with the largest pixel
overlap against the union of CAM regions; with no overlap at all, the
largest CAM region is used instead. Prompts serialize in (x, y) order.
"""

import hashlib
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from .image import Region, region_to_mask


@dataclass(frozen=True)
class FusionResult:
    chosen: Region
    source: str  # "morph" | "cam"
    overlap_table: tuple  # per-morph-region overlap pixel counts


MAX_PROMPT_POINTS = 10


@dataclass(frozen=True)
class PromptSpec:
    """Serialized prompt for the external promptable segmenter.

    box is (x_min, y_min, x_max, y_max), inclusive; points are (x, y).
    """

    kind: str  # "box" | "points"
    box: tuple
    points: tuple
    image_id: str
    seed: int

    def __post_init__(self):
        if self.kind == "box":
            if self.box is None:
                raise ValueError("box prompt without box coordinates")
            x0, y0, x1, y1 = self.box
            if x0 > x1 or y0 > y1:
                raise ValueError(f"degenerate prompt box {self.box}")
        elif self.kind == "points":
            if not self.points:
                raise ValueError("point prompt without points")
            if len(self.points) > MAX_PROMPT_POINTS:
                raise ValueError(
                    f"point prompts carry at most {MAX_PROMPT_POINTS} points, "
                    f"got {len(self.points)}"
                )
        else:
            raise ValueError(f"unknown prompt kind {self.kind!r}")

    def to_dict(self) -> dict:
        return {
            "image_id": self.image_id,
            "kind": self.kind,
            "box": list(self.box) if self.box is not None else None,
            "points": [list(p) for p in self.points] if self.points is not None else None,
            "seed": int(self.seed),
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "PromptSpec":
        kind = payload["kind"]
        if kind not in ("box", "points"):
            raise ValueError(f"unknown prompt kind {kind!r}")
        box = payload.get("box")
        points = payload.get("points")
        if kind == "box" and box is None:
            raise ValueError("box prompt without box coordinates")
        if kind == "points" and not points:
            raise ValueError("point prompt without points")
        return cls(
            kind=kind,
            box=tuple(int(v) for v in box) if box is not None else None,
            points=tuple(tuple(int(v) for v in p) for p in points) if points is not None else None,
            image_id=str(payload["image_id"]),
            seed=int(payload["seed"]),
        )


def _encode_pixels(region: Region, col_span: int) -> np.ndarray:
    pix = region.pixels.astype(np.int64)
    return pix[:, 0] * col_span + pix[:, 1]


def fuse_regions(morph_regions, cam_regions) -> FusionResult:
    """Pick the pseudo-label region per the overlap rule.

    morph_regions may be empty; cam_regions must not be (an empty CAM set is
    an upstream failure). Ties on overlap break toward larger area, then
    earlier list position (callers pass regions in bbox order).
    """
    morph_regions = list(morph_regions)
    cam_regions = list(cam_regions)
    if not cam_regions:
        if not morph_regions:
            raise ValueError("no lesion evidence: both candidate sets are empty")
        raise ValueError("empty CAM region set (upstream localization failure)")

    col_span = 1 + max(
        int(r.pixels[:, 1].max()) for r in morph_regions + cam_regions
    )
    cam_keys = np.unique(np.concatenate([_encode_pixels(r, col_span) for r in cam_regions]))
    overlaps = tuple(
        int(np.isin(_encode_pixels(r, col_span), cam_keys, assume_unique=True).sum())
        for r in morph_regions
    )

    if any(overlaps):
        best = max(
            range(len(morph_regions)),
            key=lambda i: (overlaps[i], morph_regions[i].area, -i),
        )
        return FusionResult(chosen=morph_regions[best], source="morph", overlap_table=overlaps)

    largest = max(range(len(cam_regions)), key=lambda j: (cam_regions[j].area, -j))
    return FusionResult(chosen=cam_regions[largest], source="cam", overlap_table=overlaps)


def box_prompt(fusion: FusionResult, image_id: str, seed: int = 0) -> PromptSpec:
    """Smallest enclosing rectangle of the fused region, in (x, y) convention."""
    r0, c0, r1, c1 = fusion.chosen.bbox
    return PromptSpec(kind="box", box=(c0, r0, c1, r1), points=None, image_id=image_id, seed=seed)


def point_prompt(fusion: FusionResult, image_id: str, seed: int, n_points: int = 10) -> PromptSpec:
    """Up to ``n_points`` interior points sampled uniformly without replacement."""
    if not 1 <= n_points <= MAX_PROMPT_POINTS:
        raise ValueError(f"n_points must be in [1, {MAX_PROMPT_POINTS}], got {n_points}")
    pix = fusion.chosen.pixels
    if pix.shape[0] <= n_points:
        picked = pix
    else:
        rng = np.random.default_rng(int(seed))
        idx = rng.choice(pix.shape[0], size=n_points, replace=False)
        picked = pix[idx]
    points = tuple((int(c), int(r)) for r, c in picked)
    return PromptSpec(kind="points", box=None, points=points, image_id=image_id, seed=seed)


def derive_prompt_seed(master_seed: int, image_id: str) -> int:
    """Stable per-image sampling seed so batch runs stay reproducible."""
    digest = hashlib.sha256(f"{int(master_seed)}:{image_id}".encode()).digest()
    return int.from_bytes(digest[:8], "little") >> 1


class LesionFuser(BaseEstimator):
    """Estimator form of the fusion + prompting stage."""

    def __init__(self, prompt_kind="box", n_points=10, seed=0):
        self.prompt_kind = prompt_kind
        self.n_points = n_points
        self.seed = seed

    def fit(self, X=None, y=None):
        return self

    def fuse(self, morph_regions, cam_regions) -> FusionResult:
        return fuse_regions(morph_regions, cam_regions)

    def prompt(self, fusion: FusionResult, image_id: str) -> PromptSpec:
        seed = derive_prompt_seed(self.seed, image_id)
        if self.prompt_kind == "box":
            return box_prompt(fusion, image_id, seed=seed)
        if self.prompt_kind == "points":
            return point_prompt(fusion, image_id, seed=seed, n_points=self.n_points)
        raise ValueError(f"unknown prompt kind {self.prompt_kind!r}")


def fused_region_mask(fusion: FusionResult, width: int, height: int) -> np.ndarray:
    return region_to_mask(fusion.chosen, width, height)
