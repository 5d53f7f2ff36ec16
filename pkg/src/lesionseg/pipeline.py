"""Per-image pipeline orchestration with content-addressed run directories.

Every stage is a pure function of its inputs, so a run is reproducible
byte-for-byte given (config, seeds, provider outputs), resumable after an
interrupted or partially-provisioned run, and safe to parallelize per image.
"""

import dataclasses
import hashlib
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image as PILImage
from PIL import ImageDraw

from .camloc import CAM_METHODS, cam_binarize, normalize_upsample
from .dataset import DatasetManifest
from .enhance import AceParams, ace_enhance, auto_stride
from .fusion import (
    MAX_PROMPT_POINTS,
    box_prompt,
    derive_prompt_seed,
    fuse_regions,
    fused_region_mask,
    point_prompt,
)
from .image import (
    dump_json,
    load_mask_png,
    load_png,
    region_to_mask,
    regions_to_dict,
    resize,
    resize_mask,
    save_image_png,
    save_mask_png,
    save_regions_json,
)
from .metrics import EvalReport, MetricSample, boundary_pixels, build_report, evaluate_masks
from .morphseg import MorphFilterParams, morph_segment_enhanced
from .providers import ProviderError
from .refine import fill_holes

SEED_ENV_VAR = "LESIONSEG_SEED"

_PROVIDER_FAILURE_PREFIX = "provider_error"


@dataclass
class PipelineConfig:
    """All stage parameters. Defaults are the reference operating point."""

    ace_alpha: float = 5.0
    ace_stride: int = 0  # 0 = choose from image size
    kmeans_k: int = 2
    kmeans_seed: int = 0
    kmeans_restarts: int = 10
    bin_threshold: int = 90
    bottom_band: float = 1.0 / 3.0
    top_band: float = 0.1
    min_ratio: float = 0.2
    threshold_on: str = "membership"
    cam_method: str = "layercam"
    cam_threshold: float = 200.0
    prompt_kind: str = "box"
    prompt_seed: int = 0
    prompt_points: int = 10
    bootstrap_n: int = 5000
    bootstrap_seed: int = 0
    resize_width: int = 256
    resize_height: int = 256
    workers: int = 1

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.prompt_kind not in ("box", "points"):
            raise ValueError(f"prompt_kind must be box|points, got {self.prompt_kind!r}")
        if self.cam_method not in CAM_METHODS:
            raise ValueError(f"cam_method must be one of {sorted(CAM_METHODS)}")
        if self.threshold_on not in ("membership", "enhanced", "none"):
            raise ValueError(
                f"threshold_on must be membership|enhanced|none, got {self.threshold_on!r}"
            )
        if self.resize_width < 1 or self.resize_height < 1:
            raise ValueError("resize target must be positive")
        if not 1 <= self.prompt_points <= MAX_PROMPT_POINTS:
            raise ValueError(f"prompt_points must be in [1, {MAX_PROMPT_POINTS}]")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        MorphFilterParams(
            bin_threshold=self.bin_threshold,
            bottom_band=self.bottom_band,
            top_band=self.top_band,
            min_ratio=self.min_ratio,
        )

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, payload: dict) -> "PipelineConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(payload) - known)
        if unknown:
            raise ValueError(f"unknown config keys: {unknown}")
        return cls(**payload)

    @classmethod
    def from_file(cls, path) -> "PipelineConfig":
        if sys.version_info >= (3, 11):
            import tomllib
        else:
            import tomli as tomllib
        with open(path, "rb") as fh:
            return cls.from_dict(tomllib.load(fh))

    def with_overrides(self, overrides: dict) -> "PipelineConfig":
        payload = self.to_dict()
        payload.update({k: v for k, v in overrides.items() if v is not None})
        return self.from_dict(payload)

    def apply_env_seed(self) -> "PipelineConfig":
        raw = os.environ.get(SEED_ENV_VAR)
        if raw is None:
            return self
        seed = int(raw)
        return self.with_overrides(
            {"kmeans_seed": seed, "prompt_seed": seed, "bootstrap_seed": seed}
        )

    def morph_filter_params(self) -> MorphFilterParams:
        return MorphFilterParams(
            bin_threshold=self.bin_threshold,
            bottom_band=self.bottom_band,
            top_band=self.top_band,
            min_ratio=self.min_ratio,
        )

    def ace_params(self) -> AceParams:
        stride = self.ace_stride or auto_stride(self.resize_width, self.resize_height)
        return AceParams(alpha=self.ace_alpha, sample_stride=stride)


def run_id_for(config: PipelineConfig, manifest: DatasetManifest) -> str:
    digest = hashlib.sha256()
    digest.update(dump_json(config.to_dict()).encode())
    digest.update(manifest.to_jsonl().encode())
    return digest.hexdigest()[:16]


def _load_inputs(entry, config: PipelineConfig):
    img = load_png(entry.image_path)
    target = (config.resize_height, config.resize_width)
    if img.shape[:2] != target:
        img = resize(img, config.resize_width, config.resize_height, mode="bilinear")
    if entry.gt_mask_path is not None:
        gt = load_mask_png(entry.gt_mask_path)
        if gt.shape != target:
            gt = resize_mask(gt, config.resize_width, config.resize_height)
    else:
        gt = np.zeros(target, dtype=bool)
    return img, gt


def _is_cached(img_dir: Path) -> bool:
    metrics_path = img_dir / "metrics.json"
    if not metrics_path.is_file():
        return False
    flags = json.loads(metrics_path.read_text()).get("flags", [])
    # provider failures are retried on resume; everything else is final
    return not any(flag.startswith(_PROVIDER_FAILURE_PREFIX) for flag in flags)


def _empty_result(img_dir, entry, gt, flags):
    empty = np.zeros_like(gt)
    save_mask_png(empty, img_dir / "final.png")
    sample = evaluate_masks(empty, gt, entry.image_id, extra_flags=flags)
    (img_dir / "metrics.json").write_text(dump_json(sample.to_dict()))
    return sample


def process_image(entry, config: PipelineConfig, provider, run_dir: Path):
    """Run all stages for one image, writing artifacts under images/<id>/."""
    img_dir = run_dir / "images" / entry.image_id
    img_dir.mkdir(parents=True, exist_ok=True)
    if _is_cached(img_dir):
        payload = json.loads((img_dir / "metrics.json").read_text())
        return _sample_from_dict(payload)

    img, gt = _load_inputs(entry, config)
    h, w = img.shape[:2]
    save_mask_png(gt, img_dir / "gt.png")

    enhanced = ace_enhance(img, config.ace_params())
    save_image_png(enhanced, img_dir / "enhanced.png")
    morph_regions = morph_segment_enhanced(
        enhanced,
        k=config.kmeans_k,
        seed=config.kmeans_seed,
        restarts=config.kmeans_restarts,
        filter_params=config.morph_filter_params(),
        threshold_on=config.threshold_on,
    )
    save_regions_json(morph_regions, w, h, img_dir / "morph.json")

    try:
        activations, gradients = provider.cam_tensors(entry.image_id)
        raw_map = CAM_METHODS[config.cam_method](activations, gradients)
    except (ProviderError, ValueError) as exc:
        return _empty_result(img_dir, entry, gt, [f"{_PROVIDER_FAILURE_PREFIX}:cam:{exc}"])
    heatmap = normalize_upsample(raw_map, w, h)
    save_image_png(heatmap / 255.0, img_dir / "heatmap.png")
    cam_regions = cam_binarize(heatmap, config.cam_threshold)
    save_regions_json(cam_regions, w, h, img_dir / "cam.json")

    if not cam_regions:
        return _empty_result(img_dir, entry, gt, ["no_cam_evidence"])

    fusion = fuse_regions(morph_regions, cam_regions)
    fusion_payload = regions_to_dict([fusion.chosen], w, h)
    fusion_payload["source"] = fusion.source
    fusion_payload["overlap_table"] = list(fusion.overlap_table)
    (img_dir / "fused.json").write_text(dump_json(fusion_payload))

    seed = derive_prompt_seed(config.prompt_seed, entry.image_id)
    if config.prompt_kind == "box":
        prompt = box_prompt(fusion, entry.image_id, seed=seed)
    else:
        prompt = point_prompt(fusion, entry.image_id, seed=seed, n_points=config.prompt_points)
    (img_dir / "prompt.json").write_text(dump_json(prompt.to_dict()))

    flags = []
    try:
        sam_mask = provider.segment(entry.image_id, img, prompt)
    except ProviderError as exc:
        flags.append(f"{_PROVIDER_FAILURE_PREFIX}:segmenter:{exc}")
        sam_mask = None

    if sam_mask is None or not sam_mask.any():
        final = fused_region_mask(fusion, w, h)
        if sam_mask is not None:
            flags.append("fallback")
    else:
        final, refine_report = fill_holes(sam_mask)
        (img_dir / "refine.json").write_text(dump_json(dataclasses.asdict(refine_report)))

    save_mask_png(final, img_dir / "final.png")
    sample = evaluate_masks(final, gt, entry.image_id, extra_flags=flags)
    (img_dir / "metrics.json").write_text(dump_json(sample.to_dict()))
    return sample


def _sample_from_dict(payload):
    return MetricSample(
        image_id=payload["image_id"],
        dice=payload["dice"],
        iou=payload["iou"],
        hd95=payload["hd95"],
        flags=tuple(payload.get("flags", [])),
    )


def run_pipeline(manifest: DatasetManifest, config: PipelineConfig, provider, out_dir) -> EvalReport:
    """Process every manifest entry and write report.json / report.csv.

    The run directory is addressed by a hash of (config, manifest); rerunning
    with identical inputs reuses completed per-image results.
    """
    out_dir = Path(out_dir)
    run_dir = out_dir / run_id_for(config, manifest)
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "config.json").write_text(dump_json(config.to_dict()))
    (run_dir / "manifest.jsonl").write_text(manifest.to_jsonl())

    entries = list(manifest.entries)
    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            samples = list(
                pool.map(lambda e: process_image(e, config, provider, run_dir), entries)
            )
    else:
        samples = [process_image(e, config, provider, run_dir) for e in entries]

    report = build_report(samples, n_bootstrap=config.bootstrap_n, seed=config.bootstrap_seed)
    (run_dir / "report.json").write_text(report.to_json())
    report.write_csv(run_dir / "report.csv")
    return report


# ---------------------------------------------------------------------------
# Overlays


def _draw_contour(rgb: np.ndarray, mask: np.ndarray, color) -> None:
    edge = boundary_pixels(mask)
    rgb[edge] = color


def emit_overlays(run_dir) -> list:
    """Render GT and prediction contours over each input; returns written paths."""
    run_dir = Path(run_dir)
    manifest_path = run_dir / "manifest.jsonl"
    config_path = run_dir / "config.json"
    if not manifest_path.is_file() or not config_path.is_file():
        raise FileNotFoundError(f"not a pipeline run directory: {run_dir}")
    manifest = DatasetManifest.load(manifest_path)
    config = PipelineConfig.from_dict(json.loads(config_path.read_text()))

    overlay_dir = run_dir / "overlays"
    overlay_dir.mkdir(exist_ok=True)
    written = []
    for entry in manifest.entries:
        img_dir = run_dir / "images" / entry.image_id
        final_path = img_dir / "final.png"
        if not final_path.is_file():
            raise FileNotFoundError(f"incomplete run: missing {final_path}")
        img, gt = _load_inputs(entry, config)
        pred = load_mask_png(final_path)
        if img.ndim == 2:
            img = np.stack([img] * 3, axis=2)
        rgb = np.floor(img * 255.0 + 0.5).astype(np.uint8)
        _draw_contour(rgb, gt, (0, 255, 0))
        _draw_contour(rgb, pred, (255, 0, 0))
        pil = PILImage.fromarray(rgb, mode="RGB")
        if not pred.any():
            ImageDraw.Draw(pil).text((4, 4), "empty", fill=(255, 0, 0))
        out_path = overlay_dir / f"{entry.image_id}.png"
        pil.save(out_path, format="PNG")
        written.append(out_path)
    return written


def cam_only_masks(manifest: DatasetManifest, config: PipelineConfig, provider):
    """Binary CAM maps per image (the localization-only operating mode)."""
    masks = {}
    for entry in manifest.entries:
        img, _ = _load_inputs(entry, config)
        h, w = img.shape[:2]
        activations, gradients = provider.cam_tensors(entry.image_id)
        raw_map = CAM_METHODS[config.cam_method](activations, gradients)
        heatmap = normalize_upsample(raw_map, w, h)
        mask = np.zeros((h, w), dtype=bool)
        for region in cam_binarize(heatmap, config.cam_threshold):
            mask |= region_to_mask(region, w, h)
        masks[entry.image_id] = mask
    return masks


__all__ = [
    "PipelineConfig",
    "run_pipeline",
    "emit_overlays",
    "process_image",
    "run_id_for",
    "cam_only_masks",
    "SEED_ENV_VAR",
]
