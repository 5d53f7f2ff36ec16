"""Weakly supervised breast ultrasound lesion segmentation pipeline."""

from .camloc import CamLocalizer, cam_binarize, gradcam, layercam, normalize_upsample
from .dataset import DatasetManifest, ManifestEntry, ingest_busi
from .enhance import AceEnhancer, AceParams, ace_enhance, ace_normalize, ace_response
from .fusion import (
    FusionResult,
    LesionFuser,
    PromptSpec,
    box_prompt,
    fuse_regions,
    point_prompt,
)
from .image import (
    Region,
    connected_components,
    load_mask_png,
    load_png,
    read_tensor,
    region_to_mask,
    resize,
    resize_mask,
    save_image_png,
    save_mask_png,
    write_tensor,
)
from .metrics import (
    EvalReport,
    MetricSample,
    bootstrap_ci,
    dice,
    evaluate_dir,
    evaluate_masks,
    hd95,
    iou,
)
from .morphseg import (
    KMeansResult,
    MorphFilterParams,
    MorphSegmenter,
    anatomical_filter,
    aspect_filter,
    binarize,
    cluster_to_mask,
    kmeans_intensity,
    morph_segment,
)
from .pipeline import PipelineConfig, emit_overlays, run_pipeline
from .providers import DirectoryProvider, MockProvider, ProviderError
from .refine import MaskRefiner, RefineReport, fill_holes, select_final

__version__ = "0.1.0"

__all__ = [
    "AceEnhancer",
    "AceParams",
    "CamLocalizer",
    "DatasetManifest",
    "DirectoryProvider",
    "EvalReport",
    "FusionResult",
    "KMeansResult",
    "LesionFuser",
    "ManifestEntry",
    "MaskRefiner",
    "MetricSample",
    "MockProvider",
    "MorphFilterParams",
    "MorphSegmenter",
    "PipelineConfig",
    "PromptSpec",
    "ProviderError",
    "RefineReport",
    "Region",
    "ace_enhance",
    "ace_normalize",
    "ace_response",
    "anatomical_filter",
    "aspect_filter",
    "binarize",
    "bootstrap_ci",
    "box_prompt",
    "cam_binarize",
    "cluster_to_mask",
    "connected_components",
    "dice",
    "emit_overlays",
    "evaluate_dir",
    "evaluate_masks",
    "fill_holes",
    "fuse_regions",
    "gradcam",
    "hd95",
    "ingest_busi",
    "iou",
    "kmeans_intensity",
    "layercam",
    "load_mask_png",
    "load_png",
    "morph_segment",
    "normalize_upsample",
    "point_prompt",
    "read_tensor",
    "region_to_mask",
    "resize",
    "resize_mask",
    "run_pipeline",
    "save_image_png",
    "save_mask_png",
    "select_final",
    "write_tensor",
]
