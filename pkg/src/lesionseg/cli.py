"""Command-line interface: per-stage subcommands plus the batch pipeline."""

import argparse
import dataclasses
import sys
from pathlib import Path

import numpy as np

from .camloc import CAM_METHODS, cam_binarize, normalize_upsample
from .dataset import DatasetManifest, ingest_busi
from .enhance import AceParams, ace_enhance, auto_stride
from .fusion import box_prompt, derive_prompt_seed, fuse_regions, point_prompt
from .image import (
    dump_json,
    load_mask_png,
    load_png,
    load_regions_json,
    read_tensor,
    regions_to_dict,
    save_image_png,
    save_mask_png,
    save_regions_json,
)
from .metrics import evaluate_dir
from .morphseg import MorphFilterParams, morph_segment
from .pipeline import PipelineConfig, emit_overlays, run_pipeline
from .providers import DirectoryProvider
from .refine import fill_holes, select_final


def _cmd_enhance(args) -> int:
    img = load_png(args.input)
    stride = args.stride or auto_stride(img.shape[1], img.shape[0])
    enhanced = ace_enhance(img, AceParams(alpha=args.alpha, sample_stride=stride))
    save_image_png(enhanced, args.output)
    return 0


def _cmd_morphseg(args) -> int:
    img = load_png(args.input)
    params = MorphFilterParams(
        bin_threshold=args.threshold,
        bottom_band=args.bottom_band,
        top_band=args.top_band,
        min_ratio=args.min_ratio,
    )
    stride = args.stride or auto_stride(img.shape[1], img.shape[0])
    regions = morph_segment(
        img,
        k=args.k,
        seed=args.seed,
        filter_params=params,
        ace_params=AceParams(alpha=args.alpha, sample_stride=stride),
    )
    h, w = img.shape[:2]
    if args.regions:
        save_regions_json(regions, w, h, args.regions)
    if args.labels:
        label_img = np.zeros((h, w), dtype=np.float64)
        for index, region in enumerate(regions, start=1):
            label_img[region.pixels[:, 0], region.pixels[:, 1]] = min(index, 255) / 255.0
        save_image_png(label_img, args.labels)
    print(f"{len(regions)} candidate region(s)")
    return 0


def _cmd_camloc(args) -> int:
    activations = read_tensor(args.activations)
    gradients = read_tensor(args.gradients)
    raw_map = CAM_METHODS[args.method](activations, gradients)
    heatmap = normalize_upsample(raw_map, args.width, args.height)
    if args.out:
        save_image_png(heatmap / 255.0, args.out)
    regions = cam_binarize(heatmap, args.threshold)
    if args.regions:
        save_regions_json(regions, args.width, args.height, args.regions)
    print(f"{len(regions)} activated region(s)")
    return 0


def _cmd_fuse(args) -> int:
    morph_regions, w, h = load_regions_json(args.morph)
    cam_regions, cw, ch = load_regions_json(args.cam)
    if (w, h) != (cw, ch):
        raise SystemExit(f"region tables disagree on canvas size: {(w, h)} vs {(cw, ch)}")
    fusion = fuse_regions(morph_regions, cam_regions)
    seed = args.seed if args.seed is not None else derive_prompt_seed(0, args.image_id)
    if args.prompt_kind == "box":
        prompt = box_prompt(fusion, args.image_id, seed=seed)
    else:
        prompt = point_prompt(fusion, args.image_id, seed=seed, n_points=args.points)
    Path(args.out).write_text(dump_json(prompt.to_dict()))
    if args.fused:
        payload = regions_to_dict([fusion.chosen], w, h)
        payload["source"] = fusion.source
        payload["overlap_table"] = list(fusion.overlap_table)
        Path(args.fused).write_text(dump_json(payload))
    print(f"fused source={fusion.source}")
    return 0


def _cmd_refine(args) -> int:
    mask = load_mask_png(args.mask)
    if not mask.any() and args.fallback:
        fallback_regions, w, h = load_regions_json(args.fallback)
        if not fallback_regions:
            raise SystemExit(f"fallback region table is empty: {args.fallback}")
        final = select_final(mask, fallback_regions[0])
        payload = {"used_fallback": True, "output_area": int(final.sum())}
    else:
        final, report = fill_holes(mask)
        payload = dataclasses.asdict(report)
        payload["used_fallback"] = False
    save_mask_png(final, args.out)
    if args.report:
        Path(args.report).write_text(dump_json(payload))
    return 0


def _cmd_eval(args) -> int:
    report = evaluate_dir(args.pred, args.gt, n_bootstrap=args.bootstrap, seed=args.seed)
    if args.out:
        Path(args.out).write_text(report.to_json())
    if args.csv:
        report.write_csv(args.csv)
    for metric, agg in report.aggregates.items():
        print(
            f"{metric}: {agg['mean']:.4f} [{agg['ci_lower']:.4f}, {agg['ci_upper']:.4f}]"
        )
    return 0


def _cmd_pipeline(args) -> int:
    if bool(args.data) == bool(args.manifest):
        raise SystemExit("provide exactly one of --data or --manifest")
    manifest = ingest_busi(args.data) if args.data else DatasetManifest.load(args.manifest)
    config = PipelineConfig.from_file(args.config) if args.config else PipelineConfig()
    overrides = {
        field.name: getattr(args, field.name)
        for field in dataclasses.fields(PipelineConfig)
        if getattr(args, field.name, None) is not None
    }
    config = config.with_overrides(overrides).apply_env_seed()
    provider = DirectoryProvider(args.providers)
    report = run_pipeline(manifest, config, provider, args.out)
    for metric, agg in report.aggregates.items():
        print(
            f"{metric}: {agg['mean']:.4f} [{agg['ci_lower']:.4f}, {agg['ci_upper']:.4f}]"
        )
    if report.flags:
        print(f"flagged images: {len(report.flags)}")
    return 0


def _cmd_overlays(args) -> int:
    written = emit_overlays(args.run)
    print(f"wrote {len(written)} overlay(s)")
    return 0


def _cmd_manifest(args) -> int:
    manifest = ingest_busi(args.data)
    manifest.save(args.out)
    print(f"{len(manifest)} entries")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lesionseg",
        description="Weakly supervised breast ultrasound lesion segmentation pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("enhance", help="contrast-enhance a PNG image")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--alpha", type=float, default=5.0)
    p.add_argument("--stride", type=int, default=0, help="0 = choose from image size")
    p.set_defaults(fn=_cmd_enhance)

    p = sub.add_parser("morphseg", help="morphological candidate extraction")
    p.add_argument("input")
    p.add_argument("--k", type=int, default=2)
    p.add_argument("--threshold", type=int, default=90)
    p.add_argument("--min-ratio", dest="min_ratio", type=float, default=0.2)
    p.add_argument("--bottom-band", dest="bottom_band", type=float, default=1.0 / 3.0)
    p.add_argument("--top-band", dest="top_band", type=float, default=0.1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--alpha", type=float, default=5.0)
    p.add_argument("--stride", type=int, default=0)
    p.add_argument("--regions", help="write the region table JSON here")
    p.add_argument("--labels", help="write the label PNG here")
    p.set_defaults(fn=_cmd_morphseg)

    p = sub.add_parser("camloc", help="CAM heatmap + thresholded regions from tensors")
    p.add_argument("--activations", required=True)
    p.add_argument("--gradients", required=True)
    p.add_argument("--threshold", type=float, default=200.0)
    p.add_argument("--method", choices=sorted(CAM_METHODS), default="layercam")
    p.add_argument("--width", type=int, default=256)
    p.add_argument("--height", type=int, default=256)
    p.add_argument("--out", help="write the heatmap PNG here")
    p.add_argument("--regions", help="write the region table JSON here")
    p.set_defaults(fn=_cmd_camloc)

    p = sub.add_parser("fuse", help="fuse candidates and emit a segmenter prompt")
    p.add_argument("--morph", required=True)
    p.add_argument("--cam", required=True)
    p.add_argument("--prompt-kind", dest="prompt_kind", choices=("box", "points"), default="box")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--points", type=int, default=10)
    p.add_argument("--image-id", dest="image_id", default="image")
    p.add_argument("--out", required=True)
    p.add_argument("--fused", help="also write the fused region table here")
    p.set_defaults(fn=_cmd_fuse)

    p = sub.add_parser("refine", help="fill holes in a segmenter mask")
    p.add_argument("--mask", required=True)
    p.add_argument("--fallback", help="region table used when the mask is empty")
    p.add_argument("--out", required=True)
    p.add_argument("--report", help="write the refinement report JSON here")
    p.set_defaults(fn=_cmd_refine)

    p = sub.add_parser("eval", help="score predicted masks against ground truth")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--bootstrap", type=int, default=5000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="write the report JSON here")
    p.add_argument("--csv", help="write the per-image CSV here")
    p.set_defaults(fn=_cmd_eval)

    p = sub.add_parser("pipeline", help="run the full per-image pipeline over a dataset")
    p.add_argument("--data", help="BUSI-style dataset root (class subdirectories)")
    p.add_argument("--manifest", help="JSONL manifest (alternative to --data)")
    p.add_argument("--providers", required=True, help="directory with sidecar outputs")
    p.add_argument("--config", help="TOML config file (flat key = value)")
    p.add_argument("--out", required=True, help="output root; runs are content-addressed")
    for field in dataclasses.fields(PipelineConfig):
        flag = "--" + field.name.replace("_", "-")
        if field.type == "str" or isinstance(field.default, str):
            p.add_argument(flag, dest=field.name, default=None)
        elif isinstance(field.default, int):
            p.add_argument(flag, dest=field.name, type=int, default=None)
        else:
            p.add_argument(flag, dest=field.name, type=float, default=None)
    p.set_defaults(fn=_cmd_pipeline)

    p = sub.add_parser("overlays", help="render contour overlays for a finished run")
    p.add_argument("--run", required=True)
    p.set_defaults(fn=_cmd_overlays)

    p = sub.add_parser("manifest", help="scan a dataset root into a JSONL manifest")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_manifest)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except (FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
