#!/usr/bin/env python3
"""Promptable-segmenter inference honoring the pipeline's prompt JSON contract.

Feeds the original image plus the emitted box/point prompt into a SAM
checkpoint and writes the highest-scoring mask as <image_id>.sam.png.
Requires the segment-anything package and a model checkpoint; both are
external assets and are reported cleanly when missing.
"""

import argparse
import sys
from pathlib import Path

import numpy as np

from common import load_image_rgb, read_prompt, save_mask_png

VARIANT_KEYS = {"vit_b": "vit_b", "vit_l": "vit_l", "vit_h": "vit_h"}


def _load_predictor(variant: str, checkpoint: str):
    try:
        from segment_anything import SamPredictor, sam_model_registry
    except ImportError as exc:
        raise RuntimeError(
            "segment-anything is not installed; install it and download a "
            "checkpoint to run segmenter inference"
        ) from exc
    import torch

    torch.manual_seed(0)
    model = sam_model_registry[VARIANT_KEYS[variant]](checkpoint=checkpoint)
    device = "cuda" if torch.cuda.is_available() else "cpu"
    model.to(device)
    model.eval()
    return SamPredictor(model)


def infer_one(predictor, image_path, prompt_path, out_path) -> None:
    image = load_image_rgb(image_path)
    prompt = read_prompt(prompt_path)
    predictor.set_image(image)
    if prompt["kind"] == "box":
        masks, scores, _ = predictor.predict(
            box=np.asarray(prompt["box"], dtype=np.float64), multimask_output=True
        )
    else:
        coords = np.asarray(prompt["points"], dtype=np.float64)
        labels = np.ones(len(coords), dtype=np.int64)
        masks, scores, _ = predictor.predict(
            point_coords=coords, point_labels=labels, multimask_output=True
        )
    best = masks[int(np.argmax(scores))].astype(bool)
    save_mask_png(best, out_path)


def run(args) -> int:
    predictor = _load_predictor(args.variant, args.checkpoint)
    if args.image:
        pairs = [(args.image, args.prompt, args.out)]
    else:
        prompt_dir = Path(args.prompts)
        out_dir = Path(args.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        pairs = []
        for prompt_path in sorted(prompt_dir.glob("*.json")):
            payload = read_prompt(prompt_path)
            image_id = payload["image_id"]
            image_path = Path(args.images) / f"{image_id}.png"
            if not image_path.is_file():
                raise FileNotFoundError(f"image for prompt {prompt_path.name}: {image_path}")
            pairs.append((image_path, prompt_path, out_dir / f"{image_id}.sam.png"))
    for image_path, prompt_path, out_path in pairs:
        infer_one(predictor, image_path, prompt_path, out_path)
    print(f"wrote {len(pairs)} mask(s)")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--variant", choices=sorted(VARIANT_KEYS), default="vit_h")
    parser.add_argument("--checkpoint", required=True)
    parser.add_argument("--image", help="single-image mode: input PNG")
    parser.add_argument("--prompt", help="single-image mode: prompt JSON")
    parser.add_argument("--out", help="single-image mode: output mask PNG")
    parser.add_argument("--images", help="batch mode: directory of <image_id>.png")
    parser.add_argument("--prompts", help="batch mode: directory of prompt JSONs")
    parser.add_argument("--out-dir", help="batch mode: provider directory to fill")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    single = bool(args.image or args.prompt or args.out)
    batch = bool(args.images or args.prompts or args.out_dir)
    if single == batch or (single and not (args.image and args.prompt and args.out)):
        print("error: use --image/--prompt/--out together, or --images/--prompts/--out-dir",
              file=sys.stderr)
        return 2
    if batch and not (args.images and args.prompts and args.out_dir):
        print("error: batch mode needs --images, --prompts and --out-dir", file=sys.stderr)
        return 2
    try:
        return run(args)
    except RuntimeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
