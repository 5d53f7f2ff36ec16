#!/usr/bin/env python3
"""Export activation and gradient tensors for the CAM localization stage.

For each image, runs a frozen forward pass of the trained classifier, takes
the feature map at the chosen layer, and backpropagates the lesion logit to
get its gradient with respect to that map. Both tensors are written in the
pipeline's tensor format as <image_id>.act.ten / <image_id>.grad.ten.
"""

import argparse
import sys
from pathlib import Path

import torch

from common import load_image_rgb, load_manifest, resize_rgb, write_tensor
from train import build_model, to_tensor


def load_bundle(path, device="cpu", dtype=torch.float32):
    payload = torch.load(path, map_location="cpu", weights_only=True)
    if payload.get("arch") != "densenet121":
        raise ValueError(f"unsupported architecture {payload.get('arch')!r}")
    model = build_model(pretrained=False)
    model.load_state_dict(payload["state_dict"])
    model = model.to(device=device, dtype=dtype)
    model.eval()
    return model, payload


def resolve_layer(model, dotted: str):
    module = model
    for part in dotted.split("."):
        if not hasattr(module, part):
            raise ValueError(f"layer {dotted!r} not found (failed at {part!r})")
        module = getattr(module, part)
    return module


def cam_tensors(model, layer, image_tensor):
    """(activations, gradients), both [K, H', W'], for the lesion logit.

    The hook hands a clone to the rest of the network so that downstream
    inplace ops (DenseNet applies an inplace ReLU right after the feature
    stack) cannot mutate the captured map; activations and gradients then
    both refer to the layer's own output.
    """
    captured = {}

    def hook(_module, _inputs, output):
        captured["activations"] = output
        return output.clone()

    handle = layer.register_forward_hook(hook)
    try:
        model.zero_grad(set_to_none=True)
        logit = model(image_tensor.unsqueeze(0))[0, 0]
        activations = captured["activations"]
        gradients = torch.autograd.grad(logit, activations)[0]
    finally:
        handle.remove()
    return (
        activations.detach()[0].cpu().numpy(),
        gradients.detach()[0].cpu().numpy(),
        float(logit.detach().item()),
    )


def export(args) -> int:
    device = torch.device(args.device)
    dtype = torch.float64 if args.float64 else torch.float32
    model, payload = load_bundle(args.weights, device=device, dtype=dtype)
    layer = resolve_layer(model, args.layer or payload["export_layer"])
    image_size = args.image_size or payload["image_size"]

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    if args.manifest:
        targets = [(e["image_id"], e["image_path"]) for e in load_manifest(args.manifest)]
    else:
        targets = [(Path(p).stem, p) for p in args.images]
    if not targets:
        raise ValueError("nothing to export: empty manifest/image list")

    count = 0
    for image_id, image_path in targets:
        img = resize_rgb(load_image_rgb(image_path), image_size)
        tensor = to_tensor(img).to(device=device, dtype=dtype)
        activations, gradients, logit = cam_tensors(model, layer, tensor)
        if args.only_positive and logit <= 0:
            continue
        write_tensor(activations, out_dir / f"{image_id}.act.ten")
        write_tensor(gradients, out_dir / f"{image_id}.grad.ten")
        count += 1
    print(f"exported tensors for {count} image(s) to {out_dir}")
    return count


def build_parser():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--weights", required=True)
    parser.add_argument("--out-dir", required=True)
    parser.add_argument("--manifest", help="pipeline JSONL manifest")
    parser.add_argument("--images", nargs="*", default=[], help="explicit image paths")
    parser.add_argument("--layer", help="dotted module path (default from checkpoint)")
    parser.add_argument("--image-size", type=int, default=0)
    parser.add_argument("--only-positive", action="store_true",
                        help="skip images the classifier scores as lesion-free")
    parser.add_argument("--float64", action="store_true",
                        help="run the frozen pass in float64 (gradient audits)")
    parser.add_argument("--device", default="cuda" if torch.cuda.is_available() else "cpu")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        export(args)
    except (ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
