#!/usr/bin/env python3
"""Train the image-level lesion classifier (DenseNet-121, BCE).

Reads the pipeline's JSONL manifest (image_id, image_path, class_label) and
writes a checkpoint consumed by export_cam.py plus a JSONL training log.
Normal-class images are augmented with flips/rotations to balance classes.
"""

import argparse
import json
import sys

import numpy as np
import torch
from torch import nn
from torch.utils.data import DataLoader, Dataset
from torchvision.models import densenet121

from common import load_image_rgb, load_manifest, resize_rgb

IMAGENET_MEAN = np.array([0.485, 0.456, 0.406], dtype=np.float32)
IMAGENET_STD = np.array([0.229, 0.224, 0.225], dtype=np.float32)

_AUGMENTS = (
    lambda a: a[:, ::-1],           # horizontal flip
    lambda a: a[::-1, :],           # vertical flip
    lambda a: np.rot90(a, 1),       # 90-degree rotation
    lambda a: np.rot90(a, 3),
)


def to_tensor(img: np.ndarray) -> torch.Tensor:
    arr = img.astype(np.float32) / 255.0
    arr = (arr - IMAGENET_MEAN) / IMAGENET_STD
    return torch.from_numpy(np.ascontiguousarray(arr.transpose(2, 0, 1)))


class LesionDataset(Dataset):
    def __init__(self, entries, image_size, augment_normals):
        self.samples = []
        for entry in entries:
            label = 1.0 if entry["class_label"] == "benign" else 0.0
            self.samples.append((entry["image_path"], label, None))
            if label == 0.0:
                for aug_index in range(augment_normals):
                    self.samples.append((entry["image_path"], label, aug_index % len(_AUGMENTS)))
        self.image_size = image_size

    def __len__(self):
        return len(self.samples)

    def __getitem__(self, index):
        path, label, aug = self.samples[index]
        img = resize_rgb(load_image_rgb(path), self.image_size)
        if aug is not None:
            img = np.ascontiguousarray(_AUGMENTS[aug](img))
        return to_tensor(img), torch.tensor([label], dtype=torch.float32)


def build_model(pretrained: bool = False) -> nn.Module:
    weights = "IMAGENET1K_V1" if pretrained else None
    model = densenet121(weights=weights)
    model.classifier = nn.Linear(model.classifier.in_features, 1)
    return model


def save_checkpoint(model, path, image_size, export_layer="features.norm5"):
    torch.save(
        {
            "arch": "densenet121",
            "state_dict": model.state_dict(),
            "export_layer": export_layer,
            "class_index": 1,
            "image_size": image_size,
        },
        path,
    )


def train(args) -> list:
    entries = load_manifest(args.manifest)
    labels = {e["class_label"] for e in entries}
    if len(labels) < 2:
        raise ValueError(f"manifest holds a single class {sorted(labels)}; need both")

    torch.manual_seed(args.seed)
    np.random.seed(args.seed)
    dataset = LesionDataset(entries, args.image_size, args.augment_normals)
    loader = DataLoader(dataset, batch_size=args.batch_size, shuffle=True,
                        generator=torch.Generator().manual_seed(args.seed))

    device = torch.device(args.device)
    model = build_model(pretrained=args.pretrained).to(device)
    criterion = nn.BCEWithLogitsLoss()
    optimizer = torch.optim.SGD(
        model.parameters(), lr=args.lr, momentum=args.momentum,
        weight_decay=args.weight_decay,
    )

    history = []
    for epoch in range(args.epochs):
        model.train()
        total_loss = 0.0
        correct = 0
        for images, targets in loader:
            images = images.to(device)
            targets = targets.to(device)
            optimizer.zero_grad()
            logits = model(images)
            loss = criterion(logits, targets)
            loss.backward()
            optimizer.step()
            total_loss += float(loss.item()) * images.shape[0]
            correct += int(((logits.detach() > 0) == (targets > 0.5)).sum().item())
        record = {
            "epoch": epoch,
            "loss": total_loss / len(dataset),
            "accuracy": correct / len(dataset),
        }
        history.append(record)
        print(json.dumps(record))

    save_checkpoint(model, args.out, args.image_size)
    if args.log:
        with open(args.log, "w") as fh:
            for record in history:
                fh.write(json.dumps(record) + "\n")
    return history


def build_parser():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--manifest", required=True)
    parser.add_argument("--out", required=True, help="checkpoint path (.pt)")
    parser.add_argument("--log", help="JSONL training log path")
    parser.add_argument("--epochs", type=int, default=100)
    parser.add_argument("--batch-size", type=int, default=16)
    parser.add_argument("--lr", type=float, default=1e-4)
    parser.add_argument("--momentum", type=float, default=0.9)
    parser.add_argument("--weight-decay", type=float, default=0.0004)
    parser.add_argument("--image-size", type=int, default=256)
    parser.add_argument("--augment-normals", type=int, default=3,
                        help="augmented copies per normal image (flips/rotations)")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--pretrained", action="store_true",
                        help="start from ImageNet weights (needs download/cache)")
    parser.add_argument("--device", default="cuda" if torch.cuda.is_available() else "cpu")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        train(args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
