"""Segmentation metrics (Dice, IoU, HD95) and bootstrap confidence intervals.

Conventions:

* two empty masks agree perfectly: Dice = IoU = 1.0 and HD95 = 0.0;
* one empty mask scores Dice = IoU = 0.0 and HD95 = the image diagonal,
  with the affected sample flagged;
* boundaries are foreground pixels with at least one 4-neighbor outside the
  foreground, the image border counting as background.
"""

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from .image import dump_json, load_mask_png
from .validation import check_mask, check_same_shape


def dice(a, b) -> float:
    a = check_mask(a)
    b = check_mask(b)
    check_same_shape(a, b, "dice")
    total = int(a.sum()) + int(b.sum())
    if total == 0:
        return 1.0
    return 2.0 * int((a & b).sum()) / total


def iou(a, b) -> float:
    a = check_mask(a)
    b = check_mask(b)
    check_same_shape(a, b, "iou")
    union = int((a | b).sum())
    if union == 0:
        return 1.0
    return int((a & b).sum()) / union


def boundary_pixels(mask) -> np.ndarray:
    """Foreground pixels adjacent (4-connectivity) to background or the border."""
    mask = check_mask(mask)
    padded = np.pad(mask, 1, mode="constant", constant_values=False)
    interior = (
        padded[:-2, 1:-1] & padded[2:, 1:-1] & padded[1:-1, :-2] & padded[1:-1, 2:]
    )
    return mask & ~interior


def hd95(a, b, method: str = "directed_max") -> float:
    """95th-percentile boundary distance between two nonempty masks.

    ``directed_max`` takes the max of the two directed 95th percentiles;
    ``pooled`` takes the 95th percentile of both directed distance sets
    pooled together. Percentiles interpolate linearly.
    """
    a = check_mask(a)
    b = check_mask(b)
    check_same_shape(a, b, "hd95")
    if not a.any() or not b.any():
        raise ValueError("hd95 is undefined for empty masks")
    if method not in ("directed_max", "pooled"):
        raise ValueError(f"unknown hd95 method {method!r}")

    pa = np.argwhere(boundary_pixels(a)).astype(np.float64)
    pb = np.argwhere(boundary_pixels(b)).astype(np.float64)
    d_ab = cKDTree(pb).query(pa)[0]
    d_ba = cKDTree(pa).query(pb)[0]
    if method == "pooled":
        return float(np.percentile(np.concatenate([d_ab, d_ba]), 95))
    return float(max(np.percentile(d_ab, 95), np.percentile(d_ba, 95)))


def hd95_sentinel(shape) -> float:
    """Bounded stand-in for HD95 when exactly one mask is empty: the image diagonal."""
    h, w = shape
    return float(np.hypot(h, w))


@dataclass(frozen=True)
class MetricSample:
    image_id: str
    dice: float
    iou: float
    hd95: float
    flags: tuple = ()

    def to_dict(self) -> dict:
        return {
            "image_id": self.image_id,
            "dice": self.dice,
            "iou": self.iou,
            "hd95": self.hd95,
            "flags": list(self.flags),
        }


def evaluate_masks(pred, gt, image_id: str, extra_flags=()) -> MetricSample:
    """Score one prediction against ground truth, applying the empty-mask conventions."""
    pred = check_mask(pred)
    gt = check_mask(gt)
    check_same_shape(pred, gt, f"evaluate_masks({image_id})")
    flags = list(extra_flags)
    pred_any = bool(pred.any())
    gt_any = bool(gt.any())
    if pred_any and gt_any:
        distance = hd95(pred, gt)
    elif not pred_any and not gt_any:
        distance = 0.0
        flags.append("both_empty")
    else:
        distance = hd95_sentinel(pred.shape)
        flags.append("empty_prediction" if not pred_any else "empty_ground_truth")
        flags.append("hd95_sentinel")
    return MetricSample(
        image_id=image_id,
        dice=dice(pred, gt),
        iou=iou(pred, gt),
        hd95=distance,
        flags=tuple(flags),
    )


def bootstrap_ci(values, n_bootstrap: int = 5000, seed: int = 0):
    """Percentile bootstrap CI for the mean: (mean, lower 2.5%, upper 97.5%).

    Resample index sets are generated up front from the seeded generator, so
    the result is deterministic however the resamples are later evaluated.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 1 or values.size == 0:
        raise ValueError("bootstrap_ci needs a nonempty 1-D value list")
    if n_bootstrap < 1:
        raise ValueError(f"n_bootstrap must be >= 1, got {n_bootstrap}")
    rng = np.random.default_rng(int(seed))
    m = values.size
    means = np.empty(n_bootstrap, dtype=np.float64)
    chunk = max(1, min(n_bootstrap, 10_000_000 // m))
    done = 0
    while done < n_bootstrap:
        take = min(chunk, n_bootstrap - done)
        idx = rng.integers(0, m, size=(take, m))
        means[done : done + take] = values[idx].mean(axis=1)
        done += take
    lower, upper = np.percentile(means, [2.5, 97.5])
    return float(values.mean()), float(lower), float(upper)


@dataclass
class EvalReport:
    per_image: list
    aggregates: dict  # metric -> {"mean", "ci_lower", "ci_upper"}
    n_bootstrap: int
    seed: int
    flags: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "per_image": [s.to_dict() for s in self.per_image],
            "aggregates": self.aggregates,
            "n_bootstrap": self.n_bootstrap,
            "seed": self.seed,
            "flags": self.flags,
        }

    def to_json(self) -> str:
        return dump_json(self.to_dict())

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["image_id", "dice", "iou", "hd95", "flags"])
            for s in self.per_image:
                writer.writerow(
                    [s.image_id, repr(s.dice), repr(s.iou), repr(s.hd95), ";".join(s.flags)]
                )


def build_report(samples, n_bootstrap: int = 5000, seed: int = 0) -> EvalReport:
    """Aggregate per-image samples into means with bootstrap CIs."""
    samples = list(samples)
    if not samples:
        raise ValueError("cannot build a report from zero samples")
    aggregates = {}
    for metric in ("dice", "iou", "hd95"):
        values = [getattr(s, metric) for s in samples]
        mean, lower, upper = bootstrap_ci(values, n_bootstrap=n_bootstrap, seed=seed)
        if not lower <= mean <= upper:
            raise AssertionError(f"bootstrap CI does not bracket the mean for {metric}")
        aggregates[metric] = {"mean": mean, "ci_lower": lower, "ci_upper": upper}
    flagged = {s.image_id: list(s.flags) for s in samples if s.flags}
    return EvalReport(
        per_image=samples,
        aggregates=aggregates,
        n_bootstrap=n_bootstrap,
        seed=seed,
        flags=flagged,
    )


def evaluate_dir(pred_dir, gt_dir, n_bootstrap: int = 5000, seed: int = 0) -> EvalReport:
    """Score matched PNG masks from two directories (filenames must pair 1:1)."""
    pred_dir = Path(pred_dir)
    gt_dir = Path(gt_dir)
    pred_names = sorted(p.name for p in pred_dir.glob("*.png"))
    gt_names = sorted(p.name for p in gt_dir.glob("*.png"))
    if pred_names != gt_names:
        missing = sorted(set(pred_names) ^ set(gt_names))
        raise ValueError(f"unmatched mask files between directories: {missing}")
    if not pred_names:
        raise ValueError(f"no PNG masks found under {pred_dir}")
    samples = []
    for name in pred_names:
        pred = load_mask_png(pred_dir / name)
        gt = load_mask_png(gt_dir / name)
        samples.append(evaluate_masks(pred, gt, image_id=Path(name).stem))
    return build_report(samples, n_bootstrap=n_bootstrap, seed=seed)


def load_report_json(path) -> dict:
    return json.loads(Path(path).read_text())
