"""Providers for the two neural stages, kept behind file-shaped contracts.

The pipeline never runs a model in-process. A provider answers two queries
per image id: the CAM tensor pair, and a segmentation mask for a prompt.
``DirectoryProvider`` reads sidecar outputs from disk; ``MockProvider``
derives both answers from ground truth and exists so the pipeline is fully
testable without any model runtime.
"""

from pathlib import Path

import numpy as np
from scipy import ndimage

from .fusion import PromptSpec
from .image import read_tensor, load_mask_png, resize
from .validation import check_mask


class ProviderError(RuntimeError):
    """A provider could not serve one image; the run continues with a flag."""


class DirectoryProvider:
    """Reads ``<id>.act.ten``, ``<id>.grad.ten`` and ``<id>.sam.png`` from one directory.

    The segmenter output is produced offline by the sidecar from the emitted
    prompt files, so ``segment`` ignores the prompt argument here.
    """

    def __init__(self, root):
        self.root = Path(root)
        if not self.root.is_dir():
            raise FileNotFoundError(f"provider directory not found: {self.root}")

    def cam_tensors(self, image_id: str):
        act_path = self.root / f"{image_id}.act.ten"
        grad_path = self.root / f"{image_id}.grad.ten"
        try:
            return read_tensor(act_path), read_tensor(grad_path)
        except (FileNotFoundError, ValueError) as exc:
            raise ProviderError(f"CAM tensors unavailable for {image_id}: {exc}") from exc

    def segment(self, image_id: str, image, prompt: PromptSpec):
        mask_path = self.root / f"{image_id}.sam.png"
        try:
            mask = load_mask_png(mask_path)
        except (FileNotFoundError, ValueError) as exc:
            raise ProviderError(f"segmenter mask unavailable for {image_id}: {exc}") from exc
        if mask.shape != image.shape[:2]:
            raise ProviderError(
                f"segmenter mask shape {mask.shape} does not match image "
                f"{image.shape[:2]} for {image_id}"
            )
        return mask


class MockProvider:
    """Oracle provider driven by ground-truth masks (tests and demos).

    CAM tensors are a blurred, downsampled copy of the ground truth with
    positive gradients on the lesion; the segmenter answer is the ground
    truth clipped to the prompt box (optionally with holes punched so the
    refinement stage has work to do).
    """

    def __init__(self, gt_masks: dict, feature_size: int = 64, blur_sigma: float = 2.0,
                 punch_holes: bool = False):
        self.gt_masks = {k: check_mask(v) for k, v in gt_masks.items()}
        self.feature_size = feature_size
        self.blur_sigma = blur_sigma
        self.punch_holes = punch_holes

    def _gt(self, image_id: str) -> np.ndarray:
        try:
            return self.gt_masks[image_id]
        except KeyError:
            raise ProviderError(f"mock provider has no ground truth for {image_id}") from None

    def cam_tensors(self, image_id: str):
        gt = self._gt(image_id)
        small = resize(gt.astype(np.float64), self.feature_size, self.feature_size, "bilinear")
        blurred = ndimage.gaussian_filter(small, sigma=self.blur_sigma)
        activations = np.stack([blurred, np.zeros_like(blurred)]).astype(np.float32)
        gradients = np.stack([blurred, np.zeros_like(blurred)]).astype(np.float32)
        return activations, gradients

    def segment(self, image_id: str, image, prompt: PromptSpec):
        gt = self._gt(image_id)
        if gt.shape != image.shape[:2]:
            raise ProviderError(f"mock ground truth shape mismatch for {image_id}")
        out = np.zeros_like(gt)
        if prompt.kind == "box":
            x0, y0, x1, y1 = prompt.box
            out[y0 : y1 + 1, x0 : x1 + 1] = gt[y0 : y1 + 1, x0 : x1 + 1]
        else:
            out = gt.copy()
        if self.punch_holes and out.any():
            rows, cols = np.nonzero(out)
            rc, cc = int(np.median(rows)), int(np.median(cols))
            out[max(0, rc - 2) : rc + 3, max(0, cc - 2) : cc + 3] = False
        return out
