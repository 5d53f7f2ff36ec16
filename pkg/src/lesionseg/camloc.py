"""Class-activation localization maps built from exported activation/gradient tensors.

Both combiners consume a [K, H', W'] activation stack and a gradient stack of
identical shape; the result is a nonnegative raw map that is min-max scaled
to [0, 255], bilinearly upsampled, and thresholded into candidate regions.
"""

import numpy as np
from sklearn.base import BaseEstimator

from .image import connected_components, resize

DEFAULT_CAM_THRESHOLD = 200.0


def _check_tensors(activations, gradients):
    activations = np.asarray(activations, dtype=np.float64)
    gradients = np.asarray(gradients, dtype=np.float64)
    if activations.ndim != 3:
        raise ValueError(f"activations must have shape (K, H, W), got {activations.shape}")
    if activations.shape != gradients.shape:
        raise ValueError(
            f"activation/gradient shape mismatch: {activations.shape} vs {gradients.shape}"
        )
    if not (np.isfinite(activations).all() and np.isfinite(gradients).all()):
        raise ValueError("CAM tensors contain non-finite values")
    return activations, gradients


def layercam(activations, gradients) -> np.ndarray:
    """Per-location positive-gradient weighting, summed over channels, rectified."""
    activations, gradients = _check_tensors(activations, gradients)
    weights = np.maximum(gradients, 0.0)
    return np.maximum((weights * activations).sum(axis=0), 0.0)


def gradcam(activations, gradients) -> np.ndarray:
    """Channel weights are spatial gradient means; the weighted sum is rectified."""
    activations, gradients = _check_tensors(activations, gradients)
    weights = gradients.mean(axis=(1, 2))
    return np.maximum((weights[:, None, None] * activations).sum(axis=0), 0.0)


CAM_METHODS = {"layercam": layercam, "gradcam": gradcam}


def normalize_upsample(raw_map, width: int, height: int) -> np.ndarray:
    """Min-max scale a raw map to [0, 255] and bilinearly upsample to (height, width).

    A flat map means no localized evidence and maps to all zeros, so a
    degenerate map can never pass the threshold downstream.
    """
    raw_map = np.asarray(raw_map, dtype=np.float64)
    if raw_map.ndim != 2:
        raise ValueError(f"raw map must be 2-D, got shape {raw_map.shape}")
    if not np.isfinite(raw_map).all():
        raise ValueError("raw map contains non-finite values")
    if raw_map.min() < 0:
        raise ValueError("raw map must be nonnegative")
    lo = raw_map.min()
    hi = raw_map.max()
    if hi == lo:
        return np.zeros((height, width), dtype=np.float64)
    scaled = (raw_map - lo) * (255.0 / (hi - lo))
    # clamp away float overshoot so the [0, 255] range invariant holds exactly
    return np.clip(resize(scaled, width, height, mode="bilinear"), 0.0, 255.0)


def cam_binarize(heatmap, threshold: float = DEFAULT_CAM_THRESHOLD) -> list:
    """Threshold a [0, 255] heatmap and return its connected regions."""
    heatmap = np.asarray(heatmap, dtype=np.float64)
    if not 0 <= threshold <= 255:
        raise ValueError(f"threshold must be in [0, 255], got {threshold}")
    return connected_components(heatmap >= threshold)


class CamLocalizer(BaseEstimator):
    """Estimator form of the CAM localization stage.

    ``heatmap`` produces the normalized upsampled map; ``predict`` returns
    the thresholded candidate regions.
    """

    def __init__(self, method="layercam", threshold=DEFAULT_CAM_THRESHOLD, width=256, height=256):
        self.method = method
        self.threshold = threshold
        self.width = width
        self.height = height

    def _combine(self, activations, gradients):
        try:
            fn = CAM_METHODS[self.method]
        except KeyError:
            raise ValueError(f"unknown CAM method {self.method!r}") from None
        return fn(activations, gradients)

    def fit(self, X=None, y=None):
        return self

    def heatmap(self, activations, gradients) -> np.ndarray:
        return normalize_upsample(self._combine(activations, gradients), self.width, self.height)

    def predict(self, activations, gradients) -> list:
        return cam_binarize(self.heatmap(activations, gradients), self.threshold)
