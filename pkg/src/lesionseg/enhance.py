"""Automatic color enhancement (ACE) for low-contrast ultrasound frames.

The response at a pixel is the distance-weighted sum of slope-clamped
intensity differences against every other pixel; normalizing the response
to [0, 1] yields the enhanced channel. Multi-channel images are enhanced
per channel.
"""

import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .validation import check_gray, check_image

DEFAULT_ALPHA = 5.0


@dataclass(frozen=True)
class AceParams:
    """alpha: clamp slope (>0); sample_stride: lattice step for the pairwise sum (>=1)."""

    alpha: float = DEFAULT_ALPHA
    sample_stride: int = 1

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"alpha must be > 0, got {self.alpha}")
        if self.sample_stride < 1:
            raise ValueError(f"sample_stride must be >= 1, got {self.sample_stride}")


def auto_stride(width: int, height: int) -> int:
    """Stride that keeps the pairwise sum tractable: exact up to 128px, then coarser."""
    return max(1, math.ceil(max(width, height) / 128))


def ace_response(channel, params: AceParams = AceParams()) -> np.ndarray:
    """Pairwise enhancement response of a single channel.

    Neighbors are taken on the offset lattice {stride * (i, j)} around each
    pixel, the pixel itself excluded; stride=1 is the full pairwise sum.
    The slope-clamped difference is antisymmetric, so each offset updates
    both endpoints at once.
    """
    channel = check_gray(channel, name="channel")
    h, w = channel.shape
    step = params.sample_stride
    scaled = params.alpha * channel
    response = np.zeros((h, w), dtype=np.float64)

    for dr in range(0, h, step):
        if dr == 0:
            dcs = range(step, w, step)
        else:
            dcs = range(-((w - 1) // step) * step, w, step)
        for dc in dcs:
            inv_dist = 1.0 / math.hypot(dr, dc)
            if dc >= 0:
                a = scaled[: h - dr, : w - dc]
                b = scaled[dr:, dc:]
                ra = response[: h - dr, : w - dc]
                rb = response[dr:, dc:]
            else:
                a = scaled[: h - dr, -dc:]
                b = scaled[dr:, : w + dc]
                ra = response[: h - dr, -dc:]
                rb = response[dr:, : w + dc]
            term = np.clip(a - b, -1.0, 1.0)
            term *= inv_dist
            ra += term
            rb -= term
    return response


def ace_normalize(response) -> np.ndarray:
    """Min-max normalize a response raster to [0, 1]; a flat raster maps to 0.5."""
    response = np.asarray(response, dtype=np.float64)
    if not np.isfinite(response).all():
        raise ValueError("response contains non-finite values")
    lo = response.min()
    hi = response.max()
    if hi == lo:
        return np.full(response.shape, 0.5)
    return (response - lo) / (hi - lo)


def ace_enhance(img, params: AceParams = None) -> np.ndarray:
    """Enhance an image channel-wise; shape and channel count are preserved."""
    img = check_image(img)
    if params is None:
        params = AceParams(sample_stride=auto_stride(img.shape[1], img.shape[0]))
    if img.ndim == 2:
        return ace_normalize(ace_response(img, params))
    out = np.empty_like(img)
    for ch in range(img.shape[2]):
        out[:, :, ch] = ace_normalize(ace_response(img[:, :, ch], params))
    return out


class AceEnhancer(BaseEstimator, TransformerMixin):
    """Estimator wrapper around :func:`ace_enhance`.

    Parameters
    ----------
    alpha : float
        Slope of the clamped difference term.
    sample_stride : int
        Lattice step for the pairwise sum; 0 picks a size-dependent stride.
    """

    def __init__(self, alpha=DEFAULT_ALPHA, sample_stride=0):
        self.alpha = alpha
        self.sample_stride = sample_stride

    def fit(self, X, y=None):
        check_image(X)
        return self

    def transform(self, X) -> np.ndarray:
        X = check_image(X)
        stride = self.sample_stride or auto_stride(X.shape[1], X.shape[0])
        return ace_enhance(X, AceParams(alpha=self.alpha, sample_stride=stride))
