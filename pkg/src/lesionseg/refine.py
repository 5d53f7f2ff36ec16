"""Topology repair for masks returned by the external segmenter."""

from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from sklearn.base import BaseEstimator, TransformerMixin

from .image import Region, region_to_mask
from .validation import check_mask

_STRUCT_4 = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


@dataclass(frozen=True)
class RefineReport:
    holes_filled: int
    pixels_added: int
    input_area: int
    output_area: int


def fill_holes(mask):
    """Fill background components that cannot reach the image border.

    Background connectivity is 4-connected (the dual of the 8-connected
    foreground), so a diagonal foreground chain does seal a hole.
    Returns (filled_mask, RefineReport).
    """
    mask = check_mask(mask)
    background = ~mask
    labels, count = ndimage.label(background, structure=_STRUCT_4)
    border_labels = np.unique(
        np.concatenate([labels[0, :], labels[-1, :], labels[:, 0], labels[:, -1]])
    )
    border_labels = set(border_labels[border_labels > 0].tolist())
    hole_labels = [lab for lab in range(1, count + 1) if lab not in border_labels]

    filled = mask.copy()
    if hole_labels:
        filled |= np.isin(labels, hole_labels)
    report = RefineReport(
        holes_filled=len(hole_labels),
        pixels_added=int(filled.sum() - mask.sum()),
        input_area=int(mask.sum()),
        output_area=int(filled.sum()),
    )
    return filled, report


def select_final(mask, fallback: Region) -> np.ndarray:
    """Filled segmenter mask, or the fused region rasterized when the mask is empty."""
    mask = check_mask(mask)
    if not mask.any():
        return region_to_mask(fallback, mask.shape[1], mask.shape[0])
    filled, _ = fill_holes(mask)
    return filled


class MaskRefiner(BaseEstimator, TransformerMixin):
    """Estimator form of hole filling; ``transform`` maps mask -> filled mask."""

    def fit(self, X, y=None):
        check_mask(X)
        return self

    def transform(self, X) -> np.ndarray:
        filled, _ = fill_holes(X)
        return filled
