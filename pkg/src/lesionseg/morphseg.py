"""Morphology-driven suspicious lesion extraction.

Pipeline: contrast enhancement, intensity k-means, cluster selection by the
hypoechoic (darkest-centroid) prior, thresholding, connected components,
then anatomical-band and aspect-ratio screening.
"""

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator

from .enhance import AceParams, ace_enhance, auto_stride
from .image import connected_components
from .validation import check_gray, check_image

MAX_KMEANS_ITER = 300


@dataclass(frozen=True)
class KMeansResult:
    """centroids sorted ascending; assignment holds per-pixel cluster indices."""

    centroids: np.ndarray
    assignment: np.ndarray
    objective: float


@dataclass(frozen=True)
class MorphFilterParams:
    bin_threshold: int = 90
    bottom_band: float = 1.0 / 3.0
    top_band: float = 0.1
    min_ratio: float = 0.2

    def __post_init__(self):
        if not 0 <= self.bin_threshold <= 255:
            raise ValueError(f"bin_threshold must be in [0, 255], got {self.bin_threshold}")
        if self.top_band < 0 or self.bottom_band < 0 or self.top_band + self.bottom_band >= 1:
            raise ValueError("band fractions must satisfy 0 <= top + bottom < 1")
        if not 0 < self.min_ratio < 1:
            raise ValueError(f"min_ratio must be in (0, 1), got {self.min_ratio}")


def _kmeans_plus_plus(values: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    centroids = np.empty(k, dtype=np.float64)
    centroids[0] = values[rng.integers(values.size)]
    d2 = np.square(values - centroids[0])
    for j in range(1, k):
        total = d2.sum()
        # total > 0 is guaranteed while j < number of distinct values
        probs = d2 / total
        centroids[j] = values[rng.choice(values.size, p=probs)]
        d2 = np.minimum(d2, np.square(values - centroids[j]))
    return centroids


def _lloyd(values: np.ndarray, centroids: np.ndarray, k: int):
    assignment = None
    prev_objective = np.inf
    for _ in range(MAX_KMEANS_ITER):
        dist2 = np.square(values[:, None] - centroids[None, :])
        new_assignment = np.argmin(dist2, axis=1)
        objective = float(dist2[np.arange(values.size), new_assignment].sum())
        assert objective <= prev_objective * (1 + 1e-12) + 1e-12, "k-means objective increased"
        prev_objective = objective
        if assignment is not None and np.array_equal(new_assignment, assignment):
            break
        assignment = new_assignment
        for j in range(k):
            members = values[assignment == j]
            if members.size:
                centroids[j] = members.mean()
            else:
                # re-seed an emptied cluster at the worst-fit point
                worst = int(np.argmax(np.min(np.square(values[:, None] - centroids[None, :]), axis=1)))
                centroids[j] = values[worst]
    dist2 = np.square(values[:, None] - centroids[None, :])
    assignment = np.argmin(dist2, axis=1)
    objective = float(dist2[np.arange(values.size), assignment].sum())
    return centroids, assignment, objective


def _best_two_split(values: np.ndarray):
    """Exact 1-D 2-means: the optimum is a contiguous split of the sorted values.

    Scans every split with prefix sums, then recomputes the winning objective
    in direct form so it is comparable with the Lloyd objective.
    """
    order = np.argsort(values, kind="stable")
    sv = values[order]
    n = sv.size
    csum = np.cumsum(sv)
    csq = np.cumsum(np.square(sv))
    sizes = np.arange(1, n, dtype=np.float64)
    left = csq[:-1] - np.square(csum[:-1]) / sizes
    right = (csq[-1] - csq[:-1]) - np.square(csum[-1] - csum[:-1]) / (n - sizes)
    split = int(np.argmin(left + right)) + 1

    centroids = np.array([sv[:split].mean(), sv[split:].mean()])
    assignment = np.empty(n, dtype=np.int64)
    assignment[order[:split]] = 0
    assignment[order[split:]] = 1
    objective = float(
        np.square(sv[:split] - centroids[0]).sum() + np.square(sv[split:] - centroids[1]).sum()
    )
    return centroids, assignment, objective


def kmeans_intensity(img, k: int, seed: int, restarts: int = 10) -> KMeansResult:
    """Seeded k-means over per-pixel intensities, best objective of ``restarts`` runs.

    For k=2 the result is additionally refined against the exact contiguous
    optimum, so the default configuration always returns the global minimum
    (restarted Lloyd alone can sit in a worse basin).
    """
    img = check_gray(img)
    values = img.ravel().astype(np.float64)
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    distinct = np.unique(values).size
    if k > distinct:
        raise ValueError(f"k={k} exceeds the number of distinct intensities ({distinct})")

    best = None
    for restart in range(restarts):
        rng = np.random.default_rng([int(seed), restart])
        centroids = _kmeans_plus_plus(values, k, rng)
        centroids, assignment, objective = _lloyd(values, centroids.copy(), k)
        if best is None or objective < best[2]:
            best = (centroids, assignment, objective)

    if k == 2:
        exact = _best_two_split(values)
        if exact[2] < best[2]:
            best = exact

    centroids, assignment, objective = best
    order = np.argsort(centroids, kind="stable")
    remap = np.empty(k, dtype=np.int64)
    remap[order] = np.arange(k)
    return KMeansResult(
        centroids=centroids[order],
        assignment=remap[assignment].reshape(img.shape),
        objective=objective,
    )


def binarize(img, threshold: float) -> np.ndarray:
    """Foreground wherever the 8-bit quantized intensity reaches ``threshold``.

    Quantization is round-half-up of value*255.
    """
    img = check_gray(img)
    return np.floor(img * 255.0 + 0.5) >= threshold


def cluster_to_mask(km: KMeansResult, img, threshold: float) -> np.ndarray:
    """Suspected-lesion mask: the darkest cluster, gated by the binarized membership map."""
    img = check_gray(img)
    if km.assignment.shape != img.shape:
        raise ValueError(
            f"k-means assignment shape {km.assignment.shape} does not match image {img.shape}"
        )
    darkest = int(np.argmin(km.centroids))
    membership = (km.assignment == darkest)
    return membership & binarize(membership.astype(np.float64), threshold)


def anatomical_filter(regions, height: int, params: MorphFilterParams = MorphFilterParams()):
    """Drop regions whose centroid falls in the top or bottom anatomical band."""
    top_cut = height * params.top_band
    bottom_cut = height * (1.0 - params.bottom_band)
    return [r for r in regions if top_cut <= r.centroid[0] < bottom_cut]


def aspect_filter(regions, params: MorphFilterParams = MorphFilterParams()):
    """Drop elongated regions (ducts, lobules): aspect ratio below the cut."""
    return [r for r in regions if r.aspect_ratio >= params.min_ratio]


def morph_segment(
    img,
    k: int = 2,
    seed: int = 0,
    restarts: int = 10,
    filter_params: MorphFilterParams = MorphFilterParams(),
    ace_params: AceParams = None,
    threshold_on: str = "membership",
) -> list:
    """Full morphological candidate extraction; may legitimately return []."""
    img = check_image(img)
    enhanced = ace_enhance(img, ace_params)
    return morph_segment_enhanced(
        enhanced, k=k, seed=seed, restarts=restarts,
        filter_params=filter_params, threshold_on=threshold_on,
    )


def morph_segment_enhanced(
    enhanced,
    k: int = 2,
    seed: int = 0,
    restarts: int = 10,
    filter_params: MorphFilterParams = MorphFilterParams(),
    threshold_on: str = "membership",
) -> list:
    """Candidate extraction on an already-enhanced image (lets callers cache the enhancement)."""
    enhanced = check_image(enhanced)
    gray = enhanced if enhanced.ndim == 2 else enhanced.mean(axis=2)
    if threshold_on not in ("membership", "enhanced", "none"):
        raise ValueError(f"threshold_on must be membership|enhanced|none, got {threshold_on!r}")
    try:
        km = kmeans_intensity(gray, k=k, seed=seed, restarts=restarts)
    except ValueError:
        # too few distinct intensities to cluster: no candidates
        return []
    mask = cluster_to_mask(km, gray, filter_params.bin_threshold)
    if threshold_on == "enhanced":
        mask &= binarize(gray, filter_params.bin_threshold)
    regions = connected_components(mask)
    regions = anatomical_filter(regions, gray.shape[0], filter_params)
    return aspect_filter(regions, filter_params)


class MorphSegmenter(BaseEstimator):
    """Estimator form of the morphological extraction stage.

    ``predict`` maps an intensity image to a list of candidate regions.
    """

    def __init__(
        self,
        k=2,
        seed=0,
        restarts=10,
        bin_threshold=90,
        bottom_band=1.0 / 3.0,
        top_band=0.1,
        min_ratio=0.2,
        ace_alpha=5.0,
        ace_stride=0,
        threshold_on="membership",
    ):
        self.k = k
        self.seed = seed
        self.restarts = restarts
        self.bin_threshold = bin_threshold
        self.bottom_band = bottom_band
        self.top_band = top_band
        self.min_ratio = min_ratio
        self.ace_alpha = ace_alpha
        self.ace_stride = ace_stride
        self.threshold_on = threshold_on

    def fit(self, X, y=None):
        check_image(X)
        return self

    def predict(self, X) -> list:
        X = check_image(X)
        stride = self.ace_stride or auto_stride(X.shape[1], X.shape[0])
        return morph_segment(
            X,
            k=self.k,
            seed=self.seed,
            restarts=self.restarts,
            filter_params=MorphFilterParams(
                bin_threshold=self.bin_threshold,
                bottom_band=self.bottom_band,
                top_band=self.top_band,
                min_ratio=self.min_ratio,
            ),
            ace_params=AceParams(alpha=self.ace_alpha, sample_stride=stride),
            threshold_on=self.threshold_on,
        )
