"""K-means clustering, thresholding, and the morphological screening chain."""

import numpy as np
import pytest
from sklearn.base import clone

from phantoms import ellipse_mask, phantom_image
from lesionseg.image import Region, region_to_mask
from lesionseg.morphseg import (
    MorphFilterParams,
    MorphSegmenter,
    anatomical_filter,
    aspect_filter,
    binarize,
    cluster_to_mask,
    kmeans_intensity,
    morph_segment,
)


def exhaustive_two_partition_objective(values):
    """Best sum-of-squares over all bipartitions with two nonempty sides."""
    n = len(values)
    values = np.asarray(values, dtype=np.float64)
    best = np.inf
    for bits in range(1, 2**n - 1):
        side = np.array([(bits >> i) & 1 for i in range(n)], dtype=bool)
        obj = 0.0
        for part in (values[side], values[~side]):
            obj += float(np.square(part - part.mean()).sum())
        best = min(best, obj)
    return best


# ---------------------------------------------------------------------------
# k-means


def test_kmeans_perfectly_separable():
    km = kmeans_intensity(np.array([[0.0, 0.0], [1.0, 1.0]]), k=2, seed=0)
    assert np.array_equal(km.centroids, [0.0, 1.0])
    assert km.objective == 0.0


def test_kmeans_two_pair_example():
    km = kmeans_intensity(np.array([[0.0, 0.1], [0.9, 1.0]]), k=2, seed=0)
    assert np.allclose(km.centroids, [0.05, 0.95])
    assert km.objective == pytest.approx(0.01, abs=1e-12)


def test_kmeans_k1_is_mean_and_variance(rng):
    img = rng.random((4, 5))
    km = kmeans_intensity(img, k=1, seed=0)
    assert km.centroids[0] == pytest.approx(img.mean(), abs=1e-12)
    assert km.objective == pytest.approx(img.size * img.var(), rel=1e-10)


def test_kmeans_rejects_k_above_distinct_count():
    with pytest.raises(ValueError, match="distinct"):
        kmeans_intensity(np.full((3, 3), 0.5), k=2, seed=0)
    with pytest.raises(ValueError, match=">= 1"):
        kmeans_intensity(np.zeros((2, 2)), k=0, seed=0)


def test_kmeans_objective_recomputable(rng):
    img = rng.random((8, 8))
    km = kmeans_intensity(img, k=3, seed=7)
    values = img.ravel()
    recomputed = float(np.square(values - km.centroids[km.assignment.ravel()]).sum())
    assert km.objective == pytest.approx(recomputed, rel=1e-9)


def test_kmeans_deterministic(rng):
    img = rng.random((10, 10))
    a = kmeans_intensity(img, k=2, seed=42)
    b = kmeans_intensity(img, k=2, seed=42)
    assert np.array_equal(a.centroids, b.centroids)
    assert np.array_equal(a.assignment, b.assignment)
    assert a.objective == b.objective


def test_kmeans_matches_exhaustive_optimum(rng):
    for trial in range(50):
        n = int(rng.integers(2, 13))
        values = rng.random(n)
        if np.unique(values).size < 2:
            continue
        km = kmeans_intensity(values.reshape(1, -1), k=2, seed=trial)
        best = exhaustive_two_partition_objective(values)
        assert km.objective <= best + 1e-9
        assert km.objective >= best - 1e-9


def test_kmeans_centroids_sorted(rng):
    img = rng.random((6, 6))
    km = kmeans_intensity(img, k=3, seed=1)
    assert np.all(np.diff(km.centroids) >= 0)


# ---------------------------------------------------------------------------
# Thresholding and cluster selection


def test_binarize_examples():
    assert binarize(np.array([[100 / 255]]), 90)[0, 0]
    assert not binarize(np.array([[89 / 255]]), 90)[0, 0]
    assert binarize(np.array([[0.0, 0.4], [0.9, 1.0]]), 0).all()


def test_cluster_to_mask_dark_disk():
    disk = ellipse_mask(24, 24, (12, 12), (6, 8))
    img = np.where(disk, 0.2, 0.8)
    km = kmeans_intensity(img, k=2, seed=0)
    assert np.array_equal(cluster_to_mask(km, img, 90), disk)


def test_cluster_to_mask_inversion_flips_selection():
    disk = ellipse_mask(20, 20, (10, 10), (5, 5))
    img = np.where(disk, 0.2, 0.8)
    km = kmeans_intensity(img, k=2, seed=0)
    km_inv = kmeans_intensity(1.0 - img, k=2, seed=0)
    assert np.array_equal(cluster_to_mask(km_inv, 1.0 - img, 90), ~disk)


def test_cluster_to_mask_shape_mismatch(rng):
    img = rng.random((5, 5))
    km = kmeans_intensity(img, k=2, seed=0)
    with pytest.raises(ValueError, match="match"):
        cluster_to_mask(km, rng.random((6, 6)), 90)


# ---------------------------------------------------------------------------
# Region screens


def _region_at(rows, cols):
    return Region.from_pixels(rows, cols)


def test_anatomical_filter_bands():
    params = MorphFilterParams()
    low = _region_at([280], [10])      # row >= 300 * (1 - 1/3) = 200 -> removed
    high = _region_at([20], [10])      # row < 300 * 0.1 = 30 -> removed
    mid = _region_at([150], [10])      # interior -> kept
    kept = anatomical_filter([low, high, mid], height=300, params=params)
    assert kept == [mid]


def test_anatomical_filter_idempotent(rng):
    regions = [_region_at([int(r)], [5]) for r in rng.integers(0, 300, size=20)]
    once = anatomical_filter(regions, 300)
    assert anatomical_filter(once, 300) == once


def test_anatomical_filter_preserves_order():
    regions = [_region_at([100], [i]) for i in range(5)]
    assert anatomical_filter(regions, 300) == regions


def test_aspect_filter_examples():
    thin = _region_at([0] * 10, list(range(10)))          # 1 x 10 -> ratio 0.1
    half = _region_at([0, 4], [0, 9])                      # 5 x 10 -> ratio 0.5
    square = _region_at([0, 3], [0, 3])                    # ratio 1.0
    kept = aspect_filter([thin, half, square])
    assert kept == [half, square]


def test_aspect_filter_idempotent(rng):
    regions = [
        _region_at([0, int(rng.integers(1, 6))], [0, int(rng.integers(1, 12))])
        for _ in range(15)
    ]
    once = aspect_filter(regions)
    assert aspect_filter(once) == once


def test_filter_params_validation():
    with pytest.raises(ValueError):
        MorphFilterParams(bin_threshold=300)
    with pytest.raises(ValueError):
        MorphFilterParams(top_band=0.5, bottom_band=0.6)
    with pytest.raises(ValueError):
        MorphFilterParams(min_ratio=0.0)


# ---------------------------------------------------------------------------
# End-to-end morphological extraction


def test_morph_segment_recovers_central_ellipse():
    lesion = ellipse_mask(96, 96, (44, 48), (12, 18))
    img = phantom_image(lesion, noise=0.04, seed=3)
    regions = morph_segment(img, seed=0)
    assert regions, "expected at least one candidate"
    best = max(regions, key=lambda r: r.area)
    overlap = (region_to_mask(best, 96, 96) & lesion).sum()
    assert overlap >= 0.9 * lesion.sum()


def test_morph_segment_drops_thin_streak():
    streak = np.zeros((96, 96), dtype=bool)
    streak[50:52, 20:60] = True  # 2 x 40 -> ratio 0.05
    img = phantom_image(streak, noise=0.01, seed=4)
    regions = morph_segment(img, seed=0)
    streak_mask = streak
    for region in regions:
        inter = (region_to_mask(region, 96, 96) & streak_mask).sum()
        assert inter < 0.5 * streak_mask.sum()


def test_morph_segment_blank_image_is_empty():
    assert morph_segment(np.full((32, 32), 0.9)) == []


def test_morph_segment_output_respects_screens():
    lesion = ellipse_mask(96, 96, (40, 48), (10, 14))
    img = phantom_image(lesion, noise=0.05, seed=8)
    params = MorphFilterParams()
    for region in morph_segment(img, seed=0, filter_params=params):
        assert 96 * params.top_band <= region.centroid[0] < 96 * (1 - params.bottom_band)
        assert region.aspect_ratio >= params.min_ratio


def test_morph_segment_threshold_on_enhanced():
    # gating on the enhanced intensities can only shrink the candidate set
    lesion = ellipse_mask(64, 64, (30, 32), (8, 12))
    img = phantom_image(lesion, noise=0.03, seed=6)
    default = morph_segment(img, seed=0, threshold_on="membership")
    gated = morph_segment(img, seed=0, threshold_on="enhanced")
    assert sum(r.area for r in gated) <= sum(r.area for r in default)
    with pytest.raises(ValueError, match="threshold_on"):
        morph_segment(img, seed=0, threshold_on="raw")


def test_morph_segmenter_estimator_matches_function():
    lesion = ellipse_mask(64, 64, (30, 32), (8, 12))
    img = phantom_image(lesion, noise=0.03, seed=5)
    est = MorphSegmenter(seed=0, ace_stride=1)
    regions = clone(est).fit(img).predict(img)
    direct = morph_segment(img, seed=0)
    assert len(regions) == len(direct)
    for a, b in zip(regions, direct):
        assert np.array_equal(a.pixels, b.pixels)


def test_morph_segmenter_get_params_round_trip():
    est = MorphSegmenter(k=3, bin_threshold=120)
    params = est.get_params()
    assert params["k"] == 3 and params["bin_threshold"] == 120
    est2 = MorphSegmenter(**params)
    assert est2.get_params() == params
