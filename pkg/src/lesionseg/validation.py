"""Input validation helpers shared by the stage estimators and kernels."""

import numpy as np


def check_image(x, name: str = "image") -> np.ndarray:
    """Validate an intensity image: float array, (H, W) or (H, W, 3), values in [0, 1].

    Returns the array as float64 without copying when already valid.
    """
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 2:
        pass
    elif arr.ndim == 3 and arr.shape[2] == 3:
        pass
    else:
        raise ValueError(
            f"{name}: expected shape (H, W) or (H, W, 3), got {arr.shape}"
        )
    if arr.size == 0:
        raise ValueError(f"{name}: empty array")
    if not np.isfinite(arr).all():
        raise ValueError(f"{name}: contains non-finite values")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ValueError(f"{name}: samples must lie in [0, 1]")
    return arr


def check_gray(x, name: str = "image") -> np.ndarray:
    """Validate a single-channel image in [0, 1] and return it as float64 (H, W)."""
    arr = check_image(x, name=name)
    if arr.ndim != 2:
        raise ValueError(f"{name}: expected a single-channel image, got shape {arr.shape}")
    return arr


def check_mask(x, name: str = "mask") -> np.ndarray:
    """Validate a binary mask and return it as a bool array of shape (H, W)."""
    arr = np.asarray(x)
    if arr.ndim != 2 or arr.size == 0:
        raise ValueError(f"{name}: expected a nonempty 2-D array, got shape {arr.shape}")
    if arr.dtype != np.bool_:
        vals = np.unique(arr)
        if not np.isin(vals, (0, 1)).all():
            raise ValueError(f"{name}: values must be boolean or in {{0, 1}}")
        arr = arr.astype(bool)
    return arr


def check_same_shape(a: np.ndarray, b: np.ndarray, what: str = "arrays") -> None:
    if a.shape != b.shape:
        raise ValueError(f"{what}: shape mismatch {a.shape} vs {b.shape}")
