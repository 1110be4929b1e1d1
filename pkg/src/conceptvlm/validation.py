"""Input validation helpers used by the estimator API and the lower-level modules."""

import numpy as np

from .errors import DimensionError, InputError


def check_image(image, name: str = "image") -> np.ndarray:
    """Validate an H x W x 3 pixel raster and return it as float64 in [0, 1].

    Accepts uint8 (scaled by 1/255) or float arrays already in [0, 1].
    """
    arr = np.asarray(image)
    if arr.size == 0:
        raise InputError(f"{name} is empty")
    if arr.ndim == 2:
        arr = np.stack([arr] * 3, axis=-1)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise DimensionError(f"{name} must be HxWx3, got shape {arr.shape}")
    if arr.dtype == np.uint8:
        arr = arr.astype(np.float64) / 255.0
    else:
        arr = arr.astype(np.float64)
        if arr.max(initial=0.0) > 1.0 + 1e-9 or arr.min(initial=0.0) < -1e-9:
            raise InputError(f"{name} float pixels must lie in [0, 1]")
    if not np.all(np.isfinite(arr)):
        raise InputError(f"{name} contains non-finite pixels")
    return arr


def check_mask(mask, name: str = "mask") -> np.ndarray:
    """Validate a single-channel mask (nonzero = member) and return it as bool H x W."""
    arr = np.asarray(mask)
    if arr.size == 0:
        raise InputError(f"{name} is empty")
    if arr.ndim == 3:
        if arr.shape[2] == 1:
            arr = arr[:, :, 0]
        else:
            raise DimensionError(f"{name} must be single-channel, got shape {arr.shape}")
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be HxW, got shape {arr.shape}")
    return arr != 0


def check_matrix(x, name: str = "array") -> np.ndarray:
    """Validate a finite 2-d float matrix."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be 2-d, got shape {arr.shape}")
    if arr.size == 0:
        raise InputError(f"{name} is empty")
    if not np.all(np.isfinite(arr)):
        raise InputError(f"{name} contains non-finite values")
    return arr


def check_vectors(x, dim: int | None = None, name: str = "vectors") -> np.ndarray:
    """Validate an (n, d) stack of finite vectors, optionally enforcing d."""
    arr = check_matrix(x, name=name)
    if dim is not None and arr.shape[1] != dim:
        raise DimensionError(f"{name} must have dimension {dim}, got {arr.shape[1]}")
    return arr


def require(condition: bool, message: str, exc: type = InputError) -> None:
    if not condition:
        raise exc(message)
