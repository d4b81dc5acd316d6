"""Input validation helpers shared by the functional API and the estimators."""

import numbers

import numpy as np


def check_image(img, name="image", min_shape=(1, 1), allow_negative=True):
    """Return ``img`` as a finite 2-D float64 array or raise ``ValueError``."""
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.shape[0] < min_shape[0] or arr.shape[1] < min_shape[1]:
        raise ValueError(
            f"{name} has degenerate dimensions {arr.shape}, need at least {min_shape}"
        )
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    if not allow_negative and np.any(arr < 0):
        raise ValueError(f"{name} contains negative values")
    return arr


def check_mask(mask, shape=None, name="mask"):
    """Return ``mask`` as a boolean 2-D array, optionally checking its shape."""
    arr = np.asarray(mask)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    if shape is not None and arr.shape != tuple(shape):
        raise ValueError(f"{name} shape {arr.shape} does not match image shape {tuple(shape)}")
    return arr.astype(bool)


def check_same_shape(*arrays, names=None):
    shapes = {np.shape(a) for a in arrays}
    if len(shapes) != 1:
        names = names or [f"array{i}" for i in range(len(arrays))]
        detail = ", ".join(f"{n}={np.shape(a)}" for n, a in zip(names, arrays))
        raise ValueError(f"dimension mismatch: {detail}")


def check_seed(seed, name="seed"):
    """Seeds must be explicit non-negative integers; there is no ambient entropy."""
    if seed is None:
        raise ValueError(f"{name} is required (no ambient randomness)")
    if isinstance(seed, bool) or not isinstance(seed, numbers.Integral) or seed < 0:
        raise ValueError(f"{name} must be a non-negative integer, got {seed!r}")
    return int(seed)


def make_rng(seed, *stream):
    """Counter-based Philox generator keyed by ``seed`` and an optional stream path.

    Philox is used throughout so that a (seed, stream) pair produces the same
    numbers on every platform and numpy build.
    """
    seed = check_seed(seed)
    ss = np.random.SeedSequence([seed, *[int(s) for s in stream]])
    return np.random.Generator(np.random.Philox(ss))


def check_image_stack(X, name="X"):
    """Accept a single 2-D image or a sequence of equally shaped images."""
    arr = np.asarray(X, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3:
        raise ValueError(f"{name} must be an image or a stack of images, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr
