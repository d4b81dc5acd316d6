import numpy as np

from .._filters import correlate1d, gaussian_blur
from ._morphology import _shifted, label

# direction bins of the gradient angle (degrees mod 180) -> neighbour step
_STEPS = ((0, 1), (1, 1), (1, 0), (1, -1))


def sobel(img):
    """Unnormalized 3x3 Sobel derivatives; an ideal step of height A gives |G| = 4A."""
    smooth = np.array([1.0, 2.0, 1.0])
    diff = np.array([-1.0, 0.0, 1.0])
    gx = correlate1d(correlate1d(img, diff, 1), smooth, 0)
    gy = correlate1d(correlate1d(img, diff, 0), smooth, 1)
    return gx, gy


def non_max_suppression(mag, gx, gy):
    """Thin ridges to one pixel along the quantized gradient direction.

    A pixel survives if it is >= its forward neighbour and > its backward
    neighbour, so a plateau of two equal maxima keeps exactly one.
    """
    ang = np.mod(np.degrees(np.arctan2(gy, gx)), 180.0)
    sector = (np.floor((ang + 22.5) / 45.0).astype(int)) % 4
    keep = np.zeros(mag.shape, dtype=bool)
    for s, (dy, dx) in enumerate(_STEPS):
        fwd = _shifted(mag, dy, dx, 0.0)
        bwd = _shifted(mag, -dy, -dx, 0.0)
        keep |= (sector == s) & (mag >= fwd) & (mag > bwd)
    return np.where(keep & (mag > 0), mag, 0.0)


def hysteresis(nms, low, high):
    """Weak pixels (>= low) survive if 8-connected to a strong one (>= high)."""
    weak = nms >= low
    labels, n = label(weak, 8)
    if n == 0:
        return weak
    strong_labels = np.unique(labels[(nms >= high) & weak])
    return np.isin(labels, strong_labels[strong_labels > 0])


def canny(img, sigma=1.4, low=30.0, high=100.0):
    """Canny edge map of an 8-bit-scaled image. ``sigma <= 0`` skips the blur."""
    if not low < high:
        raise ValueError(f"canny low threshold {low} must be below high {high}")
    img = np.asarray(img, dtype=np.float64)
    smooth = gaussian_blur(img, sigma) if sigma > 0 else img
    gx, gy = sobel(smooth)
    mag = np.hypot(gx, gy)
    return hysteresis(non_max_suppression(mag, gx, gy), low, high)
