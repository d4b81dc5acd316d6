"""Small numpy filtering primitives shared across modules."""

import numpy as np


def gaussian_kernel1d(sigma, truncate=3.0):
    radius = max(1, int(np.ceil(truncate * sigma)))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def correlate1d(img, kernel, axis, mode="reflect"):
    """1-D correlation along ``axis`` with numpy padding ``mode``."""
    r = len(kernel) // 2
    pad = [(0, 0), (0, 0)]
    pad[axis] = (r, r)
    # numpy "symmetric" repeats the edge sample, matching half-sample reflection
    padded = np.pad(img, pad, mode="symmetric" if mode == "reflect" else mode)
    n = img.shape[axis]
    out = np.zeros(img.shape, dtype=np.float64)
    for i, w in enumerate(kernel):
        if w == 0:
            continue
        sl = [slice(None), slice(None)]
        sl[axis] = slice(i, i + n)
        out += w * padded[tuple(sl)]
    return out


def gaussian_blur(img, sigma, mode="reflect", truncate=3.0):
    img = np.asarray(img, dtype=np.float64)
    if sigma <= 0:
        return img.copy()
    k = gaussian_kernel1d(sigma, truncate)
    return correlate1d(correlate1d(img, k, 0, mode), k, 1, mode)


def box_sum(img, radius):
    """Sum over the (2r+1)^2 window centred on each pixel; edges padded by reflection."""
    p = np.pad(img, radius + 1, mode="symmetric")
    c = p.cumsum(0).cumsum(1)
    k = 2 * radius + 1
    h, w = img.shape
    return (
        c[k:k + h, k:k + w]
        - c[0:h, k:k + w]
        - c[k:k + h, 0:w]
        + c[0:h, 0:w]
    )


def disk(radius):
    """Boolean discrete disk structuring element."""
    r = int(radius)
    y, x = np.mgrid[-r:r + 1, -r:r + 1]
    return x * x + y * y <= r * r
