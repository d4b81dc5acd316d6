import numpy as np

# exp(-700) is still a normal double, so weights never underflow to zero
_MAX_EXPONENT = 700.0


def _valid_box_sum(a, r):
    """Sum over (2r+1)^2 windows fully inside ``a``; output shrinks by 2r."""
    c = np.zeros((a.shape[0] + 1, a.shape[1] + 1))
    c[1:, 1:] = a.cumsum(0).cumsum(1)
    k = 2 * r + 1
    return c[k:, k:] - c[:-k, k:] - c[k:, :-k] + c[:-k, :-k]


def nlm_denoise(img, patch=7, search=21, h=10.0):
    """Non-local means with mean-squared patch distance.

    Weight of candidate q for pixel p is ``exp(-d2(p, q) / h**2)``, where
    ``d2`` is the mean squared difference of the ``patch`` x ``patch``
    neighbourhoods. The pixel's own weight is the largest weight among the
    other candidates. Borders are handled by symmetric padding.
    """
    img = np.asarray(img, dtype=np.float64)
    H, W = img.shape
    if H < patch or W < patch:
        raise ValueError(f"image {img.shape} smaller than patch size {patch}")
    pr, sr = patch // 2, search // 2
    pad = pr + sr
    P = np.pad(img, pad, mode="symmetric")
    core = P[sr:sr + H + 2 * pr, sr:sr + W + 2 * pr]
    area = float(patch * patch)
    num = np.zeros((H, W))
    den = np.zeros((H, W))
    wmax = np.zeros((H, W))
    for dy in range(-sr, sr + 1):
        for dx in range(-sr, sr + 1):
            if dy == 0 and dx == 0:
                continue
            other = P[sr + dy:sr + dy + H + 2 * pr, sr + dx:sr + dx + W + 2 * pr]
            d2 = _valid_box_sum((core - other) ** 2, pr) / area
            wgt = np.exp(-np.minimum(d2 / (h * h), _MAX_EXPONENT))
            num += wgt * other[pr:pr + H, pr:pr + W]
            den += wgt
            np.maximum(wmax, wgt, out=wmax)
    num += wmax * img
    den += wmax
    return num / den
