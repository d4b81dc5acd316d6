"""Hand-crafted descriptor-image features for the baseline classifier.

Layout of the feature vector (40 values)::

    [0:32]  normalized in-mask histogram over ``value_range``
    32..34  in-mask mean, std, skewness
    35, 36  gradient-magnitude mean, std over the mask interior
    37..39  area (px), perimeter (px), circularity 4 pi A / P^2
"""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .._validation import check_image, check_image_stack, check_mask
from ..segment import erode

N_BINS = 32
FEATURE_NAMES = (
    [f"hist_{i:02d}" for i in range(N_BINS)]
    + ["mean", "std", "skew", "grad_mean", "grad_std", "area", "perimeter", "circularity"]
)

_SQRT_HALF = np.sqrt(0.5)
# marching-squares contour length per 2x2 cell configuration (tl=1, tr=2, br=4, bl=8)
_CELL_LENGTH = np.array(
    [0, _SQRT_HALF, _SQRT_HALF, 1, _SQRT_HALF, 2 * _SQRT_HALF, 1, _SQRT_HALF,
     _SQRT_HALF, 1, 2 * _SQRT_HALF, _SQRT_HALF, 1, _SQRT_HALF, _SQRT_HALF, 0]
)


def perimeter(mask):
    """Length of the 0.5 iso-contour of the mask (marching squares)."""
    m = np.pad(np.asarray(mask, dtype=np.int64), 1)
    code = m[:-1, :-1] + 2 * m[:-1, 1:] + 4 * m[1:, 1:] + 8 * m[1:, :-1]
    return float(_CELL_LENGTH[code].sum())


def extract_features(img, mask, value_range=(0.0, 180.0), bins=N_BINS):
    img = check_image(img)
    mask = check_mask(mask, img.shape)
    if not mask.any():
        raise ValueError("extract_features needs a non-empty mask")
    lo, hi = value_range
    vals = img[mask]
    hist, _ = np.histogram(np.clip(vals, lo, hi), bins=bins, range=(lo, hi))
    hist = hist / vals.size
    mean = vals.mean()
    std = vals.std()
    skew = float(np.mean(((vals - mean) / std) ** 3)) if std > 0 else 0.0

    gy, gx = np.gradient(img)
    gmag = np.hypot(gx, gy)
    inner = erode(mask, 1)
    if not inner.any():
        inner = mask
    g = gmag[inner]

    area = float(mask.sum())
    per = perimeter(mask)
    circ = 4 * np.pi * area / per ** 2 if per > 0 else 0.0
    return np.concatenate([hist, [mean, std, skew, g.mean(), g.std(), area, per, circ]])


class PolarFeatureExtractor(TransformerMixin, BaseEstimator):
    """Stack of descriptor images (n, h, w) to a feature matrix (n, 40).

    Without explicit masks, each image's support (non-zero pixels) is the
    particle region; this is what a classifier fed masked images sees.
    """

    def __init__(self, value_range=(0.0, 180.0)):
        self.value_range = value_range

    def fit(self, X=None, y=None):
        self.n_features_out_ = len(FEATURE_NAMES)
        return self

    def fit_transform(self, X, y=None, masks=None):
        return self.fit().transform(X, masks)

    def transform(self, X, masks=None):
        X = check_image_stack(X)
        masks = X != 0 if masks is None else np.asarray(masks, dtype=bool).reshape(X.shape)
        return np.stack([extract_features(img, m, self.value_range) for img, m in zip(X, masks)])

    def get_feature_names_out(self, input_features=None):
        return np.array(FEATURE_NAMES, dtype=object)
