"""Single-particle segmentation.

Pipeline: 8-bit quantization, non-local means, CLAHE, Canny, closing,
dilation, closing, largest 8-connected component, hole filling. Canny
thresholds apply to unnormalized Sobel magnitudes on the 8-bit scale (an
ideal step of height A has |G| = 4A).
"""

import warnings
from dataclasses import asdict, dataclass, fields

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .._validation import check_image, check_image_stack
from ._canny import canny, hysteresis, non_max_suppression, sobel
from ._clahe import clahe, clip_histogram
from ._morphology import close, dilate, erode, fill_holes, label, largest_component
from ._nlm import nlm_denoise

__all__ = [
    "SegmentationParams",
    "ParticleSegmenter",
    "canny",
    "clahe",
    "clip_histogram",
    "close",
    "dilate",
    "erode",
    "fill_holes",
    "hysteresis",
    "label",
    "largest_component",
    "nlm_denoise",
    "non_max_suppression",
    "quantize_8bit",
    "segment_particle",
    "sobel",
]


@dataclass(frozen=True)
class SegmentationParams:
    nlm_patch: int = 7
    nlm_search: int = 21
    nlm_h: float = 10.0
    clahe_clip: float = 2.0
    clahe_tiles: tuple = (8, 8)
    canny_sigma: float = 1.4
    canny_low: float = 30.0
    canny_high: float = 100.0
    se_close1: int = 2
    se_dilate: int = 1
    se_close2: int = 2

    def __post_init__(self):
        if not self.canny_low < self.canny_high:
            raise ValueError("canny_low must be below canny_high")
        for name in ("se_close1", "se_dilate", "se_close2"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.clahe_clip < 1:
            raise ValueError("clahe_clip must be >= 1")
        if self.nlm_patch < 1 or self.nlm_patch % 2 == 0:
            raise ValueError("nlm_patch must be a positive odd integer")
        if self.nlm_search < 1 or self.nlm_search % 2 == 0:
            raise ValueError("nlm_search must be a positive odd integer")
        object.__setattr__(self, "clahe_tiles", tuple(int(t) for t in self.clahe_tiles))

    def to_dict(self):
        return asdict(self)

    @classmethod
    def field_names(cls):
        return [f.name for f in fields(cls)]


def quantize_8bit(img, value_range=None):
    """Scale to [0, 255] (min/max of the image unless ``value_range`` given) and round."""
    img = np.asarray(img, dtype=np.float64)
    lo, hi = value_range if value_range is not None else (img.min(), img.max())
    if hi <= lo:
        return np.zeros_like(img)
    return np.clip(np.rint((img - lo) / (hi - lo) * 255.0), 0, 255)


def segment_particle(img, params=None, value_range=None):
    """Filled mask of the dominant particle in ``img``.

    Returns ``(mask, status)``; ``status`` is ``"ok"`` or ``"empty"`` when no
    edges were found (the mask is then all False).
    """
    p = params or SegmentationParams()
    img = check_image(img, "image", min_shape=(p.nlm_patch, p.nlm_patch))
    q = quantize_8bit(img, value_range)
    den = nlm_denoise(q, p.nlm_patch, p.nlm_search, p.nlm_h)
    eq = clahe(den, p.clahe_clip, p.clahe_tiles)
    edges = canny(eq, p.canny_sigma, p.canny_low, p.canny_high)
    if not edges.any():
        warnings.warn("segment_particle: empty edge map, returning empty mask", RuntimeWarning, stacklevel=2)
        return np.zeros(img.shape, dtype=bool), "empty"
    m = close(edges, p.se_close1)
    m = dilate(m, p.se_dilate)
    m = close(m, p.se_close2)
    m = largest_component(m, 8)
    return fill_holes(m), "ok"


class ParticleSegmenter(TransformerMixin, BaseEstimator):
    """Images (n, h, w) to boolean masks (n, h, w); per-image statuses in ``statuses_``."""

    def __init__(self, params=None, value_range=None):
        self.params = params
        self.value_range = value_range

    def fit(self, X=None, y=None):
        self.params_ = self.params or SegmentationParams()
        return self

    def transform(self, X):
        if not hasattr(self, "params_"):
            self.fit()
        X = check_image_stack(X)
        masks, statuses = [], []
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            for img in X:
                m, s = segment_particle(img, self.params_, self.value_range)
                masks.append(m)
                statuses.append(s)
        self.statuses_ = statuses
        return np.stack(masks)
