"""Feature-degradation scenarios for the shape/texture/context study.

All randomness comes from Philox streams keyed by ``DegradeParams.seed``
(and the image index in batch mode), so every output is reproducible.
"""

import enum
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from ._filters import gaussian_blur
from ._validation import check_image, check_mask, check_seed, make_rng


class Scenario(str, enum.Enum):
    ORIGINAL = "Original"
    STRUCTURE_CONTOUR = "StructureContour"
    TEXTURE_JITTER = "TextureJitter"
    UNIFORM_SHAPE = "UniformShape"
    FULL_NOISE = "FullNoise"

    @classmethod
    def parse(cls, tag):
        if isinstance(tag, cls):
            return tag
        for s in cls:
            if str(tag).lower() in (s.value.lower(), s.name.lower()):
                return s
        raise ValueError(f"unknown scenario {tag!r}; expected one of {[s.value for s in cls]}")


# row order of the degradation tables
SCENARIOS = tuple(Scenario)

SCENARIO_LABELS = {
    Scenario.ORIGINAL: "1. Original (S + T + C)",
    Scenario.STRUCTURE_CONTOUR: "2. Structure & Contour (S + C)",
    Scenario.TEXTURE_JITTER: "3. Texture Jitter (S + T_corrupted + C)",
    Scenario.UNIFORM_SHAPE: "4. Uniform Shape (S_smoothed)",
    Scenario.FULL_NOISE: "5. Full Noise",
}


@dataclass(frozen=True)
class DegradeParams:
    fill_mode: str = "mask-mean"
    hull_sigma_frac: float = 0.05
    seed: int = 0
    background_fill: float = 0.0
    min_sigma: float = 3.0

    def __post_init__(self):
        if self.fill_mode not in ("mask-mean", "mid-gray"):
            raise ValueError(f"fill_mode must be mask-mean or mid-gray, got {self.fill_mode!r}")
        if not self.hull_sigma_frac > 0:
            raise ValueError("hull_sigma_frac must be > 0")
        check_seed(self.seed)


def fill_value(img, mask, mode):
    if mode == "mask-mean":
        return float(img[mask].mean())
    return 0.5 * (float(img.min()) + float(img.max()))


def smooth_mask(mask, sigma_frac=0.05, min_sigma=3.0):
    """Blur the mask indicator and re-threshold at 0.5.

    sigma = ``sigma_frac`` * max(bbox height, width), at least ``min_sigma``.
    """
    ys, xs = np.nonzero(mask)
    extent = max(ys.max() - ys.min() + 1, xs.max() - xs.min() + 1)
    sigma = max(min_sigma, sigma_frac * extent)
    return gaussian_blur(mask.astype(np.float64), sigma, mode="constant") > 0.5


def apply_scenario(img, mask, scenario, params=None, stream=0):
    """Return a degraded copy of ``img`` for ``scenario``.

    ``stream`` selects an independent random stream under the same seed
    (batch mode passes the image index).
    """
    s = Scenario.parse(scenario)
    p = params or DegradeParams()
    img = check_image(img)
    mask = check_mask(mask, img.shape)
    if s is Scenario.ORIGINAL:
        return img.copy()
    if s is Scenario.FULL_NOISE:
        lo, hi = float(img.min()), float(img.max())
        return make_rng(p.seed, 3, stream).uniform(lo, hi, img.shape)
    if not mask.any():
        raise ValueError(f"scenario {s.value} needs a non-empty mask")
    out = img.copy()
    if s is Scenario.STRUCTURE_CONTOUR:
        out[mask] = fill_value(img, mask, p.fill_mode)
    elif s is Scenario.TEXTURE_JITTER:
        vals = img[mask]
        out[mask] = vals[make_rng(p.seed, 4, stream).permutation(vals.size)]
    elif s is Scenario.UNIFORM_SHAPE:
        fill = fill_value(img, mask, p.fill_mode)
        hull = smooth_mask(mask, p.hull_sigma_frac, p.min_sigma)
        out = np.full(img.shape, float(p.background_fill))
        out[hull] = fill
    return out


def scenario_support(mask, scenario, params=None):
    """Region that still depicts the particle after ``scenario``.

    The original mask for scenarios 1-3, the smoothed hull for UniformShape
    and the whole frame for FullNoise (nothing distinguishes particle from
    background any more).
    """
    s = Scenario.parse(scenario)
    p = params or DegradeParams()
    mask = np.asarray(mask, dtype=bool)
    if s is Scenario.UNIFORM_SHAPE:
        return smooth_mask(mask, p.hull_sigma_frac, p.min_sigma)
    if s is Scenario.FULL_NOISE:
        return np.ones_like(mask)
    return mask.copy()


class FeatureDegrader(TransformerMixin, BaseEstimator):
    """Apply one scenario to a stack of (image, mask) pairs.

    ``transform(X, masks)`` returns the degraded stack; image ``i`` uses
    random stream ``i`` so results do not depend on batch composition order
    beyond the index itself.
    """

    def __init__(self, scenario="Original", fill_mode="mask-mean", hull_sigma_frac=0.05, seed=0,
                 background_fill=0.0):
        self.scenario = scenario
        self.fill_mode = fill_mode
        self.hull_sigma_frac = hull_sigma_frac
        self.seed = seed
        self.background_fill = background_fill

    def fit(self, X=None, y=None):
        self.scenario_ = Scenario.parse(self.scenario)
        self.params_ = DegradeParams(self.fill_mode, self.hull_sigma_frac, self.seed, self.background_fill)
        return self

    def fit_transform(self, X, y=None, masks=None):
        return self.fit().transform(X, masks)

    def transform(self, X, masks=None):
        self.fit()
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 2:
            X = X[None]
        if masks is None:
            masks = X != 0
        masks = np.asarray(masks, dtype=bool).reshape(X.shape)
        return np.stack([
            apply_scenario(img, m, self.scenario_, self.params_, stream=i)
            for i, (img, m) in enumerate(zip(X, masks))
        ])
