"""Linear Stokes parameters and the DOLP/AOLP descriptor images."""

from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import check_image, check_mask, check_same_shape

# multiplier on max(S0) used when no explicit eps is given
DEFAULT_EPS_FRACTION = 1e-3
# raw DOLP above 1 + this counts as overflow; below it is rounding
OVERFLOW_TOLERANCE = 1e-9


@dataclass
class StokesImage:
    s0: np.ndarray
    s1: np.ndarray
    s2: np.ndarray
    # pixels where |S1| or |S2| exceeds S0 (non-physical, kept but counted)
    violations: int = 0


@dataclass
class PolarimetricImage:
    """DOLP in [0, 1] and AOLP in degrees [0, 180); both are 0 where invalid."""

    dolp: np.ndarray
    aolp: np.ndarray
    valid: np.ndarray
    overflow_count: int = 0
    eps: float = 0.0


def compute_stokes(i0, i45, i90, i135):
    """S0 = I0 + I90, S1 = I0 - I90, S2 = I45 - I135, pointwise."""
    names = ("i0", "i45", "i90", "i135")
    planes = [check_image(p, n, allow_negative=False) for p, n in zip((i0, i45, i90, i135), names)]
    check_same_shape(*planes, names=names)
    i0, i45, i90, i135 = planes
    s0 = i0 + i90
    s1 = i0 - i90
    s2 = i45 - i135
    tol = 1e-12 * max(float(s0.max()), 1.0)
    bad = (np.abs(s1) > s0 + tol) | (np.abs(s2) > s0 + tol)
    return StokesImage(s0, s1, s2, int(bad.sum()))


def default_eps(s0):
    return DEFAULT_EPS_FRACTION * max(float(np.max(s0)), np.finfo(float).tiny)


def compute_descriptors(stokes, eps=None, require_s1=True):
    """DOLP and AOLP with the validity guard.

    A pixel is valid when ``s0 > eps`` and, unless ``require_s1`` is False,
    ``|s1| > eps``. AOLP uses the quadrant-correct two-argument arctangent,
    folded into [0, 180).
    """
    s0, s1, s2 = stokes.s0, stokes.s1, stokes.s2
    if eps is None:
        eps = default_eps(s0)
    if not eps > 0:
        raise ValueError(f"eps must be positive, got {eps}")
    valid = s0 > eps
    if require_s1:
        valid &= np.abs(s1) > eps
    dolp = np.zeros_like(s0)
    aolp = np.zeros_like(s0)
    raw = np.hypot(s1[valid], s2[valid]) / s0[valid]
    overflow = int(np.count_nonzero(raw > 1.0 + OVERFLOW_TOLERANCE))
    dolp[valid] = np.minimum(raw, 1.0)
    ang = 0.5 * np.degrees(np.arctan2(s2[valid], s1[valid]))
    ang[ang < 0] += 180.0
    # -0.0 / rounding can land exactly on 180
    ang[ang >= 180.0] -= 180.0
    aolp[valid] = ang
    return PolarimetricImage(dolp, aolp, valid, overflow, float(eps))


def apply_mask(image, mask):
    """Zero (and invalidate) everything outside ``mask``."""
    if isinstance(image, PolarimetricImage):
        m = check_mask(mask, image.dolp.shape)
        valid = image.valid & m
        return PolarimetricImage(
            np.where(valid, image.dolp, 0.0),
            np.where(valid, image.aolp, 0.0),
            valid,
            image.overflow_count,
            image.eps,
        )
    img = np.asarray(image, dtype=np.float64)
    m = check_mask(mask, img.shape)
    return np.where(m, img, 0.0)


class StokesTransformer(TransformerMixin, BaseEstimator):
    """Map (n, 4, h, w) channel stacks (0, 45, 90, 135) to descriptor stacks.

    ``output`` selects ``"aolp"``, ``"dolp"`` or ``"both"`` (n, 2, h, w).
    Invalid pixels are 0.
    """

    def __init__(self, eps=None, require_s1=True, output="both"):
        self.eps = eps
        self.require_s1 = require_s1
        self.output = output

    def fit(self, X=None, y=None):
        if self.output not in ("aolp", "dolp", "both"):
            raise ValueError(f"output must be aolp, dolp or both, got {self.output!r}")
        return self

    def transform(self, X):
        self.fit()
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 3:
            X = X[None]
        if X.ndim != 4 or X.shape[1] != 4:
            raise ValueError(f"expected (n, 4, h, w) channel stacks, got {X.shape}")
        out = []
        for chans in X:
            p = compute_descriptors(compute_stokes(*chans), self.eps, self.require_s1)
            if self.output == "aolp":
                out.append(p.aolp)
            elif self.output == "dolp":
                out.append(p.dolp)
            else:
                out.append(np.stack([p.dolp, p.aolp]))
        return np.stack(out)
