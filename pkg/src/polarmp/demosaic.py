"""Polarization demosaicing by Fourier-domain zero-padding (FDZP).

Each analyzer channel of a DoFP mosaic is an (h/2, w/2) sub-sampled image.
FDZP embeds its spectrum in a zero-filled (h, w) spectrum and inverts,
which evaluates the trigonometric (periodic sinc) interpolant on the full
grid. Conventions:

* numpy's DFT normalization (inverse divides by the grid size), so the
  padded spectrum is scaled by 4 (the area ratio) to keep constants fixed;
* for even-sized inputs the Nyquist row/column is split in half between the
  positive and negative frequency slots, which conjugate symmetry requires
  for a real-valued interpolant;
* a linear phase ramp shifts each channel by its offset inside the 2x2 tile
  so all four outputs are co-registered on the mosaic grid.
"""

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import check_image
from .imagery import ANGLES, RawMosaic, extract_channel


def _pad_axis(spec, n_out, axis):
    """Zero-pad ``spec`` along ``axis`` to length ``n_out`` (unshifted layout)."""
    n = spec.shape[axis]
    half = n // 2
    shape = list(spec.shape)
    shape[axis] = n_out
    out = np.zeros(shape, dtype=complex)

    def sl(a, b):
        idx = [slice(None)] * spec.ndim
        idx[axis] = slice(a, b)
        return tuple(idx)

    if n % 2:
        out[sl(0, half + 1)] = spec[sl(0, half + 1)]
        out[sl(n_out - half, n_out)] = spec[sl(n - half, n)]
    else:
        out[sl(0, half)] = spec[sl(0, half)]
        out[sl(n_out - half + 1, n_out)] = spec[sl(half + 1, n)]
        nyq = spec[sl(half, half + 1)] / 2.0
        out[sl(half, half + 1)] = nyq
        out[sl(n_out - half, n_out - half + 1)] = nyq
    return out


def zero_pad_spectrum(spec, shape):
    """Embed an unshifted 2-D spectrum into a larger zero-filled one."""
    out = _pad_axis(spec, shape[0], 0)
    return _pad_axis(out, shape[1], 1)


def _shift_ramp(n, shift):
    # exp(-2*pi*i*k*shift/n) over signed frequencies k; the Nyquist slots are
    # the split pair +-n/2 of the coarse grid, which sit strictly inside.
    k = np.fft.fftfreq(n) * n
    return np.exp(-2j * np.pi * k * shift / n)


def fdzp_upsample(img, offset=(0, 0), factor=2, return_residue=False):
    """Upsample ``img`` by ``factor`` with Fourier-domain zero-padding.

    Parameters
    ----------
    img : array_like, shape (h, w)
        Sub-sampled channel, h, w >= 2.
    offset : (dy, dx)
        Position of the channel's samples inside the ``factor`` x ``factor``
        tile. Output pixel ``(factor*i + dy, factor*j + dx)`` reproduces
        input pixel ``(i, j)``.
    return_residue : bool
        Also return the imaginary residue before it is discarded, relative
        to the output's max magnitude.

    Returns
    -------
    out : ndarray, shape (factor*h, factor*w)
    """
    img = check_image(img, "channel", min_shape=(2, 2))
    dy, dx = offset
    h, w = img.shape
    H, W = factor * h, factor * w
    spec = np.fft.fft2(img)
    padded = zero_pad_spectrum(spec, (H, W))
    if dy or dx:
        padded = padded * _shift_ramp(H, dy)[:, None] * _shift_ramp(W, dx)[None, :]
    full = np.fft.ifft2(padded) * (factor * factor)
    out = full.real
    if return_residue:
        scale = max(np.abs(out).max(), np.finfo(float).tiny)
        return out, float(np.abs(full.imag).max() / scale)
    return out


def trig_interpolant(img, ys, xs):
    """Direct DFT-sum evaluation of the periodic trigonometric interpolant.

    ``ys``/``xs`` are fractional coordinates on the input grid. Slow, used as
    an independent reference for :func:`fdzp_upsample`.
    """
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape
    spec = np.fft.fft2(img) / (h * w)
    ey = _basis(h, ys)
    ex = _basis(w, xs)
    return (ey @ spec @ ex.T).real


def _basis(n, t):
    t = np.atleast_1d(np.asarray(t, dtype=np.float64))
    k = np.fft.fftfreq(n) * n
    basis = np.exp(2j * np.pi * np.outer(t, k) / n)
    if n % 2 == 0:
        # the Nyquist term must be the real cosine cos(pi t)
        basis[:, n // 2] = np.cos(np.pi * t)
    return basis


def channel_offsets(layout):
    return {a: layout.offset(a) for a in ANGLES}


def demosaic_fdzp(mosaic, phase_shift=True, clamp=True):
    """Reconstruct the four analyzer planes of ``mosaic`` with FDZP.

    Returns ``(planes, info)`` where ``planes`` maps angle to an (h, w)
    array and ``info`` holds the per-channel negative clamp counts and max
    imaginary residue.
    """
    if not isinstance(mosaic, RawMosaic):
        raise TypeError("demosaic_fdzp expects a RawMosaic")
    planes, clamped, residue = {}, {}, 0.0
    for angle in ANGLES:
        ch = extract_channel(mosaic, angle)
        offset = mosaic.layout.offset(angle) if phase_shift else (0, 0)
        up, res = fdzp_upsample(ch, offset, return_residue=True)
        residue = max(residue, res)
        neg = up < 0
        clamped[angle] = int(neg.sum())
        if clamp:
            up[neg] = 0.0
        planes[angle] = up
    return planes, {"clamped": clamped, "imag_residue": residue}


def demosaic_bilinear(mosaic):
    """Per-channel bilinear interpolation on the full grid.

    Each channel is placed at its true sample positions; missing sites are
    interpolated from the surrounding samples with border replication.
    """
    if not isinstance(mosaic, RawMosaic):
        raise TypeError("demosaic_bilinear expects a RawMosaic")
    H, W = mosaic.height, mosaic.width
    planes = {}
    for angle in ANGLES:
        dy, dx = mosaic.layout.offset(angle)
        ch = extract_channel(mosaic, angle)
        planes[angle] = _bilinear_axis(_bilinear_axis(ch, dy, H, 0), dx, W, 1)
    return planes


def _bilinear_axis(ch, offset, n_out, axis):
    # sample j sits at output coordinate 2j + offset
    n = ch.shape[axis]
    pos = (np.arange(n_out) - offset) / 2.0
    pos = np.clip(pos, 0, n - 1)
    lo = np.floor(pos).astype(int)
    hi = np.minimum(lo + 1, n - 1)
    t = pos - lo
    a = np.take(ch, lo, axis=axis)
    b = np.take(ch, hi, axis=axis)
    shape = [1, 1]
    shape[axis] = n_out
    t = t.reshape(shape)
    return a * (1 - t) + b * t


class FDZPDemosaicer(TransformerMixin, BaseEstimator):
    """Estimator wrapper: mosaics in, (n, 4, h, w) channel stacks out.

    Channel order along axis 1 is 0, 45, 90, 135 degrees.

    Parameters
    ----------
    method : {"fdzp", "bilinear"}
    phase_shift : bool
        Co-register channels with frequency-domain phase ramps (FDZP only).
    """

    def __init__(self, method="fdzp", phase_shift=True):
        self.method = method
        self.phase_shift = phase_shift

    def fit(self, X=None, y=None):
        if self.method not in ("fdzp", "bilinear"):
            raise ValueError(f"method must be 'fdzp' or 'bilinear', got {self.method!r}")
        self.n_clamped_ = 0
        return self

    def transform(self, X):
        if not hasattr(self, "n_clamped_"):
            self.fit()
        mosaics = [X] if isinstance(X, RawMosaic) else list(X)
        out = []
        for m in mosaics:
            if self.method == "fdzp":
                planes, info = demosaic_fdzp(m, phase_shift=self.phase_shift)
                self.n_clamped_ += sum(info["clamped"].values())
            else:
                planes = demosaic_bilinear(m)
            out.append(np.stack([planes[a] for a in ANGLES]))
        return np.stack(out)
