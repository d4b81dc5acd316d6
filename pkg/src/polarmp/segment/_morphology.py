"""Binary morphology and connected-component labeling on boolean arrays."""

import numpy as np

from .._filters import disk

_N4 = ((-1, 0), (1, 0), (0, -1), (0, 1))
_N8 = _N4 + ((-1, -1), (-1, 1), (1, -1), (1, 1))


def _shifted(a, dy, dx, fill):
    """``out[y, x] = a[y + dy, x + dx]`` with ``fill`` outside the array."""
    h, w = a.shape
    out = np.full_like(a, fill)
    ys, yd = (slice(dy, h), slice(0, h - dy)) if dy >= 0 else (slice(0, h + dy), slice(-dy, h))
    xs, xd = (slice(dx, w), slice(0, w - dx)) if dx >= 0 else (slice(0, w + dx), slice(-dx, w))
    out[yd, xd] = a[ys, xs]
    return out


def dilate(mask, radius):
    mask = np.asarray(mask, dtype=bool)
    se = disk(radius)
    r = se.shape[0] // 2
    out = np.zeros_like(mask)
    for dy, dx in zip(*np.nonzero(se)):
        out |= _shifted(mask, dy - r, dx - r, False)
    return out


def erode(mask, radius, border=False):
    mask = np.asarray(mask, dtype=bool)
    se = disk(radius)
    r = se.shape[0] // 2
    out = np.ones_like(mask)
    for dy, dx in zip(*np.nonzero(se)):
        out &= _shifted(mask, dy - r, dx - r, border)
    return out


def close(mask, radius):
    """Closing computed on a zero-padded canvas so borders do not erode it."""
    mask = np.asarray(mask, dtype=bool)
    r = int(radius)
    p = np.pad(mask, r)
    c = erode(dilate(p, r), r)
    return c[r:r + mask.shape[0], r:r + mask.shape[1]]


def label(mask, connectivity=8):
    """Label connected components.

    Min-index propagation with pointer jumping: every foreground pixel holds
    the flat index of a pixel in its component, repeatedly lowered to the
    smallest index among its neighbours and then to its label's label.
    Components are numbered 1..n in raster order of their first pixel.

    Returns ``(labels, n)``.
    """
    mask = np.asarray(mask, dtype=bool)
    h, w = mask.shape
    big = h * w
    idx = np.arange(big).reshape(h, w)
    lab = np.where(mask, idx, big)
    offsets = _N8 if connectivity == 8 else _N4
    while True:
        new = lab
        for dy, dx in offsets:
            new = np.minimum(new, _shifted(lab, dy, dx, big))
        new = np.where(mask, new, big)
        flat = np.append(new.ravel(), big)
        while True:
            jumped = flat[flat]
            if np.array_equal(jumped, flat):
                break
            flat = jumped
        new = flat[:-1].reshape(h, w)
        if np.array_equal(new, lab):
            break
        lab = new
    roots = np.unique(lab[mask])
    out = np.zeros((h, w), dtype=np.int64)
    if roots.size:
        out[mask] = np.searchsorted(roots, lab[mask]) + 1
    return out, int(roots.size)


def largest_component(mask, connectivity=8):
    """Keep the largest component; ties go to the topmost-leftmost anchor."""
    labels, n = label(mask, connectivity)
    if n == 0:
        return np.zeros_like(mask, dtype=bool)
    sizes = np.bincount(labels.ravel(), minlength=n + 1)[1:]
    # labels are ordered by anchor position, so argmax picks the first tie
    return labels == int(np.argmax(sizes)) + 1


def fill_holes(mask):
    """Fill background regions not 4-connected to the image border."""
    mask = np.asarray(mask, dtype=bool)
    labels, n = label(~mask, connectivity=4)
    border = np.unique(
        np.concatenate([labels[0], labels[-1], labels[:, 0], labels[:, -1]])
    )
    outside = np.isin(labels, border[border > 0])
    return ~outside
