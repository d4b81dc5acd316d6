import numpy as np

N_BINS = 256


def clip_histogram(hist, limit):
    """Clip ``hist`` at ``limit`` and spread the excess over all bins.

    The integer excess is shared evenly; the leftover is handed out one
    count per bin at a regular stride so the total count is preserved.
    """
    hist = hist.astype(np.int64).copy()
    excess = int(np.maximum(hist - limit, 0).sum())
    np.minimum(hist, limit, out=hist)
    hist += excess // N_BINS
    residual = excess % N_BINS
    if residual:
        step = max(N_BINS // residual, 1)
        hist[::step][:residual] += 1
    return hist


def tile_luts(q, tiles, clip):
    """Equalization lookup table (rows, cols, 256) for each tile of ``q``."""
    rows, cols = tiles
    th, tw = q.shape[0] // rows, q.shape[1] // cols
    area = th * tw
    limit = max(1, int(clip * area / N_BINS)) if clip > 0 else None
    luts = np.empty((rows, cols, N_BINS))
    for i in range(rows):
        for j in range(cols):
            block = q[i * th:(i + 1) * th, j * tw:(j + 1) * tw]
            hist = np.bincount(block.ravel(), minlength=N_BINS)
            if limit is not None:
                hist = clip_histogram(hist, limit)
            luts[i, j] = np.clip(np.rint(np.cumsum(hist) * (255.0 / area)), 0, 255)
    return luts


def clahe(img, clip=2.0, tiles=(8, 8)):
    """Contrast-limited adaptive histogram equalization on an 8-bit image.

    ``clip`` is relative to the uniform bin height: the per-bin limit is
    ``clip * tile_area / 256`` (at least 1); ``clip <= 0`` disables clipping.
    The image is symmetrically padded to a whole number of tiles and tile
    mappings are blended bilinearly between tile centres.
    """
    q = np.clip(np.rint(np.asarray(img, dtype=np.float64)), 0, 255).astype(np.int64)
    H, W = q.shape
    rows, cols = tiles
    if rows < 1 or cols < 1 or rows > H or cols > W:
        raise ValueError(f"tile grid {tiles} larger than image {q.shape}")
    ph = (-H) % rows
    pw = (-W) % cols
    qp = np.pad(q, ((0, ph), (0, pw)), mode="symmetric") if ph or pw else q
    luts = tile_luts(qp, tiles, clip)
    th, tw = qp.shape[0] / rows, qp.shape[1] / cols

    gy = np.arange(H) / th - 0.5
    gx = np.arange(W) / tw - 0.5
    y1 = np.floor(gy).astype(int)
    x1 = np.floor(gx).astype(int)
    wy = (gy - y1)[:, None]
    wx = (gx - x1)[None, :]
    y2 = np.clip(y1 + 1, 0, rows - 1)
    x2 = np.clip(x1 + 1, 0, cols - 1)
    y1 = np.clip(y1, 0, rows - 1)
    x1 = np.clip(x1, 0, cols - 1)

    YY1, XX1 = np.meshgrid(y1, x1, indexing="ij")
    YY2, XX2 = np.meshgrid(y2, x2, indexing="ij")
    v11 = luts[YY1, XX1, q]
    v12 = luts[YY1, XX2, q]
    v21 = luts[YY2, XX1, q]
    v22 = luts[YY2, XX2, q]
    out = (1 - wy) * ((1 - wx) * v11 + wx * v12) + wy * ((1 - wx) * v21 + wx * v22)
    return np.clip(np.rint(out), 0, 255)
