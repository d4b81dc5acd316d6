"""Data model and file I/O for DoFP mosaics, intensity images and masks.

Mosaics and quantized images are stored as binary PGM (P5). Sixteen-bit
samples are written big-endian as the format requires. Floating point
images live in memory as float64 arrays and are only quantized on export;
``save_image`` with a ``.npy`` suffix keeps them bit-exact.
"""

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

ANGLES = (0, 45, 90, 135)


@dataclass(frozen=True)
class PolarizerLayout:
    """Analyzer angle of each site of the 2x2 micro-polarizer tile.

    ``angles[r][c]`` is the angle at (row parity r, column parity c). The
    default mirrors the IMX250 family: 90/45 on even rows, 135/0 on odd rows.
    """

    angles: tuple = ((90, 45), (135, 0))

    def __post_init__(self):
        flat = [a for row in self.angles for a in row]
        if len(self.angles) != 2 or any(len(r) != 2 for r in self.angles):
            raise ValueError("PolarizerLayout must be 2x2")
        if sorted(flat) != sorted(ANGLES):
            raise ValueError(f"PolarizerLayout must be a bijection onto {ANGLES}, got {flat}")
        object.__setattr__(self, "angles", tuple(tuple(int(a) for a in r) for r in self.angles))

    @classmethod
    def from_string(cls, text):
        """Parse ``"90,45,135,0"`` (row-major) into a layout."""
        vals = [int(v) for v in str(text).replace(";", ",").split(",") if v.strip()]
        if len(vals) != 4:
            raise ValueError(f"layout needs four angles, got {text!r}")
        return cls(((vals[0], vals[1]), (vals[2], vals[3])))

    def to_string(self):
        return ",".join(str(a) for row in self.angles for a in row)

    def angle_at(self, row, col):
        return self.angles[row % 2][col % 2]

    def offset(self, angle):
        """Return ``(dy, dx)``, the position of ``angle`` inside the tile."""
        angle = int(angle)
        for r in range(2):
            for c in range(2):
                if self.angles[r][c] == angle:
                    return r, c
        raise ValueError(f"angle {angle} not in layout {self.to_string()}")


def _default_color_sites():
    # Quad-Bayer over polarizer: each 2x2 colour block carries the full
    # polarizer tile; blocks follow an RGGB Bayer arrangement.
    pol = PolarizerLayout().angles
    colors = (("R", "G"), ("G", "B"))
    return tuple(
        tuple((colors[r // 2][c // 2], pol[r % 2][c % 2]) for c in range(4)) for r in range(4)
    )


@dataclass(frozen=True)
class ColorPolarLayout:
    """4x4 site map of (colour, analyzer angle) pairs.

    ``mode`` selects how green sites are combined per angle: ``"select"``
    takes the first green site in raster order, ``"average"`` averages all
    green sites of that angle within the tile.
    """

    sites: tuple = field(default_factory=_default_color_sites)
    mode: str = "select"

    def __post_init__(self):
        if len(self.sites) != 4 or any(len(r) != 4 for r in self.sites):
            raise ValueError("ColorPolarLayout must be 4x4")
        for row in self.sites:
            for color, angle in row:
                if color not in ("R", "G", "B"):
                    raise ValueError(f"unknown colour {color!r}")
                if angle not in ANGLES:
                    raise ValueError(f"unknown analyzer angle {angle!r}")
        if self.mode not in ("select", "average"):
            raise ValueError(f"mode must be 'select' or 'average', got {self.mode!r}")
        for angle in ANGLES:
            if len(self.green_sites(angle)) < 2:
                raise ValueError(
                    f"insufficient green coverage: angle {angle} needs at least two green sites per tile"
                )

    @classmethod
    def from_string(cls, text, mode="select"):
        """Parse 16 row-major ``<colour><angle>`` tokens, e.g. ``"R90,R45,G90,..."``."""
        toks = [t.strip() for t in str(text).replace(";", ",").split(",") if t.strip()]
        if len(toks) != 16:
            raise ValueError(f"colour layout needs 16 sites, got {len(toks)}")
        sites = [(t[0].upper(), int(t[1:])) for t in toks]
        return cls(tuple(tuple(sites[4 * r: 4 * r + 4]) for r in range(4)), mode=mode)

    def green_sites(self, angle):
        return [
            (r, c)
            for r in range(4)
            for c in range(4)
            if self.sites[r][c] == ("G", angle)
        ]


@dataclass
class RawMosaic:
    """Single-plane DoFP sensor image.

    ``bit_depth`` is 8 or 16 for sensor data. Simulation may produce an
    unquantized mosaic (``bit_depth=None``) holding float64 values.
    """

    values: np.ndarray
    layout: PolarizerLayout = field(default_factory=PolarizerLayout)
    bit_depth: int | None = 16

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.ndim != 2:
            raise ValueError(f"mosaic must be single-plane, got shape {v.shape}")
        h, w = v.shape
        if w % 2:
            raise ValueError(f"odd width: {w}")
        if h % 2:
            raise ValueError(f"odd height: {h}")
        if self.bit_depth is None:
            v = v.astype(np.float64)
            if not np.all(np.isfinite(v)) or np.any(v < 0):
                raise ValueError("mosaic values must be finite and non-negative")
        else:
            if self.bit_depth not in (8, 16):
                raise ValueError(f"unsupported bit depth: {self.bit_depth}")
            if np.any(v < 0) or np.any(v >= 2 ** self.bit_depth):
                raise ValueError(f"values exceed declared bit depth {self.bit_depth}")
            if not np.all(np.equal(np.mod(v, 1), 0)):
                raise ValueError("quantized mosaic values must be integers")
            v = v.astype(np.uint16 if self.bit_depth == 16 else np.uint8)
        self.values = v

    @property
    def height(self):
        return self.values.shape[0]

    @property
    def width(self):
        return self.values.shape[1]

    @property
    def max_value(self):
        if self.bit_depth is None:
            return float(self.values.max()) if self.values.size else 0.0
        return float(2 ** self.bit_depth - 1)


# ---------------------------------------------------------------------------
# PGM reading and writing


def _read_header_tokens(data, count):
    tokens = []
    pos = 0
    n = len(data)
    while len(tokens) < count:
        while pos < n and data[pos:pos + 1].isspace():
            pos += 1
        if pos < n and data[pos:pos + 1] == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise ValueError("truncated PGM header")
        tokens.append(data[start:pos])
    # exactly one whitespace byte separates the header from raster data
    return tokens, pos + 1


def read_pgm(path):
    """Read a P5 or P2 PGM file. Returns ``(array, maxval)``."""
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise ValueError(f"unreadable file {path}: {exc}") from exc
    magic = data[:2]
    if magic not in (b"P5", b"P2"):
        raise ValueError(f"unreadable file {path}: not a grayscale PGM (magic {magic!r})")
    tokens, offset = _read_header_tokens(data[2:], 3)
    try:
        width, height, maxval = (int(t) for t in tokens)
    except ValueError as exc:
        raise ValueError(f"unreadable file {path}: malformed header") from exc
    if not 0 < maxval < 65536:
        raise ValueError(f"unsupported bit depth: maxval {maxval}")
    if magic == b"P2":
        vals = np.array(data[2 + offset:].split(), dtype=np.int64)
        if vals.size != width * height:
            raise ValueError(f"unreadable file {path}: expected {width * height} samples")
        arr = vals.reshape(height, width)
        return arr.astype(np.uint16 if maxval > 255 else np.uint8), maxval
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    raster = data[2 + offset:]
    need = width * height * dtype.itemsize
    if len(raster) < need:
        raise ValueError(f"unreadable file {path}: raster truncated")
    arr = np.frombuffer(raster[:need], dtype=dtype).reshape(height, width)
    return arr.astype(np.uint16 if maxval > 255 else np.uint8), maxval


def write_pgm(path, values, maxval=None):
    """Write integer ``values`` as binary PGM; 16-bit when ``maxval > 255``."""
    arr = np.asarray(values)
    if arr.ndim != 2:
        raise ValueError(f"PGM must be single-plane, got shape {arr.shape}")
    if maxval is None:
        maxval = 255 if arr.dtype == np.uint8 else 65535
    if np.any(arr < 0) or np.any(arr > maxval):
        raise ValueError(f"values outside [0, {maxval}]")
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    h, w = arr.shape
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n{maxval}\n".encode("ascii"))
        fh.write(arr.astype(dtype).tobytes())


def load_mosaic(path, layout=None):
    values, maxval = read_pgm(path)
    h, w = values.shape
    if w % 2:
        raise ValueError(f"odd width: {w}")
    if h % 2:
        raise ValueError(f"odd height: {h}")
    return RawMosaic(values, layout or PolarizerLayout(), 8 if maxval <= 255 else 16)


def save_mosaic(path, mosaic):
    if mosaic.bit_depth is None:
        raise ValueError("unquantized mosaic cannot be written as PGM; quantize first")
    write_pgm(path, mosaic.values, 2 ** mosaic.bit_depth - 1)


def quantize(img, lo, hi, maxval=65535):
    """Linearly map ``[lo, hi]`` to ``[0, maxval]`` with rounding and clipping."""
    img = np.asarray(img, dtype=np.float64)
    if hi <= lo:
        raise ValueError("quantize needs hi > lo")
    q = np.rint((img - lo) / (hi - lo) * maxval)
    return np.clip(q, 0, maxval).astype(np.uint16 if maxval > 255 else np.uint8)


def dequantize(q, lo, hi, maxval=65535):
    return lo + np.asarray(q, dtype=np.float64) / maxval * (hi - lo)


def save_image(path, img, lo=0.0, hi=65535.0, maxval=65535):
    """Save a float image: bit-exact ``.npy`` or quantized PGM otherwise."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if path.suffix == ".npy":
        np.save(path, np.asarray(img, dtype=np.float64))
    else:
        write_pgm(path, quantize(img, lo, hi, maxval), maxval)


def load_image(path, lo=0.0, hi=65535.0):
    path = Path(path)
    if path.suffix == ".npy":
        return np.load(path)
    q, maxval = read_pgm(path)
    return dequantize(q, lo, hi, maxval)


def save_mask(path, mask):
    write_pgm(path, np.where(np.asarray(mask, dtype=bool), 255, 0).astype(np.uint8), 255)


def load_mask(path):
    values, _ = read_pgm(path)
    return values > 0


def export_png(path, img, lo=None, hi=None):
    """Write an 8-bit grayscale PNG for reports (needs Pillow)."""
    try:
        from PIL import Image
    except ImportError as exc:  # pragma: no cover - optional dependency
        raise RuntimeError("PNG export requires Pillow (pip install 'artifact[png]')") from exc
    img = np.asarray(img, dtype=np.float64)
    lo = float(img.min()) if lo is None else lo
    hi = float(img.max()) if hi is None else hi
    if hi <= lo:
        hi = lo + 1.0
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(quantize(img, lo, hi, 255), mode="L").save(path, format="PNG")


# ---------------------------------------------------------------------------
# Channel extraction


def extract_channel(mosaic, angle):
    """Sub-sampled (h/2, w/2) image of the sites carrying ``angle``."""
    dy, dx = mosaic.layout.offset(angle)
    return mosaic.values[dy::2, dx::2].astype(np.float64)


def extract_channels(mosaic):
    return {a: extract_channel(mosaic, a) for a in ANGLES}


def extract_green_mosaic(mosaic, color_layout=None, out_layout=None):
    """Build a mono DoFP mosaic from the green sites of a colour-polarization mosaic.

    Each 4x4 input tile becomes one 2x2 output tile laid out per ``out_layout``.
    """
    cl = color_layout or ColorPolarLayout()
    out_layout = out_layout or PolarizerLayout()
    v = np.asarray(mosaic.values if isinstance(mosaic, RawMosaic) else mosaic, dtype=np.float64)
    h, w = v.shape
    if h % 4 or w % 4:
        raise ValueError(f"colour-polarization mosaic dimensions must be divisible by 4, got {v.shape}")
    out = np.empty((h // 2, w // 2))
    for angle in ANGLES:
        sites = cl.green_sites(angle)
        if not sites:
            raise ValueError(f"ColorPolarLayout has no green site for angle {angle}")
        if cl.mode == "select":
            sites = sites[:1]
        plane = np.mean([v[r::4, c::4] for r, c in sites], axis=0)
        dy, dx = out_layout.offset(angle)
        out[dy::2, dx::2] = plane
    bit_depth = mosaic.bit_depth if isinstance(mosaic, RawMosaic) else None
    if bit_depth is not None and not np.all(np.mod(out, 1) == 0):
        bit_depth = None
    return RawMosaic(out, out_layout, bit_depth)
