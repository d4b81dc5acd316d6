"""Forward-model scene generator with known polarization ground truth.

A scene is described by per-pixel total intensity S0, degree of linear
polarization d and angle psi. An ideal analyzer at angle theta transmits::

    I(theta) = 1/2 (S0 + S1 cos 2theta + S2 sin 2theta),
    S1 = S0 d cos 2psi,  S2 = S0 d sin 2psi.

``generate_dataset`` builds labeled particle scenes whose in-mask AOLP/DOLP
textures follow a per-class :class:`ClassSignature`, samples them onto a
DoFP mosaic and returns everything needed to run and check the pipeline.
"""

from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from ._filters import gaussian_blur
from ._validation import check_seed, make_rng
from .dataset import CLASSES, ParticleRecord, write_manifest
from .imagery import ANGLES, PolarizerLayout, RawMosaic, save_mask, save_mosaic


@dataclass
class SceneTruth:
    s0: np.ndarray
    dolp: np.ndarray
    aolp: np.ndarray  # degrees in [0, 180)
    mask: np.ndarray
    label: str | None = None

    def stokes(self):
        psi = np.radians(self.aolp)
        return (
            self.s0,
            self.s0 * self.dolp * np.cos(2 * psi),
            self.s0 * self.dolp * np.sin(2 * psi),
        )


@dataclass
class ClassSignature:
    """Texture and silhouette statistics of one synthetic class.

    Stripe frequency is in cycles per image width; the AOLP texture is a
    sinusoidal stripe pattern around ``base_aolp``; DOLP is ``dolp_mean``
    plus a smooth low-frequency speckle.
    """

    base_aolp: float
    aolp_amplitude: float
    stripe_cycles: int
    orientation_jitter: float
    dolp_mean: float
    dolp_speckle: float
    speckle_cycles: int
    roughness: float
    base_jitter: float = 8.0


# Base AOLP follows particle pose (uniform over roughly 20-160 degrees for
# every class); materials differ in stripe texture and boundary roughness.
DEFAULT_SIGNATURES = {
    "PP": ClassSignature(90.0, 14.0, 4, 20.0, 0.55, 0.08, 3, 0.12, base_jitter=70.0),
    "HDPE": ClassSignature(90.0, 18.0, 5, 20.0, 0.35, 0.06, 5, 0.05, base_jitter=70.0),
    "LDPE": ClassSignature(90.0, 11.0, 3, 20.0, 0.45, 0.10, 2, 0.0, base_jitter=70.0),
}


def render_from_stokes(s0, s1, s2, angle):
    t = np.radians(angle)
    return 0.5 * (s0 + s1 * np.cos(2 * t) + s2 * np.sin(2 * t))


def render_channel(truth, angle):
    """Analyzer-channel intensity of ``truth`` at ``angle`` degrees."""
    if angle not in ANGLES:
        raise ValueError(f"angle must be one of {ANGLES}, got {angle}")
    s0, s1, s2 = truth.stokes()
    return render_from_stokes(s0, s1, s2, angle)


def render_channels(truth):
    return {a: render_channel(truth, a) for a in ANGLES}


def mosaic_subsample(channels, layout=None, noise_sigma=0.0, seed=None, bit_depth=None):
    """Sample four full-resolution channels onto a DoFP mosaic.

    ``channels`` maps angle to plane (or is a sequence in 0/45/90/135
    order). Gaussian noise needs an explicit ``seed``. With ``bit_depth``
    (8 or 16) values are clamped to the sensor range and rounded; with
    ``None`` the mosaic stays float and is only clamped at 0.
    """
    layout = layout or PolarizerLayout()
    if not isinstance(channels, dict):
        channels = dict(zip(ANGLES, channels))
    planes = [np.asarray(channels[a], dtype=np.float64) for a in ANGLES]
    if len({p.shape for p in planes}) != 1:
        raise ValueError("channels must share one shape")
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be >= 0")
    h, w = planes[0].shape
    out = np.empty((h, w))
    for a, p in zip(ANGLES, planes):
        dy, dx = layout.offset(a)
        out[dy::2, dx::2] = p[dy::2, dx::2]
    if noise_sigma > 0:
        out += make_rng(check_seed(seed), 7).normal(0.0, noise_sigma, out.shape)
    if bit_depth is None:
        return RawMosaic(np.maximum(out, 0.0), layout, None)
    top = 2 ** bit_depth - 1
    return RawMosaic(np.clip(np.rint(out), 0, top), layout, bit_depth)


def bandlimited_stokes(shape, max_cycles, n_terms=6, seed=0):
    """Periodic S0/S1/S2 planes built from a few integer-frequency cosines.

    Every component has at most ``max_cycles`` cycles per image along each
    axis, and ``|S1|, |S2|`` stay below S0 so channels are non-negative.
    """
    rng = make_rng(seed, 11)
    h, w = shape
    y, x = np.mgrid[0:h, 0:w]

    def field():
        out = np.zeros(shape)
        for _ in range(n_terms):
            ky = rng.integers(-max_cycles, max_cycles + 1)
            kx = rng.integers(-max_cycles, max_cycles + 1)
            out += rng.uniform(0.2, 1.0) * np.cos(
                2 * np.pi * (ky * y / h + kx * x / w) + rng.uniform(0, 2 * np.pi)
            )
        return out / n_terms

    s0 = 2.0 + field()
    s1 = 0.5 * field()
    s2 = 0.5 * field()
    return s0, s1, s2


# ---------------------------------------------------------------------------
# particle scenes


def particle_silhouette(size, rng, roughness, radius_frac=(0.22, 0.32)):
    """Star-shaped random polygon with Fourier boundary perturbation.

    Returns a boolean mask. Low orders (2-4) give the irregular outline,
    orders 8-20 scaled by ``roughness`` give the fine boundary.
    """
    h = w = size
    cy = h / 2 + rng.uniform(-0.05, 0.05) * h
    cx = w / 2 + rng.uniform(-0.05, 0.05) * w
    radius = rng.uniform(*radius_frac) * size
    y, x = np.mgrid[0:h, 0:w]
    phi = np.arctan2(y - cy, x - cx)
    dist = np.hypot(y - cy, x - cx)
    rel = np.ones_like(phi)
    for k in range(2, 5):
        rel += rng.uniform(0.0, 0.08) * np.cos(k * phi + rng.uniform(0, 2 * np.pi))
    for k in range(8, 21):
        rel += roughness * rng.uniform(0.3, 1.0) * np.cos(k * phi + rng.uniform(0, 2 * np.pi)) / np.sqrt(k / 8)
    return dist <= radius * rel


def particle_scene(label, signature, size, rng, edge_sigma=3.0, bg_level=3000.0, fg_level=30000.0):
    """One labeled particle scene with a soft (nearly band-limited) edge."""
    sig = signature
    mask = particle_silhouette(size, rng, sig.roughness)
    soft = gaussian_blur(mask.astype(np.float64), edge_sigma, mode="wrap")
    y, x = np.mgrid[0:size, 0:size] / size
    theta = np.radians(rng.uniform(0, 180))
    theta += np.radians(rng.uniform(-sig.orientation_jitter, sig.orientation_jitter))
    phase = rng.uniform(0, 2 * np.pi)
    # integer cycles along each axis keep the stripe field periodic
    ky = int(round(sig.stripe_cycles * np.sin(theta)))
    kx = int(round(sig.stripe_cycles * np.cos(theta)))
    base = sig.base_aolp + rng.uniform(-sig.base_jitter, sig.base_jitter)
    aolp = base + sig.aolp_amplitude * np.sin(2 * np.pi * (ky * y + kx * x) + phase)
    aolp = np.mod(aolp, 180.0)
    speckle = np.zeros((size, size))
    for _ in range(4):
        sy = rng.integers(-sig.speckle_cycles, sig.speckle_cycles + 1)
        sx = rng.integers(-sig.speckle_cycles, sig.speckle_cycles + 1)
        speckle += np.cos(2 * np.pi * (sy * y + sx * x) + rng.uniform(0, 2 * np.pi))
    d_inside = np.clip(sig.dolp_mean + sig.dolp_speckle * speckle / 2.0, 0.0, 1.0)
    fg = fg_level * rng.uniform(0.85, 1.15)
    s0 = bg_level + (fg - bg_level) * soft
    # DOLP is carried by the polarized part of S0 only: background light is unpolarized
    dolp = d_inside * (fg - bg_level) * soft / s0
    return SceneTruth(s0, dolp, aolp, soft > 0.5, label)


@dataclass
class SyntheticSample:
    record: ParticleRecord
    truth: SceneTruth
    mosaic: RawMosaic


def sample_plan(n_per_class):
    """``(index, label)`` pairs in generation order: classes in turn, ``n_per_class`` each."""
    if n_per_class < 1:
        raise ValueError("n_per_class must be >= 1")
    return [(i * n_per_class + j, label) for i, label in enumerate(CLASSES) for j in range(n_per_class)]


def generate_dataset(n_per_class, signatures=None, image_size=128, noise_sigma=0.0, seed=None,
                     layout=None, bit_depth=16):
    """Generate ``3 * n_per_class`` labeled DoFP samples.

    Sample ``i`` uses its own Philox stream derived from ``(seed, i)``, so
    any subset can be regenerated independently and in parallel.
    """
    return [
        generate_sample(index, label, seed, signatures, image_size, noise_sigma, layout, bit_depth)
        for index, label in sample_plan(n_per_class)
    ]


def generate_sample(index, label, seed, signatures=None, image_size=128, noise_sigma=0.0,
                    layout=None, bit_depth=16):
    """Sample ``index`` of a dataset; identical to the one ``generate_dataset`` builds."""
    seed = check_seed(seed)
    if image_size % 2:
        raise ValueError("image_size must be even")
    signature = (signatures or DEFAULT_SIGNATURES)[label]
    rng = make_rng(seed, 100, index)
    truth = particle_scene(label, signature, image_size, rng)
    chans = render_channels(truth)
    mos = mosaic_subsample(chans, layout or PolarizerLayout(), noise_sigma,
                           seed=int(rng.integers(2**31)), bit_depth=bit_depth)
    rid = f"{label.lower()}_{index:05d}"
    rec = ParticleRecord(rid, label, f"mosaics/{rid}.pgm", f"masks/{rid}.pgm")
    return SyntheticSample(rec, truth, mos)


def write_dataset(samples, out_dir):
    """Write mosaics, masks, truth planes (npz) and ``manifest.csv``."""
    out = Path(out_dir)
    for s in samples:
        save_mosaic(out / s.record.image_ref, s.mosaic)
        save_mask(out / s.record.mask_ref, s.truth.mask)
        t = s.truth
        (out / "truth").mkdir(parents=True, exist_ok=True)
        np.savez(out / "truth" / f"{s.record.id}.npz", s0=t.s0, dolp=t.dolp, aolp=t.aolp, mask=t.mask)
    write_manifest(out / "manifest.csv", [s.record for s in samples])
    return out / "manifest.csv"


def signature_table(signatures=None):
    return {k: asdict(v) for k, v in (signatures or DEFAULT_SIGNATURES).items()}
