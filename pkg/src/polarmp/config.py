"""Run configuration: an INI file with fixed sections and documented keys.

Every key has a default. Unknown sections or keys are rejected, naming the
offending ``section.key``. ``POLARMP_CONFIG`` points at a config file when
no ``--config`` flag is given.

Example::

    [segment]
    canny_low = 30
    canny_high = 100

    [degrade]
    fill_mode = mid-gray
"""

import configparser
import os
from dataclasses import dataclass, field
from pathlib import Path

from .degrade import DegradeParams
from .imagery import ColorPolarLayout, PolarizerLayout
from .segment import SegmentationParams

ENV_VAR = "POLARMP_CONFIG"


class ConfigError(ValueError):
    """Configuration problem tied to one ``section.key``."""

    def __init__(self, key, message):
        super().__init__(f"{key}: {message}")
        self.key = key


def _bool(text):
    v = str(text).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _opt_float(text):
    text = str(text).strip()
    return None if text in ("", "auto", "none") else float(text)


def _opt_str(text):
    return str(text).strip() or None


def _tiles(text):
    parts = str(text).lower().replace("x", ",").split(",")
    if len(parts) != 2:
        raise ValueError(f"expected ROWSxCOLS, got {text!r}")
    return tuple(int(p) for p in parts)


def _ratios(text):
    vals = tuple(float(v) for v in str(text).split(","))
    if len(vals) != 3:
        raise ValueError(f"expected three ratios, got {text!r}")
    return vals


def _choice(*options):
    def parse(text):
        v = str(text).strip()
        if v not in options:
            raise ValueError(f"expected one of {list(options)}, got {v!r}")
        return v
    return parse


# section -> key -> (parser, default, description)
SCHEMA = {
    "demosaic": {
        "method": (_choice("fdzp", "bilinear"), "fdzp", "fdzp or bilinear"),
        "phase_shift": (_bool, True, "co-register channels with a frequency-domain phase ramp"),
    },
    "stokes": {
        "eps": (_opt_float, None, "validity threshold; auto = 1e-3 * max(S0)"),
        "require_s1": (_bool, True, "also require |S1| > eps (set false to guard on S0 only)"),
    },
    "segment": {
        "nlm_patch": (int, 7, "NLM patch side (odd)"),
        "nlm_search": (int, 21, "NLM search window side (odd)"),
        "nlm_h": (float, 10.0, "NLM filtering strength, 8-bit scale"),
        "clahe_clip": (float, 2.0, "CLAHE clip limit"),
        "clahe_tiles": (_tiles, (8, 8), "CLAHE tile grid ROWSxCOLS"),
        "canny_sigma": (float, 1.4, "Gaussian sigma before Sobel"),
        "canny_low": (float, 30.0, "hysteresis low threshold (unnormalized Sobel)"),
        "canny_high": (float, 100.0, "hysteresis high threshold (unnormalized Sobel)"),
        "se_close1": (int, 2, "first closing disk radius"),
        "se_dilate": (int, 1, "dilation disk radius"),
        "se_close2": (int, 2, "second closing disk radius"),
    },
    "degrade": {
        "fill_mode": (_choice("mask-mean", "mid-gray"), "mask-mean", "uniform fill value"),
        "hull_sigma_frac": (float, 0.05, "UniformShape blur sigma as a fraction of the bbox size"),
        "min_sigma": (float, 3.0, "UniformShape minimum blur sigma, px"),
        "background_fill": (float, 0.0, "UniformShape background value"),
    },
    "classifier": {
        "learning_rate": (float, 1e-3, "Adam step size"),
        "batch_size": (int, 32, "minibatch size"),
        "max_epochs": (int, 200, "epoch budget"),
        "patience": (int, 50, "early-stopping patience in epochs"),
        "beta1": (float, 0.9, "Adam first-moment decay"),
        "beta2": (float, 0.999, "Adam second-moment decay"),
        "epsilon": (float, 1e-8, "Adam denominator offset"),
        "standardize": (_bool, True, "z-score features with training statistics"),
        "augment_noise": (float, 0.0, "feature-space Gaussian noise during training"),
    },
    "layout": {
        "polarizer": (PolarizerLayout.from_string, PolarizerLayout(), "row-major 2x2 angles, e.g. 90,45,135,0"),
        "color": (_opt_str, None, "16 row-major colour/angle tokens (empty = built-in quad-Bayer map)"),
        "green_mode": (_choice("select", "average"), "select", "combine green sites by selecting one or averaging"),
    },
    "dataset": {
        "ratios": (_ratios, (0.70, 0.15, 0.15), "train,val,test fractions"),
        "folds": (int, 5, "cross-validation fold count"),
    },
    "refine": {
        "policy": (_choice("mean", "max", "either"), "mean", "outlier statistic"),
        "n_sigma": (float, 2.0, "flag above mu + n_sigma * sigma"),
        "top_frac": (_opt_float, None, "flag this fraction of highest-loss ids instead"),
    },
}


def _offending(section, message):
    # first key of the section named in a validation message
    for key in SCHEMA[section]:
        if key in message:
            return f"{section}.{key}"
    return section


@dataclass
class RunConfig:
    values: dict = field(default_factory=lambda: {s: {k: v[1] for k, v in keys.items()} for s, keys in SCHEMA.items()})
    source: str | None = None

    def get(self, section, key):
        return self.values[section][key]

    def set(self, section, key, raw):
        """Parse and store ``raw`` (a string) for ``section.key``."""
        if section not in SCHEMA:
            raise ConfigError(section, f"unknown section; expected one of {sorted(SCHEMA)}")
        if key not in SCHEMA[section]:
            raise ConfigError(f"{section}.{key}", "unknown key")
        parser = SCHEMA[section][key][0]
        try:
            self.values[section][key] = parser(raw)
        except ValueError as exc:
            raise ConfigError(f"{section}.{key}", str(exc)) from None

    def override(self, section, key, value):
        """Store an already-typed value (from a CLI flag) when not None."""
        if value is not None:
            if key not in SCHEMA.get(section, {}):
                raise ConfigError(f"{section}.{key}", "unknown key")
            self.values[section][key] = value

    def segmentation_params(self):
        try:
            return SegmentationParams(**self.values["segment"])
        except ValueError as exc:
            raise ConfigError(_offending("segment", str(exc)), str(exc)) from None

    def degrade_params(self, seed):
        d = self.values["degrade"]
        try:
            return DegradeParams(d["fill_mode"], d["hull_sigma_frac"], seed, d["background_fill"], d["min_sigma"])
        except ValueError as exc:
            raise ConfigError(_offending("degrade", str(exc)), str(exc)) from None

    def classifier_params(self, seed):
        return {**self.values["classifier"], "random_state": seed}

    def polarizer_layout(self):
        return self.values["layout"]["polarizer"]

    def color_layout(self):
        lay = self.values["layout"]
        try:
            if lay["color"] is None:
                return ColorPolarLayout(mode=lay["green_mode"])
            return ColorPolarLayout.from_string(lay["color"], mode=lay["green_mode"])
        except ValueError as exc:
            raise ConfigError("layout.color", str(exc)) from None

    def to_json(self):
        out = {}
        for s, keys in self.values.items():
            out[s] = {}
            for k, v in keys.items():
                if isinstance(v, PolarizerLayout):
                    v = v.to_string()
                elif isinstance(v, tuple):
                    v = list(v)
                out[s][k] = v
        return out


def load_config(path=None):
    """Read ``path`` (or ``$POLARMP_CONFIG``); defaults when neither is set."""
    path = path or os.environ.get(ENV_VAR) or None
    cfg = RunConfig()
    if path is None:
        return cfg
    p = Path(path)
    if not p.is_file():
        raise ConfigError("config", f"config file not found: {p}")
    parser = configparser.ConfigParser(interpolation=None, default_section="__unused__")
    try:
        parser.read(p)
    except configparser.Error as exc:
        raise ConfigError("config", f"unparsable config: {exc}".replace("\n", " ")) from None
    for section in parser.sections():
        for key, raw in parser.items(section):
            cfg.set(section, key, raw)
    cfg.source = str(p)
    return cfg


def describe_defaults():
    """Commented INI text listing every key with its default."""
    lines = []
    for s, keys in SCHEMA.items():
        lines.append(f"[{s}]")
        for k, (_, default, doc) in keys.items():
            if isinstance(default, PolarizerLayout):
                default = default.to_string()
            elif isinstance(default, tuple):
                default = ",".join(str(v) for v in default) if k != "clahe_tiles" else f"{default[0]}x{default[1]}"
            elif default is None:
                default = ""
            elif isinstance(default, bool):
                default = str(default).lower()
            lines.append(f"# {doc}")
            lines.append(f"{k} = {default}")
        lines.append("")
    return "\n".join(lines)
