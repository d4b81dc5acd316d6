import configparser

import pytest

from polarmp.config import ConfigError, RunConfig, describe_defaults, load_config
from polarmp.degrade import DegradeParams
from polarmp.segment import SegmentationParams


def test_defaults_match_dataclasses():
    cfg = RunConfig()
    assert cfg.segmentation_params() == SegmentationParams()
    assert cfg.degrade_params(0) == DegradeParams()
    assert cfg.get("classifier", "batch_size") == 32


def test_described_defaults_parse_back(tmp_path):
    p = tmp_path / "d.ini"
    p.write_text(describe_defaults())
    cfg = load_config(p)
    assert cfg.to_json() == RunConfig().to_json()


def test_values_are_parsed(tmp_path):
    p = tmp_path / "c.ini"
    p.write_text("[segment]\nclahe_tiles = 4x6\n[stokes]\neps = 0.5\n[layout]\npolarizer = 0,45,135,90\n")
    cfg = load_config(p)
    assert cfg.segmentation_params().clahe_tiles == (4, 6)
    assert cfg.get("stokes", "eps") == 0.5
    assert cfg.polarizer_layout().angle_at(0, 0) == 0


@pytest.mark.parametrize("text, key", [
    ("[nope]\na = 1\n", "nope"),
    ("[degrade]\nfill = 1\n", "degrade.fill"),
    ("[degrade]\nfill_mode = black\n", "degrade.fill_mode"),
    ("[classifier]\nbatch_size = many\n", "classifier.batch_size"),
])
def test_rejections_name_the_key(tmp_path, text, key):
    p = tmp_path / "c.ini"
    p.write_text(text)
    with pytest.raises(ConfigError) as exc:
        load_config(p)
    assert exc.value.key == key


def test_cross_field_error_names_the_key():
    cfg = RunConfig()
    cfg.set("segment", "canny_low", "150")
    with pytest.raises(ConfigError) as exc:
        cfg.segmentation_params()
    assert exc.value.key == "segment.canny_low"


def test_env_var(tmp_path, monkeypatch):
    p = tmp_path / "c.ini"
    p.write_text("[refine]\nn_sigma = 3\n")
    monkeypatch.setenv("POLARMP_CONFIG", str(p))
    assert load_config().get("refine", "n_sigma") == 3.0
    monkeypatch.setenv("POLARMP_CONFIG", str(tmp_path / "missing.ini"))
    with pytest.raises(ConfigError):
        load_config()


def test_override_ignores_none():
    cfg = RunConfig()
    cfg.override("refine", "policy", None)
    cfg.override("refine", "policy", "max")
    assert cfg.get("refine", "policy") == "max"
    with pytest.raises(ConfigError):
        cfg.override("refine", "bogus", 1)


def test_describe_defaults_is_valid_ini():
    parser = configparser.ConfigParser(interpolation=None)
    parser.read_string(describe_defaults())
    assert "segment" in parser.sections()
