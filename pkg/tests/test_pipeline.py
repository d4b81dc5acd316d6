import numpy as np
import pytest

from polarmp.classify import report_from_confusion
from polarmp.degrade import DegradeParams, Scenario
from polarmp.pipeline import (
    REPORT_COLUMNS,
    degrade_record,
    demosaic,
    descriptor_image,
    descriptors,
    parallel_map,
    report_rows,
)
from polarmp.synth import generate_sample

from conftest import disk_mask


def _square(x):
    return x * x


def test_parallel_map_keeps_order():
    assert parallel_map(_square, range(10), jobs=3) == [x * x for x in range(10)]
    assert parallel_map(_square, [], jobs=3) == []


def test_demosaic_dispatch():
    s = generate_sample(0, "PP", 0, image_size=32)
    planes, info = demosaic(s.mosaic, "bilinear")
    assert set(planes) == {0, 45, 90, 135} and all(v == 0 for v in info["clamped"].values())
    with pytest.raises(ValueError):
        demosaic(s.mosaic, "nearest")


def test_descriptor_image_masking():
    s = generate_sample(1, "PP", 0, image_size=32)
    pol, _, _ = descriptors(s.mosaic)
    m = s.truth.mask
    img = descriptor_image(pol, "dolp", m)
    assert np.all(img[~m] == 0)
    with pytest.raises(ValueError):
        descriptor_image(pol, "s0")


def test_degrade_record_support():
    img = np.ones((32, 32))
    m = disk_mask(img.shape, 16, 16, 8)
    _, sup = degrade_record(img, m, "FullNoise", DegradeParams(), 0)
    assert sup.all()
    d, sup = degrade_record(img, m, "Original", DegradeParams(), 0)
    np.testing.assert_array_equal(sup, m)
    np.testing.assert_array_equal(d, img)


def test_report_rows_format():
    rep = report_from_confusion(np.diag([3, 3, 3]), confidences=[0.9] * 9)
    rows = report_rows({Scenario.ORIGINAL: rep, "custom": rep})
    assert tuple(rows[0]) == REPORT_COLUMNS
    assert rows[0]["Scenario"].startswith("1. Original")
    assert rows[0]["Accuracy"] == "1.0000" and rows[0]["Avg-Confidence"] == "0.9000"
    assert rows[1]["Scenario"] == "custom"
