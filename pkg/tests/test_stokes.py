import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from polarmp.stokes import (
    PolarimetricImage,
    StokesImage,
    StokesTransformer,
    apply_mask,
    compute_descriptors,
    compute_stokes,
    default_eps,
)
from polarmp.synth import render_from_stokes


def const(v, shape=(3, 3)):
    return np.full(shape, float(v))


def stokes_of(s0, s1, s2):
    return StokesImage(const(s0), const(s1), const(s2))


def test_fully_0_polarized():
    s = compute_stokes(const(1), const(0.5), const(0), const(0.5))
    assert np.all(s.s0 == 1) and np.all(s.s1 == 1) and np.all(s.s2 == 0)


def test_fully_45_polarized():
    s = compute_stokes(const(0.5), const(1), const(0.5), const(0))
    assert np.all(s.s0 == 1) and np.all(s.s1 == 0) and np.all(s.s2 == 1)


def test_thirty_degree_state():
    s = compute_stokes(const(0.75), const(0.9330), const(0.25), const(0.0670))
    assert np.allclose(s.s0, 1, atol=1e-4)
    assert np.allclose(s.s1, 0.5, atol=1e-4)
    assert np.allclose(s.s2, 0.8660, atol=1e-4)


def test_dimension_mismatch():
    with pytest.raises(ValueError, match="dimension mismatch"):
        compute_stokes(const(1), const(1), const(1), const(1, (2, 3)))


def test_violations_counted_not_fatal():
    s = compute_stokes(const(1), const(3), const(0), const(0))
    assert s.violations == 9


def test_descriptors_aligned_state():
    p = compute_descriptors(stokes_of(1, 1, 0))
    assert np.all(p.valid) and np.allclose(p.dolp, 1) and np.allclose(p.aolp, 0)


def test_descriptors_thirty_degrees():
    p = compute_descriptors(stokes_of(1, 0.5, np.sqrt(3) / 2))
    assert np.allclose(p.dolp, 1.0, atol=1e-4)
    assert np.allclose(p.aolp, 30.0, atol=0.01)


def test_unpolarized_is_invalid():
    p = compute_descriptors(stokes_of(0.5, 0, 0), eps=1e-6)
    assert not p.valid.any()
    assert np.all(p.dolp == 0) and np.all(p.aolp == 0)


def test_pure_45_dropped_by_default_guard():
    p = compute_descriptors(stokes_of(1, 0, 1))
    assert not p.valid.any()
    relaxed = compute_descriptors(stokes_of(1, 0, 1), require_s1=False)
    assert relaxed.valid.all() and np.allclose(relaxed.aolp, 45)


def test_negative_angles_folded():
    p = compute_descriptors(stokes_of(1, 0.5, -np.sqrt(3) / 2))
    assert np.allclose(p.aolp, 150.0)
    p = compute_descriptors(stokes_of(1, -1, -1e-18))
    assert np.all((p.aolp >= 0) & (p.aolp < 180))


def test_overflow_clamped_and_counted():
    s = StokesImage(np.array([[1.0, 1.0]]), np.array([[1.2, 0.5]]), np.array([[0.0, 0.0]]))
    p = compute_descriptors(s)
    assert p.overflow_count == 1
    assert p.dolp.tolist() == [[1.0, 0.5]]


def test_default_eps():
    s0 = np.array([[0.0, 2000.0]])
    assert default_eps(s0) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        compute_descriptors(stokes_of(1, 1, 0), eps=0)


def test_apply_mask_cases():
    img = const(5, (4, 4))
    full = np.ones((4, 4), bool)
    assert np.array_equal(apply_mask(img, full), img)
    assert np.all(apply_mask(img, ~full) == 0)
    checker = (np.add.outer(np.arange(4), np.arange(4)) % 2).astype(bool)
    assert np.count_nonzero(apply_mask(img, checker) == 5) == 8
    p = compute_descriptors(StokesImage(const(1, (4, 4)), const(1, (4, 4)), const(0, (4, 4))))
    assert not apply_mask(p, ~full).valid.any()
    assert np.array_equal(apply_mask(p, full).dolp, p.dolp)
    with pytest.raises(ValueError):
        apply_mask(img, np.ones((3, 4), bool))


states = st.tuples(
    st.floats(0.01, 1e4), st.floats(0.05, 1.0), st.floats(0, 180, exclude_max=True)
)


def _render(s0, d, psi):
    t = np.radians(psi)
    s1, s2 = s0 * d * np.cos(2 * t), s0 * d * np.sin(2 * t)
    return [np.array([[render_from_stokes(s0, s1, s2, a)]]) for a in (0, 45, 90, 135)]


def _circ_diff(a, b):
    return np.abs((a - b + 90.0) % 180.0 - 90.0)


@given(states, st.floats(-360, 360))
def test_rotation_consistency(state, delta):
    s0, d, psi = state
    p1 = compute_descriptors(compute_stokes(*_render(s0, d, psi)), eps=1e-12, require_s1=False)
    p2 = compute_descriptors(compute_stokes(*_render(s0, d, psi + delta)), eps=1e-12, require_s1=False)
    assert _circ_diff(p2.aolp[0, 0], (p1.aolp[0, 0] + delta) % 180) <= 0.01


@given(states, st.floats(1e-3, 1e3))
def test_scale_invariance(state, c):
    ch = _render(*state)
    p = compute_descriptors(compute_stokes(*ch), eps=1e-15, require_s1=False)
    q = compute_descriptors(compute_stokes(*[c * x for x in ch]), eps=1e-15, require_s1=False)
    assert abs(p.dolp[0, 0] - q.dolp[0, 0]) <= 1e-12
    assert _circ_diff(p.aolp[0, 0], q.aolp[0, 0]) <= 1e-12 * 180


@given(st.floats(0.01, 1e4), st.floats(0, 1), st.floats(0, 180, exclude_max=True))
def test_physical_dolp_never_overflows(s0, d, psi):
    ch = _render(s0, d, psi)
    s = compute_stokes(*[np.maximum(c, 0) for c in ch])
    raw = np.hypot(s.s1, s.s2) / s.s0
    assert raw.max() <= 1 + 1e-9
    p = compute_descriptors(s, eps=1e-12, require_s1=False)
    assert p.overflow_count == 0


@given(st.lists(st.floats(0, 1e3), min_size=16, max_size=16))
def test_guard_completeness(vals):
    ch = np.array(vals).reshape(4, 2, 2)
    p = compute_descriptors(compute_stokes(*ch), eps=1e-9)
    assert np.all(np.isfinite(p.dolp)) and np.all(np.isfinite(p.aolp))
    assert np.all((p.dolp >= 0) & (p.dolp <= 1))
    assert np.all((p.aolp >= 0) & (p.aolp < 180))
    assert np.all(p.dolp[~p.valid] == 0) and np.all(p.aolp[~p.valid] == 0)


def test_transformer():
    ch = np.stack([const(1), const(0.5), const(0), const(0.5)])
    out = StokesTransformer().fit_transform(np.stack([ch, ch]))
    assert out.shape == (2, 2, 3, 3)
    assert np.allclose(out[:, 0], 1) and np.allclose(out[:, 1], 0)
    assert StokesTransformer(output="aolp").fit_transform(ch).shape == (1, 3, 3)
    assert isinstance(compute_descriptors(stokes_of(1, 1, 0)), PolarimetricImage)
