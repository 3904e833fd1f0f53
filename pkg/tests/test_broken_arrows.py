import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from zbwm.broken_arrows import (BAKey, BrokenArrows, attack_cosine, ba_back_project, ba_detect,
                                ba_embed, ba_keygen, ba_optimal_attack, ba_project,
                                boundary_projection, cone_cosines, max_cosine_perturbation)
from zbwm.errors import DimensionError, NotDetectedError
from zbwm.hypercone import abs_cosine, cosine_from_pfa
from zbwm.imagecore import psnr

SMALL_NF = 3780


@pytest.fixture(scope="module")
def key():
    return ba_keygen(11, n_f=SMALL_NF)


def test_key_deterministic_and_roundtrip(tmp_path, key):
    again = ba_keygen(11, n_f=SMALL_NF)
    np.testing.assert_array_equal(again.basis, key.basis)
    np.testing.assert_array_equal(again.cone_axes, key.cone_axes)
    key.save(tmp_path / "k.bin")
    loaded = BAKey.load(tmp_path / "k.bin")
    assert (loaded.seed, loaded.m, loaded.n_f, loaded.n_c) == (11, 128, SMALL_NF, 50)
    np.testing.assert_array_equal(loaded.basis, key.basis)
    assert not np.array_equal(ba_keygen(12, n_f=SMALL_NF).cone_axes, key.cone_axes)
    with pytest.raises(ValueError):
        BAKey.from_bytes(b"XXXX" + key.to_bytes()[4:])
    with pytest.raises(ValueError):
        ba_keygen(0, m=1)


def test_basis_orthonormal_and_axes_unit(key):
    np.testing.assert_allclose(key.basis @ key.basis.T, np.eye(key.m), atol=1e-10)
    np.testing.assert_allclose(np.linalg.norm(key.cone_axes, axis=1), 1.0, atol=1e-12)
    g = np.abs(key.cone_axes @ key.cone_axes.T)[np.triu_indices(key.n_c, 1)]
    assert g.mean() < 0.15


def test_constant_image_projects_to_zero(key):
    img = np.full((256, 256, 3), 0.42)
    assert np.abs(ba_project(img, key)).max() < 1e-10
    assert ba_detect(img, key).value == 1.0
    with pytest.raises(DimensionError):
        ba_project(np.zeros((32, 32, 3)), key)


def test_projection_linear_and_green_only(key, rng):
    x, y = rng.random((2, 256, 256, 3))
    np.testing.assert_allclose(ba_project(2 * x - y, key), 2 * ba_project(x, key) - ba_project(y, key), atol=1e-9)
    z = x.copy()
    z[:, :, 0] = 0
    z[:, :, 2] = 1
    np.testing.assert_allclose(ba_project(z, key), ba_project(x, key), atol=1e-12)


def test_back_projection_is_right_inverse(key, rng):
    w = rng.standard_normal(key.m)
    img = ba_back_project(w, key, (256, 256, 3))
    np.testing.assert_allclose(ba_project(img, key), w, atol=1e-10)
    assert np.linalg.norm(img) == pytest.approx(np.linalg.norm(w), rel=1e-10)


def _planar_max_cosine(r, axis, rho, n=10_000):
    """Grid search over perturbation directions in span(r, axis)."""
    a = axis if axis @ r >= 0 else -axis
    u = r - (a @ r) * a
    u /= np.linalg.norm(u)
    psi = np.linspace(0, 2 * np.pi, n, endpoint=False)
    w = rho * (np.cos(psi)[:, None] * a + np.sin(psi)[:, None] * u)
    pts = r + w
    return np.max(np.abs(pts @ a) / np.linalg.norm(pts, axis=1))


def _planar_min_boundary_distance(r, axis, c_t, n=10_000):
    """Grid search over points of the cone |cos| = c_t in span(r, axis)."""
    a = axis if axis @ r >= 0 else -axis
    u = r - (a @ r) * a
    u /= np.linalg.norm(u)
    theta = math.acos(c_t)
    ray = math.cos(theta) * a + math.sin(theta) * u
    lengths = np.linspace(0, 2 * np.linalg.norm(r), n)
    return np.min(np.linalg.norm(lengths[:, None] * ray - r, axis=1))


@given(st.integers(0, 2 ** 32 - 1), st.floats(0.05, 3.0))
@settings(max_examples=25)
def test_max_cosine_matches_planar_grid(seed, rho):
    rng = np.random.default_rng(seed)
    r, axis = rng.standard_normal((2, 16))
    axis /= np.linalg.norm(axis)
    r *= 2 / np.linalg.norm(r)
    w = max_cosine_perturbation(r, axis, rho)
    assert np.linalg.norm(w) == pytest.approx(rho, rel=1e-9)
    ours = abs_cosine(r + w, axis)
    assert ours >= _planar_max_cosine(r, axis, rho) - 1e-6


@given(st.integers(0, 2 ** 32 - 1), st.floats(0.3, 0.9))
@settings(max_examples=25)
def test_boundary_projection_matches_planar_grid(seed, c_t):
    rng = np.random.default_rng(seed)
    axis = rng.standard_normal(16)
    axis /= np.linalg.norm(axis)
    r = rng.standard_normal(16) * 0.1 + axis  # inside the cone
    if abs_cosine(r, axis) <= c_t:
        return
    w = boundary_projection(r, axis, c_t)
    assert abs_cosine(r + w, axis) == pytest.approx(c_t, abs=1e-9)
    assert np.linalg.norm(w) == pytest.approx(_planar_min_boundary_distance(r, axis, c_t), rel=0.02)
    assert np.linalg.norm(w) <= _planar_min_boundary_distance(r, axis, c_t) + 1e-9


def test_boundary_projection_outside_is_zero():
    axis = np.array([1.0, 0, 0])
    assert np.all(boundary_projection(np.array([0.1, 1.0, 0]), axis, 0.5) == 0)


def test_embed_detect_small(key, small_images):
    det = BrokenArrows(key)
    for img in small_images[:3]:
        wm = det.embed(img, 42.0)
        assert psnr(img, wm) == pytest.approx(42.0, abs=0.05)
        assert det.detect(wm).detected(1e-6)
        assert not det.detect(img).detected(1e-6)


def test_embed_sign_symmetric(key, small_images):
    # the double cone makes a negated projection exactly as detectable
    img = small_images[1]
    wm = ba_embed(img, key, 42.0)
    r = ba_project(wm, key)
    assert cone_cosines(-r, key).max() == pytest.approx(cone_cosines(r, key).max(), rel=1e-12)


@pytest.mark.parametrize("idx", range(6))
def test_embed_cosine_non_increasing_in_psnr(key, small_images, idx):
    img = small_images[idx]
    cos = [BrokenArrows(key).score(ba_embed(img, key, t)) for t in (36.0, 42.0, 48.0)]
    # saturated budgets land on the axis, where cosines tie at 1 up to rounding
    assert cos[0] >= cos[1] - 1e-9 and cos[1] >= cos[2] - 1e-9


def test_wrong_key_does_not_detect(key, small_images):
    wm = ba_embed(small_images[0], key, 42.0)
    hits = sum(ba_detect(wm, ba_keygen(s, n_f=SMALL_NF)).detected(1e-6) for s in range(100, 110))
    assert hits == 0


def test_optimal_attack_small(key, small_images):
    for img in small_images[:3]:
        wm = ba_embed(img, key, 42.0)
        rec = ba_optimal_attack(wm, key)
        assert rec.success and rec.queries_used == 0
        assert rec.final_pvalue.value > 1e-6
        assert rec.attack_name == "ba_optimal"
        half = np.clip(wm + 0.5 * (rec.attacked - wm), 0, 1)
        assert ba_detect(half, key).detected(1e-6)
    with pytest.raises(NotDetectedError):
        ba_optimal_attack(small_images[0], key)


def test_attack_cosine_targets():
    k = ba_keygen(0, m=128, n_f=200, n_c=50)
    assert attack_cosine(k) == pytest.approx(cosine_from_pfa(2e-7, 128), abs=1e-12)
    assert attack_cosine(k, margin=0.01) < cosine_from_pfa(2e-8, 128)
    with pytest.raises(ValueError):
        attack_cosine(k, margin=-1)


def test_gradient_matches_finite_difference(key, rng):
    det = BrokenArrows(key)
    img = rng.random((256, 256, 3))
    g = det.gradient(img)
    for _ in range(3):
        d = rng.standard_normal(img.shape)
        d /= np.linalg.norm(d)
        h = 1e-2
        fd = (det.score(img + h * d) - det.score(img - h * d)) / (2 * h)
        assert float(np.sum(g * d)) == pytest.approx(fd, rel=1e-5)
