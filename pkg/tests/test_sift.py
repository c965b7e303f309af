import numpy as np
import pytest
from scipy.ndimage import rotate

from visualwords.features import (
    DESCRIPTOR_SIZE,
    Keypoint,
    describe_all,
    describe_sift,
    descriptor_margin,
)
from visualwords.features.common import gaussian_blur


def textured(seed, size=48, sigma=1.0):
    rng = np.random.default_rng(seed)
    return gaussian_blur(rng.random((size, size)), sigma)


def center_kp(size=48, scale=1.6, orientation=0.0):
    return Keypoint(size / 2.0, size / 2.0, scale, orientation, 1.0)


def test_margin_is_8_at_reference_scale():
    assert descriptor_margin(1.6) == 8
    assert descriptor_margin(3.2) > descriptor_margin(1.6)


def test_descriptor_shape_norm_and_clamp():
    rng = np.random.default_rng(123)
    for _ in range(20):
        img = gaussian_blur(rng.random((48, 48)), rng.uniform(0.5, 2.0))
        kp = Keypoint(24.0, 24.0, rng.uniform(1.6, 3.0), rng.uniform(0, 6.28), 1.0)
        d = describe_sift(img, kp)
        assert d.shape == (DESCRIPTOR_SIZE,)
        assert np.linalg.norm(d) == pytest.approx(1.0, abs=1e-9)
        # clamp happens before the final renormalization, so allow headroom
        assert d.max() <= 0.26
        assert d.min() >= 0.0


def test_brightness_shift_leaves_descriptor_unchanged():
    img = textured(7)
    kp = center_kp()
    np.testing.assert_allclose(
        describe_sift(img, kp), describe_sift(img + 0.37, kp), atol=1e-9
    )


def test_contrast_scaling_leaves_descriptor_unchanged():
    img = textured(7)
    kp = center_kp()
    np.testing.assert_allclose(
        describe_sift(img, kp), describe_sift(img * 2.5, kp), atol=1e-12
    )


def test_flat_patch_gives_zero_vector():
    d = describe_sift(np.zeros((32, 32)), Keypoint(16.0, 16.0, 1.6, 0.0, 0.0))
    assert not d.any()


def test_rotation_90_with_auto_orientation_matches():
    img = textured(7)
    kept, da = describe_all(img, [Keypoint(24.0, 24.0, 1.6, None, 1.0)])
    rot = np.rot90(img, k=-1)
    keptr, dr = describe_all(rot, [Keypoint(23.0, 24.0, 1.6, None, 1.0)])
    assert kept and keptr
    assert float(da[0] @ dr[0]) >= 0.95
    dtheta = (keptr[0].orientation - kept[0].orientation) % (2 * np.pi)
    assert dtheta == pytest.approx(np.pi / 2, abs=0.3)


def test_rotation_30_with_auto_orientation_similar():
    rng = np.random.default_rng(7)
    rng.random((48, 48))  # advance past the texture used above
    big = gaussian_blur(rng.random((96, 96)), 1.2)
    _, da = describe_all(big, [Keypoint(48.0, 48.0, 2.0, None, 1.0)])
    rot30 = rotate(big, 30.0, reshape=False, order=3, mode="reflect")
    _, dr = describe_all(rot30, [Keypoint(48.0, 48.0, 2.0, None, 1.0)])
    assert float(da[0] @ dr[0]) >= 0.8


def test_out_of_support_keypoint_raises():
    with pytest.raises(ValueError):
        describe_sift(textured(1), Keypoint(3.0, 24.0, 1.6, 0.0, 1.0))


def test_upright_keypoint_valid_exactly_at_margin():
    img = textured(2)
    kept, d = describe_all(img, [Keypoint(8.0, 8.0, 1.6, 0.0, 0.0)])
    assert len(kept) == 1 and d.shape == (1, DESCRIPTOR_SIZE)


def test_describe_all_drops_unsupported_and_fills_orientation():
    img = textured(3)
    kps = [
        Keypoint(24.0, 24.0, 1.6, None, 1.0),
        Keypoint(1.0, 1.0, 1.6, None, 0.5),
    ]
    kept, d = describe_all(img, kps)
    assert len(kept) == 1
    assert d.shape == (1, DESCRIPTOR_SIZE)
    assert kept[0].orientation is not None


def test_describe_all_empty_input():
    kept, d = describe_all(textured(4), [])
    assert kept == [] and d.shape == (0, DESCRIPTOR_SIZE)


def test_deterministic():
    img = textured(5)
    kps = [Keypoint(24.0, 24.0, 1.6, None, 1.0), Keypoint(20.0, 30.0, 2.0, None, 0.5)]
    k1, d1 = describe_all(img, kps)
    k2, d2 = describe_all(img, kps)
    assert k1 == k2
    np.testing.assert_array_equal(d1, d2)
