import numpy as np
import pytest

from visualwords.features import HarrisParams, detect_harris


def bright_square(size=64, lo=20, hi=45):
    img = np.zeros((size, size))
    img[lo:hi, lo:hi] = 1.0
    return img


def test_square_yields_exactly_its_corners():
    kps = detect_harris(bright_square(), HarrisParams(max_points=50))
    got = {(round(k.x), round(k.y)) for k in kps}
    assert got == {(20, 20), (44, 20), (20, 44), (44, 44)}


def test_checkerboard_keypoints_sit_on_crossings():
    cb = (np.indices((64, 64)).sum(0) // 8 % 2).astype(float)
    kps = detect_harris(cb, HarrisParams(max_points=200))
    assert len(kps) >= 20
    for k in kps:
        ox, oy = k.x % 8, k.y % 8
        assert min(ox, 8 - ox) <= 1.5
        assert min(oy, 8 - oy) <= 1.5


def test_flat_image_yields_nothing():
    assert detect_harris(np.full((32, 32), 0.5), HarrisParams()) == []


def test_max_points_caps_by_response():
    kps_all = detect_harris(bright_square(), HarrisParams(max_points=50))
    kps_two = detect_harris(bright_square(), HarrisParams(max_points=2))
    assert len(kps_two) == 2
    assert kps_two == kps_all[:2]


def test_responses_sorted_descending():
    rng = np.random.default_rng(3)
    img = rng.random((48, 48))
    kps = detect_harris(img, HarrisParams(max_points=100))
    responses = [k.response for k in kps]
    assert responses == sorted(responses, reverse=True)


def test_deterministic():
    rng = np.random.default_rng(4)
    img = rng.random((48, 48))
    assert detect_harris(img, HarrisParams()) == detect_harris(img, HarrisParams())


def test_keypoints_carry_detector_scale_and_no_orientation():
    kps = detect_harris(bright_square(), HarrisParams())
    assert all(k.scale == 1.6 for k in kps)
    assert all(k.orientation is None for k in kps)


def test_param_validation():
    with pytest.raises(ValueError):
        HarrisParams(k=0.2).validate()
    with pytest.raises(ValueError):
        HarrisParams(threshold_rel=0.0).validate()
    with pytest.raises(ValueError):
        HarrisParams(max_points=0).validate()
