"""Keypoint detectors and the 128-d gradient descriptor."""

from .common import Keypoint, keypoints_to_csv
from .dense import DENSE_SCALE, detect_dense
from .dog import DogParams, detect_dog
from .harris import HARRIS_FEATURE_SCALE, HarrisParams, detect_harris, harris_response
from .sift import (
    DESCRIPTOR_SIZE,
    describe_all,
    describe_sift,
    descriptor_margin,
    dominant_orientation,
)

__all__ = [
    "DENSE_SCALE",
    "DESCRIPTOR_SIZE",
    "DogParams",
    "HARRIS_FEATURE_SCALE",
    "HarrisParams",
    "Keypoint",
    "describe_all",
    "describe_sift",
    "descriptor_margin",
    "detect_dense",
    "detect_dog",
    "detect_harris",
    "dominant_orientation",
    "harris_response",
    "keypoints_to_csv",
]
