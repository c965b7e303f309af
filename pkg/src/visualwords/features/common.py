"""Shared low-level pieces for the keypoint detectors and the descriptor."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy import ndimage


@dataclass(frozen=True)
class Keypoint:
    """A salient image location.

    ``orientation`` is None until assigned; the descriptor stage fills it
    in for detectors that do not set one.
    """

    x: float
    y: float
    scale: float
    orientation: float | None
    response: float

    def with_orientation(self, theta: float) -> "Keypoint":
        return replace(self, orientation=float(theta) % (2.0 * np.pi))


def as_image(image: np.ndarray) -> np.ndarray:
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"expected 2-D image, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("image contains non-finite pixels")
    return arr


def gaussian_blur(image: np.ndarray, sigma: float) -> np.ndarray:
    if sigma <= 0:
        return np.array(image, dtype=np.float64, copy=True)
    return ndimage.gaussian_filter(np.asarray(image, dtype=np.float64),
                                   sigma, mode="reflect")


def gradients(image: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Central-difference gradients (gy, gx); invariant to additive shifts."""
    gy, gx = np.gradient(np.asarray(image, dtype=np.float64))
    return gy, gx


def bilinear(arr: np.ndarray, ys: np.ndarray, xs: np.ndarray) -> np.ndarray:
    """Bilinear sampling with edge clamping.

    Sample positions may fall up to half a pixel outside the grid; indices
    are clamped so border samples replicate edge values.
    """
    h, w = arr.shape
    ys = np.clip(ys, 0.0, h - 1.0)
    xs = np.clip(xs, 0.0, w - 1.0)
    y0 = np.floor(ys).astype(np.intp)
    x0 = np.floor(xs).astype(np.intp)
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = ys - y0
    fx = xs - x0
    top = arr[y0, x0] * (1 - fx) + arr[y0, x1] * fx
    bot = arr[y1, x0] * (1 - fx) + arr[y1, x1] * fx
    return top * (1 - fy) + bot * fy


def local_maxima_2d(response: np.ndarray, threshold: float) -> np.ndarray:
    """Indices (y, x) of 3x3 local maxima with value >= threshold."""
    footprint_max = ndimage.maximum_filter(response, size=3, mode="nearest")
    mask = (response >= footprint_max) & (response >= threshold)
    ys, xs = np.nonzero(mask)
    return np.stack([ys, xs], axis=1)


def keypoints_to_csv(keypoints: list[Keypoint]) -> str:
    """Debug dump format: one ``x,y,scale,orientation,response`` row each."""
    rows = ["x,y,scale,orientation,response"]
    for kp in keypoints:
        ori = "" if kp.orientation is None else repr(kp.orientation)
        rows.append(f"{kp.x!r},{kp.y!r},{kp.scale!r},{ori},{kp.response!r}")
    return "\n".join(rows) + "\n"
