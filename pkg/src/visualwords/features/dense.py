"""Dense grid sampling: keypoints at fixed spatial steps, upright orientation."""

from __future__ import annotations

import numpy as np

from .common import Keypoint, as_image
from .sift import descriptor_margin

DENSE_SCALE = 1.6


def detect_dense(image: np.ndarray, step: int = 5, scale: float = DENSE_SCALE) -> list[Keypoint]:
    """Grid keypoints at (margin + i*step, margin + j*step), row-major.

    The margin is the descriptor half-window at the given scale, so every
    patch fits in the image; images too small for one window yield an
    empty list.
    """
    if step < 1:
        raise ValueError(f"step must be >= 1, got {step}")
    if scale <= 0:
        raise ValueError(f"scale must be > 0, got {scale}")
    img = as_image(image)
    h, w = img.shape
    margin = descriptor_margin(scale)

    span_x = w - 2 * margin
    span_y = h - 2 * margin
    if span_x < 0 or span_y < 0:
        return []
    xs = [margin + i * step for i in range(span_x // step + 1)]
    ys = [margin + j * step for j in range(span_y // step + 1)]
    return [
        Keypoint(x=float(x), y=float(y), scale=scale, orientation=0.0, response=0.0)
        for y in ys
        for x in xs
    ]
