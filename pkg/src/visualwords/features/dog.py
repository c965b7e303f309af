"""Difference-of-Gaussians scale-space extrema detector.

Extrema are located on the integer grid (no sub-pixel quadratic fit; the
downstream quantization is far coarser than the accuracy that fit buys).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .common import Keypoint, as_image, gaussian_blur

# Smallest octave base that still supports a 3x3x3 neighborhood test.
_MIN_OCTAVE_SIDE = 16


@dataclass(frozen=True)
class DogParams:
    octaves: int = 4
    scales_per_octave: int = 3
    base_sigma: float = 1.6
    contrast: float = 0.03
    edge_ratio: float = 10.0

    def validate(self) -> None:
        if self.octaves < 1 or self.scales_per_octave < 1:
            raise ValueError("octaves and scales_per_octave must be >= 1")
        if self.base_sigma <= 0 or self.contrast <= 0 or self.edge_ratio < 1:
            raise ValueError("base_sigma, contrast must be > 0; edge_ratio >= 1")


def _gaussian_levels(base: np.ndarray, params: DogParams) -> list[np.ndarray]:
    """Incrementally blurred images covering sigmas base_sigma..2*base_sigma
    plus the two extra levels the 3x3x3 extrema test needs."""
    s = params.scales_per_octave
    sigmas = [params.base_sigma * 2.0 ** (i / s) for i in range(s + 3)]
    levels = [gaussian_blur(base, sigmas[0])]
    for i in range(1, len(sigmas)):
        inc = np.sqrt(sigmas[i] ** 2 - sigmas[i - 1] ** 2)
        levels.append(gaussian_blur(levels[-1], inc))
    return levels


def _edge_like(d: np.ndarray, y: int, x: int, edge_ratio: float) -> bool:
    """Principal-curvature ratio test on the 2x2 Hessian of one DoG slice."""
    dxx = d[y, x + 1] + d[y, x - 1] - 2.0 * d[y, x]
    dyy = d[y + 1, x] + d[y - 1, x] - 2.0 * d[y, x]
    dxy = 0.25 * (d[y + 1, x + 1] - d[y + 1, x - 1] - d[y - 1, x + 1] + d[y - 1, x - 1])
    tr = dxx + dyy
    det = dxx * dyy - dxy * dxy
    if det <= 0:
        return True
    r = edge_ratio
    return tr * tr / det > (r + 1.0) ** 2 / r


def detect_dog(image: np.ndarray, params: DogParams | None = None) -> list[Keypoint]:
    """Scale-space extrema of the DoG pyramid.

    Keeps 3x3x3 extrema with |D| >= contrast that pass the edge-ratio
    test; coordinates and scales are mapped back to the input image.
    Octaves that would shrink below a usable size are dropped.
    """
    params = params or DogParams()
    params.validate()
    img = as_image(image)
    s = params.scales_per_octave

    found: list[Keypoint] = []
    base = img
    for octave in range(params.octaves):
        if min(base.shape) < _MIN_OCTAVE_SIDE:
            break
        levels = _gaussian_levels(base, params)
        dogs = [levels[i + 1] - levels[i] for i in range(len(levels) - 1)]
        stack = np.stack(dogs)  # (s+2, h, w)

        interior = stack[1:-1]
        maxima = np.ones(interior.shape, dtype=bool)
        minima = np.ones(interior.shape, dtype=bool)
        for dl in (-1, 0, 1):
            for dy in (-1, 0, 1):
                for dx in (-1, 0, 1):
                    if dl == 0 and dy == 0 and dx == 0:
                        continue
                    shifted = np.roll(stack, shift=(-dl, -dy, -dx), axis=(0, 1, 2))[1:-1]
                    maxima &= interior >= shifted
                    minima &= interior <= shifted
        extrema = (maxima | minima) & (np.abs(interior) >= params.contrast)
        # roll wraps the borders; drop the one-pixel frame it contaminates
        extrema[:, :1, :] = extrema[:, -1:, :] = False
        extrema[:, :, :1] = extrema[:, :, -1:] = False

        step = 2.0**octave
        for li, yy, xx in zip(*np.nonzero(extrema)):
            level = li + 1  # index into dogs
            if _edge_like(dogs[level], yy, xx, params.edge_ratio):
                continue
            sigma = params.base_sigma * 2.0 ** (octave + level / s)
            found.append(
                Keypoint(
                    x=float(xx) * step,
                    y=float(yy) * step,
                    scale=sigma,
                    orientation=None,
                    response=float(abs(dogs[level][yy, xx])),
                )
            )
        base = levels[s][::2, ::2]  # next octave starts at doubled sigma

    found.sort(key=lambda kp: (-kp.response, kp.y, kp.x, kp.scale))
    return found
