"""2D-Harris corner detector on the Gaussian-smoothed structure tensor."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .common import Keypoint, as_image, gaussian_blur, gradients, local_maxima_2d

# Reference scale handed to the descriptor; Harris itself is single-scale.
HARRIS_FEATURE_SCALE = 1.6


@dataclass(frozen=True)
class HarrisParams:
    k: float = 0.04
    sigma: float = 1.5          # structure-tensor integration sigma
    threshold_rel: float = 0.01
    max_points: int = 500

    def validate(self) -> None:
        if not 0.04 <= self.k <= 0.06:
            raise ValueError(f"k must be in [0.04, 0.06], got {self.k}")
        if not 0.0 < self.threshold_rel < 1.0:
            raise ValueError(
                f"threshold_rel must be in (0,1), got {self.threshold_rel}"
            )
        if self.sigma <= 0 or self.max_points < 1:
            raise ValueError("sigma must be > 0 and max_points >= 1")


def harris_response(image: np.ndarray, k: float, sigma: float) -> np.ndarray:
    """R = det(M) - k * trace(M)^2 from the smoothed structure tensor."""
    gy, gx = gradients(image)
    sxx = gaussian_blur(gx * gx, sigma)
    syy = gaussian_blur(gy * gy, sigma)
    sxy = gaussian_blur(gx * gy, sigma)
    det = sxx * syy - sxy * sxy
    tr = sxx + syy
    return det - k * tr * tr


def detect_harris(image: np.ndarray, params: HarrisParams | None = None) -> list[Keypoint]:
    """Corners as 3x3 local maxima of R above threshold_rel * max(R).

    Sorted by descending response, capped at max_points. A constant image
    has zero gradient everywhere and yields an empty list.
    """
    params = params or HarrisParams()
    params.validate()
    img = as_image(image)
    r = harris_response(img, params.k, params.sigma)

    r_max = float(r.max(initial=0.0))
    if r_max <= 0.0:
        return []
    peaks = local_maxima_2d(r, params.threshold_rel * r_max)
    if peaks.size == 0:
        return []
    scores = r[peaks[:, 0], peaks[:, 1]]
    # stable sort on (-score, y, x) so equal responses keep a fixed order
    order = np.lexsort((peaks[:, 1], peaks[:, 0], -scores))
    order = order[: params.max_points]
    return [
        Keypoint(
            x=float(peaks[i, 1]),
            y=float(peaks[i, 0]),
            scale=HARRIS_FEATURE_SCALE,
            orientation=None,
            response=float(scores[i]),
        )
        for i in order
    ]
