"""128-dimensional gradient-histogram descriptor (4x4 cells x 8 bins).

Samples a 16x16 grid around the keypoint, rotated to its orientation,
with sample spacing proportional to the keypoint scale (one pixel at the
reference scale 1.6). Votes are trilinearly interpolated across cell and
orientation bins, Gaussian-weighted from the patch center, then the
vector is L2-normalized, clamped at 0.2 and renormalized.
"""

from __future__ import annotations

import math

import numpy as np

from .common import Keypoint, as_image, bilinear, gradients

DESCRIPTOR_SIZE = 128
_GRID = 16                 # samples per side
_CELLS = 4
_ORI_BINS = 8
_CLAMP = 0.2
_REF_SCALE = 1.6           # spacing of one pixel at this scale
_ENERGY_FLOOR = 1e-12

_ORI_HIST_BINS = 36
_ORI_SIGMA_FACTOR = 1.5    # orientation window sigma = 1.5 * scale
_ORI_RADIUS_FACTOR = 3.0   # window radius = 3 sigma

_TWO_PI = 2.0 * math.pi

# Relative sample offsets, in units of sample spacing, centered on the kp.
_U, _V = np.meshgrid(
    np.arange(_GRID, dtype=np.float64) - (_GRID - 1) / 2.0,
    np.arange(_GRID, dtype=np.float64) - (_GRID - 1) / 2.0,
    indexing="xy",
)
_U = _U.ravel()
_V = _V.ravel()
# Gaussian weighting over the sample grid, sigma = half window
_WINDOW_W = np.exp(-(_U**2 + _V**2) / (2.0 * (_GRID / 2.0) ** 2))


def _spacing(scale: float) -> float:
    return scale / _REF_SCALE


def descriptor_margin(scale: float) -> int:
    """Half-window in pixels needed for an upright patch at this scale."""
    return int(math.ceil(7.5 * _spacing(scale) + 0.5))


def support_ok(kp: Keypoint, height: int, width: int) -> bool:
    """True when the (possibly rotated) sample window stays in the image."""
    sp = _spacing(kp.scale)
    radius = 7.5 * sp
    if kp.orientation is None or (kp.orientation % (math.pi / 2.0)) > 1e-12:
        radius *= math.sqrt(2.0)
    return (
        kp.x - radius >= -0.5
        and kp.x + radius <= width - 0.5
        and kp.y - radius >= -0.5
        and kp.y + radius <= height - 0.5
    )


def dominant_orientation(gx: np.ndarray, gy: np.ndarray, kp: Keypoint) -> float:
    """Peak of the 36-bin gradient-orientation histogram around the keypoint.

    Magnitudes are weighted by a Gaussian of sigma 1.5*scale; the window is
    clipped at image borders. Gradient-free windows get orientation 0.
    """
    h, w = gx.shape
    sigma = _ORI_SIGMA_FACTOR * kp.scale
    radius = max(1, int(round(_ORI_RADIUS_FACTOR * sigma)))
    cx, cy = int(round(kp.x)), int(round(kp.y))
    x0, x1 = max(0, cx - radius), min(w - 1, cx + radius)
    y0, y1 = max(0, cy - radius), min(h - 1, cy + radius)

    wx = gx[y0 : y1 + 1, x0 : x1 + 1]
    wy = gy[y0 : y1 + 1, x0 : x1 + 1]
    yy, xx = np.mgrid[y0 : y1 + 1, x0 : x1 + 1]
    dist2 = (xx - kp.x) ** 2 + (yy - kp.y) ** 2
    weight = np.exp(-dist2 / (2.0 * sigma * sigma))
    mag = np.hypot(wx, wy) * weight
    ang = np.arctan2(wy, wx) % _TWO_PI

    bins = np.minimum((ang * _ORI_HIST_BINS / _TWO_PI).astype(np.intp), _ORI_HIST_BINS - 1)
    hist = np.bincount(bins.ravel(), weights=mag.ravel(), minlength=_ORI_HIST_BINS)
    if hist.sum() <= _ENERGY_FLOOR:
        return 0.0
    # two passes of circular box smoothing stabilizes the peak
    for _ in range(2):
        hist = (np.roll(hist, 1) + hist + np.roll(hist, -1)) / 3.0
    peak = int(np.argmax(hist))
    return (peak + 0.5) * _TWO_PI / _ORI_HIST_BINS


def _raw_histogram(gx: np.ndarray, gy: np.ndarray, kp: Keypoint, theta: float) -> np.ndarray:
    sp = _spacing(kp.scale)
    cos_t, sin_t = math.cos(theta), math.sin(theta)
    # rotate sample offsets into image coordinates
    dx = (cos_t * _U - sin_t * _V) * sp
    dy = (sin_t * _U + cos_t * _V) * sp
    sx = kp.x + dx
    sy = kp.y + dy

    sgx = bilinear(gx, sy, sx)
    sgy = bilinear(gy, sy, sx)
    # gradient vectors rotated into the keypoint frame
    rgx = cos_t * sgx + sin_t * sgy
    rgy = -sin_t * sgx + cos_t * sgy
    mag = np.hypot(rgx, rgy) * _WINDOW_W
    ang = np.arctan2(rgy, rgx) % _TWO_PI

    # fractional bin coordinates for trilinear voting
    rbin = _V / (_GRID / _CELLS) + (_CELLS - 1) / 2.0
    cbin = _U / (_GRID / _CELLS) + (_CELLS - 1) / 2.0
    obin = ang * _ORI_BINS / _TWO_PI

    hist = np.zeros((_CELLS, _CELLS, _ORI_BINS))
    r0 = np.floor(rbin).astype(np.intp)
    c0 = np.floor(cbin).astype(np.intp)
    o0 = np.floor(obin).astype(np.intp)
    fr = rbin - r0
    fc = cbin - c0
    fo = obin - o0
    for dr in (0, 1):
        wr = np.where(dr == 0, 1.0 - fr, fr)
        rr = r0 + dr
        for dc in (0, 1):
            wc = np.where(dc == 0, 1.0 - fc, fc)
            cc = c0 + dc
            for do in (0, 1):
                wo = np.where(do == 0, 1.0 - fo, fo)
                oo = (o0 + do) % _ORI_BINS
                valid = (rr >= 0) & (rr < _CELLS) & (cc >= 0) & (cc < _CELLS)
                contrib = mag * wr * wc * wo
                np.add.at(
                    hist,
                    (rr[valid], cc[valid], oo[valid]),
                    contrib[valid],
                )
    return hist.ravel()


def _finalize(vec: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(vec)
    if norm < _ENERGY_FLOOR:
        return np.zeros(DESCRIPTOR_SIZE)
    vec = vec / norm
    vec = np.minimum(vec, _CLAMP)
    norm = np.linalg.norm(vec)
    if norm < _ENERGY_FLOOR:
        return np.zeros(DESCRIPTOR_SIZE)
    return vec / norm


def describe_sift(image: np.ndarray, kp: Keypoint) -> np.ndarray:
    """Descriptor for a single keypoint; raises if its support leaves the image."""
    img = as_image(image)
    gy, gx = gradients(img)
    kps, descs = describe_all(img, [kp], precomputed=(gy, gx))
    if not kps:
        raise ValueError(
            f"keypoint support exceeds image bounds at ({kp.x:.1f}, {kp.y:.1f})"
        )
    return descs[0]


def describe_all(
    image: np.ndarray,
    keypoints: list[Keypoint],
    precomputed: tuple[np.ndarray, np.ndarray] | None = None,
) -> tuple[list[Keypoint], np.ndarray]:
    """Describe every keypoint whose support fits in the image.

    Returns the kept keypoints (with orientations filled in) and the
    matching (n, 128) descriptor matrix; out-of-support keypoints are
    dropped.
    """
    img = as_image(image)
    h, w = img.shape
    gy, gx = precomputed if precomputed is not None else gradients(img)

    kept: list[Keypoint] = []
    rows: list[np.ndarray] = []
    for kp in keypoints:
        if kp.orientation is None:
            theta = dominant_orientation(gx, gy, kp)
            kp = kp.with_orientation(theta)
        if not support_ok(kp, h, w):
            continue
        vec = _finalize(_raw_histogram(gx, gy, kp, kp.orientation))
        kept.append(kp)
        rows.append(vec)
    descs = np.vstack(rows) if rows else np.zeros((0, DESCRIPTOR_SIZE))
    return kept, descs
