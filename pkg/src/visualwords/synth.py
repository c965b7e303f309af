"""Synthetic textured-pattern corpus generator.

Three texture families play the role of classes: a square checkerboard,
diagonal brick courses, and sparse bright spots on a dark ground. Each
synthetic identity owns its geometry (cell sizes, spacings) so images of
one identity resemble each other the way one subject's photos do, while
per-image phase shifts and noise keep the corpus from collapsing into
duplicates. Identity-disjoint splits over this corpus are therefore a real
generalization test, not a lookup.
"""

from __future__ import annotations

import os

import numpy as np

from .dataset import ManifestEntry, write_manifest, write_pgm
from .errors import ConfigError
from .features.common import gaussian_blur

LABELS = ("checker", "bricks", "spots")
DEFAULT_CLASSES = 3
DEFAULT_PER_CLASS = 60
DEFAULT_IDENTITIES = 20
IMAGE_SIZE = 96

_NOISE_SIGMA = 0.03
_BLUR_SIGMA = 0.7


def _coordinate_grids(size: int) -> tuple[np.ndarray, np.ndarray]:
    ys, xs = np.mgrid[0:size, 0:size]
    return ys.astype(np.float64), xs.astype(np.float64)


def _checker(size, identity_rng, image_rng):
    cell = float(identity_rng.uniform(8.0, 12.0))
    py, px = image_rng.uniform(0.0, 2.0 * cell, size=2)
    ys, xs = _coordinate_grids(size)
    parity = (np.floor((ys + py) / cell) + np.floor((xs + px) / cell)) % 2
    return np.where(parity > 0, 0.85, 0.25)


def _bricks(size, identity_rng, image_rng):
    # anisotropic checkerboard rotated 45 degrees: elongated courses whose
    # corners look nothing like the square crossings of the checker class
    long_cell = float(identity_rng.uniform(12.0, 16.0))
    short_cell = float(identity_rng.uniform(5.0, 7.0))
    pa = image_rng.uniform(0.0, 2.0 * long_cell)
    pb = image_rng.uniform(0.0, 2.0 * short_cell)
    ys, xs = _coordinate_grids(size)
    c = np.cos(np.pi / 4.0)
    u = c * xs + c * ys
    v = -c * xs + c * ys
    parity = (np.floor((u + pa) / long_cell) + np.floor((v + pb) / short_cell)) % 2
    return np.where(parity > 0, 0.85, 0.25)


def _spots(size, identity_rng, image_rng):
    spacing = float(identity_rng.uniform(16.0, 22.0))
    spot = float(identity_rng.uniform(5.0, 8.0))
    py, px = image_rng.uniform(0.0, spacing, size=2)
    ys, xs = _coordinate_grids(size)
    inside = (np.mod(ys + py, spacing) < spot) & (np.mod(xs + px, spacing) < spot)
    return np.where(inside, 0.9, 0.2)


_PATTERNS = {"checker": _checker, "bricks": _bricks, "spots": _spots}


def render_image(
    label: str, seed: int, class_idx: int, identity_idx: int, image_idx: int,
    size: int = IMAGE_SIZE,
) -> np.ndarray:
    """One corpus image, fully determined by (label, seed, indices)."""
    identity_rng = np.random.default_rng([seed, 1000 + identity_idx, class_idx])
    image_rng = np.random.default_rng([seed, class_idx, identity_idx, image_idx])
    pattern = _PATTERNS[label](size, identity_rng, image_rng)
    noisy = pattern + image_rng.normal(0.0, _NOISE_SIGMA, size=pattern.shape)
    return np.clip(gaussian_blur(noisy, _BLUR_SIGMA), 0.0, 1.0)


def generate_corpus(
    out_dir: str,
    classes: int = DEFAULT_CLASSES,
    per_class: int = DEFAULT_PER_CLASS,
    identities: int = DEFAULT_IDENTITIES,
    seed: int = 0,
    size: int = IMAGE_SIZE,
) -> str:
    """Write images plus a manifest; returns the manifest path."""
    if not 1 <= classes <= len(LABELS):
        raise ConfigError(f"classes must be in 1..{len(LABELS)}, got {classes}")
    if per_class < 1:
        raise ConfigError(f"per-class count must be >= 1, got {per_class}")
    if identities < 2:
        raise ConfigError(f"need >= 2 identities for usable splits, got {identities}")
    if size < 32:
        raise ConfigError(f"image size must be >= 32, got {size}")

    out_dir = os.path.abspath(out_dir)
    image_dir = os.path.join(out_dir, "images")
    os.makedirs(image_dir, exist_ok=True)

    entries = []
    for class_idx in range(classes):
        label = LABELS[class_idx]
        # spread the class over identities, leftovers to the first ones
        base, extra = divmod(per_class, identities)
        for identity_idx in range(identities):
            count = base + (1 if identity_idx < extra else 0)
            for image_idx in range(count):
                image = render_image(
                    label, seed, class_idx, identity_idx, image_idx, size
                )
                name = f"{label}_id{identity_idx:02d}_{image_idx:02d}.pgm"
                write_pgm(os.path.join(image_dir, name), image)
                entries.append(
                    ManifestEntry(
                        image_path=os.path.join(image_dir, name),
                        class_label=label,
                        identity=f"id{identity_idx:02d}",
                    )
                )

    manifest_path = os.path.join(out_dir, "manifest.csv")
    write_manifest(manifest_path, entries)
    return manifest_path
