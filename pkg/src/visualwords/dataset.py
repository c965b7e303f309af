"""Corpus ingestion, identity-disjoint splitting and leave-one-out folds.

A corpus is described by a CSV manifest with header ``path,label,identity``
(UTF-8, comma separated, no quoting). Image paths are resolved relative to
the manifest's directory unless absolute.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
from PIL import Image as PILImage
from PIL import UnidentifiedImageError

from .errors import DataError

MANIFEST_HEADER = "path,label,identity"

# ITU-R BT.601 luminance weights for RGB collapse
_LUMA = (0.299, 0.587, 0.114)


@dataclass(frozen=True)
class ManifestEntry:
    image_path: str
    class_label: str
    identity: str


@dataclass(frozen=True)
class DatasetSplit:
    train: list[ManifestEntry]
    test: list[ManifestEntry]

    def train_identities(self) -> set[str]:
        return {e.identity for e in self.train}

    def test_identities(self) -> set[str]:
        return {e.identity for e in self.test}


@dataclass(frozen=True)
class Fold:
    """One leave-one-identity-out fold of a training set."""

    identity: str
    held_out: list[ManifestEntry]
    remainder: list[ManifestEntry]


def load_manifest(path: str) -> list[ManifestEntry]:
    """Parse a manifest CSV into entries, preserving file order."""
    if not os.path.isfile(path):
        raise DataError(f"manifest not found: {path}")
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    lines = [ln for ln in lines if ln.strip()]
    if not lines:
        raise DataError(f"empty manifest: {path}")
    header = lines[0].strip()
    if header != MANIFEST_HEADER:
        raise DataError(
            f"bad manifest header {header!r}, expected {MANIFEST_HEADER!r}"
        )
    if len(lines) == 1:
        raise DataError(f"empty manifest: {path}")

    base = os.path.dirname(os.path.abspath(path))
    entries: list[ManifestEntry] = []
    seen: set[str] = set()
    for lineno, line in enumerate(lines[1:], start=2):
        cols = line.split(",")
        if len(cols) != 3:
            raise DataError(
                f"{path}:{lineno}: expected 3 columns, got {len(cols)}"
            )
        raw_path, label, identity = (c.strip() for c in cols)
        if not raw_path or not label or not identity:
            raise DataError(f"{path}:{lineno}: empty field")
        if raw_path in seen:
            raise DataError(f"{path}:{lineno}: duplicate image path {raw_path!r}")
        seen.add(raw_path)
        full = raw_path if os.path.isabs(raw_path) else os.path.join(base, raw_path)
        entries.append(ManifestEntry(full, label, identity))
    return entries


def write_manifest(path: str, entries: list[ManifestEntry]) -> None:
    """Write entries back out in manifest format (paths made relative to
    the manifest directory when possible)."""
    base = os.path.dirname(os.path.abspath(path))
    rows = [MANIFEST_HEADER]
    for e in entries:
        p = e.image_path
        try:
            p = os.path.relpath(p, base)
        except ValueError:
            pass
        rows.append(f"{p},{e.class_label},{e.identity}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(rows) + "\n")


def split_identity_disjoint(
    entries: list[ManifestEntry], train_fraction: float, seed: int
) -> DatasetSplit:
    """Split so that no identity appears on both sides.

    Identities are shuffled with the seeded RNG and assigned to the train
    side until the train image count first reaches
    ``train_fraction * len(entries)``; remaining identities go to test.
    """
    if not 0.0 < train_fraction < 1.0:
        raise DataError(f"train_fraction must be in (0,1), got {train_fraction}")
    identities = sorted({e.identity for e in entries})
    if len(identities) < 2:
        raise DataError("need at least 2 distinct identities to split")

    rng = np.random.default_rng(seed)
    order = list(rng.permutation(len(identities)))
    by_identity: dict[str, list[ManifestEntry]] = {i: [] for i in identities}
    for e in entries:
        by_identity[e.identity].append(e)

    target = train_fraction * len(entries)
    train_ids: set[str] = set()
    count = 0
    for idx in order:
        if count >= target:
            break
        ident = identities[idx]
        train_ids.add(ident)
        count += len(by_identity[ident])

    train = [e for e in entries if e.identity in train_ids]
    test = [e for e in entries if e.identity not in train_ids]
    return DatasetSplit(train=train, test=test)


def loo_folds(train: list[ManifestEntry]) -> list[Fold]:
    """Leave-one-identity-out folds over a training set."""
    identities = sorted({e.identity for e in train})
    if len(identities) < 2:
        raise DataError("leave-one-out needs at least 2 identities")
    folds = []
    for ident in identities:
        held = [e for e in train if e.identity == ident]
        rest = [e for e in train if e.identity != ident]
        folds.append(Fold(identity=ident, held_out=held, remainder=rest))
    return folds


def load_grayscale(path: str) -> np.ndarray:
    """Load an 8-bit PGM or PNG as a float64 luminance image in [0,1].

    RGB input is collapsed with BT.601 weights before scaling.
    """
    try:
        with PILImage.open(path) as img:
            img.load()
            mode = img.mode
            if mode == "P":
                img = img.convert("RGB")
                mode = "RGB"
            if mode == "L":
                arr = np.asarray(img, dtype=np.float64) / 255.0
            elif mode == "LA":
                arr = np.asarray(img, dtype=np.float64)[..., 0] / 255.0
            elif mode in ("RGB", "RGBA"):
                rgb = np.asarray(img, dtype=np.float64)[..., :3]
                arr = (
                    _LUMA[0] * rgb[..., 0]
                    + _LUMA[1] * rgb[..., 1]
                    + _LUMA[2] * rgb[..., 2]
                ) / 255.0
            else:
                raise DataError(f"unsupported image mode {mode!r}: {path}")
    except DataError:
        raise
    except (UnidentifiedImageError, OSError, SyntaxError, ValueError) as exc:
        raise DataError(f"cannot read image {path}: {exc}") from exc
    if arr.ndim != 2:
        raise DataError(f"expected a 2-D image, got shape {arr.shape}: {path}")
    return np.clip(arr, 0.0, 1.0)


def write_pgm(path: str, image: np.ndarray) -> None:
    """Write a [0,1] float image as binary 8-bit PGM (P5)."""
    arr = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0)
    data = np.rint(arr * 255.0).astype(np.uint8)
    h, w = data.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(data.tobytes())
