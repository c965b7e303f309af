"""Histogram-intersection and pyramid-match kernels plus Gram assembly.

The pyramid match kernel counts position matches on progressively finer
2^l x 2^l grids, weighting a match found first at level l by half per
coarsening step, so coarse matches count less. The spatial-pyramid kernel
sums per-channel pyramid matches. An RBF kernel is kept solely as the
benchmark comparator for timing runs.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .clustering import squared_distances
from .encoding import Signature
from .errors import DataError

GRAM_MAGIC = b"VVGM"
DEFAULT_PYRAMID_LEVEL = 2
KERNELS = ("intersection", "spatial_pyramid", "rbf")

# densified intersection path is used while n_items * dim stays under this
_DENSE_BUDGET = 50_000_000


@dataclass(frozen=True)
class PyramidFeatures:
    """Per-channel keypoint positions, normalized to the unit square."""

    channels: tuple[np.ndarray, ...]

    def __post_init__(self) -> None:
        for ch in self.channels:
            if ch.size and (ch.min() < 0.0 or ch.max() >= 1.0):
                raise ValueError("pyramid coordinates must lie in [0, 1)")

    @property
    def n_channels(self) -> int:
        return len(self.channels)

    def total_points(self) -> int:
        return int(sum(ch.shape[0] for ch in self.channels))


@dataclass(frozen=True)
class KernelMatrix:
    values: np.ndarray
    kernel: str
    ids: tuple[str, ...]

    def __post_init__(self) -> None:
        v = self.values
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ValueError("kernel matrix must be square")
        if len(self.ids) != v.shape[0]:
            raise ValueError("ids must match matrix rows")
        if not np.isfinite(v).all():
            raise ValueError("kernel matrix must be finite")

    @property
    def n(self) -> int:
        return int(self.values.shape[0])


def _as_sparse(v: Signature | np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(v, Signature):
        return v.feature_ids, v.weights
    arr = np.asarray(v, dtype=np.float64).ravel()
    ids = np.flatnonzero(arr)
    return ids.astype(np.int64), arr[ids]


def intersection_kernel(a: Signature | np.ndarray, b: Signature | np.ndarray) -> float:
    """Sum of elementwise minima over the union of supports."""
    ia, wa = _as_sparse(a)
    ib, wb = _as_sparse(b)
    if (wa.size and wa.min() < 0.0) or (wb.size and wb.min() < 0.0):
        raise ValueError("intersection kernel requires non-negative weights")
    common, xa, xb = np.intersect1d(ia, ib, assume_unique=True, return_indices=True)
    if common.size == 0:
        return 0.0
    return float(np.minimum(wa[xa], wb[xb]).sum())


def grid_histogram(points: np.ndarray, level: int) -> np.ndarray:
    """Counts over the 2^level x 2^level grid covering the unit square."""
    if level < 0:
        raise ValueError("level must be >= 0")
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    cells = 1 << level
    if pts.size and (pts.min() < 0.0 or pts.max() >= 1.0):
        raise ValueError("grid coordinates must lie in [0, 1)")
    hist = np.zeros((cells, cells))
    if pts.size:
        ix = np.floor(pts[:, 0] * cells).astype(np.intp)
        iy = np.floor(pts[:, 1] * cells).astype(np.intp)
        np.add.at(hist, (ix, iy), 1.0)
    return hist


def _level_weights(level: int) -> np.ndarray:
    """Weight of level l in the pyramid sum: 1/2^L for l=0, else 1/2^(L-l+1)."""
    w = np.empty(level + 1)
    w[0] = 0.5**level
    for l in range(1, level + 1):
        w[l] = 0.5 ** (level - l + 1)
    return w


def pyramid_match_kernel(
    x_points: np.ndarray, y_points: np.ndarray, level: int = DEFAULT_PYRAMID_LEVEL
) -> float:
    """Weighted sum of grid-histogram intersections over levels 0..level."""
    weights = _level_weights(level)
    total = 0.0
    for l in range(level + 1):
        hx = grid_histogram(x_points, l).ravel()
        hy = grid_histogram(y_points, l).ravel()
        total += weights[l] * float(np.minimum(hx, hy).sum())
    return total


def spatial_pyramid_kernel(
    x: PyramidFeatures, y: PyramidFeatures, level: int = DEFAULT_PYRAMID_LEVEL
) -> float:
    """Sum of per-channel pyramid matches; channels must align."""
    if x.n_channels != y.n_channels:
        raise ValueError(
            f"channel counts differ: {x.n_channels} vs {y.n_channels}"
        )
    return sum(
        pyramid_match_kernel(cx, cy, level) for cx, cy in zip(x.channels, y.channels)
    )


def _pyramid_stack(item: PyramidFeatures, level: int) -> list[np.ndarray]:
    """Per-level channel-concatenated histograms; minima distribute over
    the disjoint channel blocks, so intersections can run on the concat."""
    return [
        np.concatenate([grid_histogram(ch, l).ravel() for ch in item.channels])
        for l in range(level + 1)
    ]


def _require_homogeneous(items: Sequence, kind: type, kernel: str) -> None:
    for it in items:
        if not isinstance(it, kind):
            raise ValueError(
                f"kernel {kernel!r} expects {kind.__name__} inputs, "
                f"got {type(it).__name__}"
            )


def _signature_matrix(items: Sequence[Signature]) -> np.ndarray:
    dim = items[0].dim
    for it in items:
        if it.dim != dim:
            raise ValueError("signatures disagree on dimensionality")
    dense = np.zeros((len(items), dim))
    for i, it in enumerate(items):
        dense[i, it.feature_ids] = it.weights
    return dense


def _rbf_gamma(reference: np.ndarray) -> float:
    """Default width 1 / (dim * var), always from the reference (training)
    side so evaluation sees the same kernel. Plain 1/dim collapses the
    whole matrix towards 1 on low-variance features like normalized
    histograms; scaling by the variance keeps the values spread."""
    var = float(reference.var())
    if var > 0.0:
        return 1.0 / (reference.shape[1] * var)
    return 1.0 / reference.shape[1]


def gram_matrix(
    items: Sequence,
    kernel: str,
    ids: Sequence[str] | None = None,
    level: int = DEFAULT_PYRAMID_LEVEL,
    gamma: float | None = None,
) -> KernelMatrix:
    """Symmetric matrix of pairwise kernel values, computed once per pair."""
    if kernel not in KERNELS:
        raise ValueError(f"unknown kernel {kernel!r}")
    n = len(items)
    if n == 0:
        raise ValueError("gram matrix needs at least one item")
    if ids is None:
        ids = [str(i) for i in range(n)]
    if len(ids) != n:
        raise ValueError("ids must match item count")
    values = np.zeros((n, n))

    if kernel == "intersection":
        _require_homogeneous(items, Signature, kernel)
        if n * items[0].dim <= _DENSE_BUDGET:
            dense = _signature_matrix(items)
            if dense.size and dense.min() < 0.0:
                raise ValueError("intersection kernel requires non-negative weights")
            for i in range(n):
                values[i, i:] = np.minimum(dense[i:], dense[i]).sum(axis=1)
        else:
            for i in range(n):
                for j in range(i, n):
                    values[i, j] = intersection_kernel(items[i], items[j])
    elif kernel == "spatial_pyramid":
        _require_homogeneous(items, PyramidFeatures, kernel)
        m = items[0].n_channels
        for it in items:
            if it.n_channels != m:
                raise ValueError("channel counts differ across items")
        stacks = [_pyramid_stack(it, level) for it in items]
        weights = _level_weights(level)
        for i in range(n):
            for j in range(i, n):
                values[i, j] = sum(
                    weights[l]
                    * float(np.minimum(stacks[i][l], stacks[j][l]).sum())
                    for l in range(level + 1)
                )
    else:
        _require_homogeneous(items, Signature, kernel)
        dense = _signature_matrix(items)
        g = gamma if gamma is not None else _rbf_gamma(dense)
        d = squared_distances(dense, dense)
        values = np.exp(-g * d)

    upper = np.triu(values, k=1)
    values = values - np.tril(values, k=-1) + upper.T
    return KernelMatrix(values=values, kernel=kernel, ids=tuple(ids))


def kernel_row(
    item,
    items: Sequence,
    kernel: str,
    level: int = DEFAULT_PYRAMID_LEVEL,
    gamma: float | None = None,
) -> np.ndarray:
    """Kernel values of one probe item against a reference list."""
    if kernel == "intersection":
        return np.array([intersection_kernel(item, it) for it in items])
    if kernel == "spatial_pyramid":
        return np.array([spatial_pyramid_kernel(item, it, level) for it in items])
    if kernel == "rbf":
        dense = _signature_matrix(list(items))
        g = gamma if gamma is not None else _rbf_gamma(dense)
        probe = np.zeros((1, dense.shape[1]))
        probe[0, item.feature_ids] = item.weights
        return np.exp(-g * squared_distances(probe, dense))[0]
    raise ValueError(f"unknown kernel {kernel!r}")


def kernel_rows(
    probes: Sequence,
    items: Sequence,
    kernel: str,
    level: int = DEFAULT_PYRAMID_LEVEL,
    gamma: float | None = None,
) -> np.ndarray:
    """(len(probes), len(items)) kernel values; batched eval-time path."""
    if kernel == "intersection":
        ref = _signature_matrix(list(items))
        if ref.size and ref.min() < 0.0:
            raise ValueError("intersection kernel requires non-negative weights")
        out = np.zeros((len(probes), ref.shape[0]))
        for i, probe in enumerate(probes):
            if probe.dim != ref.shape[1]:
                raise ValueError("probe and reference signatures disagree on dim")
            dense = np.zeros(ref.shape[1])
            dense[probe.feature_ids] = probe.weights
            if dense.size and dense.min() < 0.0:
                raise ValueError(
                    "intersection kernel requires non-negative weights"
                )
            out[i] = np.minimum(ref, dense).sum(axis=1)
        return out
    if kernel == "spatial_pyramid":
        m = items[0].n_channels if items else 0
        for it in list(items) + list(probes):
            if it.n_channels != m:
                raise ValueError("channel counts differ across items")
        stacks = [_pyramid_stack(it, level) for it in items]
        weights = _level_weights(level)
        out = np.zeros((len(probes), len(items)))
        for i, probe in enumerate(probes):
            pstack = _pyramid_stack(probe, level)
            for j in range(len(items)):
                out[i, j] = sum(
                    weights[l]
                    * float(np.minimum(pstack[l], stacks[j][l]).sum())
                    for l in range(level + 1)
                )
        return out
    if kernel == "rbf":
        ref = _signature_matrix(list(items))
        g = gamma if gamma is not None else _rbf_gamma(ref)
        probe_dense = np.zeros((len(probes), ref.shape[1]))
        for i, probe in enumerate(probes):
            probe_dense[i, probe.feature_ids] = probe.weights
        return np.exp(-g * squared_distances(probe_dense, ref))
    raise ValueError(f"unknown kernel {kernel!r}")


def save_gram(km: KernelMatrix, path: str | Path) -> None:
    path = Path(path)
    with open(path, "wb") as f:
        f.write(GRAM_MAGIC)
        f.write(struct.pack("<I", km.n))
        f.write(km.values.astype("<f8").tobytes(order="C"))
    sidecar = {"kernel": km.kernel, "ids": list(km.ids)}
    with open(path.with_suffix(path.suffix + ".json"), "w", encoding="utf-8") as f:
        json.dump(sidecar, f, sort_keys=True)
        f.write("\n")


def load_gram(path: str | Path) -> KernelMatrix:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read gram matrix {path}: {exc}") from exc
    if raw[:4] != GRAM_MAGIC:
        raise DataError(f"{path} is not a gram file (bad magic)")
    (n,) = struct.unpack_from("<I", raw, 4)
    need = 8 + 8 * n * n
    if len(raw) < need:
        raise DataError(f"gram file {path} truncated")
    values = np.frombuffer(raw, dtype="<f8", count=n * n, offset=8).reshape(n, n)
    sidecar_path = path.with_suffix(path.suffix + ".json")
    try:
        meta = json.loads(sidecar_path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise DataError(f"missing gram sidecar {sidecar_path}: {exc}") from exc
    return KernelMatrix(
        values=values.copy(), kernel=str(meta["kernel"]), ids=tuple(meta["ids"])
    )
