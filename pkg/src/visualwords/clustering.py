"""Descriptor-space vector quantization: seeded k-means with Lloyd iterations.

Seeding is either uniform over distinct input rows ("kmeans") or
squared-distance weighted ("kmeans++"). Lloyd alternates assignment and
mean updates until the largest centroid displacement falls below tol,
repairing empty clusters by moving them onto the point currently farthest
from its assigned centroid.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, NumericalError

CODEBOOK_MAGIC = b"VVCB"
CODEBOOK_VERSION = 1
DEFAULT_VOCAB = 2000
DEFAULT_MAX_ITER = 100
DEFAULT_TOL = 1e-4
DEFAULT_SAMPLE_CAP = 200_000

METHODS = ("kmeans", "kmeans++")


@dataclass(frozen=True)
class Codebook:
    centroids: np.ndarray          # (k, dim) float64
    inertia: float
    method: str
    seed: int | None = None
    history: tuple[float, ...] = field(default=(), compare=False)

    def __post_init__(self) -> None:
        c = self.centroids
        if c.ndim != 2 or c.shape[0] < 2:
            raise ValueError("codebook needs a (k, dim) matrix with k >= 2")
        if not np.isfinite(c).all():
            raise ValueError("codebook centroids must be finite")
        if self.inertia < 0:
            raise ValueError("inertia must be >= 0")

    @property
    def k(self) -> int:
        return int(self.centroids.shape[0])

    @property
    def dim(self) -> int:
        return int(self.centroids.shape[1])

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Codebook):
            return NotImplemented
        return (
            np.array_equal(self.centroids, other.centroids)
            and self.inertia == other.inertia
            and self.method == other.method
            and self.seed == other.seed
        )


def _check_points(points: np.ndarray) -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 2:
        raise ValueError("points must be a 2-D matrix")
    if not np.isfinite(pts).all():
        raise NumericalError("non-finite values in clustering input")
    return pts


def squared_distances(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    """(n, k) squared Euclidean distances, clipped at zero."""
    d = (
        np.einsum("ij,ij->i", points, points)[:, None]
        - 2.0 * points @ centers.T
        + np.einsum("ij,ij->i", centers, centers)[None, :]
    )
    return np.maximum(d, 0.0, out=d)


def kmeanspp_seed(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Pick k centers: first uniform, the rest with probability D(x)^2 / sum.

    Distances here use exact subtraction so already-chosen points carry
    exactly zero mass and can never be drawn twice.
    """
    pts = _check_points(points)
    n = pts.shape[0]
    if k < 1:
        raise ValueError("k must be >= 1")
    if n < k:
        raise DataError(f"cannot seed {k} clusters from {n} points")

    chosen = np.empty(k, dtype=np.intp)
    chosen[0] = rng.integers(n)
    diff = pts - pts[chosen[0]]
    d2 = np.einsum("ij,ij->i", diff, diff)
    for i in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            raise NumericalError(
                f"degenerate data for k>1: all remaining mass at zero "
                f"distance after {i} centers"
            )
        chosen[i] = rng.choice(n, p=d2 / total)
        diff = pts - pts[chosen[i]]
        np.minimum(d2, np.einsum("ij,ij->i", diff, diff), out=d2)
    return pts[chosen].copy()


def lloyd(
    points: np.ndarray,
    init: np.ndarray,
    max_iter: int = DEFAULT_MAX_ITER,
    tol: float = DEFAULT_TOL,
    method: str = "kmeans",
    seed: int | None = None,
) -> Codebook:
    """Alternate assignment and mean update from the given initial centroids.

    Stops when the largest centroid displacement drops below tol or after
    max_iter rounds; the recorded inertia comes from a final assignment
    against the finished centroids.
    """
    pts = _check_points(points)
    centers = _check_points(init).copy()
    if max_iter < 1:
        raise ValueError("max_iter must be >= 1")
    k = centers.shape[0]
    if pts.shape[1] != centers.shape[1]:
        raise ValueError("points and init disagree on dimensionality")

    history: list[float] = []
    for _ in range(max_iter):
        labels = np.argmin(squared_distances(pts, centers), axis=1)
        # exact per-point cost: the BLAS expansion leaves ~1e-16 residue
        # on self-distances, which must read as exactly zero
        diff = pts - centers[labels]
        point_cost = np.einsum("ij,ij->i", diff, diff)
        history.append(float(point_cost.sum()))

        counts = np.bincount(labels, minlength=k)
        sums = np.zeros_like(centers)
        np.add.at(sums, labels, pts)
        new_centers = np.where(
            counts[:, None] > 0, sums / np.maximum(counts, 1)[:, None], centers
        )

        empties = np.flatnonzero(counts == 0)
        if empties.size:
            takeable = point_cost.copy()
            for c in empties:
                far = int(np.argmax(takeable))
                new_centers[c] = pts[far]
                takeable[far] = -np.inf

        movement = float(np.max(np.linalg.norm(new_centers - centers, axis=1)))
        centers = new_centers
        if movement < tol:
            break

    labels = np.argmin(squared_distances(pts, centers), axis=1)
    diff = pts - centers[labels]
    inertia = float(np.einsum("ij,ij->i", diff, diff).sum())
    history.append(inertia)
    return Codebook(
        centroids=centers,
        inertia=inertia,
        method=method,
        seed=seed,
        history=tuple(history),
    )


def build_codebook(
    descriptors: np.ndarray,
    k: int = DEFAULT_VOCAB,
    seed: int = 0,
    method: str = "kmeans++",
    max_iter: int = DEFAULT_MAX_ITER,
    tol: float = DEFAULT_TOL,
    sample_cap: int = DEFAULT_SAMPLE_CAP,
) -> Codebook:
    """Cluster pooled training descriptors into a k-word codebook.

    Pools larger than sample_cap are subsampled uniformly (without
    replacement) before clustering.
    """
    if method not in METHODS:
        raise ConfigError(f"unknown clustering method {method!r}")
    pts = _check_points(descriptors)
    if pts.shape[0] < k:
        raise DataError(
            f"need at least k={k} descriptors to build the codebook, "
            f"got {pts.shape[0]}"
        )
    rng = np.random.default_rng(seed)
    if pts.shape[0] > sample_cap:
        keep = rng.choice(pts.shape[0], size=sample_cap, replace=False)
        keep.sort()
        pts = pts[keep]

    if method == "kmeans++":
        init = kmeanspp_seed(pts, k, rng)
    else:
        init = pts[rng.choice(pts.shape[0], size=k, replace=False)].copy()
    return lloyd(pts, init, max_iter=max_iter, tol=tol, method=method, seed=seed)


def save_codebook(cb: Codebook, path: str | Path) -> None:
    """Binary centroid matrix plus a JSON sidecar with the run metadata."""
    path = Path(path)
    payload = cb.centroids.astype("<f4").tobytes(order="C")
    with open(path, "wb") as f:
        f.write(CODEBOOK_MAGIC)
        f.write(struct.pack("<III", CODEBOOK_VERSION, cb.k, cb.dim))
        f.write(payload)
    sidecar = {"seed": cb.seed, "inertia": cb.inertia, "method": cb.method}
    with open(path.with_suffix(path.suffix + ".json"), "w", encoding="utf-8") as f:
        json.dump(sidecar, f, sort_keys=True)
        f.write("\n")


def load_codebook(path: str | Path) -> Codebook:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read codebook {path}: {exc}") from exc
    if raw[:4] != CODEBOOK_MAGIC:
        raise DataError(f"{path} is not a codebook file (bad magic)")
    version, k, dim = struct.unpack_from("<III", raw, 4)
    if version != CODEBOOK_VERSION:
        raise DataError(f"unsupported codebook version {version}")
    need = 16 + 4 * k * dim
    if len(raw) < need:
        raise DataError(f"codebook {path} truncated")
    centroids = (
        np.frombuffer(raw, dtype="<f4", count=k * dim, offset=16)
        .reshape(k, dim)
        .astype(np.float64)
    )
    sidecar_path = path.with_suffix(path.suffix + ".json")
    try:
        meta = json.loads(sidecar_path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise DataError(f"missing codebook sidecar {sidecar_path}: {exc}") from exc
    return Codebook(
        centroids=centroids,
        inertia=float(meta["inertia"]),
        method=str(meta["method"]),
        seed=meta["seed"],
    )
