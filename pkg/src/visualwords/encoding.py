"""Per-image encodings over a fixed codebook.

Covers nearest-word quantization, normalized term-frequency histograms,
the spatial conjunction matrix of co-occurring word pairs, correlation
based word grouping, inverse-document-frequency weighting, and the final
per-image sparse signatures the kernels consume.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .clustering import Codebook, squared_distances
from .errors import DataError

DEFAULT_NEIGHBORS = 5
DEFAULT_GROUP_THRESHOLD = 0.6

MODE_SBOVW = "sbovw"
MODE_IMPBOVW = "impbovw"
MODES = (MODE_SBOVW, MODE_IMPBOVW)


@dataclass(frozen=True)
class QuantizedImage:
    words: np.ndarray       # (n,) intp word ids
    positions: np.ndarray   # (n, 2) float64 keypoint (x, y)

    def __post_init__(self) -> None:
        if self.words.shape[0] != self.positions.shape[0]:
            raise ValueError("words and positions must be parallel")

    def __len__(self) -> int:
        return int(self.words.shape[0])


@dataclass(frozen=True)
class Histogram:
    bins: np.ndarray
    normalized: bool


@dataclass(frozen=True)
class IdfVector:
    idf: np.ndarray
    doc_counts: np.ndarray
    t: int

    @property
    def n(self) -> int:
        return int(self.idf.shape[0])


@dataclass(frozen=True)
class GroupingMap:
    group_of: np.ndarray    # (N,) intp word -> group

    @property
    def n_words(self) -> int:
        return int(self.group_of.shape[0])

    @property
    def n_groups(self) -> int:
        return int(self.group_of.max()) + 1 if self.group_of.size else 0


@dataclass(frozen=True)
class ConjunctionMatrix:
    """Sparse upper-triangular co-occurrence counts, diagonal included."""

    entries: dict[tuple[int, int], int]
    n: int

    def total(self) -> int:
        return sum(self.entries.values())


@dataclass(frozen=True)
class Signature:
    feature_ids: np.ndarray   # sorted unique int64
    weights: np.ndarray       # parallel float64, >= 0
    mode: str
    dim: int

    def __post_init__(self) -> None:
        if self.feature_ids.shape != self.weights.shape:
            raise ValueError("feature ids and weights must be parallel")

    def as_dense(self) -> np.ndarray:
        out = np.zeros(self.dim)
        out[self.feature_ids] = self.weights
        return out


def quantize(
    descriptors: np.ndarray, positions: np.ndarray, codebook: Codebook
) -> QuantizedImage:
    """Assign each descriptor its nearest centroid id (ties: lowest id)."""
    desc = np.asarray(descriptors, dtype=np.float64)
    pos = np.asarray(positions, dtype=np.float64).reshape(-1, 2)
    if desc.size == 0:
        return QuantizedImage(np.zeros(0, dtype=np.intp), np.zeros((0, 2)))
    if desc.ndim != 2 or desc.shape[1] != codebook.dim:
        raise ValueError(
            f"descriptor dim {desc.shape} does not match codebook dim {codebook.dim}"
        )
    if desc.shape[0] != pos.shape[0]:
        raise ValueError("descriptors and positions must be parallel")
    words = np.argmin(squared_distances(desc, codebook.centroids), axis=1)
    return QuantizedImage(words.astype(np.intp), pos)


def tf_histogram(q: QuantizedImage, n_words: int) -> Histogram:
    """Word counts divided by the total word count of the image."""
    if len(q) and int(q.words.max()) >= n_words:
        raise ValueError("word id out of range")
    counts = np.bincount(q.words, minlength=n_words).astype(np.float64)
    if len(q) == 0:
        return Histogram(bins=counts, normalized=False)
    return Histogram(bins=counts / len(q), normalized=True)


def compute_idf(presence: Sequence[Iterable[int]], n_words: int) -> IdfVector:
    """IDF over training images: idf[w] = ln(T / n_w), n_w clamped to 1.

    presence holds, per training image, the set of word ids occurring in it.
    """
    t = len(presence)
    if t < 1:
        raise ValueError("idf needs at least one training image")
    doc_counts = np.zeros(n_words, dtype=np.int64)
    for words in presence:
        uniq = np.unique(np.asarray(list(words), dtype=np.intp))
        if uniq.size and (uniq[0] < 0 or uniq[-1] >= n_words):
            raise ValueError("word id out of range in presence set")
        doc_counts[uniq] += 1
    idf = np.log(t / np.maximum(doc_counts, 1))
    return IdfVector(idf=idf, doc_counts=doc_counts, t=t)


def tfidf_weight(h: Histogram, idf: IdfVector) -> np.ndarray:
    if h.bins.shape[0] != idf.n:
        raise ValueError("histogram and idf dimensions differ")
    return h.bins * idf.idf


def _knn_pairs(positions: np.ndarray, k_neighbors: int) -> set[tuple[int, int]]:
    """Unordered keypoint index pairs {p, q} with q among p's K nearest."""
    n = positions.shape[0]
    d = squared_distances(positions, positions)
    np.fill_diagonal(d, np.inf)
    k = min(k_neighbors, n - 1)
    pairs: set[tuple[int, int]] = set()
    # stable argsort keeps equal distances in index order
    order = np.argsort(d, axis=1, kind="stable")[:, :k]
    for p in range(n):
        for q in order[p]:
            q = int(q)
            pairs.add((p, q) if p < q else (q, p))
    return pairs


def conjunction_matrix(
    q: QuantizedImage, n_words: int, k_neighbors: int = DEFAULT_NEIGHBORS
) -> ConjunctionMatrix:
    """Co-occurrence counts of word pairs over K-nearest keypoint neighborhoods.

    Each unordered keypoint pair is counted once even when both keypoints
    list each other as neighbors.
    """
    if k_neighbors < 1:
        raise ValueError("k_neighbors must be >= 1")
    if len(q) and int(q.words.max()) >= n_words:
        raise ValueError("word id out of range")
    entries: dict[tuple[int, int], int] = {}
    if len(q) < 2:
        return ConjunctionMatrix(entries=entries, n=n_words)
    for p, r in _knn_pairs(q.positions, k_neighbors):
        wp, wq = int(q.words[p]), int(q.words[r])
        key = (wp, wq) if wp <= wq else (wq, wp)
        entries[key] = entries.get(key, 0) + 1
    return ConjunctionMatrix(entries=entries, n=n_words)


def corpus_conjunction_rows(
    matrices: Iterable[ConjunctionMatrix], n_words: int
) -> np.ndarray:
    """Dense mirrored sum of per-image conjunction matrices.

    Row w is word w's full contextual distribution: entry (i, j) with i < j
    contributes to both (i, j) and (j, i); the diagonal stays on the diagonal.
    """
    rows = np.zeros((n_words, n_words))
    for m in matrices:
        if m.n != n_words:
            raise ValueError("conjunction matrix vocabulary size mismatch")
        for (i, j), c in m.entries.items():
            rows[i, j] += c
            if i != j:
                rows[j, i] += c
    return rows


class _UnionFind:
    def __init__(self, n: int) -> None:
        self.parent = list(range(n))

    def find(self, a: int) -> int:
        while self.parent[a] != a:
            self.parent[a] = self.parent[self.parent[a]]
            a = self.parent[a]
        return a

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)


def word_grouping(corpus_rows: np.ndarray, threshold: float) -> GroupingMap:
    """Merge words whose contextual rows correlate at or above the threshold.

    Groups are connected components of the correlation graph; constant rows
    never correlate and stay singletons. Thresholds above 1 therefore yield
    all-singleton groupings. Group ids are ranked by smallest member word.
    """
    if threshold <= 0.0:
        raise ValueError("threshold must be positive")
    rows = np.asarray(corpus_rows, dtype=np.float64)
    if rows.ndim != 2 or rows.shape[1] < 1:
        raise ValueError("corpus rows must be a 2-D matrix")
    n = rows.shape[0]
    uf = _UnionFind(n)
    centered = rows - rows.mean(axis=1, keepdims=True)
    gram = centered @ centered.T
    var = np.diag(gram).copy()
    live = var > 0.0
    norms = np.sqrt(var, where=live, out=np.ones_like(var))
    corr = gram / np.outer(norms, norms)
    mask = live[:, None] & live[None, :]
    hits = np.argwhere(np.triu(mask & (corr >= threshold), k=1))
    for i, j in hits:
        uf.union(int(i), int(j))

    roots = [uf.find(w) for w in range(n)]
    rank: dict[int, int] = {}
    group_of = np.empty(n, dtype=np.intp)
    for w, r in enumerate(roots):
        if r not in rank:
            rank[r] = len(rank)
        group_of[w] = rank[r]
    return GroupingMap(group_of=group_of)


def group_idf(
    presence: Sequence[Iterable[int]], grouping: GroupingMap
) -> IdfVector:
    """IDF recomputed at group granularity from per-image word presence."""
    remapped = [
        {int(grouping.group_of[w]) for w in words} for words in presence
    ]
    return compute_idf(remapped, grouping.n_groups)


def pair_feature_id(i: int, j: int, g: int) -> int:
    """Linear index of upper-triangular entry (i, j), i <= j, in a g x g matrix."""
    if not 0 <= i <= j < g:
        raise ValueError("invalid triangular index")
    return i * g - i * (i - 1) // 2 + (j - i)


def triangular_dim(g: int) -> int:
    return g * (g + 1) // 2


def build_signature(
    q: QuantizedImage,
    mode: str,
    n_words: int,
    grouping: GroupingMap | None = None,
    idf: IdfVector | None = None,
    k_neighbors: int = DEFAULT_NEIGHBORS,
    rcm_flat: bool = False,
) -> Signature:
    """Sparse per-image feature vector for the configured pipeline mode.

    sbovw: the normalized word histogram. impbovw: words are remapped to
    groups, the grouped conjunction matrix is normalized by its total pair
    count, each entry (i, j) is weighted by idf[i] * idf[j] at group
    granularity, and the diagonal-plus-upper-triangle becomes the feature
    vector. With rcm_flat the grouped histogram weighted by group IDF is
    emitted instead.
    """
    if mode == MODE_SBOVW:
        h = tf_histogram(q, n_words)
        ids = np.flatnonzero(h.bins)
        return Signature(
            feature_ids=ids.astype(np.int64),
            weights=h.bins[ids],
            mode=mode,
            dim=n_words,
        )
    if mode != MODE_IMPBOVW:
        raise ValueError(f"unknown signature mode {mode!r}")
    if grouping is None or idf is None:
        raise ValueError("impbovw signatures need a grouping map and group idf")
    if grouping.n_words != n_words:
        raise DataError(
            f"grouping covers {grouping.n_words} words, vocabulary has {n_words}"
        )
    g = grouping.n_groups
    if idf.n != g:
        raise DataError(
            f"group idf dimension {idf.n} does not match group count {g}"
        )

    grouped = QuantizedImage(
        words=grouping.group_of[q.words] if len(q) else q.words,
        positions=q.positions,
    )
    if rcm_flat:
        h = tf_histogram(grouped, g)
        weighted = tfidf_weight(h, idf)
        ids = np.flatnonzero(weighted)
        return Signature(
            feature_ids=ids.astype(np.int64), weights=weighted[ids], mode=mode, dim=g
        )

    cm = conjunction_matrix(grouped, g, k_neighbors)
    total = cm.total()
    ids: list[int] = []
    weights: list[float] = []
    for (i, j), c in sorted(cm.entries.items()):
        w = (c / total) * idf.idf[i] * idf.idf[j]
        ids.append(pair_feature_id(i, j, g))
        weights.append(float(w))
    return Signature(
        feature_ids=np.asarray(ids, dtype=np.int64),
        weights=np.asarray(weights, dtype=np.float64),
        mode=mode,
        dim=triangular_dim(g),
    )


def write_grouping_csv(grouping: GroupingMap, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["word_id", "group_id"])
        for w, g in enumerate(grouping.group_of):
            writer.writerow([w, int(g)])


def read_grouping_csv(path: str | Path) -> GroupingMap:
    try:
        with open(path, encoding="utf-8", newline="") as f:
            reader = csv.reader(f)
            header = next(reader, None)
            if header != ["word_id", "group_id"]:
                raise DataError(f"{path}: bad grouping header {header}")
            pairs = [(int(w), int(g)) for w, g in reader]
    except OSError as exc:
        raise DataError(f"cannot read grouping {path}: {exc}") from exc
    group_of = np.empty(len(pairs), dtype=np.intp)
    for w, g in pairs:
        group_of[w] = g
    return GroupingMap(group_of=group_of)


def write_signatures_csv(
    signatures: Sequence[tuple[str, Signature]], path: str | Path
) -> None:
    """Sparse rows `image_id,feature_id,weight` with repr-exact weights."""
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write("image_id,feature_id,weight\n")
        for image_id, sig in signatures:
            for fid, w in zip(sig.feature_ids, sig.weights):
                f.write(f"{image_id},{int(fid)},{float(w)!r}\n")
