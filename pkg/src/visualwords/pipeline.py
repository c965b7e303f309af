"""End-to-end orchestration: train, evaluate, cross-validate, benchmark.

A training run maps images through detect, describe, cluster, encode, gram
and svm phases, then persists everything needed at evaluation time as a
bundle directory. Corpus statistics (codebook, word grouping, IDF) come
from the training side only; evaluation re-encodes unseen images against
those frozen statistics and refuses test manifests whose identities
overlap the training identities.

Reports and bundle files never contain wall-clock numbers, so reruns with
the same config, seed and data are byte-identical; timings travel
separately and land on stdout.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields

import numpy as np

from .clustering import Codebook, build_codebook, load_codebook, save_codebook
from .config import RunConfig, config_from_mapping, parse_kv_text, worker_count
from .dataset import ManifestEntry, load_grayscale, loo_folds
from .encoding import (
    GroupingMap,
    IdfVector,
    QuantizedImage,
    Signature,
    build_signature,
    conjunction_matrix,
    corpus_conjunction_rows,
    group_idf,
    quantize,
    read_grouping_csv,
    word_grouping,
    write_grouping_csv,
    write_signatures_csv,
)
from .errors import DataError, PipelineError, VisualWordsError
from .features.common import keypoints_to_csv
from .features.dense import detect_dense
from .features.dog import detect_dog
from .features.harris import detect_harris
from .features.sift import describe_all
from .kernels import PyramidFeatures, gram_matrix, kernel_rows
from .svm import MultiModel, load_model, ova_train, predict_batch, save_model

BUNDLE_FORMAT = 1
PHASES = ("detect", "describe", "cluster", "encode", "gram", "svm")


@dataclass(frozen=True)
class Bundle:
    config: RunConfig
    codebook: Codebook
    grouping: GroupingMap | None
    idf: IdfVector | None
    train_items: list
    train_ids: list[str]
    train_labels: list[str]
    train_row_identities: list[str]
    model: MultiModel
    manifest_hash: str
    config_hash: str

    @property
    def train_identities(self) -> frozenset[str]:
        return frozenset(self.train_row_identities)


@dataclass(frozen=True)
class EvalReport:
    classes: tuple[str, ...]
    confusion: np.ndarray          # rows true, columns predicted
    evaluated: int
    failed: list[tuple[str, str]]  # (image id, reason)
    average_rate: float            # percent
    per_class_recall: dict[str, float | None]
    timings: dict[str, float]


@dataclass(frozen=True)
class CvRow:
    config: RunConfig
    fold_scores: list[float | None]
    mean: float | None


@dataclass(frozen=True)
class CvResult:
    rows: list[CvRow]
    best_index: int

    @property
    def best(self) -> RunConfig:
        return self.rows[self.best_index].config


@dataclass(frozen=True)
class BenchRow:
    config: RunConfig
    timings: dict[str, float]      # six phases plus "total"


def config_text(config: RunConfig) -> str:
    """Canonical config dump; its hash identifies the run settings."""
    lines = []
    for f in fields(RunConfig):
        value = getattr(config, f.name)
        if isinstance(value, bool):
            rendered = "true" if value else "false"
        elif isinstance(value, str):
            rendered = f'"{value}"'
        else:
            rendered = repr(value)
        lines.append(f"{f.name} = {rendered}")
    return "\n".join(lines) + "\n"


def _hash_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def entries_hash(entries: list[ManifestEntry], id_base: str | None) -> str:
    """Content hash of the resolved manifest rows."""
    lines = [
        f"{_image_id(e, id_base)},{e.class_label},{e.identity}" for e in entries
    ]
    return _hash_text("\n".join(lines) + "\n")


def _image_id(entry: ManifestEntry, id_base: str | None) -> str:
    if id_base:
        try:
            return os.path.relpath(entry.image_path, id_base)
        except ValueError:
            pass
    return entry.image_path


def _detect(image: np.ndarray, config: RunConfig):
    if config.detector == "harris":
        return detect_harris(image)
    if config.detector == "dog":
        return detect_dog(image)
    return detect_dense(image)


@dataclass(frozen=True)
class _ImageFeatures:
    image_id: str
    shape: tuple[int, int]
    descriptors: np.ndarray
    positions: np.ndarray          # (n, 2) of (x, y) in pixels
    detect_seconds: float
    describe_seconds: float


def _extract_one(entry: ManifestEntry, config: RunConfig, id_base: str | None):
    image_id = _image_id(entry, id_base)
    image = load_grayscale(entry.image_path)
    t0 = time.perf_counter()
    keypoints = _detect(image, config)
    t1 = time.perf_counter()
    kept, descriptors = describe_all(image, keypoints)
    t2 = time.perf_counter()
    positions = np.array([[kp.x, kp.y] for kp in kept], dtype=np.float64)
    positions = positions.reshape(-1, 2)
    return _ImageFeatures(
        image_id=image_id,
        shape=image.shape,
        descriptors=descriptors,
        positions=positions,
        detect_seconds=t1 - t0,
        describe_seconds=t2 - t1,
    )


def _extract_features(
    entries: list[ManifestEntry],
    config: RunConfig,
    id_base: str | None,
    stage: str,
) -> list[_ImageFeatures]:
    """Per-image detect + describe, optionally across a thread pool.

    Results keep manifest order whatever the pool does, so downstream
    stages see a deterministic stream.
    """
    workers = worker_count()

    def run(entry: ManifestEntry) -> _ImageFeatures:
        try:
            return _extract_one(entry, config, id_base)
        except VisualWordsError as exc:
            raise PipelineError(
                stage, str(exc), image_id=_image_id(entry, id_base)
            ) from exc

    if workers > 1 and len(entries) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(run, entries))
    return [run(e) for e in entries]


def _pyramid_item(q: QuantizedImage, vocab: int, shape: tuple[int, int]):
    height, width = shape
    channels = []
    if len(q):
        nx = q.positions[:, 0] / float(width)
        ny = q.positions[:, 1] / float(height)
        norm = np.column_stack([nx, ny])
    else:
        norm = np.zeros((0, 2))
    for w in range(vocab):
        channels.append(norm[q.words == w] if len(q) else norm)
    return PyramidFeatures(channels=tuple(channels))


def _encode_one(
    q: QuantizedImage,
    config: RunConfig,
    grouping: GroupingMap | None,
    idf: IdfVector | None,
    shape: tuple[int, int],
):
    if config.mode == "sp":
        return _pyramid_item(q, config.vocab, shape)
    return build_signature(
        q,
        config.mode,
        config.vocab,
        grouping=grouping,
        idf=idf,
        k_neighbors=config.k_neighbors,
        rcm_flat=config.rcm_flat,
    )


def train_pipeline(
    config: RunConfig,
    train_entries: list[ManifestEntry],
    id_base: str | None = None,
) -> tuple[Bundle, dict[str, float]]:
    """Run the full training pipeline over the given entries.

    Returns the bundle plus wall-clock seconds per phase.
    """
    if not train_entries:
        raise DataError("training set is empty")
    timings: dict[str, float] = {}

    extracted = _extract_features(train_entries, config, id_base, "detect")
    timings["detect"] = sum(f.detect_seconds for f in extracted)
    timings["describe"] = sum(f.describe_seconds for f in extracted)

    t0 = time.perf_counter()
    non_empty = [f.descriptors for f in extracted if len(f.descriptors)]
    if not non_empty:
        raise PipelineError("cluster", "no descriptors in the whole training set")
    all_descriptors = np.vstack(non_empty)
    try:
        codebook = build_codebook(
            all_descriptors,
            k=config.vocab,
            seed=config.seed,
            method=config.clustering,
        )
    except VisualWordsError as exc:
        raise PipelineError("cluster", str(exc)) from exc
    timings["cluster"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    quantized = [
        quantize(f.descriptors, f.positions, codebook) for f in extracted
    ]

    grouping = None
    idf = None
    if config.mode == "impbovw":
        per_image = [
            conjunction_matrix(q, config.vocab, config.k_neighbors)
            for q in quantized
        ]
        rows = corpus_conjunction_rows(per_image, config.vocab)
        grouping = word_grouping(rows, config.threshold)
        presence = [set(int(w) for w in q.words) for q in quantized]
        idf = group_idf(presence, grouping)

    try:
        train_items = [
            _encode_one(q, config, grouping, idf, f.shape)
            for q, f in zip(quantized, extracted)
        ]
    except VisualWordsError as exc:
        raise PipelineError("encode", str(exc)) from exc
    timings["encode"] = time.perf_counter() - t0

    train_ids = [f.image_id for f in extracted]
    t0 = time.perf_counter()
    try:
        gram = gram_matrix(
            train_items,
            kernel=config.kernel,
            ids=train_ids,
            level=config.pyramid_level,
        )
    except (VisualWordsError, ValueError) as exc:
        raise PipelineError("gram", str(exc)) from exc
    timings["gram"] = time.perf_counter() - t0

    labels = [e.class_label for e in train_entries]
    t0 = time.perf_counter()
    try:
        model = ova_train(gram, labels, c=config.c, seed=config.seed)
    except VisualWordsError as exc:
        raise PipelineError("svm", str(exc)) from exc
    timings["svm"] = time.perf_counter() - t0
    timings["total"] = sum(timings[p] for p in PHASES)

    bundle = Bundle(
        config=config,
        codebook=codebook,
        grouping=grouping,
        idf=idf,
        train_items=train_items,
        train_ids=train_ids,
        train_labels=labels,
        train_row_identities=[e.identity for e in train_entries],
        model=model,
        manifest_hash=entries_hash(train_entries, id_base),
        config_hash=_hash_text(config_text(config)),
    )
    return bundle, timings


def _signature_dim(bundle: Bundle) -> int:
    if bundle.config.mode == "sp":
        return 0
    return int(bundle.train_items[0].dim) if bundle.train_items else 0


def save_bundle(bundle: Bundle, out_dir: str) -> None:
    os.makedirs(out_dir, exist_ok=True)
    join = lambda name: os.path.join(out_dir, name)  # noqa: E731

    with open(join("config.cfg"), "w", encoding="utf-8") as fh:
        fh.write(config_text(bundle.config))

    save_codebook(bundle.codebook, join("codebook.bin"))

    if bundle.grouping is not None:
        write_grouping_csv(bundle.grouping, join("grouping.csv"))
    if bundle.idf is not None:
        payload = {
            "idf": [float(v) for v in bundle.idf.idf],
            "doc_counts": [int(v) for v in bundle.idf.doc_counts],
            "t": int(bundle.idf.t),
        }
        with open(join("idf.json"), "w", encoding="utf-8") as fh:
            json.dump(payload, fh, sort_keys=True)
            fh.write("\n")

    with open(join("train_images.csv"), "w", encoding="utf-8") as fh:
        fh.write("image_id,label,identity\n")
        for image_id, label, identity in zip(
            bundle.train_ids, bundle.train_labels, bundle.train_row_identities
        ):
            fh.write(f"{image_id},{label},{identity}\n")

    if bundle.config.mode == "sp":
        with open(join("points.csv"), "w", encoding="utf-8") as fh:
            fh.write("image_id,word,x,y\n")
            for image_id, item in zip(bundle.train_ids, bundle.train_items):
                for word, channel in enumerate(item.channels):
                    for x, y in channel:
                        fh.write(f"{image_id},{word},{float(x)!r},{float(y)!r}\n")
    else:
        write_signatures_csv(
            list(zip(bundle.train_ids, bundle.train_items)),
            join("signatures.csv"),
        )

    save_model(
        bundle.model,
        join("model.bin"),
        c=bundle.config.c,
        tol=1e-3,
        seed=bundle.config.seed,
        manifest_hash=bundle.manifest_hash,
    )

    meta = {
        "format": BUNDLE_FORMAT,
        "mode": bundle.config.mode,
        "kernel": bundle.config.kernel,
        "vocab": bundle.config.vocab,
        "signature_dim": _signature_dim(bundle),
        "classes": list(bundle.model.classes),
        "config_hash": bundle.config_hash,
        "manifest_hash": bundle.manifest_hash,
        "n_train": len(bundle.train_ids),
    }
    with open(join("bundle.json"), "w", encoding="utf-8") as fh:
        json.dump(meta, fh, sort_keys=True)
        fh.write("\n")


def load_bundle(bundle_dir: str) -> Bundle:
    join = lambda name: os.path.join(bundle_dir, name)  # noqa: E731
    try:
        with open(join("bundle.json"), encoding="utf-8") as fh:
            meta = json.load(fh)
    except OSError as exc:
        raise DataError(f"cannot read bundle {bundle_dir}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"corrupt bundle.json in {bundle_dir}: {exc}") from exc
    if meta.get("format") != BUNDLE_FORMAT:
        raise DataError(f"unsupported bundle format {meta.get('format')!r}")

    try:
        with open(join("config.cfg"), encoding="utf-8") as fh:
            cfg_text = fh.read()
    except OSError as exc:
        raise DataError(f"cannot read bundle config: {exc}") from exc
    config = config_from_mapping(parse_kv_text(cfg_text, join("config.cfg")))
    codebook = load_codebook(join("codebook.bin"))

    grouping = None
    idf = None
    if config.mode == "impbovw":
        grouping = read_grouping_csv(join("grouping.csv"))
        try:
            with open(join("idf.json"), encoding="utf-8") as fh:
                payload = json.load(fh)
            idf = IdfVector(
                idf=np.asarray(payload["idf"], dtype=np.float64),
                doc_counts=np.asarray(payload["doc_counts"], dtype=np.int64),
                t=int(payload["t"]),
            )
        except (OSError, KeyError, json.JSONDecodeError) as exc:
            raise DataError(f"corrupt idf.json in {bundle_dir}: {exc}") from exc

    train_ids: list[str] = []
    train_labels: list[str] = []
    row_identities: list[str] = []
    try:
        with open(join("train_images.csv"), encoding="utf-8") as fh:
            header = fh.readline().strip()
            if header != "image_id,label,identity":
                raise DataError(f"bad train_images.csv header {header!r}")
            for line in fh:
                line = line.rstrip("\n")
                if not line:
                    continue
                image_id, label, identity = line.split(",")
                train_ids.append(image_id)
                train_labels.append(label)
                row_identities.append(identity)
    except OSError as exc:
        raise DataError(f"cannot read train_images.csv: {exc}") from exc

    if config.mode == "sp":
        per_image: dict[str, list[tuple[int, float, float]]] = {
            i: [] for i in train_ids
        }
        try:
            with open(join("points.csv"), encoding="utf-8") as fh:
                header = fh.readline().strip()
                if header != "image_id,word,x,y":
                    raise DataError(f"bad points.csv header {header!r}")
                for line in fh:
                    line = line.rstrip("\n")
                    if not line:
                        continue
                    image_id, word, x, y = line.split(",")
                    per_image[image_id].append((int(word), float(x), float(y)))
        except OSError as exc:
            raise DataError(f"cannot read points.csv: {exc}") from exc
        train_items: list = []
        for image_id in train_ids:
            channels: list[list[tuple[float, float]]] = [
                [] for _ in range(config.vocab)
            ]
            for word, x, y in per_image[image_id]:
                channels[word].append((x, y))
            train_items.append(
                PyramidFeatures(
                    channels=tuple(
                        np.asarray(c, dtype=np.float64).reshape(-1, 2)
                        for c in channels
                    )
                )
            )
    else:
        dim = int(meta["signature_dim"])
        rows: dict[str, list[tuple[int, float]]] = {i: [] for i in train_ids}
        try:
            with open(join("signatures.csv"), encoding="utf-8") as fh:
                header = fh.readline().strip()
                if header != "image_id,feature_id,weight":
                    raise DataError(f"bad signatures.csv header {header!r}")
                for line in fh:
                    line = line.rstrip("\n")
                    if not line:
                        continue
                    image_id, fid, weight = line.split(",")
                    rows[image_id].append((int(fid), float(weight)))
        except OSError as exc:
            raise DataError(f"cannot read signatures.csv: {exc}") from exc
        train_items = []
        for image_id in train_ids:
            pairs = rows[image_id]
            fids = np.asarray([p[0] for p in pairs], dtype=np.int64)
            weights = np.asarray([p[1] for p in pairs], dtype=np.float64)
            train_items.append(
                Signature(
                    feature_ids=fids, weights=weights, mode=config.mode, dim=dim
                )
            )

    model, _ = load_model(join("model.bin"))
    return Bundle(
        config=config,
        codebook=codebook,
        grouping=grouping,
        idf=idf,
        train_items=train_items,
        train_ids=train_ids,
        train_labels=train_labels,
        train_row_identities=row_identities,
        model=model,
        manifest_hash=str(meta["manifest_hash"]),
        config_hash=str(meta["config_hash"]),
    )


def evaluate(
    bundle: Bundle,
    test_entries: list[ManifestEntry],
    id_base: str | None = None,
) -> EvalReport:
    """Classify test images against a trained bundle."""
    if not test_entries:
        raise DataError("test set is empty")

    overlap = bundle.train_identities & {e.identity for e in test_entries}
    if overlap:
        raise DataError(
            "test manifest shares identities with the training set: "
            + ", ".join(sorted(overlap))
        )
    classes = bundle.model.classes
    unknown = {e.class_label for e in test_entries} - set(classes)
    if unknown:
        raise DataError(
            "test labels unknown to the model: " + ", ".join(sorted(unknown))
        )

    config = bundle.config
    timings: dict[str, float] = {}
    t0 = time.perf_counter()
    probes = []
    kept_entries = []
    failed: list[tuple[str, str]] = []
    for entry in test_entries:
        image_id = _image_id(entry, id_base)
        try:
            feats = _extract_one(entry, config, id_base)
            q = quantize(feats.descriptors, feats.positions, bundle.codebook)
            probes.append(
                _encode_one(q, config, bundle.grouping, bundle.idf, feats.shape)
            )
            kept_entries.append(entry)
        except VisualWordsError as exc:
            failed.append((image_id, str(exc)))
    timings["encode"] = time.perf_counter() - t0

    index = {c: i for i, c in enumerate(classes)}
    confusion = np.zeros((len(classes), len(classes)), dtype=np.int64)
    if probes:
        t0 = time.perf_counter()
        rows = kernel_rows(
            probes,
            bundle.train_items,
            kernel=config.kernel,
            level=config.pyramid_level,
        )
        timings["kernel"] = time.perf_counter() - t0
        t0 = time.perf_counter()
        predictions, _ = predict_batch(bundle.model, rows)
        timings["predict"] = time.perf_counter() - t0
        for entry, predicted in zip(kept_entries, predictions):
            confusion[index[entry.class_label], index[predicted]] += 1
    else:
        timings["kernel"] = 0.0
        timings["predict"] = 0.0
    timings["total"] = sum(timings.values())

    evaluated = int(confusion.sum())
    rate = 100.0 * np.trace(confusion) / evaluated if evaluated else 0.0
    recall: dict[str, float | None] = {}
    for c in classes:
        row = confusion[index[c]]
        total = int(row.sum())
        recall[c] = float(100.0 * row[index[c]] / total) if total else None

    return EvalReport(
        classes=classes,
        confusion=confusion,
        evaluated=evaluated,
        failed=failed,
        average_rate=float(rate),
        per_class_recall=recall,
        timings=timings,
    )


def cross_validate(
    configs: list[RunConfig],
    train_entries: list[ManifestEntry],
    id_base: str | None = None,
) -> CvResult:
    """Identity-LOO score per config; best by mean, ties by smaller C then
    smaller vocabulary."""
    if not configs:
        raise DataError("empty config grid")
    folds = loo_folds(train_entries)
    rows: list[CvRow] = []
    for config in configs:
        scores: list[float | None] = []
        for fold in folds:
            try:
                bundle, _ = train_pipeline(config, fold.remainder, id_base)
                report = evaluate(bundle, fold.held_out, id_base)
                scores.append(report.average_rate)
            except VisualWordsError:
                scores.append(None)
        done = [s for s in scores if s is not None]
        mean = float(np.mean(done)) if done else None
        rows.append(CvRow(config=config, fold_scores=scores, mean=mean))

    scored = [
        (-(r.mean), r.config.c, r.config.vocab, i)
        for i, r in enumerate(rows)
        if r.mean is not None
    ]
    if not scored:
        raise DataError("every cross-validation fold failed for every config")
    best_index = min(scored)[3]
    return CvResult(rows=rows, best_index=best_index)


def benchmark_timing(
    configs: list[RunConfig],
    entries: list[ManifestEntry],
    id_base: str | None = None,
) -> list[BenchRow]:
    """Train once per config and report the phase timing table."""
    if not configs:
        raise DataError("empty config list")
    out = []
    for config in configs:
        _, timings = train_pipeline(config, entries, id_base)
        out.append(BenchRow(config=config, timings=timings))
    return out


def train_and_save(
    config: RunConfig,
    entries: list[ManifestEntry],
    out_dir: str,
    id_base: str | None = None,
) -> tuple[Bundle, dict[str, float]]:
    """Train on the entries and persist the bundle; the CLI entry point."""
    bundle, timings = train_pipeline(config, entries, id_base)
    save_bundle(bundle, out_dir)
    return bundle, timings


def dump_keypoints(
    entries: list[ManifestEntry],
    config: RunConfig,
    out_dir: str,
    id_base: str | None = None,
) -> list[str]:
    """Write one detector-output CSV per image for visual debugging."""
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for entry in entries:
        image = load_grayscale(entry.image_path)
        keypoints = _detect(image, config)
        name = _image_id(entry, id_base).replace("\\", "__").replace("/", "__")
        path = os.path.join(out_dir, name + ".csv")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(keypoints_to_csv(keypoints))
        paths.append(path)
    return paths
