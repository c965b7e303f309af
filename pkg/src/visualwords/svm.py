"""Kernel SVM trained with sequential minimal optimization on a Gram matrix.

The solver runs in two phases. Sweeps over all points pair each KKT
violator with a random partner and solve the two-variable subproblem
analytically; they do the bulk of the work cheaply but can creep near the
optimum. A polish phase then drives the pair with the best second-order
gain until the feasible bias interval closes to the tolerance, which is
exactly the condition for every point to satisfy the KKT conditions at
that tolerance. The final bias is re-averaged over free support vectors.
One-vs-all composition turns the binary solver into a multiclass
classifier.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DataError
from .kernels import KERNELS, KernelMatrix

MODEL_MAGIC = b"VVSV"
MODEL_VERSION = 1
DEFAULT_C = 10.0
DEFAULT_TOL = 1e-3
DEFAULT_MAX_PASSES = 10
_HARD_PASS_CAP = 30
_POLISH_CAP = 500_000
_SUPPORT_EPS = 1e-9


@dataclass(frozen=True)
class SvmModel:
    alpha: np.ndarray        # (n,) dual coefficients in [0, C]
    bias: float
    labels: np.ndarray       # (n,) +1/-1 int8
    c: float
    kernel: str

    @property
    def support_indices(self) -> np.ndarray:
        return np.flatnonzero(self.alpha > _SUPPORT_EPS)

    def decision_values(self, kernel_rows: np.ndarray) -> np.ndarray:
        """f(x) for rows of kernel values against the training set."""
        coef = self.alpha * self.labels
        return kernel_rows @ coef + self.bias


@dataclass(frozen=True)
class MultiModel:
    models: tuple[SvmModel, ...]
    classes: tuple[str, ...]
    kernel: str

    def __post_init__(self) -> None:
        if len(self.models) != len(self.classes) or len(self.classes) < 2:
            raise ValueError("need one binary model per class, >= 2 classes")


def _gram_values(gram: KernelMatrix | np.ndarray) -> np.ndarray:
    if isinstance(gram, KernelMatrix):
        return gram.values
    return np.asarray(gram, dtype=np.float64)


def smo_train(
    gram: KernelMatrix | np.ndarray,
    y: np.ndarray,
    c: float = DEFAULT_C,
    tol: float = DEFAULT_TOL,
    max_passes: int = DEFAULT_MAX_PASSES,
    seed: int = 0,
    kernel: str = "intersection",
) -> SvmModel:
    k = _gram_values(gram)
    y = np.asarray(y, dtype=np.float64).ravel()
    n = y.shape[0]
    if n == 0:
        raise ValueError("cannot train on an empty set")
    if k.shape != (n, n):
        raise ValueError("gram matrix and labels disagree on size")
    if not set(np.unique(y)) <= {-1.0, 1.0}:
        raise ValueError("labels must be +1/-1")
    if len(np.unique(y)) < 2:
        raise ValueError("labels are single-class")
    if c <= 0:
        raise ValueError("C must be positive")

    rng = np.random.default_rng(seed)
    alpha = np.zeros(n)
    b = 0.0
    f = np.zeros(n)          # cached sum_j alpha_j y_j K_ij, excludes bias
    examine_tol = tol / 2.0

    def violates(i: int) -> bool:
        e_i = f[i] + b - y[i]
        r = y[i] * e_i
        return (r < -examine_tol and alpha[i] < c) or (r > examine_tol and alpha[i] > 0)

    def balanced_bias() -> float:
        """Midpoint of the bias interval the KKT conditions allow.

        Points with alpha < C need margin >= 1, points with alpha > 0 need
        margin <= 1; each yields a one-sided bound on b depending on the
        label sign.
        """
        g = y - f
        raising = ((y > 0) & (alpha < c - _SUPPORT_EPS)) | (
            (y < 0) & (alpha > _SUPPORT_EPS)
        )
        lowering = ((y < 0) & (alpha < c - _SUPPORT_EPS)) | (
            (y > 0) & (alpha > _SUPPORT_EPS)
        )
        lo = g[raising].max() if raising.any() else None
        hi = g[lowering].min() if lowering.any() else None
        if lo is not None and hi is not None:
            return float((lo + hi) / 2.0)
        return float(lo if lo is not None else hi if hi is not None else b)

    def refit_bias() -> float:
        free = (alpha > _SUPPORT_EPS) & (alpha < c - _SUPPORT_EPS)
        if free.any():
            return float(np.mean(y[free] - f[free]))
        return balanced_bias()

    def try_pair(i: int, j: int) -> bool:
        nonlocal b, f
        e_i = f[i] + b - y[i]
        e_j = f[j] + b - y[j]
        ai_old, aj_old = alpha[i], alpha[j]
        if y[i] != y[j]:
            low, high = max(0.0, aj_old - ai_old), min(c, c + aj_old - ai_old)
        else:
            low, high = max(0.0, ai_old + aj_old - c), min(c, ai_old + aj_old)
        if low >= high:
            return False
        eta = 2.0 * k[i, j] - k[i, i] - k[j, j]
        if eta >= 0.0:
            return False
        aj = aj_old - y[j] * (e_i - e_j) / eta
        aj = min(high, max(low, aj))
        if abs(aj - aj_old) < 1e-12:
            return False
        # the partner stays in the box analytically; clamp the float residue
        ai = min(c, max(0.0, ai_old + y[i] * y[j] * (aj_old - aj)))

        # bias update keeping a violated point's error at zero
        b1 = b - e_i - y[i] * (ai - ai_old) * k[i, i] - y[j] * (aj - aj_old) * k[i, j]
        b2 = b - e_j - y[i] * (ai - ai_old) * k[i, j] - y[j] * (aj - aj_old) * k[j, j]
        if 0.0 < ai < c:
            b = b1
        elif 0.0 < aj < c:
            b = b2
        else:
            b = (b1 + b2) / 2.0

        f += y[i] * (ai - ai_old) * k[i] + y[j] * (aj - aj_old) * k[j]
        alpha[i], alpha[j] = ai, aj
        return True

    diag_k = np.ascontiguousarray(np.diag(k))

    def select_pair() -> tuple[int, int, float]:
        """Working pair for the polish phase and the current bias-interval gap.

        The first index is the worst raising point. The partner maximizes
        the guaranteed dual increase (g_i - g_j)^2 / (2 eta) instead of the
        plain violation g_i - g_j; the latter can creep for thousands of
        steps when kernel rows are nearly dependent.
        """
        g = y - f
        raising = ((y > 0) & (alpha < c - _SUPPORT_EPS)) | (
            (y < 0) & (alpha > _SUPPORT_EPS)
        )
        lowering = ((y < 0) & (alpha < c - _SUPPORT_EPS)) | (
            (y > 0) & (alpha > _SUPPORT_EPS)
        )
        if not raising.any() or not lowering.any():
            return -1, -1, 0.0
        masked_up = np.where(raising, g, -np.inf)
        masked_dn = np.where(lowering, g, np.inf)
        i = int(np.argmax(masked_up))
        gap = float(masked_up[i] - masked_dn.min())
        diff = g[i] - g
        cand = lowering & (diff > 0.0)
        if not cand.any():
            return i, int(np.argmin(masked_dn)), gap
        eta = np.maximum(diag_k[i] + diag_k - 2.0 * k[i], 1e-12)
        gain = np.where(cand, diff * diff / eta, -np.inf)
        return i, int(np.argmax(gain)), gap

    total_passes = 0
    quiet_passes = 0
    while total_passes < _HARD_PASS_CAP:
        total_passes += 1
        changed = 0
        for i in range(n):
            if not violates(i):
                continue
            # try a random partner first, then sweep the rest so a single
            # unlucky draw cannot stall the pass
            for jj in rng.permutation(n - 1):
                j = int(jj) + (int(jj) >= i)
                if try_pair(i, j):
                    changed += 1
                    break

        # rebalance the bias each pass: the per-update b1/b2 running value
        # can drift outside the feasible interval when no multiplier is
        # free, which would make some point look violated forever
        b = balanced_bias()

        quiet_passes = quiet_passes + 1 if changed == 0 else 0
        if quiet_passes >= max_passes or select_pair()[2] <= tol:
            break

    # polish until the bias interval closes; stop early only on a long
    # stretch without a new best gap (numerical stall) or a hard cap
    steps = 0
    best_gap = np.inf
    stale = 0
    while steps < _POLISH_CAP:
        i, j, gap = select_pair()
        if i < 0 or gap <= tol:
            break
        if gap < best_gap - 1e-15:
            best_gap = gap
            stale = 0
        else:
            stale += 1
            if stale > 200 * n:
                break
        steps += 1
        if not try_pair(i, j):
            moved = False
            for jj in rng.permutation(n - 1):
                partner = int(jj) + (int(jj) >= i)
                if try_pair(i, partner):
                    moved = True
                    break
            if not moved:
                break

    b = refit_bias()
    return SvmModel(
        alpha=alpha,
        bias=float(b),
        labels=y.astype(np.int8),
        c=float(c),
        kernel=kernel,
    )


def ova_train(
    gram: KernelMatrix,
    labels: Sequence[str],
    c: float = DEFAULT_C,
    tol: float = DEFAULT_TOL,
    seed: int = 0,
) -> MultiModel:
    """One binary model per class label, +1 for the class, -1 for the rest."""
    if len(labels) != gram.n:
        raise DataError("label count does not match gram size")
    classes = tuple(sorted(set(labels)))
    if len(classes) < 2:
        raise DataError(f"need >= 2 classes, got {classes}")
    label_arr = np.asarray(labels)
    models = []
    for idx, cls in enumerate(classes):
        y = np.where(label_arr == cls, 1.0, -1.0)
        models.append(
            smo_train(
                gram, y, c=c, tol=tol, seed=seed + idx, kernel=gram.kernel
            )
        )
    return MultiModel(models=tuple(models), classes=classes, kernel=gram.kernel)


def predict(model: MultiModel, kernel_row: np.ndarray) -> tuple[str, np.ndarray]:
    """Class with the highest decision value; ties go to the lowest index."""
    row = np.asarray(kernel_row, dtype=np.float64).ravel()
    n = model.models[0].alpha.shape[0]
    if row.shape[0] != n:
        raise ValueError(f"kernel row has {row.shape[0]} values, expected {n}")
    scores = np.array([m.decision_values(row[None, :])[0] for m in model.models])
    return model.classes[int(np.argmax(scores))], scores


def predict_batch(model: MultiModel, rows: np.ndarray) -> tuple[list[str], np.ndarray]:
    """Vectorized predict over (n_test, n_train) kernel rows."""
    rows = np.asarray(rows, dtype=np.float64)
    scores = np.column_stack([m.decision_values(rows) for m in model.models])
    picks = np.argmax(scores, axis=1)
    return [model.classes[int(p)] for p in picks], scores


def save_model(
    model: MultiModel,
    path: str | Path,
    c: float,
    tol: float,
    seed: int,
    manifest_hash: str,
) -> None:
    path = Path(path)
    kernel_id = KERNELS.index(model.kernel)
    with open(path, "wb") as f:
        f.write(MODEL_MAGIC)
        f.write(struct.pack("<III", MODEL_VERSION, kernel_id, len(model.classes)))
        for m in model.models:
            n = m.alpha.shape[0]
            f.write(struct.pack("<I", n))
            f.write(m.alpha.astype("<f8").tobytes())
            f.write(m.labels.astype("i1").tobytes())
            f.write(struct.pack("<d", m.bias))
    sidecar = {
        "C": c,
        "tol": tol,
        "seed": seed,
        "manifest_hash": manifest_hash,
        "classes": list(model.classes),
    }
    with open(path.with_suffix(path.suffix + ".json"), "w", encoding="utf-8") as f:
        json.dump(sidecar, f, sort_keys=True)
        f.write("\n")


def load_model(path: str | Path) -> tuple[MultiModel, dict]:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read model {path}: {exc}") from exc
    if raw[:4] != MODEL_MAGIC:
        raise DataError(f"{path} is not a model file (bad magic)")
    version, kernel_id, n_classes = struct.unpack_from("<III", raw, 4)
    if version != MODEL_VERSION:
        raise DataError(f"unsupported model version {version}")
    if kernel_id >= len(KERNELS):
        raise DataError(f"unknown kernel id {kernel_id}")
    kernel = KERNELS[kernel_id]

    sidecar_path = path.with_suffix(path.suffix + ".json")
    try:
        meta = json.loads(sidecar_path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise DataError(f"missing model sidecar {sidecar_path}: {exc}") from exc
    classes = tuple(str(c) for c in meta["classes"])
    if len(classes) != n_classes:
        raise DataError("sidecar class list does not match model header")

    offset = 16
    models = []
    for _ in range(n_classes):
        if offset + 4 > len(raw):
            raise DataError(f"model file {path} truncated")
        (n,) = struct.unpack_from("<I", raw, offset)
        offset += 4
        need = 8 * n + n + 8
        if offset + need > len(raw):
            raise DataError(f"model file {path} truncated")
        alpha = np.frombuffer(raw, dtype="<f8", count=n, offset=offset).copy()
        offset += 8 * n
        labels = np.frombuffer(raw, dtype="i1", count=n, offset=offset).copy()
        offset += n
        (bias,) = struct.unpack_from("<d", raw, offset)
        offset += 8
        models.append(
            SvmModel(
                alpha=alpha,
                bias=float(bias),
                labels=labels,
                c=float(meta["C"]),
                kernel=kernel,
            )
        )
    return MultiModel(models=tuple(models), classes=classes, kernel=kernel), meta
