"""Run configuration and the flat key-value config file format.

A config file is UTF-8 text with one ``key = value`` pair per line.
Values are bare or double-quoted strings, integers, floats, booleans
(``true``/``false``) or, in grid files, bracketed lists of those. ``#``
starts a comment. Keys match :class:`RunConfig` field names; unknown keys
are rejected so typos cannot silently fall back to defaults.

Grid files describe several runs at once: every list-valued key is
expanded by Cartesian product, scalars are shared.
"""

from __future__ import annotations

import itertools
import os
from dataclasses import dataclass, fields, replace

from .errors import ConfigError

MODES = ("sbovw", "impbovw", "sp")
DETECTORS = ("harris", "dog", "dense")
CLUSTERINGS = ("kmeans", "kmeans++")
CONFIG_KERNELS = ("intersection", "rbf", "spatial_pyramid")

# paper-scale defaults: large vocabulary for the conjunction pipeline, a
# small one for the pyramid baseline whose channels multiply fast
DEFAULT_SP_VOCAB = 200
DEFAULT_C_GRID = (0.1, 1.0, 10.0, 100.0)

THREADS_ENV = "VV_THREADS"


@dataclass(frozen=True)
class RunConfig:
    mode: str = "impbovw"
    detector: str = "harris"
    vocab: int = 2000
    clustering: str = "kmeans++"
    kernel: str = "intersection"
    c: float = 10.0
    k_neighbors: int = 5
    threshold: float = 0.6
    pyramid_level: int = 2
    seed: int = 0
    rcm_flat: bool = False
    train_manifest: str = ""
    test_manifest: str = ""

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.detector not in DETECTORS:
            raise ConfigError(
                f"detector must be one of {DETECTORS}, got {self.detector!r}"
            )
        if self.clustering not in CLUSTERINGS:
            raise ConfigError(
                f"clustering must be one of {CLUSTERINGS}, got {self.clustering!r}"
            )
        if self.kernel not in CONFIG_KERNELS:
            raise ConfigError(
                f"kernel must be one of {CONFIG_KERNELS}, got {self.kernel!r}"
            )
        # pyramid features and flat signatures are different geometries, so
        # the pyramid kernel and the sp mode only make sense together
        if self.mode == "sp" and self.kernel != "spatial_pyramid":
            raise ConfigError("sp mode requires the spatial_pyramid kernel")
        if self.mode != "sp" and self.kernel == "spatial_pyramid":
            raise ConfigError("the spatial_pyramid kernel requires sp mode")
        if not isinstance(self.vocab, int) or self.vocab < 2:
            raise ConfigError(f"vocab must be an integer >= 2, got {self.vocab!r}")
        if not self.c > 0:
            raise ConfigError(f"C must be positive, got {self.c!r}")
        if not isinstance(self.k_neighbors, int) or self.k_neighbors < 1:
            raise ConfigError(
                f"k_neighbors must be an integer >= 1, got {self.k_neighbors!r}"
            )
        if not self.threshold > 0:
            raise ConfigError(f"threshold must be positive, got {self.threshold!r}")
        if not isinstance(self.pyramid_level, int) or self.pyramid_level < 0:
            raise ConfigError(
                f"pyramid_level must be an integer >= 0, got {self.pyramid_level!r}"
            )
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError(f"seed must be an integer >= 0, got {self.seed!r}")

    def describe(self) -> str:
        """One-line summary used in reports and log output."""
        return (
            f"{self.mode}/{self.detector}/{self.clustering}"
            f"/vocab{self.vocab}/{self.kernel}/C{self.c:g}/seed{self.seed}"
        )


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}
_STR_FIELDS = {n for n, t in _FIELD_TYPES.items() if t == "str"}
_INT_FIELDS = {n for n, t in _FIELD_TYPES.items() if t == "int"}
_FLOAT_FIELDS = {n for n, t in _FIELD_TYPES.items() if t == "float"}
_BOOL_FIELDS = {n for n, t in _FIELD_TYPES.items() if t == "bool"}


def _parse_scalar(token: str, where: str):
    token = token.strip()
    if not token:
        raise ConfigError(f"{where}: empty value")
    if token.startswith('"'):
        if len(token) < 2 or not token.endswith('"'):
            raise ConfigError(f"{where}: unterminated string {token!r}")
        return token[1:-1]
    low = token.lower()
    if low == "true":
        return True
    if low == "false":
        return False
    try:
        return int(token)
    except ValueError:
        pass
    try:
        return float(token)
    except ValueError:
        pass
    return token


def _strip_comment(line: str) -> str:
    quoted = False
    for idx, ch in enumerate(line):
        if ch == '"':
            quoted = not quoted
        elif ch == "#" and not quoted:
            return line[:idx]
    return line


def parse_kv_file(path: str) -> dict[str, object]:
    """Parse ``key = value`` lines into a raw mapping.

    Bracketed values become lists; interpretation against RunConfig fields
    happens later so grid files and plain configs share the parser.
    """
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_kv_text(text, origin=path)


def parse_kv_text(text: str, origin: str = "<config>") -> dict[str, object]:
    out: dict[str, object] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = _strip_comment(raw).strip()
        if not line:
            continue
        where = f"{origin}:{lineno}"
        if "=" not in line:
            raise ConfigError(f"{where}: expected 'key = value', got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if not key:
            raise ConfigError(f"{where}: empty key")
        if key in out:
            raise ConfigError(f"{where}: duplicate key {key!r}")
        if value.startswith("["):
            if not value.endswith("]"):
                raise ConfigError(f"{where}: unterminated list {value!r}")
            inner = value[1:-1].strip()
            items = [s for s in inner.split(",") if s.strip()] if inner else []
            if not items:
                raise ConfigError(f"{where}: empty list for {key!r}")
            out[key] = [_parse_scalar(s, where) for s in items]
        else:
            out[key] = _parse_scalar(value, where)
    return out


def _coerce(key: str, value: object) -> object:
    if key in _BOOL_FIELDS:
        if isinstance(value, bool):
            return value
        raise ConfigError(f"{key} expects true/false, got {value!r}")
    if key in _INT_FIELDS:
        if isinstance(value, int) and not isinstance(value, bool):
            return value
        raise ConfigError(f"{key} expects an integer, got {value!r}")
    if key in _FLOAT_FIELDS:
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value)
        raise ConfigError(f"{key} expects a number, got {value!r}")
    if key in _STR_FIELDS:
        if isinstance(value, str):
            return value
        raise ConfigError(f"{key} expects a string, got {value!r}")
    raise ConfigError(f"unknown config key {key!r}")


def config_from_mapping(mapping: dict[str, object]) -> RunConfig:
    """Build a validated RunConfig from parsed key-value pairs.

    The sp baseline gets its own defaults when the file omits them: the
    pyramid kernel and a small vocabulary.
    """
    kwargs: dict[str, object] = {}
    for key, value in mapping.items():
        if key not in _FIELD_TYPES:
            raise ConfigError(f"unknown config key {key!r}")
        if isinstance(value, list):
            raise ConfigError(
                f"{key}: lists are only valid in grid files, got {value!r}"
            )
        kwargs[key] = _coerce(key, value)
    if kwargs.get("mode") == "sp":
        kwargs.setdefault("kernel", "spatial_pyramid")
        kwargs.setdefault("vocab", DEFAULT_SP_VOCAB)
    return RunConfig(**kwargs)


def load_config(path: str) -> RunConfig:
    return config_from_mapping(parse_kv_file(path))


def expand_grid(mapping: dict[str, object]) -> list[RunConfig]:
    """Cartesian-product expansion of list-valued keys, in field order."""
    for key in mapping:
        if key not in _FIELD_TYPES:
            raise ConfigError(f"unknown config key {key!r}")
    axes: list[tuple[str, list[object]]] = []
    base: dict[str, object] = {}
    for name in _FIELD_TYPES:
        if name not in mapping:
            continue
        value = mapping[name]
        if isinstance(value, list):
            axes.append((name, value))
        else:
            base[name] = value
    if not axes:
        return [config_from_mapping(base)]
    configs = []
    for combo in itertools.product(*(vals for _, vals in axes)):
        point = dict(base)
        point.update({name: v for (name, _), v in zip(axes, combo)})
        configs.append(config_from_mapping(point))
    return configs


def cv_grid(mapping: dict[str, object]) -> list[RunConfig]:
    """Grid for hyper-parameter search; C sweeps a standard range unless
    the file pins it."""
    if "c" not in mapping:
        mapping = dict(mapping)
        mapping["c"] = list(DEFAULT_C_GRID)
    return expand_grid(mapping)


def with_seed(config: RunConfig, seed: int) -> RunConfig:
    return replace(config, seed=seed)


def worker_count() -> int:
    """Parallelism cap from the environment, default 1 (fully sequential)."""
    raw = os.environ.get(THREADS_ENV)
    if raw is None or not raw.strip():
        return 1
    try:
        n = int(raw)
    except ValueError as exc:
        raise ConfigError(f"{THREADS_ENV} must be an integer, got {raw!r}") from exc
    if n < 1:
        raise ConfigError(f"{THREADS_ENV} must be >= 1, got {n}")
    return min(n, os.cpu_count() or 1)
