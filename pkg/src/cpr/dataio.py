"""Embedding corpora: the EMB1 binary format, dataset manifests, class
splits, K-shot episode sampling, and a seeded synthetic Gaussian generator.

EMB1 layout (all integers little-endian):

    magic  'E' 'M' 'B' '1'
    u32    version (= 1)
    u32    N   number of records
    u32    d   feature dimension
    u32    C   number of classes
    u8     has_labels
    f32[N*d]  features, row-major
    u32[N]    labels              (only if has_labels)
    C x (u32 length + UTF-8 bytes) class names

Features are stored as float32; all in-memory math runs on the float64
unit-normalized view (``EmbeddingSet.unit``), so cosine similarity equals a
plain dot product everywhere downstream.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .autodiff import unit_rows
from .errors import ConfigError, FormatError, InsufficientDataError

_MAGIC = b"EMB1"
_VERSION = 1


@dataclass
class EmbeddingSet:
    """Frozen feature corpus: N rows of dimension d with integer labels."""

    dim: int
    features: np.ndarray  # (N, d) float32, exactly the file payload
    labels: np.ndarray  # (N,) int64, each in [0, C)
    class_names: list[str]
    normalized: bool = True
    unit: np.ndarray = field(init=False, repr=False)  # (N, d) float64 unit rows

    def __post_init__(self):
        self.features = np.ascontiguousarray(self.features, dtype=np.float32)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        n = self.features.shape[0]
        if n < 1:
            raise ConfigError("embedding set must contain at least one record")
        if self.features.ndim != 2 or self.features.shape[1] != self.dim:
            raise ConfigError(f"feature block is {self.features.shape}, expected (N, {self.dim})")
        if self.labels.shape != (n,):
            raise ConfigError(f"expected {n} labels, got {self.labels.shape}")
        c = len(self.class_names)
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= c):
            raise ConfigError(f"label {int(self.labels.max())} outside [0, {c})")
        self.unit = (
            unit_rows(self.features.astype(np.float64))
            if self.normalized
            else self.features.astype(np.float64)
        )

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    def indices_of_class(self, c: int) -> np.ndarray:
        return np.flatnonzero(self.labels == c)


def write_emb(path, es: EmbeddingSet) -> None:
    """Serialize the raw (pre-normalization) float32 payload."""
    n, d = es.features.shape
    blob = bytearray()
    blob += _MAGIC
    blob += struct.pack("<IIII", _VERSION, n, d, es.num_classes)
    blob += struct.pack("<B", 1)
    blob += es.features.astype("<f4").tobytes()
    blob += es.labels.astype("<u4").tobytes()
    for name in es.class_names:
        raw = name.encode("utf-8")
        blob += struct.pack("<I", len(raw)) + raw
    Path(path).write_bytes(bytes(blob))


class _Cursor:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, size: int, what: str) -> bytes:
        if self.pos + size > len(self.buf):
            raise FormatError(f"truncated while reading {what}", offset=self.pos)
        out = self.buf[self.pos : self.pos + size]
        self.pos += size
        return out

    def u32(self, what: str) -> int:
        return struct.unpack("<I", self.take(4, what))[0]


def read_emb(path, normalize: bool = True) -> EmbeddingSet:
    """Parse an EMB1 file; the float32 payload round-trips bit-exactly."""
    buf = Path(path).read_bytes()
    cur = _Cursor(buf)
    magic = cur.take(4, "magic")
    if magic != _MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {_MAGIC!r}", offset=0)
    version = cur.u32("version")
    if version != _VERSION:
        raise FormatError(f"unsupported version {version}", offset=4)
    n = cur.u32("record count")
    d = cur.u32("dimension")
    c = cur.u32("class count")
    if n < 1 or d < 1:
        raise FormatError(f"degenerate shape N={n}, d={d}", offset=8)
    has_labels = cur.take(1, "label flag")[0]
    feat_off = cur.pos
    feats = np.frombuffer(cur.take(4 * n * d, "feature payload"), dtype="<f4").reshape(n, d)
    if not np.isfinite(feats).all():
        bad = int(np.flatnonzero(~np.isfinite(feats).reshape(-1))[0])
        raise FormatError("non-finite feature value", offset=feat_off + 4 * bad)
    if has_labels:
        lab_off = cur.pos
        labels = np.frombuffer(cur.take(4 * n, "label payload"), dtype="<u4").astype(np.int64)
    else:
        lab_off = cur.pos
        labels = np.zeros(n, dtype=np.int64)
    names = []
    for i in range(c):
        length = cur.u32(f"class name {i} length")
        names.append(cur.take(length, f"class name {i}").decode("utf-8"))
    if cur.pos != len(buf):
        raise FormatError(f"{len(buf) - cur.pos} trailing bytes", offset=cur.pos)
    if has_labels:
        over = np.flatnonzero(labels >= c)
        if over.size:
            rec = int(over[0])
            raise FormatError(
                f"record {rec} has label {int(labels[rec])} but only {c} classes",
                offset=lab_off + 4 * rec,
            )
    return EmbeddingSet(
        dim=d, features=feats.copy(), labels=labels, class_names=names, normalized=normalize
    )


# ---------------------------------------------------------------------------
# splits and episodes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SplitSpec:
    """Disjoint base/new class partition for base-to-new generalization."""

    base_classes: frozenset[int]
    new_classes: frozenset[int]

    def __post_init__(self):
        overlap = self.base_classes & self.new_classes
        if overlap:
            raise ConfigError(f"base and new classes overlap: {sorted(overlap)}")

    @staticmethod
    def halves(num_classes: int) -> "SplitSpec":
        """Default split: first half of the class indices is base."""
        cut = (num_classes + 1) // 2
        return SplitSpec(frozenset(range(cut)), frozenset(range(cut, num_classes)))


@dataclass(frozen=True)
class Episode:
    """One sampled task: K labeled supports per class plus held-out queries.

    ``train_pool`` holds unlabeled indices reserved from the support classes
    (empty unless requested); ``unlabeled_pool`` defaults to the query pool.
    """

    support: dict[int, np.ndarray]
    query: np.ndarray
    unlabeled_pool: np.ndarray
    seed: int
    train_pool: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))

    @property
    def support_classes(self) -> list[int]:
        return sorted(self.support)

    def support_indices(self) -> np.ndarray:
        return np.concatenate([self.support[c] for c in self.support_classes])


def sample_episode(
    es: EmbeddingSet,
    shots: int,
    seed: int,
    split: SplitSpec | None = None,
    mode: str = "fewshot",
    holdout_per_class: int = 0,
) -> Episode:
    """Draw a deterministic K-shot episode.

    In ``base2new`` mode supports come only from the base classes; new-class
    samples all land in the query pool. Queries are every sample not used as
    support or held out for the training pool.
    """
    if mode not in ("fewshot", "base2new"):
        raise ConfigError(f"unknown episode mode {mode!r}")
    if shots < 1:
        raise ConfigError(f"shots must be >= 1, got {shots}")
    if mode == "base2new" and split is None:
        raise ConfigError("base2new mode requires a base/new split")
    present = sorted(int(c) for c in np.unique(es.labels))
    if mode == "base2new":
        support_classes = [c for c in present if c in split.base_classes]
        if not support_classes:
            raise InsufficientDataError("no base-class samples present")
    else:
        support_classes = present

    rng = np.random.default_rng(seed)
    support: dict[int, np.ndarray] = {}
    query_parts: list[np.ndarray] = []
    holdout_parts: list[np.ndarray] = []
    for c in present:
        idx = es.indices_of_class(c)
        if c in support_classes:
            need = shots + holdout_per_class
            if idx.size < need:
                raise InsufficientDataError(
                    f"class {c} ({es.class_names[c]!r}) has {idx.size} samples, needs {need}"
                )
            perm = rng.permutation(idx)
            support[c] = np.sort(perm[:shots])
            if holdout_per_class:
                holdout_parts.append(np.sort(perm[shots : shots + holdout_per_class]))
            query_parts.append(np.sort(perm[shots + holdout_per_class :]))
        else:
            query_parts.append(idx)
    query = np.sort(np.concatenate(query_parts)) if query_parts else np.empty(0, dtype=np.int64)
    train_pool = (
        np.sort(np.concatenate(holdout_parts)) if holdout_parts else np.empty(0, dtype=np.int64)
    )
    return Episode(
        support=support, query=query, unlabeled_pool=query.copy(), seed=seed, train_pool=train_pool
    )


# ---------------------------------------------------------------------------
# synthetic corpus
# ---------------------------------------------------------------------------


def _check_synth_args(classes: int, dim: int, spread: float, n_per_class: int) -> None:
    if classes < 2:
        raise ConfigError(f"need at least 2 classes, got {classes}")
    if dim < 2:
        raise ConfigError(f"need dimension >= 2, got {dim}")
    if n_per_class < 1:
        raise ConfigError(f"need n_per_class >= 1, got {n_per_class}")
    if spread < 0:
        raise ConfigError(f"spread must be nonnegative, got {spread}")


def synth_class_means(classes: int, dim: int, shift: float, seed: int) -> np.ndarray:
    """Unit class-mean directions; ``shift`` pulls all means toward a shared
    direction, raising their pairwise cosine (harder task)."""
    rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(1)[0])
    shared = rng.standard_normal(dim)
    shared /= np.linalg.norm(shared)
    raw = rng.standard_normal((classes, dim)) + shift * shared
    means = unit_rows(raw)
    sim = means @ means.T
    np.fill_diagonal(sim, 0.0)
    if sim.max() >= 1.0 - 1e-9:
        raise ConfigError("degenerate class means: two classes are collinear")
    return means


def synth_gaussian(
    classes: int,
    dim: int,
    spread: float,
    n_per_class: int,
    seed: int,
    shift: float = 0.0,
    name_prefix: str = "class",
) -> EmbeddingSet:
    """Seeded Gaussian-mixture corpus on the unit sphere."""
    _check_synth_args(classes, dim, spread, n_per_class)
    means = synth_class_means(classes, dim, shift, seed)
    noise_rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(2)[1])
    feats = np.repeat(means, n_per_class, axis=0)
    feats = feats + spread * noise_rng.standard_normal(feats.shape)
    feats = unit_rows(feats)
    labels = np.repeat(np.arange(classes), n_per_class)
    names = [f"{name_prefix}_{c:02d}" for c in range(classes)]
    return EmbeddingSet(
        dim=dim,
        features=feats.astype(np.float32),
        labels=labels,
        class_names=names,
        normalized=True,
    )


def synth_split(
    classes: int,
    dim: int,
    spread: float,
    n_train: int,
    n_test: int,
    seed: int,
    shift: float = 0.0,
) -> tuple[EmbeddingSet, EmbeddingSet]:
    """Train/test pair drawn around the same class means."""
    _check_synth_args(classes, dim, spread, min(n_train, n_test))
    means = synth_class_means(classes, dim, shift, seed)
    streams = np.random.SeedSequence(seed).spawn(3)
    names = [f"class_{c:02d}" for c in range(classes)]
    sets = []
    for n, stream in ((n_train, streams[1]), (n_test, streams[2])):
        rng = np.random.default_rng(stream)
        feats = np.repeat(means, n, axis=0)
        feats = unit_rows(feats + spread * rng.standard_normal(feats.shape))
        sets.append(
            EmbeddingSet(
                dim=dim,
                features=feats.astype(np.float32),
                labels=np.repeat(np.arange(classes), n),
                class_names=list(names),
                normalized=True,
            )
        )
    return sets[0], sets[1]


# ---------------------------------------------------------------------------
# dataset manifest
# ---------------------------------------------------------------------------


@dataclass
class DatasetManifest:
    """Paths and split for one dataset; paths are relative to the manifest."""

    train: Path
    test: Path
    anchors: Path | None
    split: SplitSpec | None

    def load_train(self) -> EmbeddingSet:
        return read_emb(self.train)

    def load_test(self) -> EmbeddingSet:
        return read_emb(self.test)


def save_manifest(path, train, test, anchors=None, split: SplitSpec | None = None) -> None:
    doc = {
        "train": str(train),
        "test": str(test),
        "anchors": str(anchors) if anchors else None,
        "split": (
            {
                "base": sorted(split.base_classes),
                "new": sorted(split.new_classes),
            }
            if split
            else None
        ),
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def load_manifest(path) -> DatasetManifest:
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"manifest {path} is not valid JSON: {exc}") from exc
    base_dir = path.parent
    for key in ("train", "test"):
        if key not in doc or not isinstance(doc[key], str):
            raise FormatError(f"manifest {path} is missing the {key!r} path")
    split = None
    if doc.get("split"):
        split = SplitSpec(
            frozenset(int(c) for c in doc["split"]["base"]),
            frozenset(int(c) for c in doc["split"]["new"]),
        )
    anchors = doc.get("anchors")
    return DatasetManifest(
        train=base_dir / doc["train"],
        test=base_dir / doc["test"],
        anchors=(base_dir / anchors) if anchors else None,
        split=split,
    )
