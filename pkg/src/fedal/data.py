"""Datasets, client shards, and the labeled/unlabeled index pools.

A :class:`Dataset` is immutable; clients never copy rows around.  Instead
each client owns a :class:`ClientPools` record of dataset indices, split into
an unlabeled pool and a labeled pool.  Annotation moves indices from one to
the other and reveals the stored ground-truth label (the human oracle of a
real deployment).  All training code materializes batches through
:func:`gather`, which doubles as an audit point for tests that assert no
operation ever touches rows outside a single client's shard.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, EmptyInputError, ParseError, PoolIntegrityError, ShapeError

Array = np.ndarray

PARTITION_MODES = ("iid_disjoint", "label_skew")
EXTERNAL_FORMATS = ("csv_labeled", "idx_images")


@dataclass(frozen=True)
class Dataset:
    """Feature matrix (n, d) with integer labels in [0, class_count)."""

    features: Array
    labels: Array
    class_count: int
    split: str = "train"

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=np.float64)
        labels = np.asarray(self.labels)
        if feats.ndim != 2:
            raise ShapeError(f"features must be 2-D, got ndim={feats.ndim}")
        if labels.ndim != 1:
            raise ShapeError(f"labels must be 1-D, got ndim={labels.ndim}")
        if feats.shape[0] != labels.shape[0]:
            raise ShapeError(f"{feats.shape[0]} feature rows but {labels.shape[0]} labels")
        if feats.shape[0] == 0:
            raise EmptyInputError("dataset must contain at least one example")
        if not np.issubdtype(labels.dtype, np.integer):
            raise ShapeError("labels must be an integer array")
        if labels.min() < 0 or labels.max() >= self.class_count:
            raise ShapeError(
                f"labels must lie in [0, {self.class_count}), got range [{labels.min()}, {labels.max()}]"
            )
        if self.split not in ("train", "test"):
            raise ConfigError(f"split must be 'train' or 'test', got {self.split!r}")
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labels.astype(np.int64))

    @property
    def size(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]


def gather(dataset: Dataset, indices) -> tuple[Array, Array]:
    """Materialize the rows at ``indices``; the single batch-access seam."""
    idx = np.asarray(indices, dtype=np.int64)
    if idx.ndim != 1:
        raise ShapeError("indices must be 1-D")
    return dataset.features[idx], dataset.labels[idx]


@dataclass(frozen=True)
class PartitionSpec:
    """How the training set is split across clients."""

    client_count: int
    mode: str = "iid_disjoint"
    classes_per_client: int | None = None

    def __post_init__(self):
        if not (isinstance(self.client_count, int) and self.client_count >= 1):
            raise ConfigError(f"client_count must be an int >= 1, got {self.client_count}")
        if self.mode not in PARTITION_MODES:
            raise ConfigError(f"unknown partition mode {self.mode!r}; expected one of {PARTITION_MODES}")
        if self.mode == "label_skew":
            if not (isinstance(self.classes_per_client, int) and self.classes_per_client >= 1):
                raise ConfigError("label_skew requires classes_per_client >= 1")


@dataclass
class ClientPools:
    """One client's dataset indices: unlabeled pool, labeled pool, history.

    ``initial_labeled`` records the seed labels; ``history[k]`` records the
    indices annotated during round k.  Both pools stay sorted so batch
    assembly order (and hence floating-point accumulation order) is
    canonical.
    """

    client_id: int
    unlabeled: list[int]
    labeled: list[int] = field(default_factory=list)
    initial_labeled: list[int] = field(default_factory=list)
    history: dict[int, list[int]] = field(default_factory=dict)
    shard: tuple[int, ...] = ()

    def __post_init__(self):
        self.unlabeled = sorted(int(i) for i in self.unlabeled)
        self.labeled = sorted(int(i) for i in self.labeled)
        if not self.shard:
            self.shard = tuple(sorted(self.unlabeled + self.labeled))

    @property
    def labeled_count(self) -> int:
        return len(self.labeled)


BLOB_LAYOUTS = ("circle", "line")


def synth_blobs(n: int, classes: int, dim: int, spread: float, seed, split: str = "train",
                *, layout: str = "circle", elongation: float = 1.0) -> Dataset:
    """Gaussian class clusters with near-balanced labels (counts differ by <= 1).

    Two center layouts in the first two feature dimensions:

    - ``circle`` (default): centers on a radius-3 circle with a small seeded
      jitter and isotropic per-cluster noise, so different seeds give
      different geometry while class separation stays controlled by
      ``spread`` (the per-cluster standard deviation).
    - ``line``: centers evenly spaced one unit apart along the first axis
      and noise on the second axis stretched by ``elongation``.  With large
      elongation the classes become thin parallel bands whose shared
      boundaries are long relative to the sample size, so accuracy keeps
      improving as labels accumulate near the boundaries -- a geometry where
      annotation choices matter even for a small model.

    ``spread=0`` collapses every class onto its center under either layout.
    """
    if classes < 2:
        raise ConfigError(f"need at least 2 classes, got {classes}")
    if n < classes:
        raise ConfigError(f"n={n} is smaller than the class count {classes}")
    if dim < 2:
        raise ConfigError(f"dim must be >= 2, got {dim}")
    if spread < 0:
        raise ConfigError(f"spread must be >= 0, got {spread}")
    if layout not in BLOB_LAYOUTS:
        raise ConfigError(f"layout must be one of {BLOB_LAYOUTS}, got {layout!r}")
    if elongation <= 0:
        raise ConfigError(f"elongation must be > 0, got {elongation}")
    rng = np.random.default_rng(seed)
    centers = np.zeros((classes, dim))
    scale = np.full(dim, spread)
    if layout == "circle":
        angles = 2.0 * np.pi * np.arange(classes) / classes
        centers[:, 0] = 3.0 * np.cos(angles)
        centers[:, 1] = 3.0 * np.sin(angles)
        centers += rng.normal(scale=0.3, size=centers.shape)
    else:
        centers[:, 0] = np.arange(classes) - (classes - 1) / 2.0
        scale[1] = spread * elongation
    labels = np.arange(n, dtype=np.int64) % classes
    points = centers[labels] + scale * rng.standard_normal((n, dim))
    order = rng.permutation(n)
    return Dataset(points[order], labels[order], class_count=classes, split=split)


def _check_contiguous_labels(labels: list[int], lines: list[int], what: str) -> int:
    """Labels must be exactly {0..C-1}; returns C or raises naming the record."""
    for value, line in zip(labels, lines):
        if value < 0:
            raise ParseError(f"{what} {line}: negative label {value}")
    class_count = len(set(labels))
    top = max(labels)
    if top >= class_count:
        for value, line in zip(labels, lines):
            if value >= class_count:
                raise ParseError(
                    f"{what} {line}: label {value} but only {class_count} distinct labels; "
                    f"labels must form 0..{class_count - 1}"
                )
    return class_count


def _load_csv_labeled(path: Path, split: str) -> Dataset:
    rows: list[list[float]] = []
    labels: list[int] = []
    lines: list[int] = []
    width = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            text = raw.strip()
            if not text:
                continue
            parts = text.split(",")
            if len(parts) < 2:
                raise ParseError(f"line {lineno}: expected 'f1,...,fd,label', got {text!r}")
            if width is None:
                width = len(parts)
            elif len(parts) != width:
                raise ParseError(f"line {lineno}: {len(parts)} fields, expected {width}")
            try:
                feats = [float(p) for p in parts[:-1]]
            except ValueError:
                raise ParseError(f"line {lineno}: non-numeric feature in {text!r}") from None
            try:
                label_f = float(parts[-1])
            except ValueError:
                raise ParseError(f"line {lineno}: non-numeric label {parts[-1]!r}") from None
            if label_f != int(label_f):
                raise ParseError(f"line {lineno}: label {parts[-1]!r} is not an integer")
            rows.append(feats)
            labels.append(int(label_f))
            lines.append(lineno)
    if not rows:
        raise ParseError(f"{path}: no data records")
    class_count = _check_contiguous_labels(labels, lines, "line")
    feats = np.asarray(rows, dtype=np.float64)
    # Min-max scale each column into [0, 1]; constant columns map to 0.
    lo = feats.min(axis=0)
    span = feats.max(axis=0) - lo
    scaled = np.where(span > 0, (feats - lo) / np.where(span > 0, span, 1.0), 0.0)
    return Dataset(scaled, np.asarray(labels, dtype=np.int64), class_count=class_count, split=split)


def _read_idx(path: Path, expect_dims: int) -> Array:
    raw = path.read_bytes()
    if len(raw) < 4:
        raise ParseError(f"{path}: truncated IDX header")
    zero1, zero2, dtype, ndim = raw[0], raw[1], raw[2], raw[3]
    if zero1 != 0 or zero2 != 0:
        raise ParseError(f"{path}: bad IDX magic {raw[:4].hex()}")
    if dtype != 0x08:
        raise ParseError(f"{path}: unsupported IDX data type 0x{dtype:02x} (only unsigned byte)")
    if ndim != expect_dims:
        raise ParseError(f"{path}: expected {expect_dims}-dimensional IDX data, got {ndim}")
    header_end = 4 + 4 * ndim
    if len(raw) < header_end:
        raise ParseError(f"{path}: truncated IDX dimension header")
    dims = struct.unpack(f">{ndim}I", raw[4:header_end])
    expected = int(np.prod(dims))
    body = np.frombuffer(raw, dtype=np.uint8, offset=header_end)
    if body.size != expected:
        raise ParseError(f"{path}: expected {expected} data bytes, found {body.size}")
    return body.reshape(dims)


def _load_idx_images(path: Path, labels_path: Path | None, split: str) -> Dataset:
    if labels_path is None:
        guess = Path(str(path).replace("images", "labels").replace("idx3", "idx1"))
        if guess == path or not guess.exists():
            raise ParseError(
                f"{path}: cannot infer the matching labels file; pass labels_path explicitly"
            )
        labels_path = guess
    images = _read_idx(path, expect_dims=3)
    labels = _read_idx(labels_path, expect_dims=1)
    if images.shape[0] != labels.shape[0]:
        raise ParseError(
            f"{path}: {images.shape[0]} images but {labels.shape[0]} labels in {labels_path}"
        )
    label_list = [int(v) for v in labels]
    class_count = _check_contiguous_labels(label_list, list(range(len(label_list))), "record")
    feats = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    return Dataset(feats, np.asarray(label_list, dtype=np.int64), class_count=class_count, split=split)


def load_external(path, fmt: str, labels_path=None, split: str = "train") -> Dataset:
    """Load a dataset from disk; ``fmt`` is one of ``csv_labeled`` / ``idx_images``."""
    if fmt not in EXTERNAL_FORMATS:
        raise ConfigError(f"unknown external format {fmt!r}; expected one of {EXTERNAL_FORMATS}")
    p = Path(path)
    if not p.exists():
        raise ParseError(f"{p}: file not found")
    if fmt == "csv_labeled":
        return _load_csv_labeled(p, split)
    return _load_idx_images(p, Path(labels_path) if labels_path else None, split)


def partition(dataset: Dataset, spec: PartitionSpec, seed) -> list[ClientPools]:
    """Split the training set into disjoint per-client shards (all unlabeled)."""
    n = dataset.size
    m = spec.client_count
    if m > n:
        raise ConfigError(f"cannot split {n} examples across {m} clients")
    rng = np.random.default_rng(seed)
    if spec.mode == "iid_disjoint":
        perm = rng.permutation(n)
        chunks = np.array_split(perm, m)
    else:
        s = spec.classes_per_client
        c = dataset.class_count
        if s > c:
            raise ConfigError(f"classes_per_client={s} exceeds class count {c}")
        if m * s < c:
            raise ConfigError(
                f"label_skew with {m} clients x {s} classes cannot cover {c} classes"
            )
        # Client m owns s consecutive classes (cyclically); each class's rows
        # are dealt round-robin among its owners.
        owners: dict[int, list[int]] = {cls: [] for cls in range(c)}
        for client in range(m):
            for j in range(s):
                owners[(client * s + j) % c].append(client)
        shards: list[list[int]] = [[] for _ in range(m)]
        for cls in range(c):
            cls_idx = rng.permutation(np.flatnonzero(dataset.labels == cls))
            for i, idx in enumerate(cls_idx):
                shards[owners[cls][i % len(owners[cls])]].append(int(idx))
        chunks = shards
        if any(len(sh) == 0 for sh in shards):
            raise ConfigError("label_skew produced an empty shard; adjust clients/classes_per_client")
    return [
        ClientPools(client_id=i, unlabeled=[int(v) for v in chunk])
        for i, chunk in enumerate(chunks)
    ]


def seed_initial_labels(pools: list[ClientPools], fraction: float, seed) -> list[ClientPools]:
    """Reveal a uniform random ``fraction`` of each shard as the starting labels.

    Per-client counts use round-half-even of ``fraction * shard_size`` and
    must come out >= 1.
    """
    if not (0.0 < fraction <= 1.0):
        raise ConfigError(f"initial label fraction must lie in (0, 1], got {fraction}")
    rng = np.random.default_rng(seed)
    for pool in pools:
        if pool.labeled or pool.initial_labeled:
            raise PoolIntegrityError(f"client {pool.client_id} already has labels")
        size = len(pool.unlabeled)
        count = int(round(fraction * size))
        if count < 1:
            raise ConfigError(
                f"client {pool.client_id}: fraction {fraction} of shard size {size} rounds to zero labels"
            )
        chosen = sorted(int(v) for v in rng.choice(pool.unlabeled, size=count, replace=False))
        chosen_set = set(chosen)
        pool.unlabeled = [i for i in pool.unlabeled if i not in chosen_set]
        pool.labeled = chosen
        pool.initial_labeled = list(chosen)
    return pools


def annotate(pools: list[ClientPools], client: int, selected, round_index: int, dataset: Dataset) -> Array:
    """Move ``selected`` from a client's unlabeled pool to its labeled pool.

    Returns the revealed ground-truth labels.  Raises
    :class:`PoolIntegrityError` if any index is not currently unlabeled for
    that client (already annotated, or foreign to the shard).
    """
    if not 0 <= client < len(pools):
        raise ConfigError(f"client index {client} out of range for {len(pools)} pools")
    pool = pools[client]
    sel = [int(i) for i in selected]
    if len(sel) != len(set(sel)):
        raise PoolIntegrityError(f"client {client}: duplicate indices in selection")
    if not sel:
        return np.empty(0, dtype=np.int64)
    unlabeled_set = set(pool.unlabeled)
    for idx in sel:
        if idx not in unlabeled_set:
            kind = "already labeled" if idx in pool.labeled else "not in this client's pool"
            raise PoolIntegrityError(f"client {client}: index {idx} is {kind}")
    sel = sorted(sel)
    sel_set = set(sel)
    pool.unlabeled = [i for i in pool.unlabeled if i not in sel_set]
    pool.labeled = sorted(pool.labeled + sel)
    pool.history.setdefault(round_index, [])
    pool.history[round_index] = sorted(pool.history[round_index] + sel)
    return dataset.labels[np.asarray(sel, dtype=np.int64)].copy()
