"""Feature datasets: validation, CSV/binary I/O, stratified splits, synthetic data."""
import csv
import io
import os
import struct
from dataclasses import dataclass, field, replace

import numpy as np

from . import rng as rngmod
from .errors import (DimensionError, EmptyDatasetError, FormatError,
                     ParameterError, ParseError, StratificationError)

SPLITS = ("train", "val", "test")
SPLIT_CODES = {"train": 0, "val": 1, "test": 2, "": 255}
UNASSIGNED = 255
DEFAULT_RATIOS = (0.70, 0.10, 0.20)

MAGIC = b"GRFD"
VERSION = 1


@dataclass(frozen=True)
class FeatureDataset:
    ids: list
    labels: np.ndarray  # uint32, values 0..C-1
    splits: np.ndarray  # uint8 split codes
    features: np.ndarray  # float32, (n, d)
    class_names: list = field(default_factory=list)

    def __post_init__(self):
        object.__setattr__(self, "ids", list(self.ids))
        object.__setattr__(self, "labels", np.ascontiguousarray(self.labels, dtype=np.uint32))
        object.__setattr__(self, "splits", np.ascontiguousarray(self.splits, dtype=np.uint8))
        object.__setattr__(self, "features", np.ascontiguousarray(self.features, dtype=np.float32))
        if not self.class_names and self.labels.size:
            object.__setattr__(self, "class_names",
                               [str(c) for c in range(int(self.labels.max()) + 1)])
        validate(self)

    @property
    def n(self):
        return self.features.shape[0]

    @property
    def d(self):
        return self.features.shape[1]

    @property
    def n_classes(self):
        return len(self.class_names)

    def split_mask(self, *names):
        codes = [SPLIT_CODES[s] for s in names]
        return np.isin(self.splits, codes)

    def split_counts(self):
        return {s: int(np.sum(self.splits == SPLIT_CODES[s])) for s in SPLITS} | {
            "unassigned": int(np.sum(self.splits == UNASSIGNED))}

    def __eq__(self, other):
        if not isinstance(other, FeatureDataset):
            return NotImplemented
        return (self.ids == other.ids and self.class_names == other.class_names
                and np.array_equal(self.labels, other.labels)
                and np.array_equal(self.splits, other.splits)
                and self.features.shape == other.features.shape
                and self.features.tobytes() == other.features.tobytes())

    def summary(self):
        c = self.split_counts()
        return (f"n={self.n} d={self.d} C={self.n_classes} train={c['train']} "
                f"val={c['val']} test={c['test']} unassigned={c['unassigned']}")


def validate(ds):
    if ds.features.ndim != 2:
        raise DimensionError("features must be a 2-d array")
    n, d = ds.features.shape
    if n == 0:
        raise EmptyDatasetError("dataset has no items")
    if d < 1:
        raise DimensionError("feature dimension must be >= 1")
    if len(ds.ids) != n or ds.labels.shape != (n,) or ds.splits.shape != (n,):
        raise DimensionError("ids, labels, splits and features disagree on n")
    if len(set(ds.ids)) != n:
        raise FormatError("item ids are not unique")
    if not np.all(np.isfinite(ds.features)):
        raise FormatError("features contain NaN or infinite values")
    present = np.unique(ds.labels)
    C = len(ds.class_names)
    if present[-1] >= C or len(present) != C:
        raise FormatError(f"labels must cover the contiguous range 0..{C - 1}")
    bad = ~np.isin(ds.splits, [0, 1, 2, UNASSIGNED])
    if bad.any():
        raise FormatError(f"invalid split code at item {int(np.argmax(bad))}")


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------


def load_csv(path):
    with open(path, "r", encoding="utf-8", newline="") as fh:
        return _parse_csv(fh, str(path))


def _parse_csv(fh, name):
    reader = csv.reader(fh)
    try:
        header = next(reader)
    except StopIteration:
        raise FormatError(f"{name}: empty file") from None
    header = [h.strip() for h in header]
    d = len(header) - 3
    if header[:3] != ["id", "label", "split"] or d < 1 or header[3:] != [f"f{i}" for i in range(d)]:
        raise FormatError(f"{name}: header must be id,label,split,f0,...,f{{d-1}}")
    ids, labels, splits, rows = [], [], [], []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != d + 3:
            raise DimensionError(f"{name}: row {lineno} has {len(row) - 3} features, expected {d}")
        try:
            label = int(row[1])
        except ValueError:
            raise ParseError(f"{name}: row {lineno}: bad label {row[1]!r}") from None
        if label < 0:
            raise ParseError(f"{name}: row {lineno}: negative label")
        split = row[2].strip()
        if split not in SPLIT_CODES:
            raise ParseError(f"{name}: row {lineno}: bad split {split!r}")
        try:
            feats = [float(v) for v in row[3:]]
        except ValueError:
            raise ParseError(f"{name}: row {lineno}: non-numeric feature") from None
        ids.append(row[0])
        labels.append(label)
        splits.append(SPLIT_CODES[split])
        rows.append(feats)
    if not rows:
        raise EmptyDatasetError(f"{name}: no data rows")
    return FeatureDataset(ids, np.array(labels), np.array(splits),
                          np.array(rows, dtype=np.float32))


def save_csv(ds, path):
    inv = {v: k for k, v in SPLIT_CODES.items()}
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "label", "split"] + [f"f{i}" for i in range(ds.d)])
        for i in range(ds.n):
            w.writerow([ds.ids[i], int(ds.labels[i]), inv[int(ds.splits[i])]]
                       + [np.format_float_positional(v, unique=True, trim="-")
                          for v in ds.features[i]])


# ---------------------------------------------------------------------------
# binary
# ---------------------------------------------------------------------------


def _put_str(buf, s):
    b = s.encode("utf-8")
    buf.write(struct.pack("<I", len(b)))
    buf.write(b)


def dataset_to_bytes(ds):
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<IQQQ", VERSION, ds.n, ds.d, ds.n_classes))
    buf.write(ds.features.astype("<f4").tobytes())
    buf.write(ds.labels.astype("<u4").tobytes())
    buf.write(ds.splits.astype("u1").tobytes())
    for s in ds.ids:
        _put_str(buf, s)
    for s in ds.class_names:
        _put_str(buf, s)
    return buf.getvalue()


class Reader:
    """Bounds-checked little-endian reader shared by the binary formats."""

    def __init__(self, data, name):
        self.data = memoryview(data)
        self.pos = 0
        self.name = name

    def take(self, nbytes):
        if nbytes < 0 or self.pos + nbytes > len(self.data):
            raise FormatError(f"{self.name}: truncated payload")
        out = self.data[self.pos:self.pos + nbytes]
        self.pos += nbytes
        return out

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def array(self, dtype, count):
        dt = np.dtype(dtype)
        return np.frombuffer(self.take(dt.itemsize * count), dtype=dt).copy()

    def string(self):
        (ln,) = self.unpack("<I")
        try:
            return bytes(self.take(ln)).decode("utf-8")
        except UnicodeDecodeError:
            raise FormatError(f"{self.name}: invalid UTF-8 string") from None

    def header(self, magic, version):
        if bytes(self.take(4)) != magic:
            raise FormatError(f"{self.name}: bad magic, expected {magic.decode()}")
        (ver,) = self.unpack("<I")
        if ver != version:
            raise FormatError(f"{self.name}: unsupported version {ver}")

    def finish(self):
        if self.pos != len(self.data):
            raise FormatError(f"{self.name}: trailing bytes")


def dataset_from_bytes(data, name="<bytes>"):
    r = Reader(data, name)
    r.header(MAGIC, VERSION)
    n, d, C = r.unpack("<QQQ")
    if n == 0:
        raise EmptyDatasetError(f"{name}: dataset has n=0")
    if n * d * 4 > len(data):
        raise FormatError(f"{name}: truncated payload")
    feats = r.array("<f4", n * d).reshape(n, d)
    labels = r.array("<u4", n)
    splits = r.array("u1", n)
    ids = [r.string() for _ in range(n)]
    names = [r.string() for _ in range(C)]
    r.finish()
    return FeatureDataset(ids, labels, splits, feats, names)


def write_atomic(path, data):
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)


def save_binary(ds, path):
    write_atomic(path, dataset_to_bytes(ds))


def load_binary(path):
    with open(path, "rb") as fh:
        return dataset_from_bytes(fh.read(), str(path))


def load_any(path):
    """Load a dataset from ``.csv`` or the binary format."""
    if str(path).lower().endswith(".csv"):
        return load_csv(path)
    return load_binary(path)


# ---------------------------------------------------------------------------
# splits and synthetic data
# ---------------------------------------------------------------------------


def _check_ratios(ratios):
    r = np.asarray(ratios, dtype=np.float64)
    if r.shape != (3,) or np.any(r <= 0) or np.any(r >= 1) or abs(r.sum() - 1.0) > 1e-9:
        raise ParameterError(f"split ratios must be three fractions in (0,1) summing to 1, got {ratios}")
    return r


def split_sizes(m, ratios):
    """Per-split counts for a class of size ``m`` (largest-remainder rounding)."""
    exact = np.asarray(ratios) * m
    counts = np.floor(exact).astype(np.int64)
    rem = exact - counts
    for s in np.argsort(-rem, kind="stable")[: m - counts.sum()]:
        counts[s] += 1
    # every split gets at least one member of every class
    for s in range(3):
        if counts[s] == 0:
            counts[np.argmax(counts)] -= 1
            counts[s] = 1
    return counts


def assign_splits(ds, ratios=DEFAULT_RATIOS, seed=0):
    r = _check_ratios(ratios)
    stream = rngmod.RngStream(seed, rngmod.SPLIT)
    splits = np.empty(ds.n, dtype=np.uint8)
    for c in range(ds.n_classes):
        members = np.nonzero(ds.labels == c)[0]
        if members.size < 3:
            raise StratificationError(
                f"class {ds.class_names[c]!r} has {members.size} members; at least 3 are needed")
        counts = split_sizes(members.size, r)
        shuffled = members[stream.permutation(members.size)]
        splits[shuffled] = np.repeat(np.arange(3, dtype=np.uint8), counts)
    return replace(ds, splits=splits)


def synth_clusters(n_per_class, classes, d, separation, noise_sigma, seed=0):
    """Isotropic Gaussian clusters centred at ``separation * e_c``."""
    if n_per_class < 1 or classes < 1 or d < 1:
        raise ParameterError("n_per_class, classes and d must all be >= 1")
    if separation <= 0 or noise_sigma < 0:
        raise ParameterError("separation must be > 0 and noise_sigma >= 0")
    if d < classes:
        raise DimensionError(f"d={d} is smaller than classes={classes}; orthogonal centres impossible")
    stream = rngmod.RngStream(seed, rngmod.SYNTH)
    n = n_per_class * classes
    labels = np.repeat(np.arange(classes), n_per_class)
    centers = separation * np.eye(classes, d)
    feats = centers[labels] + noise_sigma * stream.normal((n, d))
    width = len(str(n - 1))
    ids = [f"item{i:0{width}d}" for i in range(n)]
    return FeatureDataset(ids, labels, np.full(n, UNASSIGNED), feats.astype(np.float32),
                          [f"class{c}" for c in range(classes)])
