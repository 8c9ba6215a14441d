"""Sample pool: feature vectors, hidden labels and annotation state.

Two on-disk formats are supported:

* CSV with header ``id,label,f0,...,f{d-1}``
* binary "OALF": magic ``b"OALF"``, version (u16), n (u64), d (u32), then n
  records of (id u64, label i32, d float32), all little-endian.
"""

import csv
import math
import struct
from dataclasses import dataclass, field

import numpy as np

UNLABELED = 0
LABELED_TARGET = 1
QUERIED_NONTARGET = 2

OALF_MAGIC = b"OALF"
OALF_VERSION = 1
_HEADER = struct.Struct("<4sHQI")


class PoolError(ValueError):
    """Invalid pool content or an illegal annotation transition."""


class PoolFormatError(PoolError):
    """A pool file could not be parsed."""


@dataclass(frozen=True)
class SampleRecord:
    id: int
    features: np.ndarray
    true_label: int


class SamplePool:
    """All samples of one experiment plus their annotation state.

    Rows are kept sorted by id, so row order is id order everywhere. The true
    labels live in ``_labels``; strategies must not read them (the engine goes
    through :class:`openal.engine.OracleView`).
    """

    def __init__(self, ids, features, labels, target_classes=(), n_classes=None):
        ids = np.asarray(ids, dtype=np.int64).reshape(-1)
        features = np.asarray(features, dtype=np.float64)
        labels = np.asarray(labels, dtype=np.int64).reshape(-1)
        if features.ndim != 2:
            raise PoolError("features must be a 2-d array")
        if not (len(ids) == len(labels) == features.shape[0]):
            raise PoolError("ids, labels and features disagree in length")
        if features.shape[1] < 1:
            raise PoolError("feature dimension must be >= 1")
        if len(ids) and ids.min() < 0:
            raise PoolError("ids must be non-negative")
        if len(np.unique(ids)) != len(ids):
            raise PoolError("duplicate sample ids")
        if len(labels) and labels.min() < 0:
            raise PoolError("labels must be non-negative")

        order = np.argsort(ids, kind="stable")
        self.ids = ids[order]
        self.features = np.ascontiguousarray(features[order])
        self._labels = labels[order]
        self.target_classes = tuple(sorted(int(c) for c in target_classes))
        if len(set(self.target_classes)) != len(self.target_classes):
            raise PoolError("duplicate target classes")
        top = int(self._labels.max()) + 1 if len(self._labels) else 0
        if self.target_classes:
            top = max(top, self.target_classes[-1] + 1)
        self.n_classes = top if n_classes is None else int(n_classes)
        if self.n_classes < top:
            raise PoolError("n_classes smaller than the largest label")
        self.state = np.zeros(len(self.ids), dtype=np.int8)
        self.fine = np.full(len(self.ids), -1, dtype=np.int64)
        self._pos = {int(i): p for p, i in enumerate(self.ids)}

    # -- shape ---------------------------------------------------------------

    def __len__(self):
        return len(self.ids)

    def __iter__(self):
        for p in range(len(self.ids)):
            yield self.record(p)

    def record(self, pos):
        return SampleRecord(int(self.ids[pos]), self.features[pos], int(self._labels[pos]))

    @property
    def dim(self):
        return self.features.shape[1]

    @property
    def target_class_count(self):
        return len(self.target_classes)

    @property
    def nontarget_class_count(self):
        return self.n_classes - len(self.target_classes)

    def positions(self, ids):
        try:
            return np.array([self._pos[int(i)] for i in ids], dtype=np.int64)
        except KeyError as exc:
            raise PoolError(f"unknown sample id {exc.args[0]}") from None

    def subset(self, positions):
        positions = np.asarray(positions, dtype=np.int64)
        sub = SamplePool(
            self.ids[positions],
            self.features[positions],
            self._labels[positions],
            self.target_classes,
            self.n_classes,
        )
        order = np.argsort(self.ids[positions], kind="stable")
        sub.state[:] = self.state[positions][order]
        sub.fine[:] = self.fine[positions][order]
        return sub

    def copy(self):
        return self.subset(np.arange(len(self)))

    # -- annotation state ------------------------------------------------------

    def unlabeled(self):
        return np.flatnonzero(self.state == UNLABELED)

    def labeled_target(self):
        return np.flatnonzero(self.state == LABELED_TARGET)

    def queried_nontarget(self):
        return np.flatnonzero(self.state == QUERIED_NONTARGET)

    def mark_target(self, pos, fine):
        if self.state[pos] != UNLABELED:
            raise PoolError(f"sample {int(self.ids[pos])} is already annotated")
        if not 0 <= fine < self.target_class_count:
            raise PoolError(f"fine class {fine} outside [0, {self.target_class_count})")
        self.state[pos] = LABELED_TARGET
        self.fine[pos] = fine

    def mark_nontarget(self, pos):
        if self.state[pos] != UNLABELED:
            raise PoolError(f"sample {int(self.ids[pos])} is already annotated")
        self.state[pos] = QUERIED_NONTARGET

    def check_partition(self):
        """Raise if some sample is not in exactly one of U, L_t, L_n."""
        u = self.state == UNLABELED
        lt = self.state == LABELED_TARGET
        ln = self.state == QUERIED_NONTARGET
        if not np.all(u.astype(int) + lt + ln == 1):
            raise PoolError("annotation state outside {U, L_t, L_n}")
        if np.any(self.fine[lt] < 0) or np.any(self.fine[~lt] != -1):
            raise PoolError("fine labels inconsistent with annotation state")
        if u.sum() + lt.sum() + ln.sum() != len(self):
            raise PoolError("partition does not cover the pool")

    def class_histogram(self):
        return np.bincount(self._labels, minlength=self.n_classes)


# -- CSV -----------------------------------------------------------------------


def load_csv(path, target_classes=(), n_classes=None):
    """Read a pool from ``id,label,f0,...`` CSV. All samples start unlabeled."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise PoolFormatError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        d = len(header) - 2
        expected = ["id", "label"] + [f"f{j}" for j in range(d)]
        if d < 1 or header != expected:
            raise PoolFormatError(f"{path}: row 1: malformed header, expected id,label,f0,...")

        ids, labels, feats, seen = [], [], [], {}
        for rowno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != d + 2:
                raise PoolFormatError(
                    f"{path}: row {rowno}: expected {d + 2} fields, got {len(row)}"
                )
            try:
                sid = int(row[0])
                lab = int(row[1])
            except ValueError:
                raise PoolFormatError(f"{path}: row {rowno}: id/label must be integers") from None
            try:
                vec = [float(x) for x in row[2:]]
            except ValueError:
                raise PoolFormatError(f"{path}: row {rowno}: non-numeric feature") from None
            if sid < 0 or lab < 0:
                raise PoolFormatError(f"{path}: row {rowno}: negative id or label")
            if sid in seen:
                raise PoolFormatError(
                    f"{path}: row {rowno}: duplicate id {sid} (first seen on row {seen[sid]})"
                )
            seen[sid] = rowno
            ids.append(sid)
            labels.append(lab)
            feats.append(vec)

    features = np.array(feats, dtype=np.float64).reshape(len(ids), d)
    return SamplePool(ids, features, labels, target_classes, n_classes)


def write_csv(pool, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["id", "label"] + [f"f{j}" for j in range(pool.dim)])
        for p in range(len(pool)):
            w.writerow(
                [int(pool.ids[p]), int(pool._labels[p])] + [repr(float(x)) for x in pool.features[p]]
            )


# -- binary --------------------------------------------------------------------


def _record_dtype(d):
    return np.dtype([("id", "<u8"), ("label", "<i4"), ("f", "<f4", (d,))])


def write_binary(pool, path):
    rec = np.zeros(len(pool), dtype=_record_dtype(pool.dim))
    rec["id"] = pool.ids
    rec["label"] = pool._labels
    rec["f"] = pool.features.astype(np.float32)
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(OALF_MAGIC, OALF_VERSION, len(pool), pool.dim))
        fh.write(rec.tobytes())


def load_binary(path, target_classes=(), n_classes=None):
    """Read an OALF pool file; float32 features are widened to float64."""
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 4 or blob[:4] != OALF_MAGIC:
        raise PoolFormatError(f"{path}: bad magic {blob[:4]!r}, expected {OALF_MAGIC!r}")
    if len(blob) < _HEADER.size:
        raise PoolFormatError(f"{path}: truncated header")
    _, version, n, d = _HEADER.unpack_from(blob)
    if version != OALF_VERSION:
        raise PoolFormatError(f"{path}: unsupported OALF version {version}")
    if d < 1:
        raise PoolFormatError(f"{path}: dimension must be >= 1")
    dt = _record_dtype(d)
    need = _HEADER.size + n * dt.itemsize
    if len(blob) < need:
        raise PoolFormatError(f"{path}: truncated, expected {need} bytes, got {len(blob)}")
    if len(blob) > need:
        raise PoolFormatError(f"{path}: {len(blob) - need} trailing bytes after {n} records")
    rec = np.frombuffer(blob, dtype=dt, count=n, offset=_HEADER.size)
    if n and rec["id"].max() > np.iinfo(np.int64).max:
        raise PoolFormatError(f"{path}: id out of range")
    return SamplePool(
        rec["id"].astype(np.int64),
        rec["f"].astype(np.float64),
        rec["label"].astype(np.int64),
        target_classes,
        n_classes,
    )


def load_pool(path, target_classes=(), n_classes=None):
    """Dispatch on the file content: OALF magic means binary, otherwise CSV."""
    with open(path, "rb") as fh:
        head = fh.read(4)
    if head == OALF_MAGIC:
        return load_binary(path, target_classes, n_classes)
    return load_csv(path, target_classes, n_classes)


# -- synthetic pools -------------------------------------------------------------


@dataclass
class SynthSpec:
    """Per-class Gaussian blobs; class ``c`` is N(means[c], scales[c]^2 I)."""

    counts: list
    means: np.ndarray
    scales: list
    target_classes: tuple
    seed: int = 0
    dim: int = field(init=False)

    def __post_init__(self):
        self.means = np.atleast_2d(np.asarray(self.means, dtype=np.float64))
        self.dim = self.means.shape[1]
        self.counts = [int(c) for c in self.counts]
        if np.ndim(self.scales) == 0:
            self.scales = [float(self.scales)] * len(self.counts)
        self.scales = [float(s) for s in self.scales]
        self.target_classes = tuple(sorted(int(t) for t in self.target_classes))
        self.validate()

    def validate(self):
        n_cls = len(self.counts)
        if n_cls < 1 or self.means.shape[0] != n_cls or len(self.scales) != n_cls:
            raise PoolError("counts, means and scales must describe the same classes")
        if any(c <= 0 for c in self.counts):
            raise PoolError("class counts must be positive")
        if self.dim < 1:
            raise PoolError("dimension must be >= 1")
        if any(s < 0 for s in self.scales):
            raise PoolError("scales must be non-negative")
        if not self.target_classes or any(not 0 <= t < n_cls for t in self.target_classes):
            raise PoolError("target classes must be a non-empty subset of the classes")
        if len(set(self.target_classes)) != len(self.target_classes):
            raise PoolError("duplicate target classes")


def make_synth_spec(n_classes, count, dim, target_classes, scale=1.0, separation=4.0, seed=0):
    """Random class means whose pairwise distances are all >= separation * scale."""
    rng = np.random.default_rng([seed, 1])
    means = rng.normal(size=(n_classes, dim))
    if n_classes > 1:
        diff = means[:, None, :] - means[None, :, :]
        dist = np.sqrt((diff**2).sum(axis=2))
        closest = dist[~np.eye(n_classes, dtype=bool)].min()
        means *= separation * max(scale, 1e-12) / closest
    counts = [count] * n_classes if np.ndim(count) == 0 else list(count)
    return SynthSpec(counts, means, scale, tuple(target_classes), seed)


def synth_pool(spec):
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    blocks, labels = [], []
    for c, (n, mu, s) in enumerate(zip(spec.counts, spec.means, spec.scales)):
        blocks.append(mu + s * rng.standard_normal((n, spec.dim)))
        labels.append(np.full(n, c, dtype=np.int64))
    features = np.vstack(blocks)
    labels = np.concatenate(labels)
    ids = np.arange(len(labels), dtype=np.int64)
    return SamplePool(ids, features, labels, spec.target_classes, len(spec.counts))


# -- test split ------------------------------------------------------------------


def stratified_count(fraction, n):
    """floor(fraction * n), at least 1; the epsilon absorbs binary rounding of fraction."""
    return max(1, int(math.floor(fraction * n + 1e-9)))


def split_test(pool, fraction, seed):
    """Hold out a stratified share of every target class as a test pool.

    Non-target samples always stay in the training pool.
    """
    if not 0.0 < fraction < 1.0:
        raise PoolError(f"test fraction must be in (0, 1), got {fraction}")
    rng = np.random.default_rng(seed)
    test_pos = []
    for t in pool.target_classes:
        members = np.flatnonzero(pool._labels == t)
        if len(members) == 0:
            raise PoolError(f"target class {t} has no samples")
        k = stratified_count(fraction, len(members))
        test_pos.append(np.sort(rng.choice(members, size=k, replace=False)))
    test_pos = np.concatenate(test_pos) if test_pos else np.empty(0, dtype=np.int64)
    keep = np.ones(len(pool), dtype=bool)
    keep[test_pos] = False
    return pool.subset(np.flatnonzero(keep)), pool.subset(np.sort(test_pos))
