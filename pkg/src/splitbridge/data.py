"""Datasets and task sequences: synthetic Gaussian-cluster benchmarks, IDX and
CSV loaders, and the seeded class-to-task split."""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field

import numpy as np

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


@dataclass
class LabeledDataset:
    x: np.ndarray          # (n, d) float64
    y: np.ndarray          # (n,) int64
    num_classes: int

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.int64)
        if self.x.shape[0] != self.y.shape[0]:
            raise ValueError("samples and labels have different lengths")
        if self.y.size and (self.y.min() < 0 or self.y.max() >= self.num_classes):
            raise ValueError("label outside [0, num_classes)")

    def __len__(self) -> int:
        return self.x.shape[0]

    def subset(self, idx) -> "LabeledDataset":
        return LabeledDataset(self.x[idx], self.y[idx], self.num_classes)


@dataclass
class Task:
    """One incremental task: its class-index set and train/test data.

    Labels are in the global (remapped) index space; `classes` is the
    contiguous block this task owns.
    """

    classes: np.ndarray
    train: LabeledDataset
    test: LabeledDataset


@dataclass
class TaskSequence:
    tasks: list[Task]
    remap: dict[int, int] = field(default_factory=dict)  # original -> global label

    @property
    def num_classes(self) -> int:
        return sum(t.classes.size for t in self.tasks)

    @property
    def feature_dim(self) -> int:
        return self.tasks[0].train.x.shape[1]


def gen_synthetic(
    num_classes: int,
    feature_dim: int,
    train_per_class: int,
    test_per_class: int,
    seed: int,
    mean_radius: float = 3.0,
) -> tuple[LabeledDataset, LabeledDataset]:
    """Isotropic unit-variance Gaussian clusters with seeded means.

    Class means are drawn on the hypersphere of the given radius; train and
    test samples come from disjoint draws of one seeded stream.
    """
    if feature_dim < 2:
        raise ValueError("feature_dim must be at least 2")
    if num_classes < 2:
        raise ValueError("need at least 2 classes")
    rng = np.random.default_rng(seed)
    dirs = rng.normal(size=(num_classes, feature_dim))
    means = mean_radius * dirs / np.linalg.norm(dirs, axis=1, keepdims=True)

    def draw(per_class: int) -> LabeledDataset:
        xs, ys = [], []
        for c in range(num_classes):
            xs.append(means[c] + rng.normal(size=(per_class, feature_dim)))
            ys.append(np.full(per_class, c, dtype=np.int64))
        return LabeledDataset(np.vstack(xs), np.concatenate(ys), num_classes)

    return draw(train_per_class), draw(test_per_class)


def _read_exact(f, n: int, what: str) -> bytes:
    buf = f.read(n)
    if len(buf) != n:
        raise ValueError(f"truncated IDX file: needed {n} bytes for {what} "
                         f"at offset {f.tell() - len(buf)}")
    return buf


def load_idx(images_path, labels_path) -> LabeledDataset:
    """Load an IDX image/label file pair (big-endian, magic-checked).

    Pixels are scaled to [0, 1] float64 and flattened; image and label counts
    must agree.
    """
    with open(images_path, "rb") as f:
        magic, count = struct.unpack(">II", _read_exact(f, 8, "image header"))
        if magic != IDX_IMAGES_MAGIC:
            raise ValueError(f"bad image magic 0x{magic:08x} at offset 0")
        rows, cols = struct.unpack(">II", _read_exact(f, 8, "image dims"))
        raw = _read_exact(f, count * rows * cols, "pixel data")
        if f.read(1):
            raise ValueError("trailing bytes after pixel data")
        pixels = np.frombuffer(raw, dtype=np.uint8).reshape(count, rows * cols)
    with open(labels_path, "rb") as f:
        magic, lcount = struct.unpack(">II", _read_exact(f, 8, "label header"))
        if magic != IDX_LABELS_MAGIC:
            raise ValueError(f"bad label magic 0x{magic:08x} at offset 0")
        labels = np.frombuffer(_read_exact(f, lcount, "label data"), dtype=np.uint8)
        if f.read(1):
            raise ValueError("trailing bytes after label data")
    if count != lcount:
        raise ValueError(f"image count {count} != label count {lcount}")
    y = labels.astype(np.int64)
    return LabeledDataset(pixels / 255.0, y, int(y.max()) + 1 if y.size else 0)


def save_idx(ds: LabeledDataset, images_path, labels_path, rows: int, cols: int) -> None:
    """Write a dataset as an IDX pair; features must be [0,1] rows*cols vectors."""
    if ds.x.shape[1] != rows * cols:
        raise ValueError("feature dim does not match rows * cols")
    pixels = np.clip(np.rint(ds.x * 255.0), 0, 255).astype(np.uint8)
    with open(images_path, "wb") as f:
        f.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, len(ds), rows, cols))
        f.write(pixels.tobytes())
    with open(labels_path, "wb") as f:
        f.write(struct.pack(">II", IDX_LABELS_MAGIC, len(ds)))
        f.write(ds.y.astype(np.uint8).tobytes())


def save_csv(ds: LabeledDataset, path) -> None:
    d = ds.x.shape[1]
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["label"] + [f"f{i}" for i in range(d)])
        for label, row in zip(ds.y, ds.x):
            writer.writerow([int(label)] + [repr(float(v)) for v in row])


def load_csv(path) -> LabeledDataset:
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        if not header or header[0] != "label":
            raise ValueError("CSV header must start with 'label'")
        xs, ys = [], []
        for row in reader:
            ys.append(int(row[0]))
            xs.append([float(v) for v in row[1:]])
    y = np.array(ys, dtype=np.int64)
    return LabeledDataset(np.array(xs), y, int(y.max()) + 1 if y.size else 0)


def split_tasks(
    train: LabeledDataset,
    test: LabeledDataset,
    num_tasks: int,
    seed: int,
) -> TaskSequence:
    """Permute classes by seed, chunk into equal groups, remap labels so task t
    owns the contiguous global block [t*k, (t+1)*k)."""
    c = train.num_classes
    if c % num_tasks != 0:
        raise ValueError(f"{c} classes not divisible into {num_tasks} tasks")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(c)
    remap = {int(orig): new for new, orig in enumerate(perm)}
    per = c // num_tasks

    def remapped(ds: LabeledDataset) -> LabeledDataset:
        y = np.array([remap[int(v)] for v in ds.y], dtype=np.int64)
        return LabeledDataset(ds.x, y, c)

    rtrain, rtest = remapped(train), remapped(test)
    tasks = []
    for t in range(num_tasks):
        block = np.arange(t * per, (t + 1) * per, dtype=np.int64)
        tr = rtrain.subset(np.isin(rtrain.y, block))
        te = rtest.subset(np.isin(rtest.y, block))
        tasks.append(Task(block, tr, te))
    return TaskSequence(tasks, remap)


def gen_glyph_images(
    num_classes: int = 10,
    side: int = 8,
    train_per_class: int = 150,
    test_per_class: int = 60,
    seed: int = 0,
    noise: float = 0.15,
) -> tuple[LabeledDataset, LabeledDataset]:
    """Small-image benchmark: one random binary glyph per class, plus pixel
    noise per sample. Serves as a desk-scale stand-in for 28x28 digit sets and
    round-trips through the IDX format."""
    rng = np.random.default_rng(seed)
    glyphs = (rng.random(size=(num_classes, side * side)) > 0.5).astype(np.float64)

    def draw(per_class: int) -> LabeledDataset:
        xs, ys = [], []
        for cls in range(num_classes):
            base = np.tile(glyphs[cls], (per_class, 1))
            x = np.clip(base + rng.normal(0.0, noise, size=base.shape), 0.0, 1.0)
            xs.append(x)
            ys.append(np.full(per_class, cls, dtype=np.int64))
        return LabeledDataset(np.vstack(xs), np.concatenate(ys), num_classes)

    return draw(train_per_class), draw(test_per_class)
