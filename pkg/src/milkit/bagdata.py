"""Data ingestion and generation.

Covers the IDX digit files, construction of synthetic digit bags (a bag is
positive iff it contains at least one image of digit 1), the on-disk bag
dataset format, and deterministic stratified k-fold splitting.

On-disk dataset layout::

    <dir>/manifest.csv     header: bag_id,label,num_instances,dim,path
                           (optional extra column: instance_refs, entries
                           joined by ';')
    <dir>/bags/*.csv       one file per bag, one instance per row, decimal
                           floats (shortest round-trip form)

Floats are written with repr() so that load(save(ds)) reproduces every value
bit for bit.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError, ValidationError
from .models import Bag
from .rng import Xoshiro256StarStar

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801

MANIFEST_NAME = "manifest.csv"
_MANIFEST_FIELDS = ["bag_id", "label", "num_instances", "dim", "path"]


@dataclass
class MnistSet:
    """Flattened digit images scaled to [0, 1], with digit labels 0-9."""

    images: np.ndarray  # [N x D] float64
    labels: np.ndarray  # [N] uint8

    def __post_init__(self):
        if self.images.shape[0] != self.labels.shape[0]:
            raise DataError(
                f"{self.images.shape[0]} images but {self.labels.shape[0]} labels"
            )

    def __len__(self) -> int:
        return self.images.shape[0]


def _read_file(path) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc


def load_mnist_idx(images_path, labels_path) -> MnistSet:
    """Parse a big-endian IDX image/label file pair.

    Validates the published magic numbers (0x00000803 / 0x00000801), exact
    payload lengths, and that both files agree on the item count. Pixels are
    scaled from 0-255 to 0-1; images are flattened to rows x cols features.
    """
    img_buf = _read_file(images_path)
    if len(img_buf) < 16:
        raise DataError(f"{images_path}: truncated IDX header")
    magic, count, rows, cols = struct.unpack(">IIII", img_buf[:16])
    if magic != IDX_IMAGES_MAGIC:
        raise DataError(
            f"{images_path}: bad magic 0x{magic:08x}, expected 0x{IDX_IMAGES_MAGIC:08x}"
        )
    expected = 16 + count * rows * cols
    if len(img_buf) != expected:
        raise DataError(
            f"{images_path}: {len(img_buf)} bytes, header implies {expected}"
        )

    lab_buf = _read_file(labels_path)
    if len(lab_buf) < 8:
        raise DataError(f"{labels_path}: truncated IDX header")
    magic, lab_count = struct.unpack(">II", lab_buf[:8])
    if magic != IDX_LABELS_MAGIC:
        raise DataError(
            f"{labels_path}: bad magic 0x{magic:08x}, expected 0x{IDX_LABELS_MAGIC:08x}"
        )
    if len(lab_buf) != 8 + lab_count:
        raise DataError(
            f"{labels_path}: {len(lab_buf)} bytes, header implies {8 + lab_count}"
        )
    if count != lab_count:
        raise DataError(
            f"image/label count mismatch: {count} images vs {lab_count} labels"
        )

    images = np.frombuffer(img_buf, dtype=np.uint8, offset=16).astype(np.float64)
    images = (images / 255.0).reshape(count, rows * cols)
    labels = np.frombuffer(lab_buf, dtype=np.uint8, offset=8).copy()
    if labels.size and labels.max() > 9:
        raise DataError(f"{labels_path}: label {labels.max()} outside digits 0-9")
    return MnistSet(images=images, labels=labels)


@dataclass
class BagDataset:
    bags: list[Bag]
    dim: int
    class_counts: dict[int, int]


def make_dataset(bags: list[Bag]) -> BagDataset:
    if not bags:
        raise DataError("dataset must contain at least one bag")
    dim = bags[0].dim
    seen = set()
    counts = {0: 0, 1: 0}
    for bag in bags:
        if bag.dim != dim:
            raise DataError(f"bag {bag.id!r} has width {bag.dim}, dataset uses {dim}")
        if bag.id in seen:
            raise DataError(f"duplicate bag id {bag.id!r}")
        seen.add(bag.id)
        counts[bag.label] += 1
    return BagDataset(bags=bags, dim=dim, class_counts=counts)


# -- synthetic digit bags ------------------------------------------------------

POSITIVE_DIGIT = 1


def instance_ref(source_index: int, digit: int) -> str:
    """Provenance string for one sampled image: 'mnist:<index>:<digit>'."""
    return f"mnist:{source_index}:{digit}"


def ref_digit(ref: str) -> int:
    """Digit recorded in an instance ref."""
    try:
        return int(ref.rsplit(":", 1)[1])
    except (IndexError, ValueError) as exc:
        raise DataError(f"malformed instance ref {ref!r}") from exc


def generate_mnist_bags(
    digits: MnistSet,
    n_bags: int = 5000,
    bag_size: int = 10,
    seed: int = 0,
    positive_count_range: tuple[int, int] = (1, 4),
) -> BagDataset:
    """Sample a balanced bag dataset from a digit collection.

    Exactly half the bags are positive and contain c images of digit 1, with
    c uniform over `positive_count_range`; the remaining instances (and all
    instances of negative bags) are drawn from the non-1 digits. Sampling is
    uniform with replacement across bags; each bag's instance order is
    shuffled so positives are not positionally encoded. Ground truth is kept
    per instance in ``instance_refs``.
    """
    if n_bags < 2 or n_bags % 2 != 0:
        raise ValidationError(f"n_bags must be a positive even number, got {n_bags}")
    if bag_size < 1:
        raise ValidationError(f"bag_size must be >= 1, got {bag_size}")
    lo, hi = (int(positive_count_range[0]), int(positive_count_range[1]))
    if lo < 1 or hi < lo or hi >= bag_size:
        raise ValidationError(
            f"positive_count_range {positive_count_range} invalid: need "
            f"1 <= min <= max < bag_size ({bag_size})"
        )
    if len(digits) == 0:
        raise DataError("digit set is empty")
    pos_pool = np.flatnonzero(digits.labels == POSITIVE_DIGIT)
    neg_pool = np.flatnonzero(digits.labels != POSITIVE_DIGIT)
    if pos_pool.size == 0:
        raise DataError(f"digit set has no images of digit {POSITIVE_DIGIT}")
    if neg_pool.size == 0:
        raise DataError("digit set has no non-positive digits")

    rng = Xoshiro256StarStar(seed).substream("bags")
    bags = []
    for i in range(n_bags):
        label = 1 if i < n_bags // 2 else 0
        chosen = []
        if label == 1:
            c = rng.randint(lo, hi)
            chosen += [int(pos_pool[rng.randrange(pos_pool.size)]) for _ in range(c)]
        fill = bag_size - len(chosen)
        chosen += [int(neg_pool[rng.randrange(neg_pool.size)]) for _ in range(fill)]
        rng.shuffle(chosen)
        bags.append(
            Bag(
                id=f"bag{i:05d}",
                instances=digits.images[chosen],
                label=label,
                instance_refs=[instance_ref(j, int(digits.labels[j])) for j in chosen],
            )
        )
    order_rng = Xoshiro256StarStar(seed).substream("bag-order")
    order_rng.shuffle(bags)
    return make_dataset(bags)


# -- on-disk format ------------------------------------------------------------


def _format_row(values: np.ndarray) -> str:
    return ",".join(repr(float(v)) for v in values)


def save_bag_dataset(ds: BagDataset, directory) -> None:
    directory = Path(directory)
    (directory / "bags").mkdir(parents=True, exist_ok=True)
    with_refs = any(bag.instance_refs is not None for bag in ds.bags)
    fields = _MANIFEST_FIELDS + (["instance_refs"] if with_refs else [])
    with open(directory / MANIFEST_NAME, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(fields)
        for i, bag in enumerate(ds.bags):
            rel_path = f"bags/{i:05d}.csv"
            row = [bag.id, bag.label, bag.num_instances, ds.dim, rel_path]
            if with_refs:
                row.append(";".join(bag.instance_refs or []))
            writer.writerow(row)
            with open(directory / rel_path, "w", newline="") as bag_fh:
                for inst in bag.instances:
                    bag_fh.write(_format_row(inst) + "\n")


def _parse_bag_file(path, bag_id: str, dim: int, expected_rows: int) -> np.ndarray:
    rows = []
    with open(path, newline="") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != dim:
                raise DataError(
                    f"bag {bag_id!r}: row {line_no} has {len(parts)} fields, "
                    f"manifest declares dim={dim}"
                )
            try:
                rows.append([float(p) for p in parts])
            except ValueError as exc:
                raise DataError(f"bag {bag_id!r}: bad float on row {line_no}") from exc
    if len(rows) != expected_rows:
        raise DataError(
            f"bag {bag_id!r}: {len(rows)} instances on disk, manifest declares "
            f"{expected_rows}"
        )
    return np.array(rows, dtype=np.float64)


def load_bag_dataset(directory) -> BagDataset:
    directory = Path(directory)
    manifest = directory / MANIFEST_NAME
    if not manifest.is_file():
        raise DataError(f"missing manifest: {manifest}")
    with open(manifest, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [
            f for f in _MANIFEST_FIELDS if f not in reader.fieldnames
        ]:
            raise DataError(
                f"{manifest}: header must contain {','.join(_MANIFEST_FIELDS)}"
            )
        rows = list(reader)
    if not rows:
        raise DataError(f"{manifest}: manifest declares no bags")

    bags = []
    declared_dim = None
    for row in rows:
        bag_id = row["bag_id"]
        if row["label"] not in ("0", "1"):
            raise DataError(f"bag {bag_id!r}: unknown label value {row['label']!r}")
        try:
            dim = int(row["dim"])
            count = int(row["num_instances"])
        except ValueError as exc:
            raise DataError(f"bag {bag_id!r}: bad manifest numbers") from exc
        if declared_dim is None:
            declared_dim = dim
        elif dim != declared_dim:
            raise DataError(
                f"bag {bag_id!r}: dim {dim} differs from dataset dim {declared_dim}"
            )
        instances = _parse_bag_file(directory / row["path"], bag_id, dim, count)
        refs_field = row.get("instance_refs")
        refs = refs_field.split(";") if refs_field else None
        bags.append(Bag(id=bag_id, instances=instances, label=int(row["label"]),
                        instance_refs=refs))
    return make_dataset(bags)


# -- stratified k-fold -----------------------------------------------------------


@dataclass
class FoldSplit:
    """k disjoint test folds over [0, n); the complement of a fold trains it."""

    folds: list[list[int]]
    n: int

    def test_indices(self, fold: int) -> list[int]:
        return list(self.folds[fold])

    def train_indices(self, fold: int) -> list[int]:
        held_out = set(self.folds[fold])
        return [i for i in range(self.n) if i not in held_out]


def stratified_kfold(labels, k: int = 3, seed: int = 0) -> FoldSplit:
    """Deal each class's shuffled indices round-robin onto k folds.

    Per-class fold sizes then differ by at most one, preserving label
    proportions in every fold.
    """
    if k < 2:
        raise ValidationError(f"k must be >= 2, got {k}")
    labels = [int(v) for v in labels]
    for v in labels:
        if v not in (0, 1):
            raise ValidationError(f"labels must be 0/1, got {v!r}")
    rng = Xoshiro256StarStar(seed)
    folds: list[list[int]] = [[] for _ in range(k)]
    for cls in (0, 1):
        members = [i for i, v in enumerate(labels) if v == cls]
        if len(members) < k:
            raise DataError(
                f"class {cls} has {len(members)} members, fewer than k={k}"
            )
        rng.substream(f"kfold/class{cls}").shuffle(members)
        for pos, idx in enumerate(members):
            folds[pos % k].append(idx)
    for fold in folds:
        fold.sort()
    return FoldSplit(folds=folds, n=len(labels))
