"""Dataset loading and retain/forget split construction."""

from __future__ import annotations

import gzip
import math
import os
import pickle
import struct
import tarfile
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

DATA_DIR_ENV = "FORGETBENCH_DATA_DIR"
_DEFAULT_DATA_DIR = Path.home() / ".cache" / "forgetbench" / "data"


class UnknownDatasetError(KeyError):
    """Raised when a dataset name is not in the registry."""


@dataclass(frozen=True, eq=False)
class LabeledExample:
    """One classifier input (flat feature vector) with its integer class label."""

    features: np.ndarray
    label: int


@dataclass
class DataPartition:
    """Train/test pools for one dataset."""

    train: list[LabeledExample]
    test: list[LabeledExample]
    num_classes: int
    class_names: tuple[str, ...] | None = None

    def class_index(self, name: str) -> int:
        if self.class_names is None:
            raise ValueError("dataset has no class names")
        try:
            return self.class_names.index(name)
        except ValueError:
            raise ValueError(f"unknown class name {name!r}") from None


class Scenario(str, Enum):
    FULL_CLASS = "full_class"
    SUB_CLASS = "sub_class"
    RANDOM = "random"


@dataclass
class ForgetSplit:
    """Partition of a training set into examples to keep and examples to remove."""

    retain: list[LabeledExample]
    forget: list[LabeledExample]
    scenario: Scenario
    target_class: int | None = None
    fraction: float | None = None


def examples_to_arrays(
    examples: Sequence[LabeledExample],
) -> tuple[np.ndarray, np.ndarray]:
    """Stack examples into (features, labels) arrays."""
    feats = np.stack([np.asarray(e.features, dtype=np.float32).reshape(-1) for e in examples])
    labels = np.asarray([e.label for e in examples], dtype=np.int64)
    return feats, labels


# ---------------------------------------------------------------------------
# Registry
# ---------------------------------------------------------------------------

_LOADERS: dict[str, Callable[..., DataPartition]] = {}

# Per-dataset option defaults, applied before the loader runs.
_DEFAULT_OPTIONS: dict[str, dict] = {
    "mnist-subset": {"train_cap": 5000, "test_cap": 1000},
}


def register_dataset(name: str):
    def wrap(fn: Callable[..., DataPartition]):
        _LOADERS[name] = fn
        return fn

    return wrap


def available_datasets() -> tuple[str, ...]:
    return tuple(sorted(_LOADERS))


def load_dataset(name: str, options: dict | None = None) -> DataPartition:
    """Load a registered dataset.

    Generic options handled here for every dataset:
      * ``train_cap`` / ``test_cap``: keep only the first N examples of a pool.
    """
    if name not in _LOADERS:
        raise UnknownDatasetError(
            f"unknown dataset {name!r}; registered: {', '.join(available_datasets())}"
        )
    opts = dict(_DEFAULT_OPTIONS.get(name, {}))
    opts.update(options or {})
    train_cap = opts.pop("train_cap", None)
    test_cap = opts.pop("test_cap", None)
    partition = _LOADERS[name](**opts)
    if train_cap is not None:
        partition.train = partition.train[: int(train_cap)]
    if test_cap is not None:
        partition.test = partition.test[: int(test_cap)]
    return partition


def data_dir(override: str | os.PathLike | None = None) -> Path:
    """Directory searched for local dataset archives (env: FORGETBENCH_DATA_DIR)."""
    if override is not None:
        return Path(override)
    return Path(os.environ.get(DATA_DIR_ENV, _DEFAULT_DATA_DIR))


# ---------------------------------------------------------------------------
# Loaders
# ---------------------------------------------------------------------------


@register_dataset("synthetic-blobs")
def _load_blobs(
    classes: int = 2,
    per_class: int = 100,
    test_per_class: int = 25,
    dim: int | None = None,
    separation: float = 4.0,
    noise: float = 1.0,
    seed: int = 7,
) -> DataPartition:
    """Gaussian blobs with axis-aligned centers; the fully offline oracle dataset."""
    if classes < 2:
        raise ValueError("need at least 2 classes")
    width = int(dim) if dim is not None else max(classes, 4)
    if width < classes:
        raise ValueError("dim must be >= classes so every class gets its own axis")
    rng = np.random.default_rng(seed)
    centers = np.zeros((classes, width), dtype=np.float64)
    centers[np.arange(classes), np.arange(classes)] = separation

    def draw(count: int) -> list[LabeledExample]:
        pool = []
        for c in range(classes):
            pts = rng.normal(centers[c], noise, size=(count, width)).astype(np.float32)
            pool.extend(LabeledExample(p, c) for p in pts)
        return pool

    return DataPartition(train=draw(per_class), test=draw(test_per_class), num_classes=classes)


@register_dataset("digits")
def _load_digits(seed: int = 0, test_fraction: float = 0.2) -> DataPartition:
    """Scikit-learn handwritten digits (10 classes, 8x8 images), shipped offline."""
    from sklearn.datasets import load_digits

    bunch = load_digits()
    feats = (bunch.data / 16.0).astype(np.float32)
    labels = bunch.target.astype(np.int64)
    order = np.random.default_rng(seed).permutation(len(feats))
    n_test = int(round(len(feats) * test_fraction))
    test_idx, train_idx = order[:n_test], order[n_test:]
    make = lambda idx: [LabeledExample(feats[i], int(labels[i])) for i in idx]
    return DataPartition(
        train=make(train_idx),
        test=make(test_idx),
        num_classes=10,
        class_names=tuple(str(d) for d in range(10)),
    )


def _read_idx(path: Path) -> np.ndarray:
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "rb") as fh:
        _, _, dtype_code, ndim = struct.unpack(">BBBB", fh.read(4))
        if dtype_code != 0x08:
            raise ValueError(f"unsupported idx dtype code {dtype_code:#x} in {path}")
        dims = struct.unpack(f">{ndim}I", fh.read(4 * ndim))
        data = np.frombuffer(fh.read(), dtype=np.uint8)
    return data.reshape(dims)


def _find_archive(directory: Path, stem: str) -> Path:
    for candidate in (directory / f"{stem}.gz", directory / stem):
        if candidate.exists():
            return candidate
    raise FileNotFoundError(
        f"missing dataset archive {stem}[.gz] under {directory}; "
        f"fetch it manually, no downloads are attempted"
    )


@register_dataset("mnist-subset")
def _load_mnist(data_dir_option: str | None = None) -> DataPartition:
    """MNIST from local IDX archives (no downloading); capped to a subset by default."""
    directory = data_dir(data_dir_option)
    train_x = _read_idx(_find_archive(directory, "train-images-idx3-ubyte"))
    train_y = _read_idx(_find_archive(directory, "train-labels-idx1-ubyte"))
    test_x = _read_idx(_find_archive(directory, "t10k-images-idx3-ubyte"))
    test_y = _read_idx(_find_archive(directory, "t10k-labels-idx1-ubyte"))

    def make(images: np.ndarray, labels: np.ndarray) -> list[LabeledExample]:
        flat = (images.reshape(len(images), -1) / 255.0).astype(np.float32)
        return [LabeledExample(flat[i], int(labels[i])) for i in range(len(flat))]

    return DataPartition(
        train=make(train_x, train_y),
        test=make(test_x, test_y),
        num_classes=10,
        class_names=tuple(str(d) for d in range(10)),
    )


@register_dataset("cifar100")
def _load_cifar100(data_dir_option: str | None = None) -> DataPartition:
    """CIFAR-100 from the standard local tar.gz archive (no downloading)."""
    directory = data_dir(data_dir_option)
    archive = directory / "cifar-100-python.tar.gz"
    if not archive.exists():
        raise FileNotFoundError(
            f"missing dataset archive {archive}; fetch it manually, no downloads are attempted"
        )

    def read_member(tar: tarfile.TarFile, name: str) -> dict:
        member = tar.extractfile(f"cifar-100-python/{name}")
        assert member is not None
        return pickle.load(member, encoding="bytes")

    with tarfile.open(archive, "r:gz") as tar:
        train_raw = read_member(tar, "train")
        test_raw = read_member(tar, "test")
        meta = read_member(tar, "meta")

    names = tuple(n.decode() for n in meta[b"fine_label_names"])

    def make(raw: dict) -> list[LabeledExample]:
        flat = (raw[b"data"] / 255.0).astype(np.float32)
        labels = raw[b"fine_labels"]
        return [LabeledExample(flat[i], int(labels[i])) for i in range(len(flat))]

    return DataPartition(
        train=make(train_raw), test=make(test_raw), num_classes=100, class_names=names
    )


# ---------------------------------------------------------------------------
# Forget-split constructors
# ---------------------------------------------------------------------------


def _check_target_class(partition: DataPartition, target_class: int) -> None:
    if not 0 <= target_class < partition.num_classes:
        raise ValueError(
            f"target_class {target_class} out of range for {partition.num_classes} classes"
        )
    if not any(e.label == target_class for e in partition.train):
        raise ValueError(f"class {target_class} has no training examples")


def _check_fraction(fraction: float) -> None:
    if not 0.0 <= fraction <= 1.0:
        raise ValueError(f"fraction must lie in [0, 1], got {fraction}")


def make_full_class_split(partition: DataPartition, target_class: int) -> ForgetSplit:
    """Forget every training example of one class."""
    _check_target_class(partition, target_class)
    forget = [e for e in partition.train if e.label == target_class]
    retain = [e for e in partition.train if e.label != target_class]
    return ForgetSplit(retain, forget, Scenario.FULL_CLASS, target_class=int(target_class))


def make_random_split(partition: DataPartition, fraction: float, seed: int) -> ForgetSplit:
    """Forget floor(fraction * |train|) examples sampled uniformly without replacement."""
    _check_fraction(fraction)
    n = len(partition.train)
    size = math.floor(fraction * n)
    mask = np.zeros(n, dtype=bool)
    if size:
        chosen = np.random.default_rng(seed).choice(n, size=size, replace=False)
        mask[chosen] = True
    forget = [e for e, m in zip(partition.train, mask) if m]
    retain = [e for e, m in zip(partition.train, mask) if not m]
    return ForgetSplit(retain, forget, Scenario.RANDOM, fraction=float(fraction))


def make_subclass_split(
    partition: DataPartition, target_class: int, fraction: float, seed: int
) -> ForgetSplit:
    """Forget a random fraction of one class's training examples."""
    _check_target_class(partition, target_class)
    _check_fraction(fraction)
    n = len(partition.train)
    in_class = np.asarray(
        [i for i, e in enumerate(partition.train) if e.label == target_class], dtype=np.int64
    )
    size = math.floor(fraction * len(in_class))
    mask = np.zeros(n, dtype=bool)
    if size:
        chosen = np.random.default_rng(seed).choice(in_class, size=size, replace=False)
        mask[chosen] = True
    forget = [e for e, m in zip(partition.train, mask) if m]
    retain = [e for e, m in zip(partition.train, mask) if not m]
    return ForgetSplit(
        retain,
        forget,
        Scenario.SUB_CLASS,
        target_class=int(target_class),
        fraction=float(fraction),
    )
