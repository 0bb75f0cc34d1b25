"""Deterministic synthetic classification data and mini-batch streams."""

import csv
from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .numcore import make_rng

_SPLIT_KEYS = {"train": 1, "val": 2}


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    split: str = "train"

    def __post_init__(self):
        if self.features.ndim != 2 or self.labels.shape != (self.features.shape[0],):
            raise InputError(
                f"features {self.features.shape} and labels {self.labels.shape} do not line up"
            )

    def __len__(self):
        return self.features.shape[0]

    @property
    def n_classes(self):
        return int(self.labels.max()) + 1 if len(self) else 0


def _split_rng(seed, split):
    if split not in _SPLIT_KEYS:
        raise InputError(f"split must be 'train' or 'val', got {split!r}")
    seq = np.random.SeedSequence([int(seed), _SPLIT_KEYS[split]])
    return np.random.Generator(np.random.Philox(seq))


def blob_centers(seed, d, n_classes):
    """Class centres uniform in ``[-1, 1]^d``, fixed by ``seed`` alone."""
    return make_rng(seed).uniform(-1.0, 1.0, size=(n_classes, d))


def make_blobs(seed, n, d, n_classes, noise, split="train"):
    """Gaussian clusters around :func:`blob_centers`.

    Train and val splits share centres but draw points from independent
    streams, so they never share samples.
    """
    if n < 1 or d < 1:
        raise InputError(f"need n >= 1 and d >= 1, got n={n}, d={d}")
    if n_classes < 2:
        raise InputError(f"need at least two classes, got {n_classes}")
    if noise < 0:
        raise InputError(f"noise must be non-negative, got {noise}")
    centers = blob_centers(seed, d, n_classes)
    rng = _split_rng(seed, split)
    labels = np.arange(n) % n_classes
    labels = labels[rng.permutation(n)]
    x = centers[labels] + noise * rng.standard_normal((n, d))
    return Dataset(x, labels.astype(np.int64), split)


def make_moons(seed, n, noise, split="train"):
    """Two interleaved half circles in 2-D (a non-linearly separable task)."""
    if n < 2:
        raise InputError(f"need n >= 2, got {n}")
    if noise < 0:
        raise InputError(f"noise must be non-negative, got {noise}")
    rng = _split_rng(seed, split)
    labels = rng.permutation(np.arange(n) % 2)
    angle = rng.uniform(0.0, np.pi, size=n)
    x = np.where(labels[:, None] == 0,
                 np.c_[np.cos(angle), np.sin(angle)],
                 np.c_[1.0 - np.cos(angle), 0.5 - np.sin(angle)])
    x = x + noise * rng.standard_normal((n, 2))
    return Dataset(x, labels.astype(np.int64), split)


def load_csv(path, split="train"):
    """Read rows of ``d`` feature columns followed by an integer label."""
    rows = []
    with open(path, newline="") as fh:
        for line_no, row in enumerate(csv.reader(fh), 1):
            if not row or row[0].startswith("#"):
                continue
            try:
                rows.append([float(v) for v in row])
            except ValueError:
                if line_no == 1:
                    continue  # header
                raise InputError(f"{path}:{line_no}: non-numeric field") from None
    if not rows:
        raise InputError(f"{path}: no data rows")
    width = {len(r) for r in rows}
    if len(width) != 1 or width.pop() < 2:
        raise InputError(f"{path}: rows must all have d >= 1 features plus a label")
    arr = np.asarray(rows)
    labels = arr[:, -1]
    if np.any(labels != np.round(labels)) or labels.min() < 0:
        raise InputError(f"{path}: labels must be non-negative integers")
    return Dataset(arr[:, :-1].copy(), labels.astype(np.int64), split)


def batches(dataset, batch, seed, drop_last=False):
    """Endless stream of ``(x, y)`` mini-batches, reshuffled every epoch.

    With ``drop_last`` the trailing partial batch of each epoch is skipped so
    every batch has exactly ``batch`` rows.
    """
    n = len(dataset)
    if not 1 <= batch <= n:
        raise InputError(f"batch size must lie in [1, {n}], got {batch}")
    rng = make_rng(seed)
    while True:
        order = rng.permutation(n)
        stop = n - n % batch if drop_last else n
        for lo in range(0, stop, batch):
            idx = order[lo:lo + batch]
            yield dataset.features[idx], dataset.labels[idx]
