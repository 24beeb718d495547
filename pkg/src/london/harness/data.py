"""Synthetic datasets and the delimited file format.

Three generator families: ``blobs`` (isotropic Gaussian clusters,
linearly separable at default settings), ``spirals`` (interleaved 2-D
arms embedded in the first two feature dimensions), and ``noisy_blobs``
(blobs whose training labels are partially flipped to create
overfitting pressure; test labels stay clean).

Files are CSVs with header ``f0,...,f{d-1},label`` and 17 significant
digits per feature, so reload round-trips are bit exact.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from london.harness.config import ConfigError, RunConfig, derive_seed, resolve_path


class DataFormatError(ValueError):
    """Raised when a dataset file cannot be parsed; names the offending line."""

    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


@dataclass
class Dataset:
    """Feature columns are samples; labels are integer class indices."""

    features: np.ndarray
    labels: np.ndarray
    split: str = "train"

    def __post_init__(self):
        if self.features.ndim != 2:
            raise ValueError("features must be 2-D (dim x count)")
        if self.labels.shape != (self.features.shape[1],):
            raise ValueError("labels length must equal feature column count")

    @property
    def dim(self) -> int:
        return self.features.shape[0]

    @property
    def count(self) -> int:
        return self.features.shape[1]


def _gen_blobs(rng, classes, dim, count, cluster_std, center_scale):
    centers = rng.standard_normal((classes, dim)) * center_scale
    labels = rng.integers(0, classes, count)
    features = centers[labels].T + rng.standard_normal((dim, count)) * cluster_std
    return features, labels


def _gen_spirals(rng, classes, dim, count, noise):
    if dim < 2:
        raise ConfigError("spirals need dim >= 2")
    labels = rng.integers(0, classes, count)
    t = rng.uniform(0.25, 1.0, count)
    angle = t * 3.0 * np.pi + labels * (2.0 * np.pi / classes)
    radius = 2.0 * t
    features = np.zeros((dim, count))
    features[0] = radius * np.cos(angle)
    features[1] = radius * np.sin(angle)
    features += rng.standard_normal((dim, count)) * noise
    return features, labels


def _flip_labels(rng, labels, classes, fraction):
    """Flip exactly floor(fraction * count) labels to random other classes."""
    n_flip = int(np.floor(fraction * labels.shape[0]))
    if n_flip == 0:
        return labels
    flipped = labels.copy()
    idx = rng.choice(labels.shape[0], size=n_flip, replace=False)
    flipped[idx] = (flipped[idx] + rng.integers(1, classes, n_flip)) % classes
    return flipped


def gen_dataset(cfg: RunConfig) -> tuple:
    """Generate (train, test) Datasets per the config's data settings.

    Deterministic in cfg.seed via the dedicated data stream.  For
    noisy_blobs only the training labels are flipped.
    """
    rng = np.random.default_rng(derive_seed(cfg.seed, "data"))
    total = cfg.train_count + cfg.test_count
    if cfg.data_kind == "spirals":
        features, labels = _gen_spirals(rng, cfg.classes, cfg.dim, total, cfg.spiral_noise)
    else:
        features, labels = _gen_blobs(
            rng, cfg.classes, cfg.dim, total, cfg.cluster_std, cfg.center_scale
        )
    train = Dataset(features[:, : cfg.train_count], labels[: cfg.train_count], "train")
    test = Dataset(features[:, cfg.train_count :], labels[cfg.train_count :], "test")
    if cfg.data_kind == "noisy_blobs":
        train.labels = _flip_labels(rng, train.labels, cfg.classes, cfg.flip_fraction)
    return train, test


def save_dataset(ds: Dataset, path) -> None:
    header = ",".join(f"f{i}" for i in range(ds.dim)) + ",label"
    lines = [header]
    for j in range(ds.count):
        feats = ",".join(f"{v:.17g}" for v in ds.features[:, j])
        lines.append(f"{feats},{int(ds.labels[j])}")
    with open(path, "w", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def run_gen_data(cfg: RunConfig, out_dir) -> dict:
    """Generate and write the train/test CSVs plus a scatter figure."""
    os.makedirs(out_dir, exist_ok=True)
    train, test = gen_dataset(cfg)
    train_path = resolve_path(cfg.train_csv, out_dir)
    test_path = resolve_path(cfg.test_csv, out_dir)
    save_dataset(train, train_path)
    save_dataset(test, test_path)
    from london.harness import figures

    figure_path = os.path.join(out_dir, "data_scatter.png")
    figures.data_scatter(train.features, train.labels, figure_path)
    return {
        "train": train_path,
        "test": test_path,
        "figure": figure_path,
        "train_count": train.count,
        "test_count": test.count,
    }


def load_dataset(path, split: str = "train") -> Dataset:
    """Parse a dataset CSV; raises DataFormatError naming the bad line."""
    try:
        with open(path) as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise DataFormatError(0, f"cannot read dataset file: {exc}") from None
    if not lines:
        raise DataFormatError(1, "empty dataset file")
    header = lines[0].split(",")
    if header[-1] != "label" or len(header) < 2:
        raise DataFormatError(1, f"expected header f0,...,label, got {lines[0]!r}")
    dim = len(header) - 1
    for i, name in enumerate(header[:-1]):
        if name != f"f{i}":
            raise DataFormatError(1, f"expected column f{i}, got {name!r}")
    rows = [ln for ln in lines[1:] if ln.strip()]
    if not rows:
        raise DataFormatError(2, "dataset has no samples")
    features = np.empty((dim, len(rows)))
    labels = np.empty(len(rows), dtype=np.intp)
    for j, row in enumerate(rows):
        line_no = j + 2
        parts = row.split(",")
        if len(parts) != dim + 1:
            raise DataFormatError(line_no, f"expected {dim + 1} fields, got {len(parts)}")
        try:
            features[:, j] = [float(v) for v in parts[:-1]]
            labels[j] = int(parts[-1])
        except ValueError:
            raise DataFormatError(line_no, f"non-numeric field in row {row!r}") from None
        if labels[j] < 0:
            raise DataFormatError(line_no, f"negative label {labels[j]}")
    if not np.isfinite(features).all():
        raise DataFormatError(2, "non-finite feature value in dataset")
    return Dataset(features, labels, split)
