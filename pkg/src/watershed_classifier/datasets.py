"""Synthetic dataset generators and file ingestion (CSV, IDX).

The spiral winds n_rev times around the origin with the two classes offset
by half a turn; the moons are the usual pair of interleaved half-circles.
Both are deterministic under their rng_seed.
"""
from __future__ import annotations

import csv
import gzip
import struct
from dataclasses import dataclass

import numpy as np

from .core import ConfigError, DataFormatError, PointSet, RngState, UNLABELED

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801


@dataclass(frozen=True)
class SpiralSpec:
    n_per_class: int = 1000
    n_rev: float = 4.0
    noise_std: float = 0.01
    rng_seed: int = 0

    def validate(self) -> None:
        if self.n_per_class < 1:
            raise ConfigError("n_per_class must be positive")
        if self.n_rev <= 0:
            raise ConfigError("n_rev must be positive")
        if self.noise_std < 0:
            raise ConfigError("noise_std must be non-negative")


@dataclass(frozen=True)
class MoonsSpec:
    n_samples: int = 1000
    noise_std: float = 0.1
    rng_seed: int = 0

    def validate(self) -> None:
        if self.n_samples < 2:
            raise ConfigError("n_samples must be at least 2")
        if self.noise_std < 0:
            raise ConfigError("noise_std must be non-negative")


def spiral_point(t: float, label: int, n_rev: float) -> np.ndarray:
    """Noise-free spiral parameterization: radius t, angle 2*pi*n_rev*t,
    with class 1 rotated by half a turn."""
    phi = 2.0 * np.pi * n_rev * t + label * np.pi
    return np.array([t * np.cos(phi), t * np.sin(phi)])


def make_spiral(spec: SpiralSpec) -> PointSet:
    """Two interleaved spiral arms plus isotropic Gaussian noise.

    Points are spaced evenly along each arm (nearest-neighbor structure only
    tracks the arm geometry when the sampling density is even); only the
    noise consumes randomness.
    """
    spec.validate()
    gen = RngState(spec.rng_seed).generator()
    rows = []
    labels = []
    # sqrt spacing makes consecutive points (approximately) equidistant along
    # the arm: the dominant arc-length term grows like t^2, so even steps in
    # t^2 give even steps in arc length.
    t = np.sqrt(np.linspace(0.0, 1.0, spec.n_per_class))
    for label in (0, 1):
        phi = 2.0 * np.pi * spec.n_rev * t + label * np.pi
        pts = np.column_stack([t * np.cos(phi), t * np.sin(phi)])
        pts = pts + gen.normal(0.0, spec.noise_std, size=pts.shape)
        rows.append(pts)
        labels.append(np.full(spec.n_per_class, label, dtype=np.int64))
    return PointSet(np.vstack(rows), np.concatenate(labels))


def moons_point(alpha: float, label: int) -> np.ndarray:
    """Noise-free moons parameterization: moon 0 is (cos a, sin a), moon 1 is
    (1 - cos a, 0.5 - sin a), a in [0, pi]."""
    if label == 0:
        return np.array([np.cos(alpha), np.sin(alpha)])
    return np.array([1.0 - np.cos(alpha), 0.5 - np.sin(alpha)])


def make_moons(spec: MoonsSpec) -> PointSet:
    """Two interleaving half-circles with evenly spaced angles plus isotropic
    Gaussian noise. Odd sample counts give the extra point to class 0."""
    spec.validate()
    gen = RngState(spec.rng_seed).generator()
    n0 = (spec.n_samples + 1) // 2
    n1 = spec.n_samples - n0
    a0 = np.linspace(0.0, np.pi, n0)
    a1 = np.linspace(0.0, np.pi, n1)
    pts = np.vstack(
        [
            np.column_stack([np.cos(a0), np.sin(a0)]),
            np.column_stack([1.0 - np.cos(a1), 0.5 - np.sin(a1)]),
        ]
    )
    pts = pts + gen.normal(0.0, spec.noise_std, size=pts.shape)
    labels = np.concatenate(
        [np.zeros(n0, dtype=np.int64), np.ones(n1, dtype=np.int64)]
    )
    return PointSet(pts, labels)


def save_csv(points: PointSet, path) -> None:
    """Comma-delimited with header f0,...,f{d-1},label; 9 significant digits."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(f"f{i}" for i in range(points.dim)) + ",label\n")
        for row, lab in zip(points.coords, points.labels):
            fh.write(",".join(format(v, ".9g") for v in row) + f",{lab}\n")


def load_csv(path, label_column: str = "label") -> PointSet:
    """Read a delimited-text dataset; row order is preserved.

    All non-label columns must be numeric; labels must be integers with -1
    allowed for unlabeled points. Malformed cells report their line number.
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if label_column not in header:
            raise DataFormatError(f"{path}: no column named {label_column!r} in header")
        label_pos = header.index(label_column)
        width = len(header)
        coords = []
        labels = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != width:
                raise DataFormatError(
                    f"{path}: line {lineno}: expected {width} cells, found {len(row)}"
                )
            feats = []
            for pos, cell in enumerate(row):
                cell = cell.strip()
                if pos == label_pos:
                    try:
                        lab = int(cell)
                    except ValueError:
                        raise DataFormatError(
                            f"{path}: line {lineno}: label {cell!r} is not an integer"
                        ) from None
                    if lab < UNLABELED:
                        raise DataFormatError(
                            f"{path}: line {lineno}: label {lab} below -1"
                        )
                    labels.append(lab)
                else:
                    try:
                        feats.append(float(cell))
                    except ValueError:
                        raise DataFormatError(
                            f"{path}: line {lineno}: cell {cell!r} is not numeric"
                        ) from None
            coords.append(feats)
    if not coords:
        raise DataFormatError(f"{path}: no data rows")
    return PointSet(np.asarray(coords), np.asarray(labels))


def _open_maybe_gzip(path):
    path = str(path)
    if path.endswith(".gz"):
        return gzip.open(path, "rb")
    return open(path, "rb")


def _read_be32(fh, path):
    data = fh.read(4)
    if len(data) != 4:
        raise DataFormatError(f"{path}: truncated header")
    return struct.unpack(">I", data)[0]


def load_idx(images_path, labels_path) -> PointSet:
    """Read an IDX image/label file pair (the MNIST container format).

    Pixels are scaled to [0, 1]; gzip-compressed files are handled
    transparently by their .gz suffix.
    """
    with _open_maybe_gzip(images_path) as fh:
        magic = _read_be32(fh, images_path)
        if magic != IDX_IMAGE_MAGIC:
            raise DataFormatError(
                f"{images_path}: bad magic 0x{magic:08x}, expected 0x{IDX_IMAGE_MAGIC:08x}"
            )
        count = _read_be32(fh, images_path)
        rows = _read_be32(fh, images_path)
        cols = _read_be32(fh, images_path)
        payload = fh.read()
        expected = count * rows * cols
        if len(payload) != expected:
            raise DataFormatError(
                f"{images_path}: payload has {len(payload)} bytes, expected {expected}"
            )
        images = np.frombuffer(payload, dtype=np.uint8).reshape(count, rows * cols)

    with _open_maybe_gzip(labels_path) as fh:
        magic = _read_be32(fh, labels_path)
        if magic != IDX_LABEL_MAGIC:
            raise DataFormatError(
                f"{labels_path}: bad magic 0x{magic:08x}, expected 0x{IDX_LABEL_MAGIC:08x}"
            )
        n_labels = _read_be32(fh, labels_path)
        payload = fh.read()
        if len(payload) != n_labels:
            raise DataFormatError(
                f"{labels_path}: payload has {len(payload)} bytes, expected {n_labels}"
            )
        labels = np.frombuffer(payload, dtype=np.uint8).astype(np.int64)

    if count != n_labels:
        raise DataFormatError(
            f"image count {count} does not match label count {n_labels}"
        )
    return PointSet(images.astype(np.float64) / 255.0, labels)
