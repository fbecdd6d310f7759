"""Representation probes: kNN role classification and Pearson correlation."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Sequence, TextIO

import numpy as np

from .core import SotkitError, SpeakerRole

DEFAULT_K = 5


class DimensionMismatchError(SotkitError):
    """Train and test vectors have different dimensions."""


class ZeroVarianceError(SotkitError):
    """Correlation is undefined when either variable is constant."""


@dataclass(frozen=True, eq=False)
class LabeledVectors:
    """Fixed-dimension embedding vectors with one role label each."""

    vectors: np.ndarray
    labels: tuple[SpeakerRole, ...]

    def __post_init__(self) -> None:
        arr = np.asarray(self.vectors, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[1] < 1:
            raise SotkitError(f"expected an (N, D) vector array, got {arr.shape}")
        labels = tuple(self.labels)
        if len(labels) != arr.shape[0]:
            raise SotkitError("one label per vector is required")
        arr.setflags(write=False)
        object.__setattr__(self, "vectors", arr)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return len(self.labels)


def _unit_rows(arr: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    norms = np.linalg.norm(arr, axis=1)
    zero = norms == 0
    safe = np.where(zero, 1.0, norms)
    return arr / safe[:, None], zero


def knn_probe(train: LabeledVectors, test: LabeledVectors, k: int = DEFAULT_K) -> float:
    """Accuracy of k-nearest-neighbor role voting under cosine distance.

    Zero vectors have no direction; any pair involving one scores the
    maximal distance of 2. Neighbor order is (distance, train index); vote
    ties break by smaller summed distance, then toward the child role.
    """
    if train.vectors.shape[1] != test.vectors.shape[1]:
        raise DimensionMismatchError(
            f"train dimension {train.vectors.shape[1]} != test dimension {test.vectors.shape[1]}"
        )
    if k < 1 or len(train) < k:
        raise SotkitError(f"need at least k={k} training vectors, have {len(train)}")

    tr, tr_zero = _unit_rows(train.vectors)
    te, te_zero = _unit_rows(test.vectors)
    dist = 1.0 - te @ tr.T
    dist[:, tr_zero] = 2.0
    dist[te_zero, :] = 2.0

    train_labels = np.array([int(lab) for lab in train.labels])
    correct = 0
    for i in range(len(test)):
        order = np.argsort(dist[i], kind="stable")[:k]
        votes = train_labels[order]
        d = dist[i][order]
        n_child = int(np.sum(votes == int(SpeakerRole.CHILD)))
        n_adult = k - n_child
        if n_child > n_adult:
            pred = SpeakerRole.CHILD
        elif n_adult > n_child:
            pred = SpeakerRole.ADULT
        else:
            d_child = float(d[votes == int(SpeakerRole.CHILD)].sum())
            d_adult = float(d[votes == int(SpeakerRole.ADULT)].sum())
            pred = SpeakerRole.ADULT if d_adult < d_child else SpeakerRole.CHILD
        if pred is test.labels[i]:
            correct += 1
    return correct / len(test) if len(test) else 0.0


def pearson(x: Sequence[float], y: Sequence[float]) -> float:
    """Sample Pearson correlation, clamped to [-1, 1].

    >>> pearson([1.0, 2.0, 3.0], [2.0, 4.0, 6.0])
    1.0
    """
    if len(x) != len(y):
        raise SotkitError("sequences must have equal length")
    if len(x) < 2:
        raise SotkitError("correlation needs at least two points")
    n = len(x)
    mx = sum(x) / n
    my = sum(y) / n
    dx = [v - mx for v in x]
    dy = [v - my for v in y]
    sxx = sum(v * v for v in dx)
    syy = sum(v * v for v in dy)
    if sxx == 0 or syy == 0:
        raise ZeroVarianceError("one of the variables has zero variance")
    r = sum(a * b for a, b in zip(dx, dy)) / (sxx * syy) ** 0.5
    return max(-1.0, min(1.0, r))


# ---------------------------------------------------------------------------
# Embedding CSV: header `id,label,v0,...,vD-1`.
# ---------------------------------------------------------------------------


def read_labeled_vectors(fp: TextIO) -> tuple[list[str], LabeledVectors]:
    reader = csv.reader(fp)
    header = next(reader, None)
    if not header or header[:2] != ["id", "label"]:
        raise SotkitError("embedding CSV must start with columns id,label")
    ids: list[str] = []
    labels: list[SpeakerRole] = []
    rows: list[list[float]] = []
    for row in reader:
        if not row:
            continue
        try:
            ids.append(row[0])
            labels.append(SpeakerRole.from_label(row[1]))
            rows.append([float(v) for v in row[2:]])
        except (IndexError, ValueError) as exc:
            raise SotkitError(f"bad embedding row {row!r}: {exc}") from exc
    if not rows:
        raise SotkitError("embedding CSV contains no vectors")
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise SotkitError("embedding rows have inconsistent dimensions")
    return ids, LabeledVectors(np.array(rows, dtype=np.float64), tuple(labels))


def load_labeled_vectors(path: str) -> tuple[list[str], LabeledVectors]:
    with open(path, "r", encoding="utf-8") as fp:
        return read_labeled_vectors(fp)
