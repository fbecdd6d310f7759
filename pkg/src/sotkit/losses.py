"""Desk-scale reference implementation of the training objective.

The joint objective is the serialized-sequence cross entropy plus a
weighted frame-level diarization cross entropy. No gradients or models
live here; these functions exist to pin the arithmetic down and to verify
documentation examples.

Probabilities are clamped at a 1e-10 floor before the log; a target class
with exactly zero probability is degenerate and yields +inf rather than a
silently clamped finite loss.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import SotkitError

PROB_FLOOR = 1e-10
_LOG_FLOOR = math.log(PROB_FLOOR)


def _validate_log_rows(rows: np.ndarray, what: str) -> None:
    if rows.ndim != 2 or rows.shape[0] < 1:
        raise SotkitError(f"{what} must be a non-empty 2-D array of log probabilities")
    sums = np.exp(rows).sum(axis=1)
    if np.max(np.abs(sums - 1.0)) > 1e-6:
        raise SotkitError(f"{what} rows must exponentiate to 1 within 1e-6")


@dataclass(frozen=True, eq=False)
class TokenLogProbs:
    """Per-step log-probability rows over a token vocabulary, plus target indices."""

    rows: np.ndarray
    targets: tuple[int, ...]

    def __post_init__(self) -> None:
        rows = np.asarray(self.rows, dtype=np.float64)
        _validate_log_rows(rows, "token log probs")
        targets = tuple(int(t) for t in self.targets)
        if len(targets) != rows.shape[0]:
            raise SotkitError("one target index is required per step")
        if any(not 0 <= t < rows.shape[1] for t in targets):
            raise SotkitError("target index outside the vocabulary")
        rows.setflags(write=False)
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "targets", targets)

    @classmethod
    def from_probs(cls, probs: Sequence[Sequence[float]], targets: Sequence[int]) -> "TokenLogProbs":
        arr = np.asarray(probs, dtype=np.float64)
        with np.errstate(divide="ignore"):
            return cls(np.log(arr), tuple(targets))


@dataclass(frozen=True, eq=False)
class FrameLogProbs:
    """Per-frame log-probability triples (child, adult, silence) plus one-hot labels."""

    rows: np.ndarray
    labels: np.ndarray

    def __post_init__(self) -> None:
        rows = np.asarray(self.rows, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.float64)
        _validate_log_rows(rows, "frame log probs")
        if rows.shape[1] != 3:
            raise SotkitError("frame log probs must have three classes")
        if labels.shape != rows.shape:
            raise SotkitError("labels must match the log-prob shape")
        ok = np.all(np.isin(labels, (0.0, 1.0))) and np.all(labels.sum(axis=1) == 1.0)
        if not ok:
            raise SotkitError("labels must be one-hot rows")
        rows.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "labels", labels)

    @classmethod
    def from_probs(cls, probs: Sequence[Sequence[float]], classes: Sequence[int]) -> "FrameLogProbs":
        arr = np.asarray(probs, dtype=np.float64)
        onehot = np.zeros_like(arr)
        onehot[np.arange(arr.shape[0]), np.asarray(classes, dtype=int)] = 1.0
        with np.errstate(divide="ignore"):
            return cls(np.log(arr), onehot)


def serialized_ce(p: TokenLogProbs) -> float:
    """Mean negative target log probability over all serialized steps.

    Text, timestamp, and speaker positions all weigh the same.

    >>> serialized_ce(TokenLogProbs.from_probs([[1.0, 0.0]], [0]))
    0.0
    """
    picked = p.rows[np.arange(p.rows.shape[0]), np.asarray(p.targets)]
    if np.any(np.isneginf(picked)):
        return math.inf
    return float(-np.mean(np.maximum(picked, _LOG_FLOOR))) + 0.0


def frame_ce(p: FrameLogProbs) -> float:
    """Mean negative log probability of the active class over all frames."""
    picked = p.rows[p.labels > 0.5]
    if np.any(np.isneginf(picked)):
        return math.inf
    return float(-np.mean(np.maximum(picked, _LOG_FLOOR))) + 0.0


def total_loss(l_asr: float, l_diar: float, lambda_diar: float = 1.0) -> float:
    """Weighted sum of the two objectives.

    >>> total_loss(1.0, 0.5, 1.0)
    1.5
    """
    if not (math.isfinite(l_asr) and math.isfinite(l_diar) and math.isfinite(lambda_diar)):
        raise SotkitError("loss terms must be finite")
    return l_asr + lambda_diar * l_diar
