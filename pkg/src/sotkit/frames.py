"""Frame-level speaker-activity signals and the operations built on them.

Frames are fixed-period slices (0.02 s by default); frame n covers
[n*period, (n+1)*period) and all point lookups use the frame center. Each
frame carries either a (child, adult, silence) probability triple or a hard
label with the same class order.
"""

from __future__ import annotations

import csv
from bisect import bisect_right
from dataclasses import dataclass
from enum import IntEnum
from typing import Sequence, TextIO

import numpy as np

from .core import SotkitError, SpeakerRole, TimeInterval, Transcript
from .fsm import SuppressionSet

DEFAULT_FRAME_PERIOD = 0.02
PROB_FLOOR = 1e-10  # clamp before any log

SILENCE_THRESHOLD = 0.7
SILENCE_SHRINK = 0.2
MERGE_GAP = 0.3
MIN_SEGMENT_DURATION = 0.2


class FrameLabel(IntEnum):
    """Hard per-frame class; values match the probability column order."""

    CHILD = 0
    ADULT = 1
    SILENCE = 2

    @property
    def label(self) -> str:
        return self.name.lower()


_ROLE_TO_FRAME = {SpeakerRole.CHILD: FrameLabel.CHILD, SpeakerRole.ADULT: FrameLabel.ADULT}
_FRAME_TO_ROLE = {FrameLabel.CHILD: SpeakerRole.CHILD, FrameLabel.ADULT: SpeakerRole.ADULT}


@dataclass(frozen=True, eq=False)
class FrameProbSequence:
    """Per-frame (p_child, p_adult, p_silence) triples at a fixed frame period."""

    probs: np.ndarray
    frame_period: float = DEFAULT_FRAME_PERIOD

    def __post_init__(self) -> None:
        arr = np.asarray(self.probs, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[1] != 3:
            raise SotkitError(f"expected an (N, 3) probability array, got {arr.shape}")
        if np.any(arr < 0):
            raise SotkitError("frame probabilities must be non-negative")
        if arr.shape[0] and np.max(np.abs(arr.sum(axis=1) - 1.0)) > 1e-6:
            raise SotkitError("frame probability triples must sum to 1 within 1e-6")
        if self.frame_period <= 0:
            raise SotkitError("frame period must be positive")
        arr.setflags(write=False)
        object.__setattr__(self, "probs", arr)

    def __len__(self) -> int:
        return self.probs.shape[0]

    @property
    def centers(self) -> np.ndarray:
        return (np.arange(len(self)) + 0.5) * self.frame_period


@dataclass(frozen=True)
class FrameLabelSequence:
    """Per-frame hard labels with the same framing convention as the probabilities."""

    labels: tuple[FrameLabel, ...]
    frame_period: float = DEFAULT_FRAME_PERIOD

    def __post_init__(self) -> None:
        object.__setattr__(self, "labels", tuple(self.labels))
        if self.frame_period <= 0:
            raise SotkitError("frame period must be positive")

    def __len__(self) -> int:
        return len(self.labels)


@dataclass(frozen=True)
class RoleSegment:
    """A contiguous span attributed to one speaker role."""

    role: SpeakerRole
    span: TimeInterval

    def __post_init__(self) -> None:
        if self.span.duration <= 0:
            raise SotkitError("role segments must have positive duration")


def silence_regions(
    f: FrameProbSequence,
    threshold: float = SILENCE_THRESHOLD,
    shrink: float = SILENCE_SHRINK,
) -> SuppressionSet:
    """Suppression regions from silence-dominant frame runs.

    Maximal runs with p_silence >= threshold become intervals, each then
    shrunk by the margin at both ends; runs too short to survive the shrink
    are dropped. The margin leaves room for timestamps near true boundaries.
    """
    if not 0 < threshold < 1:
        raise SotkitError("threshold must lie strictly between 0 and 1")
    if shrink < 0:
        raise SotkitError("shrink must be non-negative")
    sil = f.probs[:, FrameLabel.SILENCE] >= threshold
    regions: list[TimeInterval] = []
    n = len(sil)
    i = 0
    while i < n:
        if not sil[i]:
            i += 1
            continue
        j = i
        while j < n and sil[j]:
            j += 1
        lo = i * f.frame_period + shrink
        hi = j * f.frame_period - shrink
        if hi - lo > 1e-12:
            regions.append(TimeInterval(lo, hi))
        i = j
    return SuppressionSet(tuple(regions))


def rasterize_labels(
    t: Transcript,
    frame_period: float = DEFAULT_FRAME_PERIOD,
    span: TimeInterval | None = None,
) -> FrameLabelSequence:
    """Hard frame labels from a transcript: the role covering each frame center.

    Frame centers falling in no utterance (half-open spans [start, end)) are
    silence. A trailing partial frame is dropped.
    """
    if span is None:
        span = t.session_span
    n = int(span.duration / frame_period + 1e-9)
    starts = [u.span.start for u in t.utterances]
    labels: list[FrameLabel] = []
    for i in range(n):
        c = span.start + (i + 0.5) * frame_period
        k = bisect_right(starts, c) - 1
        if k >= 0 and c < t.utterances[k].span.end:
            labels.append(_ROLE_TO_FRAME[t.utterances[k].role])
        else:
            labels.append(FrameLabel.SILENCE)
    return FrameLabelSequence(tuple(labels), frame_period)


def labels_to_segments(seq: FrameLabelSequence, origin: float = 0.0) -> list[RoleSegment]:
    """Maximal same-label speech runs as role segments (silence separates).

    origin is the absolute time of frame 0, for label sequences rasterized
    over a span not starting at zero.
    """
    segments: list[RoleSegment] = []
    n = len(seq)
    i = 0
    while i < n:
        lab = seq.labels[i]
        j = i
        while j < n and seq.labels[j] is lab:
            j += 1
        if lab is not FrameLabel.SILENCE:
            segments.append(
                RoleSegment(
                    _FRAME_TO_ROLE[lab],
                    TimeInterval(origin + i * seq.frame_period, origin + j * seq.frame_period),
                )
            )
        i = j
    return segments


def attribute_words(
    words: Sequence[tuple[str, TimeInterval]],
    f: FrameProbSequence,
) -> list["Word"]:
    """Assign each word the role with the higher mean log probability.

    Frames are those whose centers fall in the word span (half-open); a word
    too short to cover any center uses the single nearest frame.
    Probabilities are clamped at a small floor before the log. Ties go to
    the child role.
    """
    from .core import Word

    if len(f) == 0:
        raise SotkitError("cannot attribute words with an empty probability sequence")
    logs = np.log(np.maximum(f.probs[:, :2], PROB_FLOOR))
    period = f.frame_period
    n = len(f)
    out: list[Word] = []
    for text_, span in words:
        # centers are at (k + 0.5) * period; find k range with start <= c < end
        lo = int(np.ceil(span.start / period - 0.5 - 1e-9))
        hi = int(np.ceil(span.end / period - 0.5 - 1e-9))  # exclusive
        lo = max(lo, 0)
        hi = min(hi, n)
        if lo >= hi:
            mid = (span.start + span.end) / 2.0
            nearest = int(np.clip(round(mid / period - 0.5), 0, n - 1))
            lo, hi = nearest, nearest + 1
        mean_child, mean_adult = logs[lo:hi].mean(axis=0)
        role = SpeakerRole.CHILD if mean_child >= mean_adult else SpeakerRole.ADULT
        out.append(Word(text_, span, role))
    return out


def postprocess_segments(
    segments: Sequence[RoleSegment],
    merge_gap: float = MERGE_GAP,
    min_dur: float = MIN_SEGMENT_DURATION,
) -> list[RoleSegment]:
    """Merge same-role segments separated by small gaps, then drop short ones.

    Merging is transitive within each role's track and happens before the
    duration filter, so the result is idempotent under re-application.
    """
    by_role: dict[SpeakerRole, list[RoleSegment]] = {r: [] for r in SpeakerRole}
    for seg in sorted(segments, key=lambda s: (s.span.start, s.span.end, s.role)):
        track = by_role[seg.role]
        if track and seg.span.start - track[-1].span.end < merge_gap:
            track[-1] = RoleSegment(
                seg.role,
                TimeInterval(track[-1].span.start, max(track[-1].span.end, seg.span.end)),
            )
        else:
            track.append(seg)
    merged = [s for track in by_role.values() for s in track if s.span.duration >= min_dur]
    merged.sort(key=lambda s: (s.span.start, s.span.end, s.role))
    return merged


# ---------------------------------------------------------------------------
# Frame probability CSV: header `t,p_child,p_adult,p_sil`, one row per frame
# start time.
# ---------------------------------------------------------------------------


def write_frame_probs_csv(f: FrameProbSequence, fp: TextIO) -> None:
    fp.write("t,p_child,p_adult,p_sil\n")
    for i, (pc, pa, ps) in enumerate(f.probs):
        fp.write(f"{i * f.frame_period:.4f},{pc:.6f},{pa:.6f},{ps:.6f}\n")


def read_frame_probs_csv(fp: TextIO) -> FrameProbSequence:
    reader = csv.DictReader(fp)
    required = {"t", "p_child", "p_adult", "p_sil"}
    if reader.fieldnames is None or not required <= set(reader.fieldnames):
        raise SotkitError("frame CSV must have header t,p_child,p_adult,p_sil")
    times: list[float] = []
    rows: list[tuple[float, float, float]] = []
    try:
        for row in reader:
            times.append(float(row["t"]))
            rows.append((float(row["p_child"]), float(row["p_adult"]), float(row["p_sil"])))
    except (TypeError, ValueError) as exc:
        raise SotkitError(f"bad frame CSV row: {exc}") from exc
    if len(times) >= 2:
        period = times[1] - times[0]
    else:
        period = DEFAULT_FRAME_PERIOD
    return FrameProbSequence(np.array(rows, dtype=np.float64).reshape(-1, 3), round(period, 9))


def load_frame_probs(path: str) -> FrameProbSequence:
    with open(path, "r", encoding="utf-8") as fp:
        return read_frame_probs_csv(fp)


def save_frame_probs(f: FrameProbSequence, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fp:
        write_frame_probs_csv(f, fp)
