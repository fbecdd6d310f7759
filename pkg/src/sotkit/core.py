"""Shared domain types for speaker-attributed child-adult transcripts.

All times are in seconds, relative to the start of the audio segment the
transcript describes. Comparisons on the 0.02 s timestamp grid use exact
integer arithmetic on grid indices; everywhere else a 1e-9 epsilon guards
against float ordering noise.

All types are immutable after construction and safe to share across threads.
"""

from __future__ import annotations

import json
import string
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Iterable, Sequence, TextIO

EPS = 1e-9

_PUNCT = string.punctuation + "‘’“”"


class SotkitError(Exception):
    """Base class for all data errors raised by this package."""


class SpeakerRole(IntEnum):
    """The two conversational roles. CHILD < ADULT for deterministic iteration."""

    CHILD = 0
    ADULT = 1

    @property
    def label(self) -> str:
        return "child" if self is SpeakerRole.CHILD else "adult"

    @classmethod
    def from_label(cls, label: str) -> "SpeakerRole":
        try:
            return _ROLE_BY_LABEL[label.strip().lower()]
        except KeyError:
            raise SotkitError(f"unknown speaker role {label!r}") from None


_ROLE_BY_LABEL = {"child": SpeakerRole.CHILD, "adult": SpeakerRole.ADULT}


@dataclass(frozen=True, order=True)
class TimeInterval:
    """A closed time span [start, end] with start <= end, both non-negative."""

    start: float
    end: float

    def __post_init__(self) -> None:
        object.__setattr__(self, "start", float(self.start))
        object.__setattr__(self, "end", float(self.end))
        if self.start < 0:
            raise SotkitError(f"interval start must be non-negative, got {self.start}")
        if self.end < self.start:
            raise SotkitError(f"interval end {self.end} precedes start {self.start}")

    @property
    def duration(self) -> float:
        return self.end - self.start

    def shifted(self, offset: float) -> "TimeInterval":
        return TimeInterval(self.start + offset, self.end + offset)

    def contains_strictly(self, t: float) -> bool:
        """True iff t lies in the open interior (start, end)."""
        return self.start < t < self.end


def interval_overlap(a: TimeInterval, b: TimeInterval) -> float:
    """Length of the overlap between two intervals; 0 for touching or disjoint.

    >>> interval_overlap(TimeInterval(0, 5), TimeInterval(3, 10))
    2.0
    >>> interval_overlap(TimeInterval(0, 5), TimeInterval(5, 9))
    0.0
    """
    return max(0.0, min(a.end, b.end) - max(a.start, b.start))


@dataclass(frozen=True)
class Word:
    """A single word with its time span and speaker role.

    The text must contain no whitespace; normalization is a separate,
    explicit step (see normalize_word).
    """

    text: str
    span: TimeInterval
    role: SpeakerRole

    def __post_init__(self) -> None:
        if not self.text:
            raise SotkitError("word text must be non-empty")
        if any(c.isspace() for c in self.text):
            raise SotkitError(f"word text may not contain whitespace: {self.text!r}")


@dataclass(frozen=True)
class Utterance:
    """A same-speaker word run with one start/end timestamp pair.

    words may be empty only for utterances recovered from malformed token
    streams; serialization rejects empty utterances.
    """

    role: SpeakerRole
    span: TimeInterval
    words: tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "words", tuple(self.words))
        for w in self.words:
            if not w or any(c.isspace() for c in w):
                raise SotkitError(f"utterance word may not be empty or contain whitespace: {w!r}")

    @property
    def text(self) -> str:
        return " ".join(self.words)

    def shifted(self, offset: float) -> "Utterance":
        return Utterance(self.role, self.span.shifted(offset), self.words)


@dataclass(frozen=True)
class Transcript:
    """A time-ordered, non-overlapping sequence of utterances within a session span.

    Ordering and containment are checked on construction, so every transform
    that rebuilds a Transcript re-establishes the invariants.
    """

    utterances: tuple[Utterance, ...]
    session_span: TimeInterval = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        utts = tuple(self.utterances)
        object.__setattr__(self, "utterances", utts)
        if self.session_span is None:
            end = max((u.span.end for u in utts), default=0.0)
            object.__setattr__(self, "session_span", TimeInterval(0.0, end))
        span = self.session_span
        prev: Utterance | None = None
        for u in utts:
            if u.span.start < span.start - EPS or u.span.end > span.end + EPS:
                raise SotkitError(
                    f"utterance [{u.span.start}, {u.span.end}] outside session span "
                    f"[{span.start}, {span.end}]"
                )
            if prev is not None:
                if u.span.start < prev.span.start - EPS:
                    raise SotkitError("utterance starts must be non-decreasing")
                if u.span.start < prev.span.end - EPS:
                    raise SotkitError(
                        f"utterances overlap: [{prev.span.start}, {prev.span.end}] and "
                        f"[{u.span.start}, {u.span.end}]"
                    )
            prev = u

    def __len__(self) -> int:
        return len(self.utterances)

    def shifted(self, offset: float) -> "Transcript":
        return Transcript(
            tuple(u.shifted(offset) for u in self.utterances),
            self.session_span.shifted(offset),
        )


def normalize_word(word: str) -> str:
    """Lowercase and strip leading/trailing punctuation from a single word.

    May return an empty string when the word is pure punctuation; callers
    drop such words before scoring.
    """
    return word.strip(_PUNCT).lower()


def normalize_text(text: str) -> str:
    """Normalize free text: lowercase, per-word punctuation strip, collapse whitespace."""
    out = [w for w in (normalize_word(t) for t in text.split()) if w]
    return " ".join(out)


def explode_words(utterance: Utterance) -> list[Word]:
    """Split an utterance into words with uniformly interpolated spans.

    Word i of n covers the i-th equal slice of the utterance span. Used
    whenever word-level timing is needed but only utterance timestamps exist.
    """
    n = len(utterance.words)
    if n == 0:
        return []
    start, dur = utterance.span.start, utterance.span.duration
    step = dur / n
    # the last word ends exactly at the utterance end, so exploding and
    # re-merging reproduces the span bit for bit
    bounds = [start + i * step for i in range(n)] + [utterance.span.end]
    return [
        Word(w, TimeInterval(bounds[i], bounds[i + 1]), utterance.role)
        for i, w in enumerate(utterance.words)
    ]


# ---------------------------------------------------------------------------
# Transcript JSONL: one object per utterance, sorted by start time:
#   {"start": float, "end": float, "speaker": "child"|"adult", "text": str}
# ---------------------------------------------------------------------------


def read_transcript_jsonl(fp: TextIO) -> Transcript:
    utts = []
    for lineno, line in enumerate(fp, 1):
        line = line.strip()
        if not line:
            continue
        try:
            row = json.loads(line)
            utt = Utterance(
                role=SpeakerRole.from_label(row["speaker"]),
                span=TimeInterval(float(row["start"]), float(row["end"])),
                words=tuple(str(row["text"]).split()),
            )
        except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
            raise SotkitError(f"bad transcript row at line {lineno}: {exc}") from exc
        utts.append(utt)
    utts.sort(key=lambda u: (u.span.start, u.span.end, u.role))
    return Transcript(tuple(utts))


def write_transcript_jsonl(t: Transcript, fp: TextIO) -> None:
    for u in t.utterances:
        fp.write(
            json.dumps(
                {
                    "start": u.span.start,
                    "end": u.span.end,
                    "speaker": u.role.label,
                    "text": u.text,
                },
                ensure_ascii=False,
            )
        )
        fp.write("\n")


def load_transcript(path: str) -> Transcript:
    with open(path, "r", encoding="utf-8") as fp:
        return read_transcript_jsonl(fp)


def save_transcript(t: Transcript, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fp:
        write_transcript_jsonl(t, fp)


def make_transcript(
    rows: Iterable[tuple[str, float, float, str]] | Sequence[tuple[str, float, float, str]],
) -> Transcript:
    """Build a Transcript from (role_label, start, end, text) rows; test/fixture helper."""
    utts = tuple(
        Utterance(SpeakerRole.from_label(r), TimeInterval(s, e), tuple(text.split()))
        for r, s, e, text in rows
    )
    return Transcript(utts)
