"""Corpus preprocessing and per-child conversational speech measures.

Preprocessing goes word list -> utterances -> windows: implausibly long
words are dropped (misalignment artifacts), consecutive same-role words
with small gaps merge into utterances, and sessions are packed greedily
into windows of at most 30 s whose boundaries sit at the midpoints of
inter-utterance silence gaps.

Boundary conventions follow the corpus rules exactly: a word is dropped
when its duration strictly exceeds the cap, and words merge only when the
gap is strictly below the threshold.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

from .core import SotkitError, SpeakerRole, TimeInterval, Transcript, Utterance, Word
from .probe import pearson, ZeroVarianceError

MAX_WORD_DURATION = 2.0
WORD_MERGE_GAP = 0.3
MAX_WINDOW_DURATION = 30.0


class NoSpeechError(SotkitError):
    """The requested role never speaks in the given session."""


class InsufficientDataError(SotkitError):
    """Fewer than two children are shared between the measure maps."""


class OversizedUtteranceWarning(UserWarning):
    """An utterance longer than the window size was skipped."""


@dataclass(frozen=True)
class Segment:
    """A window of at most 30 s holding complete utterances.

    The embedded transcript uses segment-relative times; span locates the
    window in the original session.
    """

    span: TimeInterval
    transcript: Transcript

    def __post_init__(self) -> None:
        if self.span.duration > MAX_WINDOW_DURATION + 1e-9:
            raise SotkitError(f"segment of {self.span.duration} s exceeds the window limit")


@dataclass(frozen=True)
class MeasureSet:
    """The five per-child speech measures for one role.

    speaking_rate is words per minute of the child's own speaking time (the
    sum of utterance durations), not per minute of session time.
    """

    words_per_minute: float
    utterances_per_minute: float
    mean_words_per_utterance: float
    mean_utterance_duration_s: float
    speaking_rate: float


MEASURE_NAMES: tuple[str, ...] = (
    "words_per_minute",
    "utterances_per_minute",
    "mean_words_per_utterance",
    "mean_utterance_duration_s",
    "speaking_rate",
)


def clean_words(words: list[Word], max_dur: float = MAX_WORD_DURATION) -> list[Word]:
    """Drop words whose duration strictly exceeds the cap; order preserved."""
    return [w for w in words if w.span.duration <= max_dur]


def merge_words_to_utterances(words: list[Word], gap: float = WORD_MERGE_GAP) -> Transcript:
    """Merge time-ordered words into utterances.

    A run extends while the next word keeps the same role and starts within
    the gap (strictly) of the previous word's end; a role change always
    starts a new utterance.
    """
    utts: list[Utterance] = []
    run: list[Word] = []

    def flush() -> None:
        if run:
            utts.append(
                Utterance(
                    role=run[0].role,
                    span=TimeInterval(run[0].span.start, run[-1].span.end),
                    words=tuple(w.text for w in run),
                )
            )
            run.clear()

    for w in words:
        if run and (w.role != run[-1].role or w.span.start - run[-1].span.end >= gap):
            flush()
        run.append(w)
    flush()
    return Transcript(tuple(utts))


def window_segments(t: Transcript, max_dur: float = MAX_WINDOW_DURATION) -> list[Segment]:
    """Greedy left-to-right packing of complete utterances into windows.

    Each window takes the longest prefix of remaining utterances whose last
    end stays within max_dur of the current boundary. The next boundary is
    the midpoint of the silence gap after the last included utterance (the
    session end after the final one), capped at max_dur from the current
    boundary so no window ever exceeds the limit; silence wider than a
    window is covered by empty windows. Utterances longer than the window
    itself are reported via OversizedUtteranceWarning and skipped.
    """
    usable: list[Utterance] = []
    for u in t.utterances:
        if u.span.duration > max_dur + 1e-9:
            warnings.warn(
                f"utterance [{u.span.start:.3f}, {u.span.end:.3f}] exceeds {max_dur} s; skipped",
                OversizedUtteranceWarning,
                stacklevel=2,
            )
        else:
            usable.append(u)

    session_end = t.session_span.end
    segments: list[Segment] = []
    boundary = t.session_span.start
    i = 0

    def emit(end: float, utts: tuple[Utterance, ...]) -> None:
        nonlocal boundary
        span = TimeInterval(boundary, end)
        inner = Transcript(
            tuple(u.shifted(-boundary) for u in utts), TimeInterval(0.0, span.duration)
        )
        segments.append(Segment(span, inner))
        boundary = end

    while i < len(usable):
        u = usable[i]
        if u.span.end - boundary > max_dur + 1e-9:
            # the next utterance cannot fit yet: cover silence and advance
            emit(min(boundary + max_dur, u.span.start), ())
            continue
        k = i
        while k < len(usable) and usable[k].span.end - boundary <= max_dur + 1e-9:
            k += 1
        if k < len(usable):
            midpoint = (usable[k - 1].span.end + usable[k].span.start) / 2.0
        else:
            midpoint = session_end
        emit(max(usable[k - 1].span.end, min(midpoint, boundary + max_dur)), tuple(usable[i:k]))
        i = k

    while session_end - boundary > 1e-9:
        if segments or usable:
            emit(min(session_end, boundary + max_dur), ())
        else:
            break  # an empty transcript yields no windows
    return segments


def speech_measures(segments: list[Segment], role: SpeakerRole) -> MeasureSet:
    """The five measures for one role over a session's windows.

    Session time is the summed window duration; rate measures multiply by 60
    before dividing so that round-number fixtures come out exact.
    """
    session_seconds = sum(s.span.duration for s in segments)
    utts = [u for s in segments for u in s.transcript.utterances if u.role is role]
    if not utts:
        raise NoSpeechError(f"no {role.label} utterances in session")
    n_words = sum(len(u.words) for u in utts)
    n_utts = len(utts)
    speaking_seconds = sum(u.span.duration for u in utts)
    if session_seconds <= 0 or speaking_seconds <= 0:
        raise NoSpeechError("session or speaking time is empty")
    return MeasureSet(
        words_per_minute=n_words * 60.0 / session_seconds,
        utterances_per_minute=n_utts * 60.0 / session_seconds,
        mean_words_per_utterance=n_words / n_utts,
        mean_utterance_duration_s=speaking_seconds / n_utts,
        speaking_rate=n_words * 60.0 / speaking_seconds,
    )


def agreement(
    gt: dict[str, MeasureSet], pred: dict[str, MeasureSet]
) -> list[tuple[str, float, float, float]]:
    """Per-measure (name, ground-truth mean, predicted mean, correlation) rows.

    Children are matched by id; at least two shared children are required.
    A measure with zero variance across children has no defined correlation
    and reports NaN.
    """
    children = sorted(set(gt) & set(pred))
    if len(children) < 2:
        raise InsufficientDataError("need at least two children present in both maps")
    rows: list[tuple[str, float, float, float]] = []
    for name in MEASURE_NAMES:
        x = [getattr(gt[c], name) for c in children]
        y = [getattr(pred[c], name) for c in children]
        try:
            r = pearson(x, y)
        except ZeroVarianceError:
            r = float("nan")
        rows.append((name, sum(x) / len(x), sum(y) / len(y), r))
    return rows
