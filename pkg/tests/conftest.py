"""Shared fixture builders for the test suite."""

from __future__ import annotations

from sotkit.core import SpeakerRole, TimeInterval, Transcript, Utterance, Word
from sotkit.sim import SplitMix64

VOCAB = ("go", "stop", "ball", "look", "here", "okay")


def word(text: str, start: float, end: float, role: SpeakerRole) -> Word:
    return Word(text, TimeInterval(start, end), role)


def random_words(rng: SplitMix64, n: int, *, max_gap: float = 1.0) -> list[Word]:
    """Time-ordered words with role runs, small gaps, and sub-cap durations."""
    words: list[Word] = []
    cursor = rng.uniform(0.0, 0.5)
    role = SpeakerRole.CHILD
    for _ in range(n):
        if rng.random() < 0.3:
            role = SpeakerRole.ADULT if role is SpeakerRole.CHILD else SpeakerRole.CHILD
        dur = rng.uniform(0.1, 0.8)
        words.append(Word(rng.choice(VOCAB), TimeInterval(cursor, cursor + dur), role))
        cursor += dur + rng.uniform(0.01, max_gap)
    return words


def random_transcript(
    rng: SplitMix64,
    n_utterances: int,
    *,
    min_gap: float = 0.31,
    max_gap: float = 1.0,
    max_words: int = 4,
) -> Transcript:
    utts: list[Utterance] = []
    cursor = rng.uniform(0.0, 1.0)
    for i in range(n_utterances):
        n_words = rng.randint(1, max_words)
        dur = rng.uniform(0.2, 0.5) * n_words
        role = SpeakerRole.CHILD if rng.random() < 0.5 else SpeakerRole.ADULT
        utts.append(
            Utterance(
                role,
                TimeInterval(cursor, cursor + dur),
                tuple(rng.choice(VOCAB) for _ in range(n_words)),
            )
        )
        cursor += dur + rng.uniform(min_gap, max_gap)
    return Transcript(tuple(utts))
