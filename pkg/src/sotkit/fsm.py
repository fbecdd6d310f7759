"""Forced decoding for serialized transcripts.

A small state machine tracks the position inside the serialized grammar

    header (start-ts speaker text+ end-ts)* eot

and yields, at every step, the set of token classes that keep the output
well formed: a monotone timestamp floor, the speaker alternatives, the
text-or-end choice inside an utterance, and the end-of-transcript option
between utterances. Timestamp values falling strictly inside suppressed
(diarization-predicted silence) regions are masked out.

State names follow the decoding positions: HEADER expects the header token,
START_TIME the next utterance's start timestamp (or the end of the
transcript), SPEAKER a speaker tag, TEXT a word or the end timestamp once at
least one word was emitted, END_TIME the position right after an end
timestamp (next start or end of transcript), DONE is terminal. The
between-utterance positions START_TIME and END_TIME accept the same token
set, so an empty transcript (header followed by the end marker) is legal.

The driver is a greedy argmax loop with a repetition penalty on text tokens
already emitted in the current utterance, and a hard 256-token budget whose
exhaustion marks the stream truncated.
"""

from __future__ import annotations

from bisect import bisect_left
from dataclasses import dataclass, replace
from enum import IntEnum
from typing import Callable, Iterator, Protocol, Sequence, runtime_checkable

import numpy as np

from .core import SotkitError, TimeInterval
from .grammar import (
    EOT,
    GRID_STEP,
    HEADER,
    MAX_GRID_INDEX,
    MAX_STREAM_TOKENS,
    SPEAKER_ADULT,
    SPEAKER_CHILD,
    Token,
    TokenKind,
    TokenStream,
    ts,
)

REPETITION_PENALTY = 1.1


class IllegalTransitionError(SotkitError):
    """The driver pushed a token the current state does not permit."""


class DecodePhase(IntEnum):
    HEADER = 1
    START_TIME = 2
    SPEAKER = 3
    TEXT = 4
    END_TIME = 5
    DONE = 6


@dataclass(frozen=True)
class SuppressionSet:
    """Disjoint, sorted time regions whose interior timestamps are forbidden.

    Overlapping or touching inputs are merged and zero-length regions
    dropped, so the disjointness invariant holds by construction.
    """

    regions: tuple[TimeInterval, ...] = ()

    def __post_init__(self) -> None:
        merged: list[TimeInterval] = []
        for r in sorted(self.regions, key=lambda r: (r.start, r.end)):
            if r.duration <= 0:
                continue
            if merged and r.start <= merged[-1].end:
                if r.end > merged[-1].end:
                    merged[-1] = TimeInterval(merged[-1].start, r.end)
            else:
                merged.append(r)
        object.__setattr__(self, "regions", tuple(merged))

    def blocks(self, grid_index: int) -> bool:
        """True iff the grid point lies strictly inside a suppressed region."""
        t = grid_index * GRID_STEP
        for r in self.regions:
            if r.start < t < r.end:
                return True
            if r.start >= t:
                break
        return False

    def allowed_grid_indices(self) -> list[int]:
        """All grid indices not strictly inside any region (cached)."""
        cached = _ALLOWED_CACHE.get(id(self))
        if cached is not None and cached[0] is self:
            return cached[1]
        out = [i for i in range(MAX_GRID_INDEX + 1) if not self.blocks(i)]
        if len(_ALLOWED_CACHE) >= 64:
            _ALLOWED_CACHE.clear()
        _ALLOWED_CACHE[id(self)] = (self, out)
        return out


# keyed by id with the object kept alive in the value to avoid id reuse bugs
_ALLOWED_CACHE: dict[int, tuple[SuppressionSet, list[int]]] = {}

NO_SUPPRESSION = SuppressionSet(())


@dataclass(frozen=True)
class DecodeState:
    """Immutable decoding position: phase, timestamp floor, and counters."""

    phase: DecodePhase = DecodePhase.HEADER
    last_ts: int = 0
    current_start: int | None = None
    tokens_emitted: int = 0
    text_count: int = 0


def init_state() -> DecodeState:
    return DecodeState()


@dataclass(frozen=True)
class MaskSpec:
    """The legal token classes at a decoding step.

    ts_values lists the concrete legal timestamp grid indices (ascending);
    it is empty iff TIMESTAMP is not in allowed. exhausted records that
    suppression blocked every timestamp at or above the floor, in which case
    the fallback policy applied: between utterances the timestamp option is
    withdrawn (forcing EOT), inside an utterance the floor value is offered
    with suppression ignored, because structural validity outranks
    suppression.
    """

    allowed: frozenset[TokenKind]
    ts_min: int
    suppressed: tuple[TimeInterval, ...]
    ts_values: tuple[int, ...] = ()
    exhausted: bool = False


def _legal_ts(floor: int, supp: SuppressionSet) -> list[int]:
    allowed = supp.allowed_grid_indices()
    pos = bisect_left(allowed, floor)
    return allowed[pos:]


def allowed_classes(state: DecodeState, supp: SuppressionSet = NO_SUPPRESSION) -> MaskSpec:
    """Legal token classes for the given state under a suppression set."""
    phase = state.phase
    regions = supp.regions
    if phase is DecodePhase.HEADER:
        return MaskSpec(frozenset({TokenKind.HEADER}), 0, regions)
    if phase is DecodePhase.SPEAKER:
        return MaskSpec(
            frozenset({TokenKind.SPEAKER_CHILD, TokenKind.SPEAKER_ADULT}), 0, regions
        )
    if phase is DecodePhase.TEXT:
        if state.text_count == 0:
            return MaskSpec(frozenset({TokenKind.TEXT}), 0, regions)
        floor = state.current_start if state.current_start is not None else state.last_ts
        values = _legal_ts(floor, supp)
        if not values:
            return MaskSpec(
                frozenset({TokenKind.TEXT, TokenKind.TIMESTAMP}),
                floor,
                regions,
                ts_values=(floor,),
                exhausted=True,
            )
        return MaskSpec(
            frozenset({TokenKind.TEXT, TokenKind.TIMESTAMP}),
            floor,
            regions,
            ts_values=tuple(values),
        )
    if phase in (DecodePhase.START_TIME, DecodePhase.END_TIME):
        floor = state.last_ts
        values = _legal_ts(floor, supp)
        if not values:
            return MaskSpec(
                frozenset({TokenKind.EOT}), floor, regions, exhausted=True
            )
        return MaskSpec(
            frozenset({TokenKind.TIMESTAMP, TokenKind.EOT}),
            floor,
            regions,
            ts_values=tuple(values),
        )
    return MaskSpec(frozenset(), state.last_ts, regions)  # DONE: nothing is legal


def advance(state: DecodeState, tok: Token) -> DecodeState:
    """Consume one token and return the next state.

    Checks structural legality (phase, kind, timestamp floor, token budget);
    suppression is the driver's responsibility since it is not part of the
    state. Raises IllegalTransitionError on violations, which indicate a
    driver bug rather than bad data.
    """
    if state.tokens_emitted >= MAX_STREAM_TOKENS:
        raise IllegalTransitionError("token budget exhausted")
    phase, kind = state.phase, tok.kind
    emitted = state.tokens_emitted + 1

    if phase is DecodePhase.HEADER and kind is TokenKind.HEADER:
        return replace(state, phase=DecodePhase.START_TIME, tokens_emitted=emitted)

    if phase in (DecodePhase.START_TIME, DecodePhase.END_TIME):
        if kind is TokenKind.EOT:
            return replace(state, phase=DecodePhase.DONE, tokens_emitted=emitted)
        if kind is TokenKind.TIMESTAMP:
            if tok.value < state.last_ts:
                raise IllegalTransitionError(
                    f"timestamp {tok.value} below floor {state.last_ts}"
                )
            return replace(
                state,
                phase=DecodePhase.SPEAKER,
                last_ts=tok.value,
                current_start=tok.value,
                text_count=0,
                tokens_emitted=emitted,
            )

    if phase is DecodePhase.SPEAKER and kind in (
        TokenKind.SPEAKER_CHILD,
        TokenKind.SPEAKER_ADULT,
    ):
        return replace(state, phase=DecodePhase.TEXT, text_count=0, tokens_emitted=emitted)

    if phase is DecodePhase.TEXT:
        if kind is TokenKind.TEXT:
            return replace(state, text_count=state.text_count + 1, tokens_emitted=emitted)
        if kind is TokenKind.TIMESTAMP and state.text_count >= 1:
            floor = state.current_start if state.current_start is not None else state.last_ts
            if tok.value < floor:
                raise IllegalTransitionError(f"timestamp {tok.value} below floor {floor}")
            return replace(
                state,
                phase=DecodePhase.END_TIME,
                last_ts=tok.value,
                tokens_emitted=emitted,
            )

    raise IllegalTransitionError(f"{tok!r} is not legal in phase {phase.name}")


class CandidateList(Sequence[Token]):
    """The masked candidates at one decoding step.

    Behaves as an ordered sequence of tokens: first the text block (the
    vocabulary, in order), then timestamp candidates with ascending grid
    values, then the remaining structural tokens. Tokens are built lazily;
    index_of gives scorers a fast lookup without scanning.
    """

    __slots__ = ("words", "ts_values", "specials", "_word_index")

    def __init__(
        self,
        words: tuple[str, ...],
        ts_values: tuple[int, ...],
        specials: tuple[Token, ...],
    ) -> None:
        self.words = words
        self.ts_values = ts_values
        self.specials = specials
        self._word_index: dict[str, int] | None = None

    def __len__(self) -> int:
        return len(self.words) + len(self.ts_values) + len(self.specials)

    def __getitem__(self, i: int) -> Token:
        if i < 0:
            i += len(self)
        nw = len(self.words)
        if 0 <= i < nw:
            return Token(TokenKind.TEXT, word=self.words[i])
        j = i - nw
        nt = len(self.ts_values)
        if 0 <= j < nt:
            return ts(self.ts_values[j])
        k = j - nt
        if 0 <= k < len(self.specials):
            return self.specials[k]
        raise IndexError(i)

    def __iter__(self) -> Iterator[Token]:
        for w in self.words:
            yield Token(TokenKind.TEXT, word=w)
        for v in self.ts_values:
            yield ts(v)
        yield from self.specials

    def index_of(self, tok: Token) -> int | None:
        """Position of a token in this candidate list, or None if masked out."""
        if tok.kind is TokenKind.TEXT:
            if self._word_index is None:
                self._word_index = {w: i for i, w in enumerate(self.words)}
            return self._word_index.get(tok.word)
        if tok.kind is TokenKind.TIMESTAMP:
            pos = bisect_left(self.ts_values, tok.value)
            if pos < len(self.ts_values) and self.ts_values[pos] == tok.value:
                return len(self.words) + pos
            return None
        for k, sp in enumerate(self.specials):
            if sp.kind is tok.kind:
                return len(self.words) + len(self.ts_values) + k
        return None


@runtime_checkable
class Scorer(Protocol):
    """Step oracle for the decode driver.

    score returns one value per candidate (any float scale; the argmax
    wins). observe, if present, is called with each accepted token so
    stateful scorers can track the emitted prefix.
    """

    def score(self, candidates: CandidateList) -> Sequence[float]: ...


def _candidates(mask: MaskSpec, vocab: tuple[str, ...]) -> CandidateList:
    allowed = mask.allowed
    words = vocab if TokenKind.TEXT in allowed else ()
    ts_values = mask.ts_values if TokenKind.TIMESTAMP in allowed else ()
    specials: tuple[Token, ...] = ()
    if TokenKind.HEADER in allowed:
        specials = (HEADER,)
    elif TokenKind.SPEAKER_CHILD in allowed:
        specials = (SPEAKER_CHILD, SPEAKER_ADULT)
    elif TokenKind.EOT in allowed:
        specials = (EOT,)
    return CandidateList(tuple(words), tuple(ts_values), specials)


def run_forced_decode(
    scorer: Scorer | Callable[[CandidateList], Sequence[float]],
    supp: SuppressionSet = NO_SUPPRESSION,
    *,
    vocab: Sequence[str],
    max_tokens: int = MAX_STREAM_TOKENS,
) -> TokenStream:
    """Greedy masked decoding until the end marker or the token budget.

    At each step the scorer rates the masked candidates; text tokens already
    emitted in the current utterance are penalized (positive scores divided
    by, negative multiplied by, the repetition penalty) before the argmax.
    Ties go to the earliest candidate, i.e. the smallest legal timestamp.
    The output always parses with zero missing-token errors.
    """
    score_fn = scorer.score if hasattr(scorer, "score") else scorer
    observe = getattr(scorer, "observe", None)
    vocab_t = tuple(vocab)

    state = init_state()
    tokens: list[Token] = []
    emitted_words: set[str] = set()

    while state.phase is not DecodePhase.DONE and len(tokens) < max_tokens:
        cands = _candidates(allowed_classes(state, supp), vocab_t)
        raw = score_fn(cands)
        scores = np.asarray(raw, dtype=np.float64).copy()
        if scores.shape != (len(cands),):
            raise SotkitError(
                f"scorer returned {scores.shape} scores for {len(cands)} candidates"
            )
        if cands.words and emitted_words:
            for i, w in enumerate(cands.words):
                if w in emitted_words:
                    s = scores[i]
                    scores[i] = s / REPETITION_PENALTY if s > 0 else s * REPETITION_PENALTY
        best = int(np.argmax(scores))
        tok = cands[best]
        tokens.append(tok)
        state = advance(state, tok)
        if tok.kind is TokenKind.TEXT:
            emitted_words.add(tok.word)
        elif state.phase is DecodePhase.SPEAKER:
            emitted_words.clear()  # a new utterance begins at its start timestamp
        if observe is not None:
            observe(tok)

    return TokenStream(tuple(tokens), truncated=state.phase is not DecodePhase.DONE)


class ReplayScorer:
    """Scores candidates to replay a fixed token sequence.

    The desired next token gets the high score; everything else a tiny
    floor, so when the mask forbids the desired token the argmax degrades to
    the first legal candidate. observe keeps the replay pointer in sync:
    emitting the desired kind advances it (even if the mask changed a
    timestamp's value), a forced token of a different kind does not.

    If loop_at is set, the scorer locks onto the sequence token at that
    index once reached and repeats it forever, emulating a decoder stuck in
    a text loop.
    """

    HIGH = 1.0
    FLOOR = 1e-13

    def __init__(self, sequence: Sequence[Token], loop_at: int | None = None) -> None:
        self.sequence = list(sequence)
        self.pos = 0
        self.loop_at = loop_at

    def _desired(self) -> Token:
        if self.loop_at is not None and self.pos >= self.loop_at:
            return self.sequence[self.loop_at]
        if self.pos < len(self.sequence):
            return self.sequence[self.pos]
        return EOT

    def score(self, candidates: CandidateList) -> np.ndarray:
        scores = np.full(len(candidates), self.FLOOR)
        idx = candidates.index_of(self._desired())
        if idx is not None:
            scores[idx] = self.HIGH
        return scores

    def observe(self, tok: Token) -> None:
        if self.loop_at is not None and self.pos >= self.loop_at:
            return
        if self.pos < len(self.sequence) and tok.kind is self.sequence[self.pos].kind:
            self.pos += 1
