"""Synthetic dialogues and the forced-decoding error study.

Randomness comes from SplitMix64, a well-known 64-bit generator implemented
here so fixture streams are identical on every platform. Per-trial seeds
derive from the master seed by index, which keeps trials independent and
parallelizable.

The error study replays a corrupted serialization of a synthetic dialogue
under two conditions. Without forcing, the corrupted stream is what an
unconstrained decoder would emit: dropped tokens simply never appear, and a
looping decoder repeats one word until the token budget. With forcing, the
same corrupted preferences drive the masked greedy decoder, which renders
missing structural tokens impossible.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .core import SotkitError, SpeakerRole, TimeInterval, Transcript, Utterance
from .frames import FrameProbSequence, rasterize_labels, silence_regions
from .fsm import ReplayScorer, SuppressionSet, run_forced_decode
from .grammar import (
    EOT,
    GRID_STEP,
    HEADER,
    MAX_STREAM_TOKENS,
    StructuralErrorReport,
    Token,
    TokenStream,
    parse_token_stream,
    quantize,
    speaker_token,
    text,
    ts,
)

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def _mix(z: int) -> int:
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


class SplitMix64:
    """SplitMix64: 64-bit state advanced by the golden-gamma, mixed on output."""

    def __init__(self, seed: int) -> None:
        self._state = seed & _MASK64

    def next_u64(self) -> int:
        self._state = (self._state + _GOLDEN) & _MASK64
        return _mix(self._state)

    def random(self) -> float:
        """Uniform in [0, 1) with 53 bits of precision."""
        return (self.next_u64() >> 11) / 9007199254740992.0

    def randint(self, lo: int, hi: int) -> int:
        """Uniform integer in [lo, hi], scaled without modulo bias."""
        span = hi - lo + 1
        return lo + ((self.next_u64() * span) >> 64)

    def uniform(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.random()

    def choice(self, seq: Sequence):
        return seq[self.randint(0, len(seq) - 1)]

    @staticmethod
    def derive(master_seed: int, index: int) -> int:
        """The index-th child seed of a master seed; stable across platforms."""
        return _mix((master_seed + (index + 1) * _GOLDEN) & _MASK64)


@dataclass(frozen=True)
class SimConfig:
    """Knobs for dialogue synthesis and error injection."""

    seed: int = 0
    n_utterances: int = 4
    vocab: tuple[str, ...] = ("yes", "no", "look", "here", "okay")
    p_drop_speaker: float = 0.0
    p_drop_timestamp: float = 0.0
    p_loop: float = 0.0
    silence_gap_range: tuple[float, float] = (0.3, 1.2)

    def __post_init__(self) -> None:
        for name in ("p_drop_speaker", "p_drop_timestamp", "p_loop"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise SotkitError(f"{name} must lie in [0, 1], got {p}")
        lo, hi = self.silence_gap_range
        if lo <= 0 or hi < lo:
            raise SotkitError("silence gaps must be positive and ordered")
        if self.n_utterances < 0:
            raise SotkitError("n_utterances must be non-negative")
        if not self.vocab:
            raise SotkitError("vocab must be non-empty")
        object.__setattr__(self, "vocab", tuple(self.vocab))


SPEECH_PROB = 0.9  # probability mass on the active class in synthetic frames


def synth_dialogue(c: SimConfig) -> tuple[Transcript, FrameProbSequence]:
    """A deterministic alternating-role dialogue plus consistent frame probabilities.

    Utterance times are quantized to the timestamp grid so serialization is
    lossless. Synthesis stops early if the 30 s window would overflow.
    """
    rng = SplitMix64(c.seed)
    utts: list[Utterance] = []
    cursor = 0.0
    for i in range(c.n_utterances):
        gap = rng.uniform(*c.silence_gap_range)
        n_words = rng.randint(1, 3)
        words = tuple(rng.choice(c.vocab) for _ in range(n_words))
        start = quantize(cursor + gap) * GRID_STEP
        dur = 0.2 * n_words + rng.uniform(0.0, 0.4)
        end = quantize(start + dur) * GRID_STEP
        if end >= 29.5:
            break
        role = SpeakerRole.CHILD if i % 2 == 0 else SpeakerRole.ADULT
        utts.append(Utterance(role, TimeInterval(start, end), words))
        cursor = end
    tail = rng.uniform(*c.silence_gap_range)
    session_end = min(30.0, quantize(cursor + tail) * GRID_STEP)
    t = Transcript(tuple(utts), TimeInterval(0.0, session_end))

    labels = rasterize_labels(t, GRID_STEP, t.session_span)
    probs = np.full((len(labels), 3), (1.0 - SPEECH_PROB) / 2.0)
    for i, lab in enumerate(labels.labels):
        probs[i, int(lab)] = SPEECH_PROB
    return t, FrameProbSequence(probs, GRID_STEP)


@dataclass(frozen=True)
class CorruptionPlan:
    """Per-utterance injection decisions plus their materializations."""

    drop_speaker: tuple[bool, ...]
    drop_timestamps: tuple[bool, ...]
    loop_at_utterance: int | None
    unforced_stream: TokenStream  # what an unconstrained decoder would emit
    replay_tokens: tuple[Token, ...]  # preference sequence for the forced decoder
    replay_loop_at: int | None


def plan_corruption(truth: Transcript, c: SimConfig, rng: SplitMix64) -> CorruptionPlan:
    """Draw injection decisions and build both decoding conditions' inputs."""
    n = len(truth.utterances)
    drop_spk = tuple(rng.random() < c.p_drop_speaker for _ in range(n))
    drop_ts = tuple(rng.random() < c.p_drop_timestamp for _ in range(n))
    loops = [i for i in range(n) if rng.random() < c.p_loop]
    loop_utt = loops[0] if loops else None

    tokens: list[Token] = [HEADER]
    replay_loop_at: int | None = None
    truncated = False
    for i, u in enumerate(truth.utterances):
        if not drop_ts[i]:
            tokens.append(ts(quantize(u.span.start)))
        if not drop_spk[i]:
            tokens.append(speaker_token(u.role))
        if loop_utt == i:
            replay_loop_at = len(tokens)
            tokens.append(text(u.words[0]))
            truncated = True
            break
        tokens.extend(text(w) for w in u.words)
        if not drop_ts[i]:
            tokens.append(ts(quantize(u.span.end)))
    replay = tuple(tokens) + ((EOT,) if not truncated else ())

    if truncated:
        word = tokens[-1]
        unforced = list(tokens)
        while len(unforced) < MAX_STREAM_TOKENS:
            unforced.append(word)
        stream = TokenStream(tuple(unforced), truncated=True)
    else:
        stream = TokenStream(replay)

    return CorruptionPlan(
        drop_speaker=drop_spk,
        drop_timestamps=drop_ts,
        loop_at_utterance=loop_utt,
        unforced_stream=stream,
        replay_tokens=replay,
        replay_loop_at=replay_loop_at,
    )


def mock_scorer(truth: TokenStream, c: SimConfig, rng: SplitMix64 | None = None) -> ReplayScorer:
    """A step oracle replaying a (possibly corrupted) serialization of truth.

    With all injection probabilities zero this replays the stream exactly.
    Corruption decisions are drawn from rng (a fresh generator seeded from
    the config when omitted).
    """
    transcript, report = parse_token_stream(truth)
    if not report.clean:
        raise SotkitError("mock scorer requires a well-formed truth stream")
    plan = plan_corruption(transcript, c, rng or SplitMix64(c.seed))
    return ReplayScorer(plan.replay_tokens, loop_at=plan.replay_loop_at)


@dataclass(frozen=True)
class ConditionRates:
    """Error rates for one decoding condition.

    Missing-token rates are fractions of ground-truth utterances; the loop
    rate is the fraction of decodes that hit the token budget.
    """

    miss_speaker: float
    miss_timestamp: float
    miss_both: float
    infinite_loop: float

    def __post_init__(self) -> None:
        for v in (self.miss_speaker, self.miss_timestamp, self.miss_both, self.infinite_loop):
            if not 0.0 <= v <= 1.0:
                raise SotkitError("rates must lie in [0, 1]")


@dataclass(frozen=True)
class ErrorStudyResult:
    """Structural error rates with and without forced decoding."""

    unforced: ConditionRates
    forced: ConditionRates
    n_trials: int
    n_utterances: int


def _accumulate(agg: dict, report: StructuralErrorReport) -> None:
    agg["miss_speaker"] += report.miss_speaker
    agg["miss_timestamp"] += report.miss_timestamp
    agg["miss_both"] += report.miss_both
    agg["loops"] += 1 if report.infinite_loop else 0


def run_error_study(c: SimConfig, n_trials: int, use_suppression: bool = True) -> ErrorStudyResult:
    """Decode n_trials synthetic dialogues under both conditions.

    Deterministic for a fixed config seed: trial i draws its dialogue and
    its corruption decisions from seeds derived from the master seed, and
    both conditions share the same decisions.
    """
    if n_trials < 1:
        raise SotkitError("n_trials must be at least 1")
    totals = {"utterances": 0}
    agg_unforced = {"miss_speaker": 0, "miss_timestamp": 0, "miss_both": 0, "loops": 0}
    agg_forced = {"miss_speaker": 0, "miss_timestamp": 0, "miss_both": 0, "loops": 0}

    for trial in range(n_trials):
        dialogue_seed = SplitMix64.derive(c.seed, 2 * trial)
        corruption_seed = SplitMix64.derive(c.seed, 2 * trial + 1)
        truth, probs = synth_dialogue(replace(c, seed=dialogue_seed))
        totals["utterances"] += len(truth.utterances)
        plan = plan_corruption(truth, c, SplitMix64(corruption_seed))

        _, unforced_report = parse_token_stream(plan.unforced_stream)
        _accumulate(agg_unforced, unforced_report)

        supp = silence_regions(probs) if use_suppression else SuppressionSet(())
        scorer = ReplayScorer(plan.replay_tokens, loop_at=plan.replay_loop_at)
        decoded = run_forced_decode(scorer, supp, vocab=c.vocab)
        _, forced_report = parse_token_stream(decoded)
        _accumulate(agg_forced, forced_report)

    n_utts = max(1, totals["utterances"])

    def rates(agg: dict) -> ConditionRates:
        return ConditionRates(
            miss_speaker=agg["miss_speaker"] / n_utts,
            miss_timestamp=agg["miss_timestamp"] / n_utts,
            miss_both=agg["miss_both"] / n_utts,
            infinite_loop=agg["loops"] / n_trials,
        )

    return ErrorStudyResult(
        unforced=rates(agg_unforced),
        forced=rates(agg_forced),
        n_trials=n_trials,
        n_utterances=totals["utterances"],
    )
