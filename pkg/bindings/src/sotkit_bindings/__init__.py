"""Step-wise decoding constraints and scoring for external neural loops.

The engine in sotkit works on token classes; real decoders work on integer
token IDs. A VocabularyMap declares how IDs map onto classes (many text IDs,
one ID per structural token, a contiguous range for the 1501 timestamp grid
values), and a DecodeSession wraps one decode stream: the external loop
pulls a boolean mask over its IDs, samples however it likes, and pushes the
chosen ID back. No callbacks cross the boundary, so one session per stream
is the whole concurrency contract.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Sequence

from sotkit.core import SotkitError, SpeakerRole, TimeInterval, Transcript, Utterance
from sotkit.fsm import (
    NO_SUPPRESSION,
    DecodePhase,
    DecodeState,
    IllegalTransitionError,
    SuppressionSet,
    advance,
    allowed_classes,
    init_state,
)
from sotkit.grammar import MAX_GRID_INDEX, Token, TokenKind
from sotkit.wer import score_transcripts as _score_transcripts

__all__ = [
    "VocabularyMap",
    "DecodeSession",
    "score_transcripts",
    "IllegalTransitionError",
]

__version__ = "0.1.0"

_TS_COUNT = MAX_GRID_INDEX + 1


@dataclass(frozen=True)
class VocabularyMap:
    """Declarative mapping from external token IDs to token classes.

    Structural classes own explicit IDs; timestamp grid index v lives at
    timestamp_id_base + v; every other ID below vocab_size is a text token.
    """

    header_ids: tuple[int, ...]
    child_id: int
    adult_id: int
    eot_id: int
    timestamp_id_base: int
    vocab_size: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "header_ids", tuple(int(i) for i in self.header_ids))
        if not self.header_ids:
            raise SotkitError("at least one header ID is required")
        structural = {*self.header_ids, self.child_id, self.adult_id, self.eot_id}
        if len(structural) != len(self.header_ids) + 3:
            raise SotkitError("structural token IDs must be distinct")
        ts_range = range(self.timestamp_id_base, self.timestamp_id_base + _TS_COUNT)
        if self.timestamp_id_base < 0 or any(i in ts_range for i in structural):
            raise SotkitError("timestamp ID range collides with structural IDs")
        max_id = max(max(structural), ts_range[-1])
        if self.vocab_size <= max_id:
            raise SotkitError(f"vocab_size must exceed the largest mapped ID {max_id}")

    def classify(self, token_id: int) -> Token:
        """The token class of an external ID; unmapped IDs are text."""
        if not 0 <= token_id < self.vocab_size:
            raise SotkitError(f"token ID {token_id} outside the vocabulary")
        if token_id in self.header_ids:
            return Token(TokenKind.HEADER)
        if token_id == self.child_id:
            return Token(TokenKind.SPEAKER_CHILD)
        if token_id == self.adult_id:
            return Token(TokenKind.SPEAKER_ADULT)
        if token_id == self.eot_id:
            return Token(TokenKind.EOT)
        offset = token_id - self.timestamp_id_base
        if 0 <= offset < _TS_COUNT:
            return Token(TokenKind.TIMESTAMP, value=offset)
        return Token(TokenKind.TEXT, word=f"<{token_id}>")

    def timestamp_id(self, grid_index: int) -> int:
        if not 0 <= grid_index <= MAX_GRID_INDEX:
            raise SotkitError(f"grid index {grid_index} outside 0..{MAX_GRID_INDEX}")
        return self.timestamp_id_base + grid_index

    @classmethod
    def from_dict(cls, obj: dict) -> "VocabularyMap":
        try:
            header_ids = tuple(int(i) for i in obj["header_ids"])
            base = int(obj["timestamp_id_base"])
            default_size = (
                max(max(header_ids), int(obj["child_id"]), int(obj["adult_id"]),
                    int(obj["eot_id"]), base + MAX_GRID_INDEX) + 1
            )
            return cls(
                header_ids=header_ids,
                child_id=int(obj["child_id"]),
                adult_id=int(obj["adult_id"]),
                eot_id=int(obj["eot_id"]),
                timestamp_id_base=base,
                vocab_size=int(obj.get("vocab_size", default_size)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise SotkitError(f"bad vocabulary map: {exc}") from exc

    @classmethod
    def load(cls, path: str) -> "VocabularyMap":
        with open(path, "r", encoding="utf-8") as fp:
            return cls.from_dict(json.load(fp))

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fp:
            json.dump(
                {
                    "header_ids": list(self.header_ids),
                    "child_id": self.child_id,
                    "adult_id": self.adult_id,
                    "eot_id": self.eot_id,
                    "timestamp_id_base": self.timestamp_id_base,
                    "vocab_size": self.vocab_size,
                },
                fp,
            )
            fp.write("\n")


class DecodeSession:
    """One decode stream: pull masks over external IDs, push chosen IDs.

    The handle is single-threaded; run concurrent streams through
    independent sessions. IllegalTransitionError propagates when a pushed
    ID is not legal in the current state.
    """

    def __init__(self, vocab: VocabularyMap, supp: SuppressionSet = NO_SUPPRESSION) -> None:
        self.vocab = vocab
        self.supp = supp
        self.state: DecodeState = init_state()

    @property
    def done(self) -> bool:
        return self.state.phase is DecodePhase.DONE

    def step(self) -> list[bool]:
        """Boolean mask over external token IDs for the current state."""
        mask_spec = allowed_classes(self.state, self.supp)
        allowed = mask_spec.allowed
        vocab = self.vocab
        mask = [TokenKind.TEXT in allowed] * vocab.vocab_size
        for i in vocab.header_ids:
            mask[i] = TokenKind.HEADER in allowed
        mask[vocab.child_id] = TokenKind.SPEAKER_CHILD in allowed
        mask[vocab.adult_id] = TokenKind.SPEAKER_ADULT in allowed
        mask[vocab.eot_id] = TokenKind.EOT in allowed
        base = vocab.timestamp_id_base
        mask[base : base + _TS_COUNT] = [False] * _TS_COUNT
        if TokenKind.TIMESTAMP in allowed:
            for v in mask_spec.ts_values:
                mask[base + v] = True
        return mask

    def push(self, token_id: int) -> None:
        """Advance the stream with the external loop's chosen ID."""
        self.state = advance(self.state, self.vocab.classify(token_id))


def _as_transcript(utterances: Sequence) -> Transcript:
    """Accept sotkit Utterances or (start, end, role_label, text) tuples."""
    out = []
    for u in utterances:
        if isinstance(u, Utterance):
            out.append(u)
        else:
            start, end, role, text = u
            out.append(
                Utterance(
                    SpeakerRole.from_label(role),
                    TimeInterval(float(start), float(end)),
                    tuple(str(text).split()),
                )
            )
    return Transcript(tuple(out))


def score_transcripts(ref: Sequence, hyp: Sequence) -> dict:
    """Multi-talker scoring of in-memory utterance lists as plain records.

    Contracts match the primary scorer exactly; values are raw ratios.
    """
    report = _score_transcripts(_as_transcript(ref), _as_transcript(hyp))
    out: dict = {}
    for role, role_score in report.by_role.items():
        out[role.label] = {
            "mtwer": role_score.mtwer,
            "wer": role_score.wer,
            "aer": role_score.aer,
            "nref": role_score.nref,
        }
    out["macro"] = {
        "mtwer": report.macro_mtwer,
        "wer": report.macro_wer,
        "aer": report.macro_aer,
    }
    return out
