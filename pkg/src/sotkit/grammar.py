"""Serialized token streams for speaker-attributed transcripts.

An utterance serializes as: start timestamp, speaker tag, its words, end
timestamp. A stream is a header, zero or more such groups, and a final
end-of-transcript marker. Timestamps live on a 0.02 s grid over [0, 30] s
(grid indices 0..1500).

The parser is total: malformed streams never raise. Each malformed group
increments exactly one structural error counter (missing speaker, missing
timestamp, or missing both, with missing-both taking precedence), and a
truncated stream marks the infinite-loop flag and discards its final group.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import IntEnum
from typing import TextIO

from .core import SotkitError, SpeakerRole, TimeInterval, Transcript, Utterance

GRID_STEP = 0.02  # seconds per timestamp grid unit
MAX_GRID_INDEX = 1500  # 30 s window
MAX_STREAM_TOKENS = 256  # decoding budget; hitting it signals an infinite loop


class OutOfRangeError(SotkitError):
    """A transcript time falls outside the 30 s serialization window."""


class EmptyUtteranceError(SotkitError):
    """An utterance with zero words cannot be serialized."""


class TokenKind(IntEnum):
    HEADER = 0
    TIMESTAMP = 1
    SPEAKER_CHILD = 2
    SPEAKER_ADULT = 3
    TEXT = 4
    EOT = 5


@dataclass(frozen=True)
class Token:
    """One element of a serialized stream.

    value is the grid index for TIMESTAMP tokens, word the content of TEXT
    tokens; both are unused otherwise.
    """

    kind: TokenKind
    value: int = -1
    word: str = ""

    def __post_init__(self) -> None:
        if self.kind is TokenKind.TIMESTAMP and not 0 <= self.value <= MAX_GRID_INDEX:
            raise SotkitError(f"timestamp grid index {self.value} outside 0..{MAX_GRID_INDEX}")

    @property
    def seconds(self) -> float:
        if self.kind is not TokenKind.TIMESTAMP:
            raise SotkitError("seconds is only defined for timestamp tokens")
        return self.value * GRID_STEP

    def __repr__(self) -> str:  # compact, for test diffs
        if self.kind is TokenKind.TIMESTAMP:
            return f"TS({self.value})"
        if self.kind is TokenKind.TEXT:
            return f"Text({self.word!r})"
        return self.kind.name


HEADER = Token(TokenKind.HEADER)
SPEAKER_CHILD = Token(TokenKind.SPEAKER_CHILD)
SPEAKER_ADULT = Token(TokenKind.SPEAKER_ADULT)
EOT = Token(TokenKind.EOT)

# Timestamp tokens are interned so candidate lists can be sliced out of one
# shared table and compared by identity on hot decoding paths.
_TS_TOKENS: tuple[Token, ...] = tuple(
    Token(TokenKind.TIMESTAMP, value=i) for i in range(MAX_GRID_INDEX + 1)
)


def ts(value: int) -> Token:
    """The interned timestamp token for a grid index."""
    return _TS_TOKENS[value]


def text(word: str) -> Token:
    return Token(TokenKind.TEXT, word=word)


def speaker_token(role: SpeakerRole) -> Token:
    return SPEAKER_CHILD if role is SpeakerRole.CHILD else SPEAKER_ADULT


_SPEAKER_ROLES = {
    TokenKind.SPEAKER_CHILD: SpeakerRole.CHILD,
    TokenKind.SPEAKER_ADULT: SpeakerRole.ADULT,
}


@dataclass(frozen=True)
class TokenStream:
    """An ordered token sequence plus the truncation flag set at the 256-token cap."""

    tokens: tuple[Token, ...]
    truncated: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "tokens", tuple(self.tokens))

    def __len__(self) -> int:
        return len(self.tokens)

    def __iter__(self):
        return iter(self.tokens)


@dataclass(frozen=True)
class StructuralErrorReport:
    """Per-stream counts of the structural decoding error taxonomy.

    Counters are mutually exclusive per utterance group: a group missing both
    its speaker and all timestamps increments only miss_both.
    """

    miss_speaker: int = 0
    miss_timestamp: int = 0
    miss_both: int = 0
    infinite_loop: bool = False

    def __post_init__(self) -> None:
        if min(self.miss_speaker, self.miss_timestamp, self.miss_both) < 0:
            raise SotkitError("error counts must be non-negative")

    @property
    def clean(self) -> bool:
        return (
            self.miss_speaker == 0
            and self.miss_timestamp == 0
            and self.miss_both == 0
            and not self.infinite_loop
        )


def quantize(seconds: float) -> int:
    """Nearest 0.02 s grid index, ties rounding up."""
    return int(math.floor(seconds / GRID_STEP + 0.5))


def serialize_transcript(t: Transcript) -> TokenStream:
    """Serialize a transcript: header, per-utterance groups, end marker.

    Raises OutOfRangeError for times beyond the 30 s window and
    EmptyUtteranceError for utterances without words. Timestamps are
    quantized to the grid, so a round-trip reproduces times within half a
    grid step.
    """
    tokens: list[Token] = [HEADER]
    for u in t.utterances:
        if u.span.end > MAX_GRID_INDEX * GRID_STEP + 1e-9:
            raise OutOfRangeError(
                f"utterance end {u.span.end} s exceeds the {MAX_GRID_INDEX * GRID_STEP} s window"
            )
        if not u.words:
            raise EmptyUtteranceError(f"utterance at {u.span.start} s has no words")
        tokens.append(ts(quantize(u.span.start)))
        tokens.append(speaker_token(u.role))
        tokens.extend(text(w) for w in u.words)
        tokens.append(ts(quantize(u.span.end)))
    tokens.append(EOT)
    return TokenStream(tuple(tokens))


@dataclass
class _Group:
    """One utterance attempt found while scanning a stream."""

    start: int | None = None
    end: int | None = None
    role: SpeakerRole | None = None
    words: list[str] = field(default_factory=list)

    @property
    def has_content(self) -> bool:
        return self.role is not None or bool(self.words)


def _scan_groups(s: TokenStream) -> list[_Group]:
    """Split a token stream into utterance groups, tolerating any input.

    Group boundaries: a timestamp with no open group opens one; a timestamp
    after content closes the group as its end, unless a speaker tag follows
    immediately, in which case it is the next utterance's start and the open
    group closes without an end (the repair borrows it back). A speaker tag
    after words also starts a new group. Tokens after the first EOT are
    ignored.
    """
    groups: list[_Group] = []
    cur: _Group | None = None

    def close() -> None:
        nonlocal cur
        if cur is not None:
            groups.append(cur)
            cur = None

    tokens = s.tokens
    for idx, tok in enumerate(tokens):
        kind = tok.kind
        if kind is TokenKind.EOT:
            break
        if kind is TokenKind.HEADER:
            close()
        elif kind is TokenKind.TIMESTAMP:
            if cur is None:
                cur = _Group(start=tok.value)
            elif not cur.has_content:
                # stray start timestamp; the newer one wins
                cur.start = tok.value
            else:
                nxt = tokens[idx + 1].kind if idx + 1 < len(tokens) else None
                if nxt in _SPEAKER_ROLES:
                    close()  # this timestamp opens the next utterance
                    cur = _Group(start=tok.value)
                else:
                    cur.end = tok.value
                    close()
        elif kind in _SPEAKER_ROLES:
            role = _SPEAKER_ROLES[kind]
            if cur is None:
                cur = _Group(role=role)
            elif cur.role is None:
                cur.role = role
            elif cur.words:
                close()
                cur = _Group(role=role)
            # duplicate speaker tag before any words: keep the first
        else:  # TEXT
            if cur is None:
                cur = _Group()
            cur.words.append(tok.word)
    close()
    return groups


def _classify_and_build(
    groups: list[_Group], truncated: bool
) -> tuple[list[Utterance], StructuralErrorReport]:
    if truncated and groups:
        # The decoder hit the token cap: the final group is unreliable and
        # is discarded without charging a missing-token counter.
        groups = groups[:-1]

    miss_speaker = miss_timestamp = miss_both = 0
    kept: list[Utterance] = []
    for i, g in enumerate(groups):
        has_ts = g.start is not None or g.end is not None
        if g.role is None:
            if not has_ts:
                if g.words:
                    miss_both += 1
                continue
            if g.words:
                miss_speaker += 1
            # timestamp pair with no speaker and no words: nothing was lost
            continue
        start, end = g.start, g.end
        if start is None:
            # only the stated repair (borrowing the next start as a missing
            # end) is applied; a missing start cannot be reconstructed
            miss_timestamp += 1
            continue
        if end is None:
            miss_timestamp += 1
            nxt = groups[i + 1].start if i + 1 < len(groups) else None
            if nxt is None or nxt < start:
                continue
            end = nxt
        if end < start:
            end = start  # decreasing pair: clamp rather than invent a span
        kept.append(
            Utterance(
                role=g.role,
                span=TimeInterval(start * GRID_STEP, end * GRID_STEP),
                words=tuple(g.words),
            )
        )

    report = StructuralErrorReport(
        miss_speaker=miss_speaker,
        miss_timestamp=miss_timestamp,
        miss_both=miss_both,
        infinite_loop=truncated,
    )
    return kept, report


def parse_token_stream(s: TokenStream) -> tuple[Transcript, StructuralErrorReport]:
    """Parse any token stream into a transcript plus a structural error report.

    Never raises: errors are data. Recovered utterances that would overlap
    or run backwards in time (impossible in forced-decoded streams) are
    dropped silently.
    """
    kept, report = _classify_and_build(_scan_groups(s), s.truncated)
    ordered: list[Utterance] = []
    for u in kept:
        if ordered and (
            u.span.start < ordered[-1].span.start or u.span.start < ordered[-1].span.end
        ):
            continue
        ordered.append(u)
    return Transcript(tuple(ordered)), report


def validate_structure(s: TokenStream) -> StructuralErrorReport:
    """The parse-time error report, without materializing a transcript."""
    _, report = _classify_and_build(_scan_groups(s), s.truncated)
    return report


# ---------------------------------------------------------------------------
# Token-stream JSON:
#   {"tokens": [{"class": "header"|"ts"|"child"|"adult"|"text"|"eot",
#                "value": int?, "word": str?}, ...],
#    "truncated": bool}
# ---------------------------------------------------------------------------

_CLASS_NAMES = {
    TokenKind.HEADER: "header",
    TokenKind.TIMESTAMP: "ts",
    TokenKind.SPEAKER_CHILD: "child",
    TokenKind.SPEAKER_ADULT: "adult",
    TokenKind.TEXT: "text",
    TokenKind.EOT: "eot",
}
_KINDS_BY_NAME = {v: k for k, v in _CLASS_NAMES.items()}


def write_token_json(s: TokenStream, fp: TextIO) -> None:
    rows = []
    for tok in s.tokens:
        row: dict = {"class": _CLASS_NAMES[tok.kind]}
        if tok.kind is TokenKind.TIMESTAMP:
            row["value"] = tok.value
        elif tok.kind is TokenKind.TEXT:
            row["word"] = tok.word
        rows.append(row)
    json.dump({"tokens": rows, "truncated": s.truncated}, fp, ensure_ascii=False)
    fp.write("\n")


def read_token_json(fp: TextIO) -> TokenStream:
    try:
        obj = json.load(fp)
        tokens = []
        for row in obj["tokens"]:
            kind = _KINDS_BY_NAME[row["class"]]
            if kind is TokenKind.TIMESTAMP:
                tokens.append(ts(int(row["value"])))
            elif kind is TokenKind.TEXT:
                tokens.append(text(str(row["word"])))
            else:
                tokens.append(Token(kind))
        return TokenStream(tuple(tokens), truncated=bool(obj.get("truncated", False)))
    except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
        raise SotkitError(f"bad token-stream JSON: {exc}") from exc


def load_token_stream(path: str) -> TokenStream:
    with open(path, "r", encoding="utf-8") as fp:
        return read_token_json(fp)


def save_token_stream(s: TokenStream, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fp:
        write_token_json(s, fp)
