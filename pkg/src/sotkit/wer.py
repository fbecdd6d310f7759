"""Multi-talker word error rate with speaker-attribution errors.

Reference and hypothesis words are interleaved into single time-ordered
sequences (speaker labels ignored for alignment purposes) and aligned by
minimum edit distance under unit costs. Among minimum-cost alignments, the
one with the fewest speaker-mismatched match/substitution pairs wins; the
two objectives are folded into one composite integer cost
(edits * K + mismatches, K larger than the total word count), so the
lexicographic optimum is a single DP minimum.

Error charging: deletions and substitutions go to the reference word's
role, insertions to the hypothesis word's role, and every aligned pair
whose roles differ additionally counts one attribution error against the
reference role (a substituted word with mismatched roles counts both).

Per role: wer = (ins + del + sub) / nref, aer = attr / nref, and the
multi-talker rate is their sum. It is stored as the literal float sum of
the two ratios so the additive identity holds bit-exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Sequence

from .core import (
    SotkitError,
    SpeakerRole,
    Transcript,
    Word,
    explode_words,
    normalize_word,
)


class EmptyReferenceError(SotkitError):
    """No reference words to score against."""


class MismatchedAlignmentError(SotkitError):
    """An alignment refers to word indices outside the given sequences."""


class OpKind(Enum):
    MATCH = "match"
    SUB = "sub"
    INS = "ins"
    DEL = "del"


@dataclass(frozen=True)
class AlignOp:
    """One alignment step; ref_index/hyp_index are None where not consumed."""

    kind: OpKind
    ref_index: int | None
    hyp_index: int | None


def transcript_to_words(t: Transcript) -> list[Word]:
    """Time-ordered, normalized word sequence for alignment.

    Utterance-level timestamps are interpolated uniformly onto words; words
    that normalize to nothing (pure punctuation) are dropped. Ordering is by
    start time, then role (child before adult).
    """
    out: list[Word] = []
    for u in t.utterances:
        for w in explode_words(u):
            norm = normalize_word(w.text)
            if norm:
                out.append(Word(norm, w.span, w.role))
    out.sort(key=lambda w: (w.span.start, w.role))
    return out


def align_words(ref: Sequence[Word], hyp: Sequence[Word]) -> list[AlignOp]:
    """Minimum-edit alignment, breaking cost ties toward fewer role mismatches.

    Unit costs (match 0, substitution/insertion/deletion 1) on the word
    texts; roles only participate in the secondary tie-break. Backtrace
    prefers deletion, then the diagonal, then insertion, which makes the
    returned operation list deterministic (and pushes deletions after the
    substitutions they tie with).
    """
    m, n = len(ref), len(hyp)
    k = m + n + 1  # composite weight; any edit outweighs all possible mismatches

    prev = [j * k for j in range(n + 1)]
    rows = [prev]
    for i in range(1, m + 1):
        cur = [i * k] + [0] * n
        r = ref[i - 1]
        for j in range(1, n + 1):
            h = hyp[j - 1]
            diag = prev[j - 1] + (0 if r.text == h.text else k) + (0 if r.role == h.role else 1)
            up = prev[j] + k
            left = cur[j - 1] + k
            best = diag
            if up < best:
                best = up
            if left < best:
                best = left
            cur[j] = best
        rows.append(cur)
        prev = cur

    ops: list[AlignOp] = []
    i, j = m, n
    while i > 0 or j > 0:
        cur = rows[i][j]
        if i > 0 and rows[i - 1][j] + k == cur:
            ops.append(AlignOp(OpKind.DEL, i - 1, None))
            i -= 1
            continue
        if i > 0 and j > 0:
            r, h = ref[i - 1], hyp[j - 1]
            step = (0 if r.text == h.text else k) + (0 if r.role == h.role else 1)
            if rows[i - 1][j - 1] + step == cur:
                kind = OpKind.MATCH if r.text == h.text else OpKind.SUB
                ops.append(AlignOp(kind, i - 1, j - 1))
                i, j = i - 1, j - 1
                continue
        ops.append(AlignOp(OpKind.INS, None, j - 1))
        j -= 1
    ops.reverse()
    return ops


def alignment_composite_cost(
    ops: Sequence[AlignOp], ref: Sequence[Word], hyp: Sequence[Word]
) -> tuple[int, int]:
    """(edit count, role-mismatch count) of an alignment; test/oracle helper."""
    edits = 0
    mismatches = 0
    for op in ops:
        if op.kind in (OpKind.INS, OpKind.DEL, OpKind.SUB):
            edits += 1
        if op.kind in (OpKind.MATCH, OpKind.SUB):
            if ref[op.ref_index].role != hyp[op.hyp_index].role:
                mismatches += 1
    return edits, mismatches


@dataclass(frozen=True)
class ErrorTally:
    """Error counts for one role."""

    insertions: int = 0
    deletions: int = 0
    substitutions: int = 0
    attributions: int = 0
    nref: int = 0

    def __post_init__(self) -> None:
        if min(self.insertions, self.deletions, self.substitutions, self.attributions, self.nref) < 0:
            raise SotkitError("error counts must be non-negative")
        if self.attributions > self.nref or self.substitutions + self.deletions > self.nref:
            raise SotkitError("error counts exceed the reference word count")


@dataclass(frozen=True)
class RoleErrorCounts:
    """Error tallies for both roles."""

    child: ErrorTally = ErrorTally()
    adult: ErrorTally = ErrorTally()

    def __getitem__(self, role: SpeakerRole) -> ErrorTally:
        return self.child if role is SpeakerRole.CHILD else self.adult


def classify_errors(
    ops: Sequence[AlignOp], ref: Sequence[Word], hyp: Sequence[Word]
) -> RoleErrorCounts:
    """Charge alignment operations to roles per the multi-talker taxonomy."""
    ins = {r: 0 for r in SpeakerRole}
    dele = {r: 0 for r in SpeakerRole}
    sub = {r: 0 for r in SpeakerRole}
    attr = {r: 0 for r in SpeakerRole}
    nref = {r: 0 for r in SpeakerRole}
    for w in ref:
        nref[w.role] += 1
    try:
        for op in ops:
            if op.kind is OpKind.INS:
                ins[hyp[op.hyp_index].role] += 1
            elif op.kind is OpKind.DEL:
                dele[ref[op.ref_index].role] += 1
            else:
                r, h = ref[op.ref_index], hyp[op.hyp_index]
                if op.kind is OpKind.SUB:
                    sub[r.role] += 1
                if r.role != h.role:
                    attr[r.role] += 1
    except (IndexError, TypeError) as exc:
        raise MismatchedAlignmentError(f"alignment index out of range: {exc}") from exc

    def tally(role: SpeakerRole) -> ErrorTally:
        return ErrorTally(ins[role], dele[role], sub[role], attr[role], nref[role])

    return RoleErrorCounts(tally(SpeakerRole.CHILD), tally(SpeakerRole.ADULT))


@dataclass(frozen=True)
class RoleScore:
    """Rates for one role. mtwer is stored as wer + aer, so the identity is exact."""

    wer: float
    aer: float
    mtwer: float
    nref: int


@dataclass(frozen=True)
class ScoreReport:
    """Per-role and macro-averaged rates; roles without reference words are excluded."""

    by_role: dict[SpeakerRole, RoleScore]
    macro_mtwer: float
    macro_wer: float
    macro_aer: float


def score(counts: RoleErrorCounts) -> ScoreReport:
    """Rates from error counts.

    >>> c = RoleErrorCounts(child=ErrorTally(1, 0, 1, 1, 3), adult=ErrorTally(0, 1, 1, 1, 4))
    >>> r = score(c)
    >>> r.by_role[SpeakerRole.CHILD].mtwer
    1.0
    >>> r.by_role[SpeakerRole.ADULT].mtwer
    0.75
    """
    by_role: dict[SpeakerRole, RoleScore] = {}
    for role in SpeakerRole:
        t = counts[role]
        if t.nref == 0:
            continue
        wer = (t.insertions + t.deletions + t.substitutions) / t.nref
        aer = t.attributions / t.nref
        by_role[role] = RoleScore(wer=wer, aer=aer, mtwer=wer + aer, nref=t.nref)
    if not by_role:
        raise EmptyReferenceError("no reference words for any role")
    k = len(by_role)
    return ScoreReport(
        by_role=by_role,
        macro_mtwer=sum(s.mtwer for s in by_role.values()) / k,
        macro_wer=sum(s.wer for s in by_role.values()) / k,
        macro_aer=sum(s.aer for s in by_role.values()) / k,
    )


def score_words(ref: Sequence[Word], hyp: Sequence[Word]) -> ScoreReport:
    return score(classify_errors(align_words(ref, hyp), ref, hyp))


def score_transcripts(ref: Transcript, hyp: Transcript) -> ScoreReport:
    """End-to-end scoring of two transcripts."""
    return score_words(transcript_to_words(ref), transcript_to_words(hyp))
