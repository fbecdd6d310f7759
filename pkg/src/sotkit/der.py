"""Diarization error rate over role segments.

Roles are semantic labels (child/adult), so no speaker permutation search
happens: a hypothesis segment is correct exactly where a reference segment
of the same role is active. The computation is an exact sweep over the
elementary intervals between all segment (and collar) boundaries; within
each interval the active role multisets are compared:

    missed    += max(0, |ref| - |hyp|) * length
    false_al  += max(0, |hyp| - |ref|) * length
    confusion += (min(|ref|, |hyp|) - |ref intersect hyp|) * length
    total     += |ref| * length

A positive collar excises a symmetric window around every reference segment
boundary from all accumulators, including the total.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, TextIO

from .core import SotkitError, SpeakerRole, TimeInterval
from .frames import RoleSegment


class EmptyReferenceError(SotkitError):
    """The reference contains no speech time to score against."""


@dataclass(frozen=True)
class DerBreakdown:
    """Diarization error components in seconds plus the derived rate."""

    missed: float
    false_alarm: float
    confusion: float
    total: float
    der: float = field(init=False)

    def __post_init__(self) -> None:
        if min(self.missed, self.false_alarm, self.confusion) < -1e-12 or self.total <= 0:
            raise SotkitError("invalid DER components")
        object.__setattr__(
            self, "der", (self.missed + self.false_alarm + self.confusion) / self.total
        )


def _merged_tracks(segments: Sequence[RoleSegment]) -> dict[SpeakerRole, list[tuple[float, float]]]:
    """Per-role segment lists with overlapping or touching spans merged."""
    tracks: dict[SpeakerRole, list[tuple[float, float]]] = {r: [] for r in SpeakerRole}
    for seg in sorted(segments, key=lambda s: (s.span.start, s.span.end)):
        track = tracks[seg.role]
        if track and seg.span.start <= track[-1][1]:
            if seg.span.end > track[-1][1]:
                track[-1] = (track[-1][0], seg.span.end)
        else:
            track.append((seg.span.start, seg.span.end))
    return tracks


def _active(tracks: dict[SpeakerRole, list[tuple[float, float]]], t: float) -> set[SpeakerRole]:
    out = set()
    for role, track in tracks.items():
        for a, b in track:
            if a <= t < b:
                out.add(role)
                break
    return out


def der(
    ref: Sequence[RoleSegment],
    hyp: Sequence[RoleSegment],
    collar: float = 0.0,
) -> DerBreakdown:
    """Diarization error rate breakdown for role-labeled segments.

    Segments of the same role may overlap on input; they are merged first.
    The total is reference speech time (not audio duration). Raises
    EmptyReferenceError when the reference carries no scored speech.
    """
    if collar < 0:
        raise SotkitError("collar must be non-negative")
    ref_tracks = _merged_tracks(ref)
    hyp_tracks = _merged_tracks(hyp)
    if not any(ref_tracks.values()):
        raise EmptyReferenceError("reference contains no speech")

    excised: list[tuple[float, float]] = []
    if collar > 0:
        cuts = []
        for track in ref_tracks.values():
            for a, b in track:
                cuts.append((a - collar, a + collar))
                cuts.append((b - collar, b + collar))
        cuts.sort()
        for lo, hi in cuts:
            if excised and lo <= excised[-1][1]:
                if hi > excised[-1][1]:
                    excised[-1] = (excised[-1][0], hi)
            else:
                excised.append((lo, hi))

    points: set[float] = set()
    for tracks in (ref_tracks, hyp_tracks):
        for track in tracks.values():
            for a, b in track:
                points.add(a)
                points.add(b)
    for lo, hi in excised:
        points.add(lo)
        points.add(hi)
    boundaries = sorted(points)

    missed = false_alarm = confusion = total = 0.0
    for lo, hi in zip(boundaries, boundaries[1:]):
        length = hi - lo
        if length <= 0:
            continue
        mid = (lo + hi) / 2.0
        if any(a <= mid < b for a, b in excised):
            continue
        r = _active(ref_tracks, mid)
        h = _active(hyp_tracks, mid)
        nr, nh = len(r), len(h)
        missed += max(0, nr - nh) * length
        false_alarm += max(0, nh - nr) * length
        confusion += (min(nr, nh) - len(r & h)) * length
        total += nr * length

    if total <= 0:
        raise EmptyReferenceError("collar excised all reference speech")
    return DerBreakdown(missed=missed, false_alarm=false_alarm, confusion=confusion, total=total)


# ---------------------------------------------------------------------------
# RTTM: `SPEAKER <uri> 1 <tbeg> <tdur> <NA> <NA> <child|adult> <NA> <NA>`,
# times with 3 decimals.
# ---------------------------------------------------------------------------


def read_rttm(fp: TextIO) -> list[RoleSegment]:
    segments = []
    for lineno, line in enumerate(fp, 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) < 8 or parts[0].upper() != "SPEAKER":
            raise SotkitError(f"bad RTTM line {lineno}: {line!r}")
        try:
            start = float(parts[3])
            dur = float(parts[4])
            role = SpeakerRole.from_label(parts[7])
        except (ValueError, SotkitError) as exc:
            raise SotkitError(f"bad RTTM line {lineno}: {exc}") from exc
        if dur <= 0:
            continue
        segments.append(RoleSegment(role, TimeInterval(start, start + dur)))
    segments.sort(key=lambda s: (s.span.start, s.span.end, s.role))
    return segments


def write_rttm(segments: Sequence[RoleSegment], fp: TextIO, uri: str = "session") -> None:
    for seg in sorted(segments, key=lambda s: (s.span.start, s.span.end, s.role)):
        fp.write(
            f"SPEAKER {uri} 1 {seg.span.start:.3f} {seg.span.duration:.3f} "
            f"<NA> <NA> {seg.role.label} <NA> <NA>\n"
        )


def load_rttm(path: str) -> list[RoleSegment]:
    with open(path, "r", encoding="utf-8") as fp:
        return read_rttm(fp)


def save_rttm(segments: Sequence[RoleSegment], path: str, uri: str = "session") -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fp:
        write_rttm(segments, fp, uri)
