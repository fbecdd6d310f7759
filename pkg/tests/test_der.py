import io

import numpy as np
import pytest

from sotkit.core import SpeakerRole, TimeInterval
from sotkit.der import EmptyReferenceError, der, read_rttm, write_rttm
from sotkit.frames import RoleSegment
from sotkit.sim import SplitMix64

C, A = SpeakerRole.CHILD, SpeakerRole.ADULT


def seg(role, a, b):
    return RoleSegment(role, TimeInterval(a, b))


def raster_der(ref, hyp, horizon_ms=12000):
    """Independent 1 ms rasterized oracle; inputs must sit on the ms grid."""
    tracks = {}
    for name, segments in (("ref", ref), ("hyp", hyp)):
        for role in (C, A):
            track = np.zeros(horizon_ms, dtype=bool)
            for s in segments:
                if s.role is role:
                    lo = int(round(s.span.start * 1000))
                    hi = int(round(s.span.end * 1000))
                    track[lo:hi] = True
            tracks[(name, role)] = track
    nr = tracks[("ref", C)].astype(int) + tracks[("ref", A)].astype(int)
    nh = tracks[("hyp", C)].astype(int) + tracks[("hyp", A)].astype(int)
    correct = (tracks[("ref", C)] & tracks[("hyp", C)]).astype(int) + (
        tracks[("ref", A)] & tracks[("hyp", A)]
    ).astype(int)
    md = np.maximum(0, nr - nh).sum() / 1000.0
    fa = np.maximum(0, nh - nr).sum() / 1000.0
    sc = (np.minimum(nr, nh) - correct).sum() / 1000.0
    total = nr.sum() / 1000.0
    return md, fa, sc, total


class TestDer:
    def test_identical_zero(self):
        ref = [seg(C, 0, 5), seg(A, 6, 9)]
        b = der(ref, ref)
        assert b.der == 0.0
        assert b.total == 8.0

    def test_worked_example(self):
        b = der([seg(C, 0, 10)], [seg(C, 0, 8), seg(A, 8, 10)])
        assert (b.missed, b.false_alarm, b.confusion, b.total) == (0.0, 0.0, 2.0, 10.0)
        assert b.der == 0.2

    def test_all_missed(self):
        b = der([seg(C, 0, 5)], [])
        assert b.missed == 5.0
        assert b.der == 1.0

    def test_false_alarm(self):
        b = der([seg(C, 0, 5)], [seg(C, 0, 5), seg(A, 6, 8)])
        assert b.false_alarm == 2.0
        assert b.missed == b.confusion == 0.0

    def test_empty_reference(self):
        with pytest.raises(EmptyReferenceError):
            der([], [seg(C, 0, 1)])

    def test_overlapping_same_role_merged(self):
        b = der([seg(C, 0, 4), seg(C, 2, 6)], [seg(C, 0, 6)])
        assert b.der == 0.0
        assert b.total == 6.0

    def test_shift_invariance(self):
        ref = [seg(C, 0, 3), seg(A, 4, 7)]
        hyp = [seg(C, 0.5, 3), seg(A, 4, 6)]
        b1 = der(ref, hyp)
        shift = 11.25
        b2 = der(
            [RoleSegment(s.role, s.span.shifted(shift)) for s in ref],
            [RoleSegment(s.role, s.span.shifted(shift)) for s in hyp],
        )
        assert abs(b1.missed - b2.missed) < 1e-9
        assert abs(b1.false_alarm - b2.false_alarm) < 1e-9
        assert abs(b1.confusion - b2.confusion) < 1e-9
        assert abs(b1.der - b2.der) < 1e-12

    def test_collar_excises_boundaries(self):
        # hypothesis errs only within 0.2 s of reference boundaries
        ref = [seg(C, 1, 5)]
        hyp = [seg(C, 1.1, 4.9)]
        assert der(ref, hyp).missed > 0
        b = der(ref, hyp, collar=0.25)
        assert b.missed == 0.0
        assert b.total == pytest.approx(4.0 - 2 * 0.25, abs=1e-12)

    def test_collar_can_empty_reference(self):
        with pytest.raises(EmptyReferenceError):
            der([seg(C, 0, 1)], [seg(C, 0, 1)], collar=2.0)

    def test_raster_oracle_small_sets(self):
        rng = SplitMix64(99)
        for _ in range(100)  :
            def make(n):
                out = []
                for _ in range(n):
                    a = rng.randint(0, 90) / 10.0
                    b = a + rng.randint(1, 20) / 10.0
                    out.append(seg(C if rng.random() < 0.5 else A, a, b))
                return out

            ref = make(rng.randint(1, 5))
            hyp = make(rng.randint(0, 5))
            b = der(ref, hyp)
            md, fa, sc, total = raster_der(ref, hyp)
            assert abs(b.missed - md) < 1e-9
            assert abs(b.false_alarm - fa) < 1e-9
            assert abs(b.confusion - sc) < 1e-9
            assert abs(b.total - total) < 1e-9

    def test_hyp_deletion_never_negative(self):
        rng = SplitMix64(123)
        for _ in range(30):
            ref = [seg(C, 0, 4), seg(A, 5, 8)]
            hyp = [
                seg(C if rng.random() < 0.5 else A, i * 2.0, i * 2.0 + 1.5) for i in range(4)
            ]
            for drop in range(len(hyp)):
                b = der(ref, hyp[:drop] + hyp[drop + 1 :])
                assert b.missed >= 0 and b.false_alarm >= 0 and b.confusion >= 0


class TestRttm:
    def test_round_trip(self):
        segs = [seg(C, 0.5, 2.125), seg(A, 3.0, 4.5)]
        buf = io.StringIO()
        write_rttm(segs, buf, uri="demo")
        content = buf.getvalue()
        assert "SPEAKER demo 1 0.500 1.625 <NA> <NA> child <NA> <NA>" in content
        buf.seek(0)
        again = read_rttm(buf)
        assert [s.role for s in again] == [C, A]
        assert again[0].span.start == 0.5

    def test_bad_line_raises(self):
        with pytest.raises(Exception):
            read_rttm(io.StringIO("NOISE x 1 0 1\n"))

    def test_comments_and_blanks_skipped(self):
        content = "# comment\n\nSPEAKER s 1 0.000 1.000 <NA> <NA> adult <NA> <NA>\n"
        assert len(read_rttm(io.StringIO(content))) == 1
