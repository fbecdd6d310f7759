import io

import pytest
from hypothesis import given
from hypothesis import strategies as st

from sotkit.core import (
    SotkitError,
    SpeakerRole,
    TimeInterval,
    Transcript,
    Utterance,
    explode_words,
    interval_overlap,
    make_transcript,
    normalize_text,
    normalize_word,
    read_transcript_jsonl,
    write_transcript_jsonl,
)


def iv(a, b):
    return TimeInterval(a, b)


class TestIntervalOverlap:
    def test_partial_overlap(self):
        assert interval_overlap(iv(0, 5), iv(3, 10)) == 2.0

    def test_touching_is_zero(self):
        assert interval_overlap(iv(0, 5), iv(5, 9)) == 0.0

    def test_identity_equals_duration(self):
        assert interval_overlap(iv(2, 4), iv(2, 4)) == 2.0

    @given(
        st.tuples(
            st.floats(0, 100, allow_nan=False),
            st.floats(0, 100, allow_nan=False),
            st.floats(0, 100, allow_nan=False),
            st.floats(0, 100, allow_nan=False),
        )
    )
    def test_symmetric(self, vals):
        a1, a2, b1, b2 = vals
        a = iv(min(a1, a2), max(a1, a2))
        b = iv(min(b1, b2), max(b1, b2))
        assert interval_overlap(a, b) == interval_overlap(b, a)
        assert interval_overlap(a, a) == a.duration


class TestIntervalValidation:
    def test_reversed_rejected(self):
        with pytest.raises(SotkitError):
            iv(5, 3)

    def test_negative_start_rejected(self):
        with pytest.raises(SotkitError):
            iv(-1, 3)


class TestSpeakerRole:
    def test_order(self):
        assert SpeakerRole.CHILD < SpeakerRole.ADULT
        assert list(SpeakerRole) == [SpeakerRole.CHILD, SpeakerRole.ADULT]

    def test_labels(self):
        assert SpeakerRole.from_label("CHILD") is SpeakerRole.CHILD
        assert SpeakerRole.ADULT.label == "adult"
        with pytest.raises(SotkitError):
            SpeakerRole.from_label("teacher")


class TestTranscriptInvariants:
    def test_overlap_rejected(self):
        with pytest.raises(SotkitError):
            make_transcript([("child", 0, 2, "a"), ("adult", 1.5, 3, "b")])

    def test_order_rejected(self):
        with pytest.raises(SotkitError):
            make_transcript([("child", 5, 6, "a"), ("adult", 1, 2, "b")])

    def test_outside_session_rejected(self):
        with pytest.raises(SotkitError):
            Transcript(
                (Utterance(SpeakerRole.CHILD, iv(0, 5), ("a",)),),
                session_span=iv(0, 3),
            )

    def test_default_session_span_covers(self):
        t = make_transcript([("child", 1, 2, "a"), ("adult", 3, 4, "b")])
        assert t.session_span == iv(0, 4)


class TestNormalization:
    def test_strip_and_lower(self):
        assert normalize_word("Hello!!") == "hello"
        assert normalize_word("...") == ""

    def test_collapse_whitespace(self):
        assert normalize_text("  What?   a Dog. ") == "what a dog"


class TestExplodeWords:
    def test_uniform_interpolation(self):
        u = Utterance(SpeakerRole.CHILD, iv(1.0, 2.0), ("a", "b", "c", "d"))
        words = explode_words(u)
        assert [w.span.start for w in words] == [1.0, 1.25, 1.5, 1.75]
        assert words[-1].span.end == 2.0
        assert all(w.role is SpeakerRole.CHILD for w in words)

    def test_empty(self):
        assert explode_words(Utterance(SpeakerRole.ADULT, iv(0, 1), ())) == []


class TestJsonl:
    def test_round_trip(self):
        t = make_transcript([("child", 0.5, 1.2, "hi there"), ("adult", 2.0, 3.0, "yes")])
        buf = io.StringIO()
        write_transcript_jsonl(t, buf)
        buf.seek(0)
        again = read_transcript_jsonl(buf)
        assert again.utterances == t.utterances

    def test_bad_row_raises(self):
        with pytest.raises(SotkitError):
            read_transcript_jsonl(io.StringIO('{"start": 0, "end": 1}\n'))

    def test_unsorted_input_is_sorted(self):
        buf = io.StringIO(
            '{"start": 2.0, "end": 3.0, "speaker": "adult", "text": "b"}\n'
            '{"start": 0.0, "end": 1.0, "speaker": "child", "text": "a"}\n'
        )
        t = read_transcript_jsonl(buf)
        assert [u.span.start for u in t.utterances] == [0.0, 2.0]
