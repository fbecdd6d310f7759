import io

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sotkit.core import make_transcript
from sotkit.grammar import (
    EOT,
    GRID_STEP,
    HEADER,
    MAX_STREAM_TOKENS,
    SPEAKER_ADULT,
    SPEAKER_CHILD,
    EmptyUtteranceError,
    OutOfRangeError,
    Token,
    TokenKind,
    TokenStream,
    parse_token_stream,
    quantize,
    read_token_json,
    serialize_transcript,
    text,
    ts,
    validate_structure,
    write_token_json,
)
from sotkit.sim import SplitMix64

from conftest import random_transcript


def stream(*tokens, truncated=False):
    return TokenStream(tuple(tokens), truncated=truncated)


class TestSerialize:
    def test_single_utterance(self):
        t = make_transcript([("child", 0.5, 1.24, "hi there")])
        s = serialize_transcript(t)
        assert list(s.tokens) == [
            HEADER,
            ts(25),
            SPEAKER_CHILD,
            text("hi"),
            text("there"),
            ts(62),
            EOT,
        ]

    def test_empty_transcript(self):
        assert list(serialize_transcript(make_transcript([])).tokens) == [HEADER, EOT]

    def test_two_utterance_shape(self):
        t = make_transcript([("child", 0.0, 1.0, "a b"), ("adult", 2.0, 3.0, "c")])
        kinds = [tok.kind for tok in serialize_transcript(t).tokens]
        assert kinds == [
            TokenKind.HEADER,
            TokenKind.TIMESTAMP,
            TokenKind.SPEAKER_CHILD,
            TokenKind.TEXT,
            TokenKind.TEXT,
            TokenKind.TIMESTAMP,
            TokenKind.TIMESTAMP,
            TokenKind.SPEAKER_ADULT,
            TokenKind.TEXT,
            TokenKind.TIMESTAMP,
            TokenKind.EOT,
        ]

    def test_out_of_range(self):
        with pytest.raises(OutOfRangeError):
            serialize_transcript(make_transcript([("child", 29.0, 31.0, "a")]))

    def test_empty_utterance(self):
        from sotkit.core import SpeakerRole, TimeInterval, Transcript, Utterance

        t = Transcript((Utterance(SpeakerRole.CHILD, TimeInterval(0, 1), ()),))
        with pytest.raises(EmptyUtteranceError):
            serialize_transcript(t)


class TestQuantize:
    def test_examples(self):
        assert quantize(0.5) == 25
        assert quantize(1.24) == 62
        assert quantize(0.0) == 0
        assert quantize(30.0) == 1500

    def test_half_tie_rounds_up(self):
        assert quantize(0.03) == 2  # 1.5 grid units


class TestParseTaxonomy:
    def test_well_formed(self):
        t = make_transcript([("child", 0.0, 1.0, "a"), ("adult", 2.0, 3.0, "b c")])
        parsed, report = parse_token_stream(serialize_transcript(t))
        assert report.clean
        assert len(parsed.utterances) == 2

    def test_miss_speaker(self):
        parsed, report = parse_token_stream(stream(HEADER, ts(0), text("hi"), ts(50), EOT))
        assert len(parsed.utterances) == 0
        assert (report.miss_speaker, report.miss_timestamp, report.miss_both) == (1, 0, 0)

    def test_miss_timestamp(self):
        report = validate_structure(stream(HEADER, SPEAKER_CHILD, text("a"), EOT))
        assert (report.miss_speaker, report.miss_timestamp, report.miss_both) == (0, 1, 0)

    def test_miss_both(self):
        report = validate_structure(stream(HEADER, text("a"), EOT))
        assert (report.miss_speaker, report.miss_timestamp, report.miss_both) == (0, 0, 1)

    def test_truncated_partial_dropped(self):
        t = make_transcript([("child", 0.0, 1.0, "a")])
        tokens = list(serialize_transcript(t).tokens)[:-1]  # drop EOT
        tokens += [ts(100), SPEAKER_ADULT, text("b")]  # partial trailing utterance
        parsed, report = parse_token_stream(TokenStream(tuple(tokens), truncated=True))
        assert report.infinite_loop
        assert (report.miss_speaker, report.miss_timestamp, report.miss_both) == (0, 0, 0)
        assert len(parsed.utterances) == 1  # the complete first utterance survives

    def test_missing_end_repaired_from_next_start(self):
        s = stream(
            HEADER,
            ts(0),
            SPEAKER_CHILD,
            text("a"),  # end timestamp missing here
            ts(100),
            SPEAKER_ADULT,
            text("b"),
            ts(150),
            EOT,
        )
        parsed, report = parse_token_stream(s)
        assert report.miss_timestamp == 1
        assert [u.span.end for u in parsed.utterances][0] == 100 * GRID_STEP
        assert len(parsed.utterances) == 2

    def test_missing_end_last_is_discarded(self):
        s = stream(HEADER, ts(0), SPEAKER_CHILD, text("a"), EOT)
        parsed, report = parse_token_stream(s)
        assert report.miss_timestamp == 1
        assert len(parsed.utterances) == 0

    def test_empty_word_utterance_kept(self):
        s = stream(HEADER, ts(0), SPEAKER_CHILD, ts(10), EOT)
        parsed, report = parse_token_stream(s)
        assert report.clean
        assert len(parsed.utterances) == 1
        assert parsed.utterances[0].words == ()

    def test_validate_matches_parse(self):
        s = stream(HEADER, text("x"), ts(5), SPEAKER_ADULT, text("y"), ts(9), EOT)
        assert validate_structure(s) == parse_token_stream(s)[1]


class TestRoundTrip:
    def test_quantization_error_bounded(self):
        rng = SplitMix64(11)
        for _ in range(50):
            t = random_transcript(rng, rng.randint(0, 6))
            parsed, report = parse_token_stream(serialize_transcript(t))
            assert report.clean
            assert len(parsed.utterances) == len(t.utterances)
            for orig, back in zip(t.utterances, parsed.utterances):
                assert back.role is orig.role
                assert back.words == orig.words
                assert abs(back.span.start - orig.span.start) <= GRID_STEP / 2 + 1e-12
                assert abs(back.span.end - orig.span.end) <= GRID_STEP / 2 + 1e-12


_token_strategy = st.one_of(
    st.just(HEADER),
    st.just(EOT),
    st.just(SPEAKER_CHILD),
    st.just(SPEAKER_ADULT),
    st.integers(0, 1500).map(ts),
    st.sampled_from(["a", "b", "c"]).map(text),
)


class TestParserTotality:
    @given(st.lists(_token_strategy, max_size=40), st.booleans())
    @settings(max_examples=300, deadline=None)
    def test_never_raises(self, tokens, truncated):
        parsed, report = parse_token_stream(TokenStream(tuple(tokens), truncated=truncated))
        assert report.miss_speaker >= 0
        assert report.miss_timestamp >= 0
        assert report.miss_both >= 0
        assert report.infinite_loop == truncated
        # parsed transcript satisfies its own invariants by construction
        prev_end = None
        for u in parsed.utterances:
            if prev_end is not None:
                assert u.span.start >= prev_end
            prev_end = u.span.end

    def test_cap_length_fuzz(self):
        rng = SplitMix64(3)
        pool = [HEADER, EOT, SPEAKER_CHILD, SPEAKER_ADULT]
        for trial in range(50):
            tokens = [
                pool[rng.randint(0, 3)]
                if rng.random() < 0.5
                else (ts(rng.randint(0, 1500)) if rng.random() < 0.5 else text("w"))
                for _ in range(MAX_STREAM_TOKENS)
            ]
            parse_token_stream(TokenStream(tuple(tokens), truncated=bool(trial % 2)))


class TestTokenJson:
    def test_round_trip(self):
        s = stream(HEADER, ts(25), SPEAKER_CHILD, text("hi"), ts(62), EOT)
        buf = io.StringIO()
        write_token_json(s, buf)
        buf.seek(0)
        assert read_token_json(buf) == s

    def test_truncated_flag_preserved(self):
        s = stream(HEADER, ts(0), truncated=True)
        buf = io.StringIO()
        write_token_json(s, buf)
        buf.seek(0)
        assert read_token_json(buf).truncated


class TestTokenValidation:
    def test_grid_range(self):
        with pytest.raises(Exception):
            Token(TokenKind.TIMESTAMP, value=1501)
