import json

import pytest

from sotkit.cli import main
from sotkit.core import make_transcript, save_transcript
from sotkit.der import save_rttm
from sotkit.frames import FrameProbSequence, RoleSegment, save_frame_probs
from sotkit.core import SpeakerRole, TimeInterval
from sotkit.grammar import save_token_stream, serialize_transcript

import numpy as np

C, A = SpeakerRole.CHILD, SpeakerRole.ADULT


@pytest.fixture
def ref_jsonl(tmp_path):
    path = tmp_path / "ref.jsonl"
    save_transcript(
        make_transcript([("child", 0.0, 1.0, "hi there"), ("adult", 2.0, 3.0, "yes")]), str(path)
    )
    return str(path)


@pytest.fixture
def der_fixture(tmp_path):
    ref = tmp_path / "ref.rttm"
    hyp = tmp_path / "hyp.rttm"
    save_rttm([RoleSegment(C, TimeInterval(0, 10))], str(ref))
    save_rttm(
        [RoleSegment(C, TimeInterval(0, 8)), RoleSegment(A, TimeInterval(8, 10))], str(hyp)
    )
    return str(ref), str(hyp)


def read(path):
    with open(path, "r", encoding="utf-8") as fp:
        return fp.read()


class TestScoreAsr:
    def test_identical_files_zero(self, ref_jsonl, tmp_path, capsys):
        out = tmp_path / "scores.csv"
        assert main(["score-asr", "--ref", ref_jsonl, "--hyp", ref_jsonl, "--out", str(out)]) == 0
        content = read(out)
        assert "child,0.0,0.0,0.0,2" in content
        assert "adult,0.0,0.0,0.0,1" in content
        assert "macro,0.0,0.0,0.0,3" in content

    def test_raw_mode(self, ref_jsonl, tmp_path):
        out = tmp_path / "scores.csv"
        main(["score-asr", "--ref", ref_jsonl, "--hyp", ref_jsonl, "--raw", "--out", str(out)])
        assert "child,0.0,0.0,0.0,2" in read(out)

    def test_missing_file_is_data_error(self, ref_jsonl, tmp_path, capsys):
        rc = main(["score-asr", "--ref", ref_jsonl, "--hyp", str(tmp_path / "nope.jsonl")])
        assert rc == 1
        err = capsys.readouterr().err
        assert json.loads(err.strip())["error"]


class TestScoreDer:
    def test_worked_example_twenty_percent(self, der_fixture, tmp_path):
        ref, hyp = der_fixture
        out = tmp_path / "der.csv"
        assert main(["score-der", "--ref", ref, "--hyp", hyp, "--collar", "0.0", "--out", str(out)]) == 0
        lines = read(out).strip().splitlines()
        assert lines[0] == "MD,FA,SC,TOTAL,DER"
        assert lines[1] == "0.000,0.000,2.000,10.000,20.0"


class TestSerializeParseValidate:
    def test_round_trip_via_files(self, ref_jsonl, tmp_path):
        tokens = tmp_path / "tokens.json"
        back = tmp_path / "back.jsonl"
        report = tmp_path / "report.json"
        assert main(["serialize", ref_jsonl, "--out", str(tokens)]) == 0
        assert main(["parse", str(tokens), "--out", str(back), "--report", str(report)]) == 0
        assert json.loads(read(report)) == {
            "miss_speaker": 0,
            "miss_timestamp": 0,
            "miss_both": 0,
            "infinite_loop": False,
        }
        rows = [json.loads(line) for line in read(back).splitlines()]
        assert [r["speaker"] for r in rows] == ["child", "adult"]

    def test_validate_counts(self, tmp_path):
        from sotkit.grammar import EOT, HEADER, TokenStream, text

        bad = tmp_path / "bad.json"
        save_token_stream(TokenStream((HEADER, text("x"), EOT)), str(bad))
        out = tmp_path / "report.csv"
        assert main(["validate", str(bad), "--out", str(out)]) == 0
        assert f"{bad},0,0,1,false" in read(out)

    def test_validate_jobs_stable(self, ref_jsonl, tmp_path):
        paths = []
        for i in range(6):
            t = make_transcript([("child", 0.0, 1.0, f"w{i}")])
            p = tmp_path / f"s{i}.json"
            save_token_stream(serialize_transcript(t), str(p))
            paths.append(str(p))
        out1, out8 = tmp_path / "a.csv", tmp_path / "b.csv"
        main(["validate", *paths, "--jobs", "1", "--out", str(out1)])
        main(["validate", *paths, "--jobs", "8", "--out", str(out8)])
        assert read(out1) == read(out8)


class TestFramesAndSuppress:
    def test_frames_output(self, ref_jsonl, tmp_path):
        out = tmp_path / "frames.csv"
        assert main(["frames", ref_jsonl, "--span-end", "4.0", "--out", str(out)]) == 0
        lines = read(out).strip().splitlines()
        assert lines[0] == "t,label"
        assert lines[1] == "0.0000,child"
        assert len(lines) == 201

    def test_suppress_shrink(self, tmp_path):
        rows = [[0.9, 0.05, 0.05]] * 100 + [[0.05, 0.05, 0.9]] * 150 + [[0.9, 0.05, 0.05]] * 50
        probs_path = tmp_path / "probs.csv"
        save_frame_probs(FrameProbSequence(np.array(rows)), str(probs_path))
        out = tmp_path / "supp.csv"
        assert main(["suppress", str(probs_path), "--out", str(out)]) == 0
        assert read(out) == "start,end\n2.200,4.800\n"


class TestAttribute:
    def test_roles_assigned(self, tmp_path):
        rows = [[0.9, 0.05, 0.05]] * 50 + [[0.05, 0.9, 0.05]] * 50
        probs_path = tmp_path / "p.csv"
        save_frame_probs(FrameProbSequence(np.array(rows)), str(probs_path))
        words_path = tmp_path / "w.jsonl"
        words_path.write_text(
            '{"start": 0.1, "end": 0.9, "text": "hi"}\n'
            '{"start": 1.1, "end": 1.9, "text": "yes"}\n',
            encoding="utf-8",
        )
        out = tmp_path / "attributed.jsonl"
        assert main(["attribute", "--words", str(words_path), "--probs", str(probs_path), "--out", str(out)]) == 0
        rows_out = [json.loads(line) for line in read(out).splitlines()]
        assert [r["speaker"] for r in rows_out] == ["child", "adult"]


class TestSegmentCommand:
    def test_windows(self, tmp_path):
        path = tmp_path / "t.jsonl"
        save_transcript(
            make_transcript(
                [("child", 0, 10, "a"), ("adult", 11, 25, "b"), ("child", 26, 40, "c")]
            ),
            str(path),
        )
        out = tmp_path / "segs.jsonl"
        assert main(["segment", str(path), "--out", str(out)]) == 0
        rows = [json.loads(line) for line in read(out).splitlines()]
        assert [(r["start"], r["end"]) for r in rows] == [(0.0, 25.5), (25.5, 40.0)]


class TestLossCommand:
    def test_token_loss(self, tmp_path):
        csv_path = tmp_path / "tok.csv"
        csv_path.write_text("target,p0,p1\n0,0.5,0.5\n0,0.25,0.75\n", encoding="utf-8")
        out = tmp_path / "loss.csv"
        assert main(["loss", "--token-csv", str(csv_path), "--out", str(out)]) == 0
        lines = read(out).strip().splitlines()
        value = float(lines[1].split(",")[0])
        assert value == pytest.approx(1.039721, abs=1e-5)

    def test_usage_error_without_inputs(self, capsys):
        assert main(["loss"]) == 1


class TestSpeechMetricsAndAgreement:
    def test_measures_then_agreement(self, tmp_path):
        paths = []
        for i, (w1, w2) in enumerate([("a b c", "d e f"), ("a b", "c")]):
            t = make_transcript([("child", 5, 7, w1), ("child", 40, 42, w2)])
            p = tmp_path / f"child{i}.jsonl"
            save_transcript(t, str(p))
            paths.append(str(p))
        gt = tmp_path / "gt.csv"
        assert main(
            ["speech-metrics", *paths, "--role", "child", "--session-end", "60", "--out", str(gt)]
        ) == 0
        content = read(gt)
        assert content.startswith("child_id,words_per_minute")
        assert "child0,6.0" in content
        agree_out = tmp_path / "agree.csv"
        assert main(["agreement", "--gt", str(gt), "--pred", str(gt), "--out", str(agree_out)]) == 0
        for line in read(agree_out).strip().splitlines()[1:]:
            assert line.endswith(",1.0") or line.endswith(",nan")


class TestKnnCommand:
    def test_accuracy(self, tmp_path):
        train = tmp_path / "train.csv"
        train.write_text(
            "id,label,v0,v1\na,child,1.0,0.0\nb,child,0.9,0.1\nc,adult,0.0,1.0\nd,adult,0.1,0.9\ne,child,0.95,0.05\n",
            encoding="utf-8",
        )
        test = tmp_path / "test.csv"
        test.write_text("id,label,v0,v1\nq,child,1.0,0.05\nr,adult,0.05,1.0\n", encoding="utf-8")
        out = tmp_path / "acc.txt"
        assert main(["knn", "--train", str(train), "--test", str(test), "--k", "3", "--out", str(out)]) == 0
        assert read(out) == "accuracy\n100.0\n"


class TestSimulateCommand:
    def test_forced_rows_zero(self, tmp_path):
        out = tmp_path / "table.csv"
        rc = main(
            [
                "simulate",
                "--seed", "7",
                "--trials", "50",
                "--p-drop-timestamp", "0.5",
                "--out", str(out),
            ]
        )
        assert rc == 0
        lines = read(out).strip().splitlines()
        assert lines[0] == "error_type,without_fd,with_fd"
        table = {line.split(",")[0]: line.split(",")[1:] for line in lines[1:]}
        assert table["miss_timestamp"][1] == "0.0"
        assert float(table["miss_timestamp"][0]) > 0.0

    def test_byte_stable_across_runs(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        argv = ["simulate", "--seed", "3", "--trials", "20", "--p-loop", "0.2"]
        main(argv + ["--out", str(a)])
        main(argv + ["--out", str(b)])
        assert read(a) == read(b)


class TestUsageErrors:
    def test_unknown_command_exits_two(self):
        with pytest.raises(SystemExit) as exc:
            main(["frobnicate"])
        assert exc.value.code == 2
