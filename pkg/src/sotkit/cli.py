"""Batch command-line interface.

Exit codes: 0 on success, 1 on data errors (a one-line JSON object with
"error" and "message" goes to stderr), 2 on usage errors. All outputs are
deterministic for fixed inputs and flags; --seed controls every source of
randomness, and --jobs never changes output content or order.

Ratios print as percentages with one decimal by default; --raw switches to
full-precision ratios.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence

from .core import (
    SotkitError,
    SpeakerRole,
    TimeInterval,
    load_transcript,
    write_transcript_jsonl,
)
from .der import der as compute_der, load_rttm
from .frames import (
    DEFAULT_FRAME_PERIOD,
    SILENCE_SHRINK,
    SILENCE_THRESHOLD,
    attribute_words,
    load_frame_probs,
    rasterize_labels,
    silence_regions,
)
from .grammar import (
    load_token_stream,
    parse_token_stream,
    serialize_transcript,
    validate_structure,
    write_token_json,
)
from .losses import FrameLogProbs, TokenLogProbs, frame_ce, serialized_ce, total_loss
from .probe import DEFAULT_K, knn_probe, load_labeled_vectors
from .sessions import (
    MAX_WINDOW_DURATION,
    MEASURE_NAMES,
    MeasureSet,
    agreement,
    speech_measures,
    window_segments,
)
from .sim import SimConfig, run_error_study
from .wer import score_transcripts


def _fmt(ratio: float, raw: bool) -> str:
    if raw:
        return repr(float(ratio))
    return f"{ratio * 100.0:.1f}"


def _write_out(text_out: str, path: str | None) -> None:
    if path is None:
        sys.stdout.write(text_out)
    else:
        with open(path, "w", encoding="utf-8", newline="\n") as fp:
            fp.write(text_out)


def _map_jobs(fn: Callable, items: Sequence, jobs: int) -> list:
    """Apply fn over items, preserving input order regardless of parallelism."""
    if jobs <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, items))


# --------------------------------------------------------------------------
# subcommand implementations
# --------------------------------------------------------------------------


def _cmd_validate(args: argparse.Namespace) -> int:
    def one(path: str) -> str:
        report = validate_structure(load_token_stream(path))
        flag = "true" if report.infinite_loop else "false"
        return f"{path},{report.miss_speaker},{report.miss_timestamp},{report.miss_both},{flag}\n"

    rows = _map_jobs(one, args.inputs, args.jobs)
    _write_out("file,miss_speaker,miss_timestamp,miss_both,infinite_loop\n" + "".join(rows), args.out)
    return 0


def _cmd_parse(args: argparse.Namespace) -> int:
    stream = load_token_stream(args.input)
    transcript, report = parse_token_stream(stream)
    buf = io.StringIO()
    write_transcript_jsonl(transcript, buf)
    _write_out(buf.getvalue(), args.out)
    report_json = json.dumps(
        {
            "miss_speaker": report.miss_speaker,
            "miss_timestamp": report.miss_timestamp,
            "miss_both": report.miss_both,
            "infinite_loop": report.infinite_loop,
        }
    )
    if args.report:
        with open(args.report, "w", encoding="utf-8", newline="\n") as fp:
            fp.write(report_json + "\n")
    else:
        sys.stderr.write(report_json + "\n")
    return 0


def _cmd_serialize(args: argparse.Namespace) -> int:
    transcript = load_transcript(args.input)
    stream = serialize_transcript(transcript)
    buf = io.StringIO()
    write_token_json(stream, buf)
    _write_out(buf.getvalue(), args.out)
    return 0


def _cmd_score_asr(args: argparse.Namespace) -> int:
    report = score_transcripts(load_transcript(args.ref), load_transcript(args.hyp))
    lines = ["role,mtWER,WER,AER,NREF\n"]
    for role in SpeakerRole:
        s = report.by_role.get(role)
        if s is None:
            continue
        lines.append(
            f"{role.label},{_fmt(s.mtwer, args.raw)},{_fmt(s.wer, args.raw)},"
            f"{_fmt(s.aer, args.raw)},{s.nref}\n"
        )
    nref_total = sum(s.nref for s in report.by_role.values())
    lines.append(
        f"macro,{_fmt(report.macro_mtwer, args.raw)},{_fmt(report.macro_wer, args.raw)},"
        f"{_fmt(report.macro_aer, args.raw)},{nref_total}\n"
    )
    _write_out("".join(lines), args.out)
    return 0


def _cmd_score_der(args: argparse.Namespace) -> int:
    breakdown = compute_der(load_rttm(args.ref), load_rttm(args.hyp), collar=args.collar)
    if args.raw:
        rate = repr(breakdown.der)
    else:
        rate = f"{breakdown.der * 100.0:.1f}"
    _write_out(
        "MD,FA,SC,TOTAL,DER\n"
        f"{breakdown.missed:.3f},{breakdown.false_alarm:.3f},{breakdown.confusion:.3f},"
        f"{breakdown.total:.3f},{rate}\n",
        args.out,
    )
    return 0


def _cmd_segment(args: argparse.Namespace) -> int:
    transcript = load_transcript(args.input)
    segs = window_segments(transcript, max_dur=args.max_dur)
    lines = []
    for seg in segs:
        lines.append(
            json.dumps(
                {
                    "start": seg.span.start,
                    "end": seg.span.end,
                    "utterances": [
                        {
                            "start": u.span.start,
                            "end": u.span.end,
                            "speaker": u.role.label,
                            "text": u.text,
                        }
                        for u in seg.transcript.utterances
                    ],
                },
                ensure_ascii=False,
            )
            + "\n"
        )
    _write_out("".join(lines), args.out)
    return 0


def _cmd_frames(args: argparse.Namespace) -> int:
    transcript = load_transcript(args.input)
    span = (
        TimeInterval(0.0, args.span_end)
        if args.span_end is not None
        else transcript.session_span
    )
    labels = rasterize_labels(transcript, args.frame_period, span)
    lines = ["t,label\n"]
    for i, lab in enumerate(labels.labels):
        lines.append(f"{span.start + i * labels.frame_period:.4f},{lab.label}\n")
    _write_out("".join(lines), args.out)
    return 0


def _cmd_suppress(args: argparse.Namespace) -> int:
    probs = load_frame_probs(args.input)
    supp = silence_regions(probs, threshold=args.threshold, shrink=args.shrink)
    lines = ["start,end\n"] + [f"{r.start:.3f},{r.end:.3f}\n" for r in supp.regions]
    _write_out("".join(lines), args.out)
    return 0


def _cmd_attribute(args: argparse.Namespace) -> int:
    probs = load_frame_probs(args.probs)
    words: list[tuple[str, TimeInterval]] = []
    with open(args.words, "r", encoding="utf-8") as fp:
        for lineno, line in enumerate(fp, 1):
            line = line.strip()
            if not line:
                continue
            try:
                row = json.loads(line)
                words.append(
                    (str(row["text"]), TimeInterval(float(row["start"]), float(row["end"])))
                )
            except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
                raise SotkitError(f"bad word row at line {lineno}: {exc}") from exc
    attributed = attribute_words(words, probs)
    lines = [
        json.dumps(
            {"start": w.span.start, "end": w.span.end, "speaker": w.role.label, "text": w.text},
            ensure_ascii=False,
        )
        + "\n"
        for w in attributed
    ]
    _write_out("".join(lines), args.out)
    return 0


def _read_loss_csv(path: str, frame_mode: bool) -> tuple[list[list[float]], list[int]]:
    frame_classes = {"child": 0, "adult": 1, "silence": 2}
    with open(path, "r", encoding="utf-8") as fp:
        reader = csv.reader(fp)
        header = next(reader, None)
        if not header or header[0] != "target":
            raise SotkitError("loss CSV must start with a 'target' column")
        rows: list[list[float]] = []
        targets: list[int] = []
        for row in reader:
            if not row:
                continue
            try:
                if frame_mode:
                    targets.append(frame_classes[row[0].strip().lower()])
                else:
                    targets.append(int(row[0]))
                rows.append([float(v) for v in row[1:]])
            except (KeyError, ValueError, IndexError) as exc:
                raise SotkitError(f"bad loss CSV row {row!r}: {exc}") from exc
    if not rows:
        raise SotkitError("loss CSV contains no rows")
    return rows, targets


def _cmd_loss(args: argparse.Namespace) -> int:
    if args.token_csv is None and args.frame_csv is None:
        raise SotkitError("provide --token-csv and/or --frame-csv")
    l_asr = l_diar = 0.0
    if args.token_csv:
        rows, targets = _read_loss_csv(args.token_csv, frame_mode=False)
        l_asr = serialized_ce(TokenLogProbs.from_probs(rows, targets))
    if args.frame_csv:
        rows, targets = _read_loss_csv(args.frame_csv, frame_mode=True)
        l_diar = frame_ce(FrameLogProbs.from_probs(rows, targets))
    total = total_loss(l_asr, l_diar, args.lambda_diar)
    _write_out(
        "loss_asr,loss_diar,lambda,loss_total\n"
        f"{l_asr!r},{l_diar!r},{args.lambda_diar!r},{total!r}\n",
        args.out,
    )
    return 0


def _cmd_speech_metrics(args: argparse.Namespace) -> int:
    role = SpeakerRole.from_label(args.role)

    def one(path: str) -> str:
        transcript = load_transcript(path)
        if args.session_end is not None:
            # JSONL carries no session bounds; extend past the last utterance
            from .core import Transcript

            transcript = Transcript(
                transcript.utterances, TimeInterval(0.0, args.session_end)
            )
        segs = window_segments(transcript)
        m = speech_measures(segs, role)
        child_id = path.rsplit("/", 1)[-1].rsplit(".", 1)[0]
        vals = ",".join(repr(getattr(m, name)) for name in MEASURE_NAMES)
        return f"{child_id},{vals}\n"

    rows = _map_jobs(one, args.inputs, args.jobs)
    header = "child_id," + ",".join(MEASURE_NAMES) + "\n"
    _write_out(header + "".join(rows), args.out)
    return 0


def _read_measures_csv(path: str) -> dict[str, sessions.MeasureSet]:
    out: dict[str, sessions.MeasureSet] = {}
    with open(path, "r", encoding="utf-8") as fp:
        reader = csv.DictReader(fp)
        expected = {"child_id", *MEASURE_NAMES}
        if reader.fieldnames is None or set(reader.fieldnames) != expected:
            raise SotkitError(f"measures CSV must have columns {sorted(expected)}")
        for row in reader:
            try:
                out[row["child_id"]] = MeasureSet(
                    **{name: float(row[name]) for name in MEASURE_NAMES}
                )
            except (TypeError, ValueError) as exc:
                raise SotkitError(f"bad measures row {row!r}: {exc}") from exc
    return out


def _cmd_agreement(args: argparse.Namespace) -> int:
    rows = agreement(_read_measures_csv(args.gt), _read_measures_csv(args.pred))
    lines = ["measure,gt_mean,pred_mean,pcc\n"]
    for name, gt_mean, pred_mean, pcc in rows:
        lines.append(f"{name},{gt_mean!r},{pred_mean!r},{pcc!r}\n")
    _write_out("".join(lines), args.out)
    return 0


def _cmd_knn(args: argparse.Namespace) -> int:
    _, train = load_labeled_vectors(args.train)
    _, test = load_labeled_vectors(args.test)
    acc = knn_probe(train, test, k=args.k)
    _write_out(f"accuracy\n{_fmt(acc, args.raw)}\n", args.out)
    return 0


def _cmd_simulate(args: argparse.Namespace) -> int:
    config = SimConfig(
        seed=args.seed,
        n_utterances=args.utterances,
        p_drop_speaker=args.p_drop_speaker,
        p_drop_timestamp=args.p_drop_timestamp,
        p_loop=args.p_loop,
    )
    result = run_error_study(config, args.trials)
    rows = [
        ("miss_speaker", result.unforced.miss_speaker, result.forced.miss_speaker),
        ("miss_timestamp", result.unforced.miss_timestamp, result.forced.miss_timestamp),
        ("miss_both", result.unforced.miss_both, result.forced.miss_both),
        ("infinite_loop", result.unforced.infinite_loop, result.forced.infinite_loop),
    ]
    lines = ["error_type,without_fd,with_fd\n"]
    for name, unforced, forced in rows:
        lines.append(f"{name},{_fmt(unforced, args.raw)},{_fmt(forced, args.raw)}\n")
    _write_out("".join(lines), args.out)
    return 0


# --------------------------------------------------------------------------
# argument parsing
# --------------------------------------------------------------------------


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sotkit",
        description="Serialized speaker-attributed transcript toolkit.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_out(p: argparse.ArgumentParser) -> None:
        p.add_argument("--out", default=None, help="output file (default: stdout)")

    p = sub.add_parser("validate", help="structural error report for token-stream JSON files")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--jobs", type=int, default=1)
    add_out(p)
    p.set_defaults(fn=_cmd_validate)

    p = sub.add_parser("parse", help="token-stream JSON to transcript JSONL")
    p.add_argument("input")
    p.add_argument("--report", default=None, help="write the error report JSON here")
    add_out(p)
    p.set_defaults(fn=_cmd_parse)

    p = sub.add_parser("serialize", help="transcript JSONL to token-stream JSON")
    p.add_argument("input")
    add_out(p)
    p.set_defaults(fn=_cmd_serialize)

    p = sub.add_parser("score-asr", help="multi-talker WER between two transcript JSONL files")
    p.add_argument("--ref", required=True)
    p.add_argument("--hyp", required=True)
    p.add_argument("--raw", action="store_true", help="print raw ratios instead of percentages")
    add_out(p)
    p.set_defaults(fn=_cmd_score_asr)

    p = sub.add_parser("score-der", help="diarization error rate between two RTTM files")
    p.add_argument("--ref", required=True)
    p.add_argument("--hyp", required=True)
    p.add_argument("--collar", type=float, default=0.0)
    p.add_argument("--raw", action="store_true")
    add_out(p)
    p.set_defaults(fn=_cmd_score_der)

    p = sub.add_parser("segment", help="pack a transcript into windows of at most 30 s")
    p.add_argument("input")
    p.add_argument("--max-dur", type=float, default=MAX_WINDOW_DURATION)
    add_out(p)
    p.set_defaults(fn=_cmd_segment)

    p = sub.add_parser("frames", help="rasterize a transcript to per-frame labels")
    p.add_argument("input")
    p.add_argument("--frame-period", type=float, default=DEFAULT_FRAME_PERIOD)
    p.add_argument("--span-end", type=float, default=None)
    add_out(p)
    p.set_defaults(fn=_cmd_frames)

    p = sub.add_parser("suppress", help="silence suppression regions from frame probabilities")
    p.add_argument("input")
    p.add_argument("--threshold", type=float, default=SILENCE_THRESHOLD)
    p.add_argument("--shrink", type=float, default=SILENCE_SHRINK)
    add_out(p)
    p.set_defaults(fn=_cmd_suppress)

    p = sub.add_parser("attribute", help="assign speaker roles to timed words")
    p.add_argument("--words", required=True, help="JSONL with start/end/text per word")
    p.add_argument("--probs", required=True, help="frame probability CSV")
    add_out(p)
    p.set_defaults(fn=_cmd_attribute)

    p = sub.add_parser("loss", help="training-objective arithmetic on CSV matrices")
    p.add_argument("--token-csv", default=None, help="columns: target,p0,...,pV-1")
    p.add_argument("--frame-csv", default=None, help="columns: target,p_child,p_adult,p_sil")
    p.add_argument("--lambda-diar", type=float, default=1.0, dest="lambda_diar")
    add_out(p)
    p.set_defaults(fn=_cmd_loss)

    p = sub.add_parser("speech-metrics", help="per-child speech measures from transcripts")
    p.add_argument("inputs", nargs="+", help="one transcript JSONL per child")
    p.add_argument("--role", default="child", choices=["child", "adult"])
    p.add_argument("--session-end", type=float, default=None, help="session length in seconds")
    p.add_argument("--jobs", type=int, default=1)
    add_out(p)
    p.set_defaults(fn=_cmd_speech_metrics)

    p = sub.add_parser("agreement", help="means and correlation between two measure CSVs")
    p.add_argument("--gt", required=True)
    p.add_argument("--pred", required=True)
    add_out(p)
    p.set_defaults(fn=_cmd_agreement)

    p = sub.add_parser("knn", help="k-nearest-neighbor role probe on embedding CSVs")
    p.add_argument("--train", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--k", type=int, default=DEFAULT_K)
    p.add_argument("--raw", action="store_true")
    add_out(p)
    p.set_defaults(fn=_cmd_knn)

    p = sub.add_parser("simulate", help="forced-decoding structural error study")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--utterances", type=int, default=4)
    p.add_argument("--p-drop-speaker", type=float, default=0.0)
    p.add_argument("--p-drop-timestamp", type=float, default=0.0)
    p.add_argument("--p-loop", type=float, default=0.0)
    p.add_argument("--raw", action="store_true")
    add_out(p)
    p.set_defaults(fn=_cmd_simulate)

    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except SotkitError as exc:
        sys.stderr.write(
            json.dumps({"error": type(exc).__name__, "message": str(exc)}) + "\n"
        )
        return 1
    except OSError as exc:
        sys.stderr.write(json.dumps({"error": "OSError", "message": str(exc)}) + "\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
