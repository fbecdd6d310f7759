"""sotkit: serialized speaker-attributed transcripts for child-adult dialogue.

Parsing and validation of serialized (SOT-style) token streams, a forced
decoding state machine with diarization-guided silence suppression,
multi-talker WER / DER scoring, deterministic corpus preprocessing, loss
arithmetic, a decode simulator, and conversational speech measures.
"""

from .core import (
    SotkitError,
    SpeakerRole,
    TimeInterval,
    Transcript,
    Utterance,
    Word,
    interval_overlap,
    normalize_text,
    normalize_word,
)
from .der import DerBreakdown, der
from .frames import (
    FrameLabel,
    FrameLabelSequence,
    FrameProbSequence,
    RoleSegment,
    attribute_words,
    postprocess_segments,
    rasterize_labels,
    silence_regions,
)
from .fsm import (
    DecodePhase,
    DecodeState,
    MaskSpec,
    SuppressionSet,
    advance,
    allowed_classes,
    init_state,
    run_forced_decode,
)
from .grammar import (
    StructuralErrorReport,
    Token,
    TokenKind,
    TokenStream,
    parse_token_stream,
    serialize_transcript,
    validate_structure,
)
from .losses import FrameLogProbs, TokenLogProbs, frame_ce, serialized_ce, total_loss
from .probe import LabeledVectors, knn_probe, pearson
from .sessions import (
    MeasureSet,
    Segment,
    agreement,
    clean_words,
    merge_words_to_utterances,
    speech_measures,
    window_segments,
)
from .sim import ErrorStudyResult, SimConfig, SplitMix64, run_error_study, synth_dialogue
from .wer import (
    RoleErrorCounts,
    ScoreReport,
    align_words,
    classify_errors,
    score,
    score_transcripts,
)

__version__ = "0.1.0"

__all__ = [
    "SotkitError",
    "SpeakerRole",
    "TimeInterval",
    "Word",
    "Utterance",
    "Transcript",
    "interval_overlap",
    "normalize_word",
    "normalize_text",
    "Token",
    "TokenKind",
    "TokenStream",
    "StructuralErrorReport",
    "serialize_transcript",
    "parse_token_stream",
    "validate_structure",
    "DecodePhase",
    "DecodeState",
    "MaskSpec",
    "SuppressionSet",
    "init_state",
    "allowed_classes",
    "advance",
    "run_forced_decode",
    "FrameLabel",
    "FrameLabelSequence",
    "FrameProbSequence",
    "RoleSegment",
    "silence_regions",
    "rasterize_labels",
    "attribute_words",
    "postprocess_segments",
    "align_words",
    "classify_errors",
    "score",
    "score_transcripts",
    "RoleErrorCounts",
    "ScoreReport",
    "DerBreakdown",
    "der",
    "TokenLogProbs",
    "FrameLogProbs",
    "serialized_ce",
    "frame_ce",
    "total_loss",
    "Segment",
    "MeasureSet",
    "clean_words",
    "merge_words_to_utterances",
    "window_segments",
    "speech_measures",
    "agreement",
    "LabeledVectors",
    "knn_probe",
    "pearson",
    "SimConfig",
    "SplitMix64",
    "ErrorStudyResult",
    "synth_dialogue",
    "run_error_study",
]
