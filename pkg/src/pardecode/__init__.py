"""Decoding algorithms for CTC/attention sequence models.

Greedy CTC collapse with confidences, confidence masking with merged mask
slots, segment-level batched beam search, an autoregressive hybrid baseline,
iterative mask filling, synthetic posteriors and benchmarking tools.
"""

from .beam import (
    BeamState,
    DecodeConfig,
    DecodeReport,
    Hypothesis,
    SegmentSearchResult,
    ar_beam_search,
    decode_utterance,
    nar_mask_fill,
    par_decode,
    segment_beam_search,
)
from .ctc import (
    CtcPosterior,
    CtcPrefixScorer,
    GreedyDecodeResult,
    brute_force_ctc_prefix,
    ctc_prefix_score,
    greedy_ctc_decode,
)
from .masking import (
    FixedToken,
    MaskedSequence,
    MaskSlot,
    Segment,
    build_segments,
    mask_by_confidence,
)
from .metrics import (
    BenchRow,
    ErrorBreakdown,
    aggregate_bench,
    corpus_error_rate,
    edit_distance,
    rtf,
)
from .scorers import (
    EncoderOutput,
    NgramScorer,
    OracleScorer,
    Scorer,
    ScorerCache,
    make_ngram_scorer,
    make_oracle_scorer,
    score_batch,
    synth_posterior,
)
from .vocab import Vocabulary, build_vocabulary, decode_tokens, encode_text

__all__ = [
    "BeamState",
    "BenchRow",
    "CtcPosterior",
    "CtcPrefixScorer",
    "DecodeConfig",
    "DecodeReport",
    "EncoderOutput",
    "ErrorBreakdown",
    "FixedToken",
    "GreedyDecodeResult",
    "Hypothesis",
    "MaskSlot",
    "MaskedSequence",
    "NgramScorer",
    "OracleScorer",
    "Scorer",
    "ScorerCache",
    "Segment",
    "SegmentSearchResult",
    "Vocabulary",
    "aggregate_bench",
    "ar_beam_search",
    "brute_force_ctc_prefix",
    "build_segments",
    "build_vocabulary",
    "corpus_error_rate",
    "ctc_prefix_score",
    "decode_tokens",
    "decode_utterance",
    "edit_distance",
    "encode_text",
    "greedy_ctc_decode",
    "make_ngram_scorer",
    "make_oracle_scorer",
    "mask_by_confidence",
    "nar_mask_fill",
    "par_decode",
    "rtf",
    "score_batch",
    "segment_beam_search",
    "synth_posterior",
]

__version__ = "0.1.0"
