"""Benchmark table and threshold sweep on a synthetic corpus.

Generates 20 utterances, decodes them in every mode, prints the aggregate
table (decoder-call counts are the hardware-independent speed signal), then
sweeps the confidence threshold to show error/calls moving together.
"""

import numpy as np

from pardecode import DecodeConfig, EncoderOutput, OracleScorer, decode_utterance
from pardecode.corpus import SynthSpec, generate_corpus
from pardecode.metrics import aggregate_bench, bench_rows_to_markdown, corpus_error_rate

if __name__ == "__main__":
    spec = SynthSpec(utterances=20, min_tokens=30, max_tokens=45, seed=21,
                     low_confidence_rate=0.08, delete_rate=0.2)
    vocab, utterances = generate_corpus(spec)
    scorer = OracleScorer(vocab, correct_mass=0.95, seed=21)

    reports = []
    for mode in ("ar", "gctc", "nar", "par"):
        for u in utterances:
            x = EncoderOutput(u.utterance_id, {"reference": u.reference})
            cfg = DecodeConfig(mode=mode)
            reports.append(decode_utterance(u.posterior, scorer, cfg, vocab, x=x))
    refs = {u.utterance_id: u.reference for u in utterances}
    print(bench_rows_to_markdown(aggregate_bench(reports, refs)))

    print("threshold sweep (par):")
    for p_thres in (0.0, 0.9, 0.95, 0.99):
        cfg = DecodeConfig(mode="par", p_thres=p_thres)
        pairs, calls = [], []
        for u in utterances:
            x = EncoderOutput(u.utterance_id, {"reference": u.reference})
            rep = decode_utterance(u.posterior, scorer, cfg, vocab, x=x)
            pairs.append((u.reference, rep.transcript))
            calls.append(rep.decoder_calls)
        print(
            f"  p_thres {p_thres:5.2f}  error {corpus_error_rate(pairs):.4f}  "
            f"mean calls {np.mean(calls):.2f}"
        )
