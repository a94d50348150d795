"""All four decode modes on one corrupted utterance.

The posterior loses one token outright and doubts its neighbor. Greedy
output is one character short; the iterative filler keeps that wrong
length; the segment search re-predicts two tokens from the single mask in
a handful of batched calls; the left-to-right baseline needs one call per
output token.
"""

from pardecode import DecodeConfig, decode_utterance, make_oracle_scorer, synth_posterior
from pardecode.vocab import build_vocabulary

if __name__ == "__main__":
    v = build_vocabulary(list("the_nigl"))
    ref = "the_light"
    p = synth_posterior(
        ref, v, 3,
        [(5, 6, "low_confidence", 0.5), (6, 7, "delete_token", 0.0)],
        seed=7,
    )
    scorer = make_oracle_scorer(v, ref, 0.95, seed=7)

    print(f"reference: {ref}\n")
    for mode in ("gctc", "nar", "par", "ar"):
        cfg = DecodeConfig(mode=mode)
        rep = decode_utterance(p, None if mode == "gctc" else scorer, cfg, v)
        mark = "==" if rep.transcript == ref else "!="
        print(
            f"{mode:5} {rep.transcript!r:14} {mark} reference   "
            f"decoder calls {rep.decoder_calls:3}  scored rows {rep.scored_rows:3}"
        )
