"""From greedy output to search segments.

A low-confidence token and a deleted token become one merged mask slot;
each slot carries its left context (raw greedy tokens, including earlier
slots' originals) and the fixed token that will terminate hypotheses.
"""

from pardecode import build_segments, greedy_ctc_decode, mask_by_confidence, synth_posterior
from pardecode.vocab import build_vocabulary

if __name__ == "__main__":
    v = build_vocabulary(list("sea_cumbr"))
    ref = "sea_cucumber"
    # the second token goes low-confidence, one mid-word token disappears
    p = synth_posterior(
        ref, v, 3,
        [(1, 2, "low_confidence", 0.5), (7, 8, "low_confidence", 0.45), (8, 9, "delete_token", 0.0)],
        seed=4,
    )

    g = greedy_ctc_decode(p, v)
    print("reference :", ref)
    print("greedy    :", v.decode(g.tokens))
    m = mask_by_confidence(g, p_thres=0.95)
    print("masked    :", m.render(v))
    for seg in build_segments(m, v):
        end = v.tokens[seg.end_token]
        print(
            f"  segment {seg.index}: context {v.decode(seg.left_context)!r} "
            f"end {end!r} originals {v.decode(seg.original_tokens)!r} final={seg.is_final}"
        )
