"""Greedy CTC collapse: per-frame argmax, merge repeats, drop blanks.

Builds a tiny posterior by hand, decodes it, and shows the per-token
confidences that later drive the masking stage.
"""

import numpy as np

from pardecode import CtcPosterior, greedy_ctc_decode
from pardecode.vocab import build_vocabulary

if __name__ == "__main__":
    v = build_vocabulary(list("ab"))
    a, b = v.encode("ab")

    # frames: a a <blank> a b b  -> collapses to "a a b"
    frames = np.zeros((6, v.size))
    peaks = [(a, 0.6), (a, 0.9), (v.blank_id, 0.8), (a, 0.7), (b, 0.95), (b, 0.7)]
    for t, (tok, p) in enumerate(peaks):
        frames[t, tok] = p
        frames[t, v.blank_id] += 1.0 - frames[t].sum()
    p = CtcPosterior(frames, "demo")

    g = greedy_ctc_decode(p, v)
    print("argmax path :", [v.tokens[int(i)] for i in np.argmax(frames, axis=1)])
    print("collapsed   :", v.decode(g.tokens))
    for tok, conf, span in zip(g.tokens, g.confidences, g.frame_spans):
        print(f"  token {v.tokens[tok]!r}  confidence {conf:.2f}  frames {span}")
