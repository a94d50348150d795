"""Prefix probabilities over a CTC posterior, two ways.

The forward recursion scores the mass of every alignment whose collapsed
output starts with prefix+candidate; the brute-force enumerator sums the
same mass path by path. They agree to around machine precision.
"""

import numpy as np

from pardecode import CtcPosterior, brute_force_ctc_prefix, ctc_prefix_score
from pardecode.vocab import build_vocabulary

if __name__ == "__main__":
    rng = np.random.default_rng(0)
    v = build_vocabulary(list("abc"))
    T = 5
    cols = [v.blank_id] + list(v.surface_ids)
    frames = np.zeros((T, v.size))
    frames[:, cols] = rng.dirichlet(np.ones(len(cols)), size=T)
    p = CtcPosterior(frames, "demo")

    prefix = v.encode("a")
    candidates = list(v.surface_ids) + [v.eos_id]
    fast = ctc_prefix_score(p, prefix, candidates, v)
    slow = brute_force_ctc_prefix(p, prefix, candidates, v)

    print(f"prefix 'a', {T} frames, {len(cols) ** T} alignment paths enumerated")
    for c, f, s in zip(candidates, fast, slow):
        name = v.tokens[c]
        print(f"  cand {name!r:8} recursion {f:+.6f}   enumeration {s:+.6f}")
    print("max |difference|:", float(np.max(np.abs(fast - slow))))
