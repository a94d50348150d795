"""CTC-side computations: greedy collapse with per-token confidence and the
prefix probability used by the hybrid left-to-right beam search.

Probabilities live linearly in files and are floored at ``PROB_FLOOR`` before
the switch to log space, so reports stay bit-stable and no -inf leaks out of a
merely tiny probability. A structural impossibility (e.g. a prefix longer than
the frame count) still scores -inf.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .vocab import Vocabulary

PROB_FLOOR = 1e-12
NEG_INF = float("-inf")


@dataclass(frozen=True)
class CtcPosterior:
    """Per-frame probability distribution over the vocabulary (T x V)."""

    frames: np.ndarray
    utterance_id: str = ""

    def __post_init__(self) -> None:
        frames = np.asarray(self.frames, dtype=np.float64)
        object.__setattr__(self, "frames", frames)
        if frames.ndim != 2 or frames.shape[0] < 1:
            raise ValueError("posterior must be a T x V matrix with T >= 1")
        if np.any(frames < -1e-9) or np.any(frames > 1 + 1e-9):
            raise ValueError("posterior entries must lie in [0, 1]")
        row_sums = frames.sum(axis=1)
        if np.any(np.abs(row_sums - 1.0) > 1e-6):
            raise ValueError("every posterior row must sum to 1 within 1e-6")

    @property
    def num_frames(self) -> int:
        return int(self.frames.shape[0])

    @property
    def vocab_size(self) -> int:
        return int(self.frames.shape[1])


@dataclass(frozen=True)
class GreedyDecodeResult:
    """Collapsed argmax path: surface tokens, confidences, and frame spans."""

    tokens: tuple[int, ...]
    confidences: tuple[float, ...]
    frame_spans: tuple[tuple[int, int], ...]

    def __len__(self) -> int:
        return len(self.tokens)


def _check_dims(p: CtcPosterior, v: Vocabulary) -> None:
    if p.vocab_size != v.size:
        raise ValueError(
            f"posterior width {p.vocab_size} does not match vocabulary size {v.size}"
        )


def greedy_ctc_decode(
    p: CtcPosterior, v: Vocabulary, confidence: str = "max"
) -> GreedyDecodeResult:
    """Greedy collapse: per-frame argmax (ties break to the lowest id),
    merge consecutive repeats, drop blanks.

    Token confidence is the max (or mean, with ``confidence="mean"``) of that
    token's posterior over its collapsed frame span.
    """
    _check_dims(p, v)
    if confidence not in ("max", "mean"):
        raise ValueError(f"unknown confidence mode {confidence!r}")
    path = np.argmax(p.frames, axis=1)
    specials = v.special_ids

    tokens: list[int] = []
    confs: list[float] = []
    spans: list[tuple[int, int]] = []
    t = 0
    T = p.num_frames
    while t < T:
        tok = int(path[t])
        start = t
        while t < T and int(path[t]) == tok:
            t += 1
        if tok in specials:
            # blank and other non-emitting symbols separate runs
            continue
        span_probs = p.frames[start:t, tok]
        conf = float(span_probs.max() if confidence == "max" else span_probs.mean())
        tokens.append(tok)
        confs.append(conf)
        spans.append((start, t - 1))
    return GreedyDecodeResult(tuple(tokens), tuple(confs), tuple(spans))


class CtcPrefixScorer:
    """Incremental prefix-probability recursion over one posterior.

    State per hypothesis is a (T, 2) array of log forward probabilities:
    column 0 holds mass whose alignment last emitted the prefix's final
    token, column 1 mass whose alignment currently sits on blank. The score
    of extending a prefix g by token c is the log mass of all alignments
    whose collapsed output starts with g·c; the eos "score" of g is the log
    mass of alignments collapsing to exactly g.
    """

    def __init__(self, p: CtcPosterior, v: Vocabulary):
        _check_dims(p, v)
        self.logp = np.log(np.maximum(p.frames, PROB_FLOOR))
        self.T = p.num_frames
        self.blank_id = v.blank_id
        self.eos_id = v.eos_id

    def initial_state(self) -> np.ndarray:
        """State of the empty prefix: only all-blank alignments."""
        r = np.full((self.T, 2), NEG_INF)
        r[:, 1] = np.cumsum(self.logp[:, self.blank_id])
        return r

    def exact_score(self, state: np.ndarray) -> float:
        """Log mass of alignments collapsing to exactly this prefix."""
        return float(np.logaddexp(state[-1, 0], state[-1, 1]))

    def extend(
        self,
        prefix_len: int,
        last_tokens: Sequence[int | None],
        cand_ids: np.ndarray,
        states: np.ndarray,
    ) -> tuple[np.ndarray, np.ndarray]:
        """Score all (hypothesis, candidate) extensions in one pass.

        All hypotheses in the batch share the same prefix length; returns
        (psi, new_states) with shapes (H, C) and (H, C, T, 2).
        """
        H = states.shape[0]
        C = len(cand_ids)
        T = self.T
        L = prefix_len
        if L >= T:
            # a prefix of length >= T cannot be extended within T frames
            return (
                np.full((H, C), NEG_INF),
                np.full((H, C, T, 2), NEG_INF),
            )
        xs = self.logp[:, cand_ids]  # (T, C)
        r_sum = np.logaddexp(states[:, :, 0], states[:, :, 1])  # (H, T)
        phi = np.repeat(r_sum[:, :, None], C, axis=2)  # (H, T, C)
        if L > 0:
            for h, last in enumerate(last_tokens):
                same = np.flatnonzero(cand_ids == last)
                if same.size:
                    phi[h, :, same] = states[h, :, 1]

        r_new = np.full((H, C, T, 2), NEG_INF)
        if L == 0:
            r_new[:, :, 0, 0] = xs[0][None, :]
            psi = r_new[:, :, 0, 0].copy()
            start = 1
        else:
            psi = np.full((H, C), NEG_INF)
            start = L
        blank_col = self.logp[:, self.blank_id]
        for t in range(start, T):
            rn = r_new[:, :, t - 1, 0]
            rb = r_new[:, :, t - 1, 1]
            grow = phi[:, t - 1, :] + xs[t][None, :]
            r_new[:, :, t, 0] = np.logaddexp(rn, phi[:, t - 1, :]) + xs[t][None, :]
            r_new[:, :, t, 1] = np.logaddexp(rn, rb) + blank_col[t]
            psi = np.logaddexp(psi, grow)
        return psi, r_new


def _validate_prefix_candidates(
    prefix: Sequence[int], candidates: Sequence[int], v: Vocabulary
) -> None:
    for t in prefix:
        if v.is_special(t):
            raise ValueError("prefix must not contain special ids")
        if not 0 <= t < v.size:
            raise ValueError(f"prefix id {t} out of range")
    for c in candidates:
        if c in (v.blank_id, v.mask_id, v.sos_id):
            raise ValueError("candidates must exclude blank, mask and sos")
        if not 0 <= c < v.size:
            raise ValueError(f"candidate id {c} out of range")


def ctc_prefix_score(
    p: CtcPosterior,
    prefix: Sequence[int],
    candidates: Sequence[int],
    v: Vocabulary,
) -> np.ndarray:
    """Log probability, per candidate c, of all alignments whose collapsed
    output begins with prefix·c. The eos candidate scores the mass of
    alignments collapsing to exactly the prefix."""
    _validate_prefix_candidates(prefix, candidates, v)
    scorer = CtcPrefixScorer(p, v)
    state = scorer.initial_state()[None, :, :]
    last: int | None = None
    for i, tok in enumerate(prefix):
        _, new_states = scorer.extend(i, [last], np.array([tok]), state)
        state = new_states[:, 0]
        last = tok

    out = np.full(len(candidates), NEG_INF)
    surface = [(j, c) for j, c in enumerate(candidates) if c != v.eos_id]
    if surface:
        cand_arr = np.array([c for _, c in surface])
        psi, _ = scorer.extend(len(prefix), [last], cand_arr, state)
        for (j, _), val in zip(surface, psi[0]):
            out[j] = val
    for j, c in enumerate(candidates):
        if c == v.eos_id:
            out[j] = scorer.exact_score(state[0])
    return out


def _collapse_path(path: Sequence[int], blank_id: int) -> tuple[int, ...]:
    out: list[int] = []
    prev = -1
    for s in path:
        if s != prev and s != blank_id:
            out.append(s)
        prev = s
    return tuple(out)


def brute_force_ctc_prefix(
    p: CtcPosterior,
    prefix: Sequence[int],
    candidates: Sequence[int],
    v: Vocabulary,
) -> np.ndarray:
    """Exact enumeration oracle for :func:`ctc_prefix_score`.

    Enumerates every alignment path over blank plus the surface tokens using
    the same floored probabilities; assumes the posterior carries no mass on
    mask/sos/eos columns (true for every generator in this package).
    """
    _validate_prefix_candidates(prefix, candidates, v)
    alphabet = (v.blank_id,) + v.surface_ids
    T = p.num_frames
    if len(alphabet) ** T > 10**6:
        raise ValueError("instance too large for brute-force enumeration")
    floored = np.maximum(p.frames, PROB_FLOOR)
    prefix_t = tuple(prefix)
    k = len(prefix_t)

    masses = {c: 0.0 for c in candidates}
    eos_id = v.eos_id
    for path in itertools.product(alphabet, repeat=T):
        prob = 1.0
        for t, s in enumerate(path):
            prob *= floored[t, s]
        collapsed = _collapse_path(path, v.blank_id)
        for c in candidates:
            if c == eos_id:
                if collapsed == prefix_t:
                    masses[c] += prob
            elif collapsed[: k + 1] == prefix_t + (c,):
                masses[c] += prob
    return np.array(
        [math.log(masses[c]) if masses[c] > 0 else NEG_INF for c in candidates]
    )
