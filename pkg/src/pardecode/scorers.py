"""Next-token scorers and the batched scoring surface the decoders call.

A scorer maps a batch of sos-framed prefixes to one log-probability row per
prefix over the whole vocabulary; blank, mask and sos always score -inf and
the remaining mass (surface tokens plus eos) sums to one. Two desk-scale
scorers are provided: an oracle built around a known reference transcript
and an additive-smoothing n-gram model. ``synth_posterior`` fabricates CTC
posteriors with controllable error regions so decoding failure modes are
reproducible.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from .ctc import CtcPosterior
from .seeding import rng_from, stable_hash64
from .vocab import Vocabulary

NEG_INF = float("-inf")


@dataclass(frozen=True)
class EncoderOutput:
    """Per-utterance conditioning payload handed to scorers.

    Toy scorers carry the reference transcript (and optionally a noise seed)
    in ``features``; posterior-driven paths carry the posterior itself.
    """

    utterance_id: str
    features: Mapping[str, Any] = field(default_factory=dict)


@dataclass
class _CacheEntry:
    prefix: tuple[int, ...]
    payload: Any
    generation: int


class ScorerCache:
    """Opaque per-hypothesis incremental state, keyed by batch row.

    Entries self-describe the prefix they were computed for, so a stale or
    reshuffled entry degrades to a recompute instead of a wrong score; the
    cache can never change a result, only speed it up.
    """

    def __init__(self) -> None:
        self._entries: dict[int, _CacheEntry] = {}
        self.generation = 0

    def get(self, row: int) -> _CacheEntry | None:
        return self._entries.get(row)

    def put(self, row: int, prefix: Sequence[int], payload: Any) -> None:
        self._entries[row] = _CacheEntry(tuple(prefix), payload, self.generation)

    def invalidate(self, row: int) -> None:
        self._entries.pop(row, None)

    def gather(self, parent_rows: Sequence[int | None]) -> None:
        """Re-key entries after a top-k reshuffle: new row i descends from
        old row ``parent_rows[i]``; None drops the slot (dummy/replaced)."""
        old = self._entries
        self.generation += 1
        new: dict[int, _CacheEntry] = {}
        for i, parent in enumerate(parent_rows):
            if parent is None:
                continue
            entry = old.get(parent)
            if entry is not None:
                new[i] = entry
        self._entries = new

    def clear(self) -> None:
        self._entries.clear()
        self.generation += 1


class Scorer:
    """Base scorer: row-wise conditional next-token log distributions."""

    vocab: Vocabulary

    def support_ids(self) -> tuple[int, ...]:
        return self.vocab.surface_ids + (self.vocab.eos_id,)

    def score(
        self,
        prefixes: Sequence[Sequence[int]],
        x: EncoderOutput | None = None,
        cache: ScorerCache | None = None,
    ) -> np.ndarray:
        raise NotImplementedError


def score_batch(
    scorer: Scorer,
    prefixes: Sequence[Sequence[int]],
    x: EncoderOutput | None = None,
    cache: ScorerCache | None = None,
) -> np.ndarray:
    """Score a batch of prefixes; one log-probability row per prefix."""
    if len(prefixes) == 0:
        raise ValueError("batch must be non-empty")
    sos = scorer.vocab.sos_id
    for pref in prefixes:
        if len(pref) == 0 or pref[0] != sos:
            raise ValueError("every prefix must begin with sos")
    return scorer.score(prefixes, x, cache)


def _spread(rng: np.random.Generator, n: int) -> np.ndarray:
    """Positive weights summing to 1, bounded away from concentration."""
    w = rng.random(n) + 0.25
    return w / w.sum()


class OracleScorer(Scorer):
    """Reference-driven stand-in for a trained attention decoder.

    Whenever the prefix aligns to a reference prefix within a small edit
    slack (mask tokens match anything), the true continuation receives
    ``correct_mass`` and the rest is spread pseudo-randomly but
    deterministically per prefix. Prefixes too far from the reference get a
    seed-deterministic distribution. The alignment slack mirrors a trained
    decoder's tolerance of slightly corrupted context, which matters because
    segment left contexts keep the raw greedy tokens of earlier slots.
    """

    def __init__(
        self,
        vocab: Vocabulary,
        correct_mass: float,
        seed: int = 0,
        reference: str | None = None,
    ):
        if not 0.5 < correct_mass <= 1.0:
            raise ValueError("correct_mass must lie in (0.5, 1]")
        self.vocab = vocab
        self.correct_mass = float(correct_mass)
        self.seed = int(seed)
        self._ref_ids: tuple[int, ...] | None = None
        if reference is not None:
            self._ref_ids = tuple(vocab.encode(reference))

    def _reference_ids(self, x: EncoderOutput | None) -> tuple[int, ...]:
        if x is not None and "reference" in x.features:
            return tuple(self.vocab.encode(x.features["reference"]))
        if self._ref_ids is None:
            uid = x.utterance_id if x is not None else "<none>"
            raise ValueError(f"unknown utterance {uid!r}: no reference available")
        return self._ref_ids

    def _align_row(
        self, query: Sequence[int], ref: tuple[int, ...], prev_row: np.ndarray | None
    ) -> np.ndarray:
        """Edit-distance DP row of query vs. all reference prefixes.

        ``prev_row`` must be the row of query[:-1] to extend incrementally;
        otherwise the full DP is rerun. Mask tokens substitute for free.
        """
        R = len(ref)
        ref_arr = np.array(ref) if R else np.empty(0, dtype=int)
        idx = np.arange(R + 1)

        def step(row: np.ndarray, tok: int) -> np.ndarray:
            sub = np.zeros(R) if tok == self.vocab.mask_id else (ref_arr != tok).astype(float)
            g = np.empty(R + 1)
            g[0] = row[0] + 1.0
            if R:
                g[1:] = np.minimum(row[:-1] + sub, row[1:] + 1.0)
            return np.minimum.accumulate(g - idx) + idx

        if prev_row is not None and len(query) > 0:
            return step(prev_row, query[-1])
        row = idx.astype(float)
        for tok in query:
            row = step(row, tok)
        return row

    def _row_for_prefix(
        self, prefix: Sequence[int], ref: tuple[int, ...], dp_row: np.ndarray
    ) -> np.ndarray:
        support = np.array(self.support_ids())
        query_len = len(prefix) - 1  # drop sos
        # ties resolve to the deepest reference position: contexts arrive
        # with tokens dropped (not inserted), so the deeper reading is right
        j_star = int(np.flatnonzero(dp_row == dp_row.min())[-1])
        dist = float(dp_row[j_star])
        slack = max(2.0, 0.25 * query_len)
        probs = np.zeros(len(support))
        rng = rng_from(
            self.seed, "oracle", stable_hash64(bytes(np.array(prefix, dtype=np.int64)))
        )
        if dist <= slack:
            target = ref[j_star] if j_star < len(ref) else self.vocab.eos_id
            t_idx = int(np.flatnonzero(support == target)[0])
            probs[t_idx] = self.correct_mass
            rest = 1.0 - self.correct_mass
            if rest > 0 and len(support) > 1:
                others = np.ones(len(support), dtype=bool)
                others[t_idx] = False
                probs[others] = rest * _spread(rng, len(support) - 1)
        else:
            probs[:] = _spread(rng, len(support))
        row = np.full(self.vocab.size, NEG_INF)
        with np.errstate(divide="ignore"):
            row[support] = np.log(probs)
        return row

    def score(
        self,
        prefixes: Sequence[Sequence[int]],
        x: EncoderOutput | None = None,
        cache: ScorerCache | None = None,
    ) -> np.ndarray:
        ref = self._reference_ids(x)
        rows = np.empty((len(prefixes), self.vocab.size))
        for i, prefix in enumerate(prefixes):
            query = tuple(prefix[1:])
            dp_row: np.ndarray | None = None
            if cache is not None:
                entry = cache.get(i)
                if entry is not None and isinstance(entry.payload, np.ndarray):
                    if entry.prefix == tuple(prefix):
                        dp_row = entry.payload
                    elif entry.prefix == tuple(prefix[:-1]):
                        dp_row = self._align_row(query, ref, entry.payload)
            if dp_row is None:
                dp_row = self._align_row(query, ref, None)
            if cache is not None:
                cache.put(i, prefix, dp_row)
            rows[i] = self._row_for_prefix(prefix, ref, dp_row)
        return rows


class NgramScorer(Scorer):
    """Additive-smoothing n-gram model over surface tokens plus eos.

    An unseen (or too-short) context backs off to the longest seen suffix,
    down to the unigram distribution for the empty prefix.
    """

    def __init__(
        self,
        vocab: Vocabulary,
        corpus: Iterable[str],
        order: int,
        smoothing_alpha: float = 0.1,
    ):
        if order < 1:
            raise ValueError("order must be >= 1")
        if smoothing_alpha <= 0:
            raise ValueError("smoothing_alpha must be positive")
        self.vocab = vocab
        self.order = int(order)
        self.alpha = float(smoothing_alpha)
        self._counts: dict[tuple[int, ...], Counter] = {}
        self._totals: dict[tuple[int, ...], int] = {}
        lines = list(corpus)
        if not lines:
            raise ValueError("training corpus must be non-empty")
        for line in lines:
            ids = tuple(vocab.encode(line)) + (vocab.eos_id,)
            for i, tok in enumerate(ids):
                for k in range(min(i, self.order - 1) + 1):
                    ctx = ids[i - k : i]
                    self._counts.setdefault(ctx, Counter())[tok] += 1
                    self._totals[ctx] = self._totals.get(ctx, 0) + 1

    def _context(self, prefix: Sequence[int]) -> tuple[int, ...]:
        tail = tuple(prefix[1:])[max(0, len(prefix) - self.order) :]
        while tail and tail not in self._totals:
            tail = tail[1:]
        return tail

    def score(
        self,
        prefixes: Sequence[Sequence[int]],
        x: EncoderOutput | None = None,
        cache: ScorerCache | None = None,
    ) -> np.ndarray:
        support = np.array(self.support_ids())
        K = len(support)
        rows = np.full((len(prefixes), self.vocab.size), NEG_INF)
        for i, prefix in enumerate(prefixes):
            ctx = self._context(prefix)
            counts = self._counts.get(ctx)
            total = self._totals.get(ctx, 0)
            num = np.full(K, self.alpha)
            if counts is not None:
                for j, tok in enumerate(support):
                    num[j] += counts.get(int(tok), 0)
            rows[i, support] = np.log(num) - math.log(total + self.alpha * K)
        return rows


def make_oracle_scorer(
    vocab: Vocabulary, reference: str, correct_mass: float, seed: int = 0
) -> OracleScorer:
    return OracleScorer(vocab, correct_mass, seed=seed, reference=reference)


def make_ngram_scorer(
    vocab: Vocabulary,
    corpus: Iterable[str],
    order: int,
    smoothing_alpha: float = 0.1,
) -> NgramScorer:
    return NgramScorer(vocab, corpus, order, smoothing_alpha)


ERROR_KINDS = ("substitute", "low_confidence", "delete_token")


def _emission_row(
    size: int,
    peak_id: int,
    peak_p: float,
    blank_id: int,
    surface_ids: tuple[int, ...],
) -> np.ndarray:
    """One posterior row: peak probability on one id, the rest mostly on
    blank, a thin layer over the other surface tokens. Raises if the layer
    would overtake the peak (the argmax must stay where it was put)."""
    row = np.zeros(size)
    rest = 1.0 - peak_p
    if peak_id == blank_id:
        blank_p = 0.0
        others = list(surface_ids)
    else:
        blank_p = min(rest * 0.8, peak_p * 0.8)
        others = [t for t in surface_ids if t != peak_id]
    leftover = rest - blank_p
    if others:
        per_other = leftover / len(others)
        if per_other >= peak_p:
            raise ValueError(f"peak probability {peak_p} too small to stay the argmax")
    else:
        per_other = 0.0
        blank_p += leftover
    row[peak_id] = peak_p
    row[blank_id] += blank_p
    for t in others:
        row[t] += per_other
    return row / row.sum()


def synth_posterior(
    reference: str,
    v: Vocabulary,
    frames_per_token: int,
    error_spec: Sequence[tuple[int, int, str, float]] = (),
    seed: int = 0,
    utterance_id: str = "synthetic",
    clean_peak: float = 0.9995,
) -> CtcPosterior:
    """Fabricate a posterior whose greedy decode equals ``reference``
    outside the error regions.

    ``error_spec`` entries are (start, stop, kind, strength) half-open token
    ranges. ``substitute`` flips the argmax to a wrong token at probability
    ``strength``; ``low_confidence`` keeps the correct argmax but caps its
    span maximum at ``strength``; ``delete_token`` drowns the tokens in
    blank so the greedy output shortens.
    """
    if frames_per_token < 2:
        raise ValueError("frames_per_token must be >= 2")
    ref_ids = v.encode(reference)
    n = len(ref_ids)
    kinds: dict[int, tuple[str, float]] = {}
    for start, stop, kind, strength in error_spec:
        if kind not in ERROR_KINDS:
            raise ValueError(f"unknown error kind {kind!r}")
        if not 0 <= start < stop <= n:
            raise ValueError(f"range ({start}, {stop}) outside the reference")
        for pos in range(start, stop):
            if pos in kinds:
                raise ValueError("error ranges must not overlap")
            kinds[pos] = (kind, strength)

    surface = v.surface_ids
    rng = rng_from(seed, "synth", utterance_id)
    T = max(1, n * frames_per_token)
    frames = np.zeros((T, v.size))
    blank_row = _emission_row(v.size, v.blank_id, clean_peak, v.blank_id, surface)
    if n == 0:
        frames[0] = blank_row
        return CtcPosterior(frames, utterance_id)

    for i, tok in enumerate(ref_ids):
        kind, strength = kinds.get(i, ("clean", 0.0))
        base = i * frames_per_token
        if kind == "delete_token":
            for f in range(frames_per_token):
                frames[base + f] = blank_row
            continue
        if kind == "substitute":
            wrong = [t for t in surface if t != tok]
            emit_id = int(wrong[rng.integers(len(wrong))])
            peak = strength if strength > 0 else 0.99
        elif kind == "low_confidence":
            if not 0.0 < strength < 1.0:
                raise ValueError("low_confidence strength must lie in (0, 1)")
            emit_id, peak = tok, strength
        else:
            emit_id, peak = tok, clean_peak
        emission = _emission_row(v.size, emit_id, peak, v.blank_id, surface)
        for f in range(frames_per_token - 1):
            frames[base + f] = emission
        frames[base + frames_per_token - 1] = blank_row
    return CtcPosterior(frames, utterance_id)
