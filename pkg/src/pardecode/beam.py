"""Decode engines and the mode drivers.

Four modes share the scorer surface:

* ``gctc``  — greedy collapse only, zero scorer calls.
* ``ar``    — left-to-right beam search; each step mixes the attention
  log-probability with the prefix-probability of the posterior at weight
  ``ctc_weight``.
* ``par``   — greedy collapse, confidence masking, then one batched beam
  search over all mask segments at once: the live matrix holds S x B rows
  (dummy padding keeps the shape constant), every iteration is a single
  batched scorer call, and a hypothesis ends the moment it predicts its
  segment's end token.
* ``nar``   — iterative per-position refill of the masked tokens; output
  length always equals the masked-sequence length.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .ctc import CtcPosterior, CtcPrefixScorer, greedy_ctc_decode
from .masking import MaskedSequence, MaskSlot, Segment, build_segments, mask_by_confidence
from .scorers import EncoderOutput, Scorer, ScorerCache, score_batch
from .vocab import Vocabulary

NEG_INF = float("-inf")
MODES = ("ar", "gctc", "par", "nar")
TIE_BREAK_RULE = "score_then_earlier_then_lex"


@dataclass
class DecodeConfig:
    beam_size: int = 10
    p_thres: float = 0.95
    max_iteration: int = 5
    ctc_weight: float = 0.3
    mode: str = "ar"
    nar_iterations: int = 10
    tie_break: str = TIE_BREAK_RULE
    sequential_refine: bool = False

    def __post_init__(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.beam_size < 1:
            raise ValueError("beam_size must be >= 1")
        if self.max_iteration < 1:
            raise ValueError("max_iteration must be >= 1")
        if self.nar_iterations < 1:
            raise ValueError("nar_iterations must be >= 1")
        if not 0.0 <= self.ctc_weight <= 1.0:
            raise ValueError("ctc_weight must lie in [0, 1]")
        if not 0.0 <= self.p_thres <= 1.0:
            raise ValueError("p_thres must lie in [0, 1]")
        if self.tie_break != TIE_BREAK_RULE:
            raise ValueError(f"unknown tie-break rule {self.tie_break!r}")
        if self.mode == "par":
            self.ctc_weight = 0.0


@dataclass
class Hypothesis:
    """One beam row; ``tokens`` starts with sos, ``score`` is the cumulative
    log-probability of the generated tokens only."""

    tokens: list[int]
    score: float
    ended: bool = False
    is_dummy: bool = False
    end_iteration: int = 0


@dataclass
class BeamState:
    """Live S x B hypothesis matrix plus the per-segment ended lists."""

    segments: list[Segment]
    live: list[list[Hypothesis]]
    ended: list[list[Hypothesis]]
    end_tokens: list[int]
    iteration: int = 0
    cache: ScorerCache | None = None


@dataclass
class DecodeReport:
    utterance_id: str
    mode: str
    transcript: str
    decoder_calls: int = 0
    scored_rows: int = 0
    slots: int = 0
    fallbacks: int = 0
    truncated: bool = False
    elapsed_ns: int = 0
    fill_lengths: list[int] = field(default_factory=list)
    audio_seconds: float = 0.0

    def to_json_dict(self) -> dict:
        return {
            "id": self.utterance_id,
            "mode": self.mode,
            "transcript": self.transcript,
            "decoder_calls": self.decoder_calls,
            "scored_rows": self.scored_rows,
            "slots": self.slots,
            "fallbacks": self.fallbacks,
            "truncated": self.truncated,
            "elapsed_ns": self.elapsed_ns,
            "fill_lengths": list(self.fill_lengths),
            "audio_seconds": self.audio_seconds,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "DecodeReport":
        return cls(
            utterance_id=d["id"],
            mode=d["mode"],
            transcript=d["transcript"],
            decoder_calls=d["decoder_calls"],
            scored_rows=d["scored_rows"],
            slots=d["slots"],
            fallbacks=d["fallbacks"],
            truncated=d["truncated"],
            elapsed_ns=d["elapsed_ns"],
            fill_lengths=list(d.get("fill_lengths", ())),
            audio_seconds=d.get("audio_seconds", 0.0),
        )


def _dummy() -> Hypothesis:
    return Hypothesis(tokens=[], score=NEG_INF, is_dummy=True)


def ar_beam_search(
    x: EncoderOutput | None,
    p: CtcPosterior,
    scorer: Scorer,
    cfg: DecodeConfig,
    v: Vocabulary,
    cache: ScorerCache | None = None,
) -> DecodeReport:
    """Left-to-right beam search from sos to eos with hybrid weighting.

    Cumulative score = (1 - w) * attention log-prob + w * prefix probability
    of the posterior; the eos step uses the exact-collapse mass. Terminates
    once ``beam_size`` hypotheses have finished or every hypothesis has hit
    the frame-count length cap.
    """
    if cfg.mode != "ar":
        raise ValueError("ar_beam_search requires mode='ar'")
    t0 = time.perf_counter_ns()
    lam = cfg.ctc_weight
    B = cfg.beam_size
    T = p.num_frames
    use_ctc = lam > 0.0
    ctc = CtcPrefixScorer(p, v) if use_ctc else None
    surface = np.array(v.surface_ids)
    eos = v.eos_id

    live: list[Hypothesis] = [Hypothesis(tokens=[v.sos_id], score=0.0)]
    att_scores = [0.0]
    ctc_states = [ctc.initial_state()] if use_ctc else [None]
    finished: list[tuple[float, int, tuple[int, ...]]] = []
    calls = 0
    rows_scored = 0

    while live and len(finished) < B:
        rows = score_batch(scorer, [h.tokens for h in live], x, cache)
        calls += 1
        rows_scored += len(live)
        length = len(live[0].tokens) - 1  # surface tokens generated so far

        psi = None
        new_states = None
        if use_ctc and length < T:
            last = [h.tokens[-1] if length > 0 else None for h in live]
            psi, new_states = ctc.extend(
                length, last, surface, np.stack(ctc_states)
            )

        candidates: list[tuple[float, tuple[int, ...], int, int, float]] = []
        for i, h in enumerate(live):
            allowed = surface if length < T else ()
            for j, c in enumerate(allowed):
                att = att_scores[i] + rows[i, c]
                if use_ctc:
                    total = (1 - lam) * att + lam * psi[i, j]
                else:
                    total = att
                if total == NEG_INF:
                    continue
                candidates.append((total, tuple(h.tokens[1:]) + (int(c),), i, int(c), att))
            att = att_scores[i] + rows[i, eos]
            if use_ctc:
                total = (1 - lam) * att + lam * ctc.exact_score(ctc_states[i])
            else:
                total = att
            if total > NEG_INF:
                candidates.append((total, tuple(h.tokens[1:]) + (eos,), i, eos, att))

        candidates.sort(key=lambda c: (-c[0], c[1]))
        top = candidates[:B]
        new_live: list[Hypothesis] = []
        new_att: list[float] = []
        new_ctc_states: list = []
        parents: list[int | None] = []
        for total, seq, i, c, att in top:
            if c == eos:
                finished.append((total, len(seq) - 1, seq[:-1]))
                continue
            new_live.append(Hypothesis(tokens=live[i].tokens + [c], score=total))
            new_att.append(att)
            if use_ctc:
                j = int(np.flatnonzero(surface == c)[0])
                new_ctc_states.append(new_states[i, j])
            else:
                new_ctc_states.append(None)
            parents.append(i)
        if cache is not None:
            cache.gather(parents)
        if not new_live and not finished:
            break  # keep the last generation as the truncation fallback
        live = new_live
        att_scores = new_att
        ctc_states = new_ctc_states

    truncated = not finished
    if finished:
        best = min(finished, key=lambda f: (-f[0], f[1], f[2]))
        out_tokens = best[2]
    elif live:
        best_h = min(live, key=lambda h: (-h.score, len(h.tokens), tuple(h.tokens)))
        out_tokens = tuple(best_h.tokens[1:])
    else:
        out_tokens = ()
    return DecodeReport(
        utterance_id=p.utterance_id,
        mode="ar",
        transcript=v.decode(out_tokens),
        decoder_calls=calls,
        scored_rows=rows_scored,
        truncated=truncated,
        elapsed_ns=time.perf_counter_ns() - t0,
        audio_seconds=T * 0.04,
    )


@dataclass
class SegmentSearchResult:
    fills: list[tuple[int, ...]]
    fallbacks: list[bool]
    decoder_calls: int
    scored_rows: int
    state: BeamState


def _best_ended(ended: list[Hypothesis], context_len: int) -> Hypothesis:
    return min(
        ended,
        key=lambda h: (-h.score, h.end_iteration, tuple(h.tokens[1 + context_len :])),
    )


def segment_beam_search(
    segments: list[Segment],
    x: EncoderOutput | None,
    scorer: Scorer,
    cfg: DecodeConfig,
    v: Vocabulary,
    cache: ScorerCache | None = None,
    early_exit: bool = True,
) -> SegmentSearchResult:
    """Batched beam search over all mask segments at once.

    Row s*B+0 starts as sos + the segment's left context, the rest as
    dummies; each iteration scores every row in one batched call, expands
    per segment to the top ``beam_size`` continuations by cumulative score,
    and retires any hypothesis whose newest token equals the segment's end
    token. After ``max_iteration`` iterations each slot takes the best ended
    hypothesis (score, then earlier iteration, then lexicographic); a slot
    with no ended hypothesis falls back to its original greedy tokens.
    """
    if cfg.mode != "par":
        raise ValueError("segment_beam_search requires mode='par'")
    S = len(segments)
    B = cfg.beam_size
    state = BeamState(
        segments=list(segments),
        live=[],
        ended=[[] for _ in range(S)],
        end_tokens=[seg.end_token for seg in segments],
        cache=cache,
    )
    if S == 0:
        return SegmentSearchResult([], [], 0, 0, state)

    surface = v.surface_ids
    allowed: list[tuple[int, ...]] = []
    for seg in segments:
        allowed.append(surface + ((v.eos_id,) if seg.is_final else ()))

    for seg in segments:
        row = [Hypothesis(tokens=[v.sos_id] + list(seg.left_context), score=0.0)]
        row.extend(_dummy() for _ in range(B - 1))
        state.live.append(row)

    calls = 0
    rows_scored = 0
    for it in range(1, cfg.max_iteration + 1):
        state.iteration = it
        batch = [
            (h.tokens if not h.is_dummy else [v.sos_id])
            for seg_row in state.live
            for h in seg_row
        ]
        rows = score_batch(scorer, batch, x, cache)
        calls += 1
        rows_scored += S * B

        parents: list[int | None] = [None] * (S * B)
        for s in range(S):
            cands: list[tuple[float, tuple[int, ...], int, int]] = []
            for b in range(B):
                h = state.live[s][b]
                if h.is_dummy:
                    continue
                row = rows[s * B + b]
                gen = tuple(h.tokens[1 + len(segments[s].left_context) :])
                for c in allowed[s]:
                    sc = h.score + row[c]
                    if sc == NEG_INF:
                        continue
                    cands.append((sc, gen + (c,), b, c))
            cands.sort(key=lambda t: (-t[0], t[1]))
            new_row: list[Hypothesis] = []
            for sc, gen, b, c in cands[:B]:
                parent = state.live[s][b]
                hyp = Hypothesis(tokens=parent.tokens + [c], score=sc)
                if c == state.end_tokens[s]:
                    hyp.ended = True
                    hyp.end_iteration = it
                    state.ended[s].append(hyp)
                    new_row.append(_dummy())
                else:
                    parents[s * B + len(new_row)] = s * B + b
                    new_row.append(hyp)
            while len(new_row) < B:
                new_row.append(_dummy())
            state.live[s] = new_row

        if early_exit:
            # a live row whose score cannot beat the best ended hypothesis
            # (monotone scores; later iterations lose ties) is retired early
            for s in range(S):
                if not state.ended[s]:
                    continue
                best = _best_ended(state.ended[s], len(segments[s].left_context))
                for b in range(B):
                    h = state.live[s][b]
                    if not h.is_dummy and h.score <= best.score:
                        state.live[s][b] = _dummy()
                        parents[s * B + b] = None
        if cache is not None:
            cache.gather(parents)
        if early_exit and all(
            h.is_dummy for seg_row in state.live for h in seg_row
        ):
            break

    fills: list[tuple[int, ...]] = []
    fallbacks: list[bool] = []
    for s, seg in enumerate(segments):
        if state.ended[s]:
            best = _best_ended(state.ended[s], len(seg.left_context))
            gen = tuple(best.tokens[1 + len(seg.left_context) :])
            fills.append(gen[:-1])  # strip the end token
            fallbacks.append(False)
        else:
            fills.append(tuple(seg.original_tokens))
            fallbacks.append(True)
    return SegmentSearchResult(fills, fallbacks, calls, rows_scored, state)


def _splice(m: MaskedSequence, fills: list[tuple[int, ...]]) -> list[int]:
    out: list[int] = []
    k = 0
    for item in m.items:
        if isinstance(item, MaskSlot):
            out.extend(fills[k])
            k += 1
        else:
            out.append(item.token_id)
    return out


def par_decode(
    p: CtcPosterior,
    scorer: Scorer,
    cfg: DecodeConfig,
    v: Vocabulary,
    x: EncoderOutput | None = None,
    cache: ScorerCache | None = None,
) -> DecodeReport:
    """Greedy collapse, confidence masking, segment search, splice."""
    if cfg.mode != "par":
        raise ValueError("par_decode requires mode='par'")
    t0 = time.perf_counter_ns()
    g = greedy_ctc_decode(p, v)
    m = mask_by_confidence(g, cfg.p_thres)
    segments = build_segments(m, v)
    if x is None:
        x = EncoderOutput(p.utterance_id)

    if not segments:
        return DecodeReport(
            utterance_id=p.utterance_id,
            mode="par",
            transcript=v.decode(g.tokens),
            elapsed_ns=time.perf_counter_ns() - t0,
            audio_seconds=p.num_frames * 0.04,
        )

    if cfg.sequential_refine:
        # ablation path: later segments see the corrected earlier fills
        result_fills = []
        fallbacks = []
        calls = rows_scored = 0
        corrected: list[int] = []
        slot_idx = 0
        for item in m.items:
            if not isinstance(item, MaskSlot):
                corrected.append(item.token_id)
                continue
            refreshed = replace(segments[slot_idx], left_context=tuple(corrected))
            res = segment_beam_search([refreshed], x, scorer, cfg, v, cache)
            result_fills.append(res.fills[0])
            fallbacks.append(res.fallbacks[0])
            calls += res.decoder_calls
            rows_scored += res.scored_rows
            corrected.extend(res.fills[0])
            slot_idx += 1
    else:
        res = segment_beam_search(segments, x, scorer, cfg, v, cache)
        result_fills = res.fills
        fallbacks = res.fallbacks
        calls = res.decoder_calls
        rows_scored = res.scored_rows

    tokens = _splice(m, result_fills)
    return DecodeReport(
        utterance_id=p.utterance_id,
        mode="par",
        transcript=v.decode(tokens),
        decoder_calls=calls,
        scored_rows=rows_scored,
        slots=len(segments),
        fallbacks=sum(fallbacks),
        elapsed_ns=time.perf_counter_ns() - t0,
        fill_lengths=[len(f) for f in result_fills],
        audio_seconds=p.num_frames * 0.04,
    )


def nar_mask_fill(
    m: MaskedSequence,
    scorer: Scorer,
    iterations: int,
    v: Vocabulary,
    x: EncoderOutput | None = None,
    cache: ScorerCache | None = None,
) -> tuple[list[int], int, int]:
    """Iterative per-position refill of a pre-merge masked sequence.

    Each round scores every remaining masked position conditioned on the
    current sequence (masks rendered as the mask id) and commits the most
    confident ``1/iterations`` fraction. Output length equals the masked
    sequence length by construction. Returns (tokens, calls, scored rows).
    """
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    tokens: list[int] = []
    positions: list[int] = []
    for item in m.items:
        if isinstance(item, MaskSlot):
            for _ in item.original_tokens:
                positions.append(len(tokens))
                tokens.append(v.mask_id)
        else:
            tokens.append(item.token_id)
    if not positions:
        return tokens, 0, 0

    surface = np.array(v.surface_ids)
    per_round = math.ceil(len(positions) / iterations)
    remaining = list(positions)
    calls = 0
    rows_scored = 0
    while remaining:
        batch = [[v.sos_id] + tokens[:pos] for pos in remaining]
        rows = score_batch(scorer, batch, x, cache)
        calls += 1
        rows_scored += len(batch)
        scored: list[tuple[float, int, int]] = []
        for pos, row in zip(remaining, rows):
            j = int(np.argmax(row[surface]))
            scored.append((float(row[surface[j]]), pos, int(surface[j])))
        scored.sort(key=lambda t: (-t[0], t[1]))
        for _, pos, tok in scored[:per_round]:
            tokens[pos] = tok
            remaining.remove(pos)
    return tokens, calls, rows_scored


def decode_utterance(
    p: CtcPosterior,
    scorer: Scorer | None,
    cfg: DecodeConfig,
    v: Vocabulary,
    x: EncoderOutput | None = None,
    use_cache: bool = True,
) -> DecodeReport:
    """Decode one utterance in the configured mode."""
    cache = ScorerCache() if use_cache else None
    if x is None:
        x = EncoderOutput(p.utterance_id)
    if cfg.mode == "gctc":
        t0 = time.perf_counter_ns()
        g = greedy_ctc_decode(p, v)
        return DecodeReport(
            utterance_id=p.utterance_id,
            mode="gctc",
            transcript=v.decode(g.tokens),
            elapsed_ns=time.perf_counter_ns() - t0,
            audio_seconds=p.num_frames * 0.04,
        )
    if scorer is None:
        raise ValueError(f"mode {cfg.mode!r} needs a scorer")
    if cfg.mode == "ar":
        return ar_beam_search(x, p, scorer, cfg, v, cache)
    if cfg.mode == "par":
        return par_decode(p, scorer, cfg, v, x, cache)
    if cfg.mode == "nar":
        t0 = time.perf_counter_ns()
        g = greedy_ctc_decode(p, v)
        m = mask_by_confidence(g, cfg.p_thres, merge=False)
        tokens, calls, rows_scored = nar_mask_fill(
            m, scorer, cfg.nar_iterations, v, x, cache
        )
        return DecodeReport(
            utterance_id=p.utterance_id,
            mode="nar",
            transcript=v.decode(tokens),
            decoder_calls=calls,
            scored_rows=rows_scored,
            slots=m.num_slots,
            elapsed_ns=time.perf_counter_ns() - t0,
            audio_seconds=p.num_frames * 0.04,
        )
    raise ValueError(f"unknown mode {cfg.mode!r}")
