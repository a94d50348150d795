import numpy as np
import pytest

from pardecode.beam import (
    DecodeConfig,
    ar_beam_search,
    decode_utterance,
    nar_mask_fill,
    par_decode,
    segment_beam_search,
)
from pardecode.ctc import CtcPosterior, GreedyDecodeResult, ctc_prefix_score
from pardecode.masking import Segment, mask_by_confidence
from pardecode.scorers import (
    make_ngram_scorer,
    make_oracle_scorer,
    score_batch,
    synth_posterior,
)
from pardecode.vocab import build_vocabulary

NEG_INF = float("-inf")


def greedy_result(tokens, confidences):
    spans = tuple((i, i) for i in range(len(tokens)))
    return GreedyDecodeResult(tuple(tokens), tuple(confidences), spans)


def enumerate_best_fill(scorer, x, seg, cfg, v):
    """Exhaustive oracle: best fill·end sequence of length <= max_iteration,
    scored stepwise like the beam, same tie-break."""
    allowed = list(v.surface_ids) + ([v.eos_id] if seg.is_final else [])
    best = None

    def rec(prefix, gen, score):
        nonlocal best
        if gen and gen[-1] == seg.end_token:
            key = (-score, len(gen), gen)
            if best is None or key < best[0]:
                best = (key, gen[:-1])
            return
        if len(gen) == cfg.max_iteration:
            return
        row = score_batch(scorer, [prefix], x)[0]
        for c in allowed:
            sc = score + row[c]
            if sc == NEG_INF:
                continue
            rec(prefix + [c], gen + (c,), sc)

    rec([v.sos_id] + list(seg.left_context), (), 0.0)
    return None if best is None else best[1]


def enumerate_best_sequence(scorer, x, p, v, lam, max_len):
    """Exhaustive oracle for the left-to-right search: argmax over all
    finished sequences of surface length <= max_len."""
    surface = list(v.surface_ids)
    best = None

    def finish(seq, att):
        nonlocal best
        row = score_batch(scorer, [[v.sos_id] + list(seq)], x)[0]
        att_total = att + row[v.eos_id]
        total = att_total
        if lam > 0:
            ctc = ctc_prefix_score(p, list(seq), [v.eos_id], v)[0]
            total = (1 - lam) * att_total + lam * ctc
        if total == NEG_INF:
            return
        key = (-total, len(seq), seq)
        if best is None or key < best[0]:
            best = (key, seq)

    def rec(seq, att):
        finish(seq, att)
        if len(seq) == max_len:
            return
        row = score_batch(scorer, [[v.sos_id] + list(seq)], x)[0]
        for c in surface:
            if att + row[c] == NEG_INF:
                continue
            rec(seq + (c,), att + row[c])

    rec((), 0.0)
    return best[1] if best else ()


def random_segment_instance(rng, n_surface, S, B, max_iteration):
    chars = list("abcdefghijkl"[:n_surface])
    v = build_vocabulary(chars)
    lines = [
        "".join(rng.choice(chars, size=int(rng.integers(2, 6))))
        for _ in range(5)
    ]
    scorer = make_ngram_scorer(v, lines, order=2, smoothing_alpha=0.2)
    segments = []
    for s in range(S):
        left = tuple(int(rng.choice(v.surface_ids)) for _ in range(int(rng.integers(0, 5))))
        orig = tuple(int(rng.choice(v.surface_ids)) for _ in range(int(rng.integers(1, 3))))
        is_final = s == S - 1 and bool(rng.integers(0, 2))
        end = v.eos_id if is_final else int(rng.choice(v.surface_ids))
        segments.append(Segment(s + 1, left, end, orig, is_final))
    cfg = DecodeConfig(mode="par", beam_size=B, max_iteration=max_iteration)
    return v, scorer, segments, cfg


class TestDecodeConfig:
    def test_par_forces_zero_ctc_weight(self):
        cfg = DecodeConfig(mode="par", ctc_weight=0.3)
        assert cfg.ctc_weight == 0.0

    def test_validation(self):
        with pytest.raises(ValueError, match="mode"):
            DecodeConfig(mode="turbo")
        with pytest.raises(ValueError, match="beam_size"):
            DecodeConfig(beam_size=0)
        with pytest.raises(ValueError, match="tie-break"):
            DecodeConfig(tie_break="coin_flip")


class TestArBeamSearch:
    def test_greedy_chain_reproduces_reference(self):
        v = build_vocabulary(list("case_"))
        ref = "case"
        p = synth_posterior(ref, v, 3, seed=1)
        scorer = make_oracle_scorer(v, ref, 1.0, seed=1)
        cfg = DecodeConfig(mode="ar", beam_size=1, ctc_weight=0.0)
        rep = ar_beam_search(None, p, scorer, cfg, v)
        assert rep.transcript == ref
        assert not rep.truncated

    def test_matches_exhaustive_argmax_attention_only(self):
        v = build_vocabulary(list("abc"))
        lines = ["ab", "ba", "cab", "bc"]
        scorer = make_ngram_scorer(v, lines, order=2, smoothing_alpha=0.3)
        p = synth_posterior("ab", v, 2, seed=0)  # only sets the length cap
        cfg = DecodeConfig(mode="ar", beam_size=200, ctc_weight=0.0)
        rep = ar_beam_search(None, p, scorer, cfg, v)
        best = enumerate_best_sequence(scorer, None, p, v, 0.0, p.num_frames)
        assert rep.transcript == v.decode(best)

    def test_matches_exhaustive_argmax_hybrid(self):
        v = build_vocabulary(list("ab"))
        rng = np.random.default_rng(3)
        cols = [v.blank_id] + list(v.surface_ids)
        frames = np.zeros((3, v.size))
        frames[:, cols] = rng.dirichlet(np.ones(3), size=3)
        p = CtcPosterior(frames, "hybrid")
        scorer = make_ngram_scorer(v, ["ab", "ba", "aa"], order=2, smoothing_alpha=0.3)
        cfg = DecodeConfig(mode="ar", beam_size=100, ctc_weight=0.3)
        rep = ar_beam_search(None, p, scorer, cfg, v)
        best = enumerate_best_sequence(scorer, None, p, v, 0.3, p.num_frames)
        assert rep.transcript == v.decode(best)

    def test_calls_grow_with_output_length(self):
        v = build_vocabulary(list("the_niga"))
        ref = "the_night_ategate"
        p = synth_posterior(ref, v, 2, seed=5)
        scorer = make_oracle_scorer(v, ref, 0.95, seed=5)
        cfg = DecodeConfig(mode="ar", beam_size=4, ctc_weight=0.0)
        rep = ar_beam_search(None, p, scorer, cfg, v)
        assert rep.transcript == ref
        assert rep.decoder_calls >= len(rep.transcript)

    def test_truncated_when_no_hypothesis_can_finish(self):
        v = build_vocabulary(list("ab"))
        frames = np.zeros((2, v.size))
        frames[:, v.blank_id] = 1.0
        p = CtcPosterior(frames, "short")  # cap = 2 tokens
        scorer = make_oracle_scorer(v, "aaaa", 1.0, seed=1)
        cfg = DecodeConfig(mode="ar", beam_size=2, ctc_weight=0.0)
        rep = ar_beam_search(None, p, scorer, cfg, v)
        assert rep.truncated
        assert rep.transcript == "aa"

    def test_mode_validated(self):
        v = build_vocabulary(["a"])
        p = synth_posterior("a", v, 2)
        scorer = make_oracle_scorer(v, "a", 0.9)
        with pytest.raises(ValueError, match="mode"):
            ar_beam_search(None, p, scorer, DecodeConfig(mode="par"), v)


class TestSegmentBeamSearch:
    def test_no_segments_no_calls(self):
        v = build_vocabulary(list("ab"))
        scorer = make_ngram_scorer(v, ["ab"], order=1)
        cfg = DecodeConfig(mode="par", beam_size=4, max_iteration=3)
        res = segment_beam_search([], None, scorer, cfg, v)
        assert res.fills == [] and res.decoder_calls == 0

    def test_matches_exhaustive_fill(self):
        rng = np.random.default_rng(11)
        for trial in range(25):
            n_surface = int(rng.integers(2, 5))
            mi = int(rng.integers(1, 4))
            B = (n_surface + 1) ** mi
            v, scorer, segments, cfg = random_segment_instance(
                rng, n_surface, int(rng.integers(1, 3)), B, mi
            )
            res = segment_beam_search(segments, None, scorer, cfg, v)
            for seg, fill, fb in zip(segments, res.fills, res.fallbacks):
                expect = enumerate_best_fill(scorer, None, seg, cfg, v)
                if expect is None:
                    assert fb and fill == tuple(seg.original_tokens)
                else:
                    assert not fb and fill == expect, (trial, seg)

    def test_batched_equals_single_segment_runs(self):
        rng = np.random.default_rng(23)
        for _ in range(25):
            v, scorer, segments, cfg = random_segment_instance(
                rng, int(rng.integers(2, 7)), int(rng.integers(1, 5)),
                int(rng.integers(1, 5)), int(rng.integers(1, 5)),
            )
            batched = segment_beam_search(segments, None, scorer, cfg, v)
            for s, seg in enumerate(segments):
                solo = segment_beam_search([seg], None, scorer, cfg, v)
                assert batched.fills[s] == solo.fills[0]
                assert batched.fallbacks[s] == solo.fallbacks[0]
                batched_ended = [
                    (h.tokens, h.score, h.end_iteration) for h in batched.state.ended[s]
                ]
                solo_ended = [
                    (h.tokens, h.score, h.end_iteration) for h in solo.state.ended[0]
                ]
                assert batched_ended == solo_ended

    def test_live_matrix_keeps_constant_shape(self):
        rng = np.random.default_rng(5)
        v, scorer, segments, cfg = random_segment_instance(rng, 3, 3, 4, 3)
        res = segment_beam_search(segments, None, scorer, cfg, v, early_exit=False)
        assert len(res.state.live) == len(segments)
        assert all(len(row) == cfg.beam_size for row in res.state.live)
        assert res.scored_rows == res.decoder_calls * len(segments) * cfg.beam_size

    def test_dummies_never_end_and_never_displace(self):
        v = build_vocabulary(list("se_a"))
        scorer = make_oracle_scorer(v, "sea", 1.0, seed=1)
        seg = Segment(1, tuple(v.encode("s")), v.encode("a")[0], tuple(v.encode("e")), False)
        cfg = DecodeConfig(mode="par", beam_size=6, max_iteration=3)
        res = segment_beam_search([seg], None, scorer, cfg, v, early_exit=False)
        for h in res.state.ended[0]:
            assert h.ended and not h.is_dummy and h.score > NEG_INF
        # with mass 1, only the on-reference child is finite per iteration
        real = [h for h in res.state.live[0] if not h.is_dummy]
        assert len(real) <= 1

    def test_early_exit_is_output_neutral(self):
        rng = np.random.default_rng(31)
        for _ in range(20):
            v, scorer, segments, cfg = random_segment_instance(
                rng, int(rng.integers(2, 6)), int(rng.integers(1, 4)),
                int(rng.integers(1, 4)), int(rng.integers(1, 5)),
            )
            fast = segment_beam_search(segments, None, scorer, cfg, v, early_exit=True)
            slow = segment_beam_search(segments, None, scorer, cfg, v, early_exit=False)
            assert fast.fills == slow.fills
            assert fast.fallbacks == slow.fallbacks
            assert fast.decoder_calls <= slow.decoder_calls

    def test_immediate_end_token_gives_empty_fill(self):
        # a spurious greedy token: the best fill removes it entirely
        v = build_vocabulary(list("sba"))
        scorer = make_oracle_scorer(v, "sa", 0.9, seed=2)
        seg = Segment(1, tuple(v.encode("s")), v.encode("a")[0], tuple(v.encode("b")), False)
        cfg = DecodeConfig(mode="par", beam_size=4, max_iteration=3)
        res = segment_beam_search([seg], None, scorer, cfg, v)
        assert res.fills == [()]
        assert res.fallbacks == [False]

    def test_end_token_inside_true_fill_ends_early(self):
        # inherent boundary ambiguity: with "week" and the first "e" masked,
        # the end token is the second "e", so the correct fill "e" can never
        # be produced (predicting it terminates the hypothesis) and the
        # empty fill wins on raw cumulative score
        v = build_vocabulary(list("wek"))
        e = v.encode("e")[0]
        scorer = make_oracle_scorer(v, "week", 0.9, seed=3)
        seg = Segment(1, tuple(v.encode("w")), e, (e,), False)
        cfg = DecodeConfig(mode="par", beam_size=8, max_iteration=4)
        res = segment_beam_search([seg], None, scorer, cfg, v)
        assert res.fills == [()]
        assert all(h.tokens[-1] == e for h in res.state.ended[0])

    def test_unreachable_end_token_falls_back(self):
        v = build_vocabulary(list("seac"))
        scorer = make_oracle_scorer(v, "sea", 1.0, seed=2)
        seg = Segment(1, tuple(v.encode("s")), v.encode("c")[0], tuple(v.encode("e")), False)
        cfg = DecodeConfig(mode="par", beam_size=4, max_iteration=3)
        res = segment_beam_search([seg], None, scorer, cfg, v)
        assert res.fallbacks == [True]
        assert res.fills == [tuple(v.encode("e"))]

    def test_scores_non_increasing_along_lineage(self):
        rng = np.random.default_rng(41)
        v, scorer, segments, cfg = random_segment_instance(rng, 4, 2, 3, 4)
        res = segment_beam_search(segments, None, scorer, cfg, v)
        for ended in res.state.ended:
            for h in ended:
                assert h.score <= 0.0

    def test_deterministic_across_runs(self):
        rng = np.random.default_rng(51)
        v, scorer, segments, cfg = random_segment_instance(rng, 4, 3, 3, 3)
        a = segment_beam_search(segments, None, scorer, cfg, v)
        b = segment_beam_search(segments, None, scorer, cfg, v)
        assert a.fills == b.fills and a.decoder_calls == b.decoder_calls


class TestParDecode:
    def test_zero_threshold_is_greedy_identity(self):
        v = build_vocabulary(list("night_fal"))
        ref = "night_fall"
        p = synth_posterior(ref, v, 3, [(2, 3, "low_confidence", 0.5)], seed=3)
        scorer = make_oracle_scorer(v, ref, 0.9, seed=3)
        cfg = DecodeConfig(mode="par", p_thres=0.0)
        rep = par_decode(p, scorer, cfg, v)
        gctc = decode_utterance(p, None, DecodeConfig(mode="gctc"), v)
        assert rep.transcript == gctc.transcript
        assert rep.decoder_calls == 0 and rep.scored_rows == 0 and rep.slots == 0

    def test_recovers_low_confidence_region(self):
        v = build_vocabulary(list("the_nigl"))
        ref = "the_light"
        p = synth_posterior(ref, v, 3, [(5, 6, "low_confidence", 0.4)], seed=4)
        scorer = make_oracle_scorer(v, ref, 0.95, seed=4)
        rep = par_decode(p, scorer, DecodeConfig(mode="par"), v)
        assert rep.transcript == ref
        assert rep.slots == 1 and rep.fallbacks == 0
        assert rep.decoder_calls <= 5

    def test_multi_token_fills_at_character_level(self):
        # two merged regions needing 4- and 2-token fills within one pass
        v = build_vocabulary(list("afterly_nigh"))
        ref = "after_early_nightfall"
        regions = [(6, 8, "low_confidence", 0.5), (17, 21, "low_confidence", 0.5)]
        p = synth_posterior(ref, v, 3, regions, seed=6)
        scorer = make_oracle_scorer(v, ref, 0.95, seed=6)
        rep = par_decode(p, scorer, DecodeConfig(mode="par", max_iteration=5), v)
        assert rep.transcript == ref
        assert sorted(rep.fill_lengths) == [2, 4]
        assert rep.decoder_calls <= 5

    def test_recovers_deleted_token_next_to_masked_one(self):
        v = build_vocabulary(list("the_nigl"))
        ref = "the_light"
        regions = [(5, 6, "low_confidence", 0.5), (6, 7, "delete_token", 0.0)]
        p = synth_posterior(ref, v, 3, regions, seed=7)
        scorer = make_oracle_scorer(v, ref, 0.95, seed=7)
        rep = par_decode(p, scorer, DecodeConfig(mode="par"), v)
        assert rep.transcript == ref
        nar = decode_utterance(p, scorer, DecodeConfig(mode="nar"), v)
        assert nar.transcript != ref  # length-preserving fill cannot recover
        assert len(nar.transcript) == len(ref) - 1

    def test_sequential_refine_uses_corrected_context(self):
        v = build_vocabulary(list("sea_cumbr"))
        ref = "sea_cucumber"
        regions = [(1, 3, "low_confidence", 0.5), (7, 9, "low_confidence", 0.5)]
        p = synth_posterior(ref, v, 3, regions, seed=8)
        scorer = make_oracle_scorer(v, ref, 0.95, seed=8)
        rep = par_decode(
            p, scorer, DecodeConfig(mode="par", sequential_refine=True), v
        )
        assert rep.transcript == ref
        assert rep.slots == 2

    def test_cache_transparency(self):
        v = build_vocabulary(list("the_nigl"))
        ref = "the_light"
        p = synth_posterior(ref, v, 3, [(5, 6, "low_confidence", 0.4)], seed=4)
        scorer = make_oracle_scorer(v, ref, 0.9, seed=4)
        for mode in ("par", "ar", "nar"):
            cfg = DecodeConfig(mode=mode, ctc_weight=0.0 if mode != "ar" else 0.3)
            with_cache = decode_utterance(p, scorer, cfg, v, use_cache=True)
            without = decode_utterance(p, scorer, cfg, v, use_cache=False)
            assert with_cache.transcript == without.transcript, mode


class TestNarMaskFill:
    def test_zero_masks_identity(self):
        v = build_vocabulary(list("sea"))
        g = greedy_result(v.encode("sea"), [0.99] * 3)
        m = mask_by_confidence(g, 0.95, merge=False)
        scorer = make_oracle_scorer(v, "sea", 0.9, seed=1)
        tokens, calls, rows = nar_mask_fill(m, scorer, 10, v)
        assert v.decode(tokens) == "sea" and calls == 0

    def test_length_is_structurally_preserved(self):
        # true "sea" against a 4-token masked sequence: always 4 out, so >= 1 error
        v = build_vocabulary(list("seax"))
        g = greedy_result(v.encode("sxxa"), [0.99, 0.5, 0.5, 0.99])
        m = mask_by_confidence(g, 0.95, merge=False)
        scorer = make_oracle_scorer(v, "sea", 0.9, seed=2)
        tokens, _, _ = nar_mask_fill(m, scorer, 10, v)
        assert len(tokens) == 4
        assert v.decode(tokens) != "sea"

    def test_all_masked_recovers_reference_iff_length_matches(self):
        v = build_vocabulary(list("sea"))
        scorer = make_oracle_scorer(v, "sea", 0.9, seed=3)
        g3 = greedy_result(v.encode("aaa"), [0.1] * 3)
        tokens, calls, _ = nar_mask_fill(mask_by_confidence(g3, 0.95, merge=False), scorer, 10, v)
        assert v.decode(tokens) == "sea"
        assert calls <= 10
        g2 = greedy_result(v.encode("aa"), [0.1] * 2)
        tokens2, _, _ = nar_mask_fill(mask_by_confidence(g2, 0.95, merge=False), scorer, 10, v)
        assert v.decode(tokens2) != "sea"

    def test_round_budget_respected(self):
        v = build_vocabulary(list("seabcd"))
        g = greedy_result(v.encode("abcdse"), [0.5] * 6)
        scorer = make_oracle_scorer(v, "abcdse", 0.9, seed=4)
        _, calls, rows = nar_mask_fill(mask_by_confidence(g, 0.95, merge=False), scorer, 3, v)
        assert calls <= 3
        assert rows <= 6 * 3


class TestDecodeUtterance:
    def test_full_mass_oracle_every_mode_outputs_reference(self):
        # one masked token whose true fill is one token, so the iterative
        # filler's fixed arity also matches
        v = build_vocabulary(list("the_nigl"))
        ref = "the_light"
        p = synth_posterior(ref, v, 3, [(5, 6, "low_confidence", 0.4)], seed=9)
        scorer = make_oracle_scorer(v, ref, 1.0, seed=9)
        for mode in ("ar", "par", "nar"):
            cfg = DecodeConfig(mode=mode, ctc_weight=0.0)
            rep = decode_utterance(p, scorer, cfg, v)
            assert rep.transcript == ref, mode

    def test_paper_default_knobs(self):
        cfg = DecodeConfig()
        assert cfg.beam_size == 10
        assert cfg.ctc_weight == 0.3
        assert cfg.p_thres == 0.95
        assert cfg.max_iteration == 5
        assert cfg.nar_iterations == 10

    def test_gctc_mode_no_scorer_needed(self):
        v = build_vocabulary(list("sea"))
        p = synth_posterior("sea", v, 3, seed=1)
        rep = decode_utterance(p, None, DecodeConfig(mode="gctc"), v)
        assert rep.transcript == "sea"
        assert rep.decoder_calls == 0

    def test_scorer_required_for_search_modes(self):
        v = build_vocabulary(list("sea"))
        p = synth_posterior("sea", v, 3, seed=1)
        with pytest.raises(ValueError, match="scorer"):
            decode_utterance(p, None, DecodeConfig(mode="par"), v)

    def test_report_round_trip(self):
        from pardecode.beam import DecodeReport

        v = build_vocabulary(list("sea"))
        p = synth_posterior("sea", v, 3, seed=1)
        rep = decode_utterance(p, None, DecodeConfig(mode="gctc"), v)
        again = DecodeReport.from_json_dict(rep.to_json_dict())
        assert again == rep
