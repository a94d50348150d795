"""Command-line harness: synthesize corpora, decode, benchmark, sweep.

All randomness flows from --seed through labeled generators, and outputs are
byte-identical across reruns unless --timing opts into wall-clock fields.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

from .beam import DecodeConfig, DecodeReport, decode_utterance
from .corpus import (
    SynthSpec,
    Utterance,
    generate_corpus,
    load_corpus,
    masked_fraction,
    save_corpus,
)
from .metrics import aggregate_bench, bench_rows_to_csv, bench_rows_to_markdown, corpus_error_rate
from .scorers import EncoderOutput, NgramScorer, OracleScorer, Scorer
from .vocab import Vocabulary

MODE_CTC_WEIGHT = {"ar": 0.3, "par": 0.0, "gctc": 0.0, "nar": 0.0}

DEFAULTS = {
    "mode": "par",
    "beam_size": 10,
    "p_thres": 0.95,
    "max_iteration": 5,
    "ctc_weight": None,  # resolved per mode
    "nar_iterations": 10,
    "seed": 0,
    "scorer": "oracle",
    "correct_mass": 0.95,
    "ngram_order": 3,
    "ngram_alpha": 0.1,
    "ngram_train": "refs",
    "sequential_refine": False,
    "jobs": 1,
    "timing": False,
}


def _merge_config(args: argparse.Namespace) -> dict:
    """defaults < config file < explicit flags."""
    merged = dict(DEFAULTS)
    config_path = getattr(args, "config", None)
    if config_path:
        with open(config_path, "r", encoding="utf-8") as f:
            file_cfg = json.load(f)
        unknown = set(file_cfg) - set(DEFAULTS)
        if unknown:
            raise SystemExit(f"unknown config keys: {sorted(unknown)}")
        merged.update(file_cfg)
    for key in DEFAULTS:
        value = getattr(args, key, None)
        if value is not None:
            merged[key] = value
    if merged["ctc_weight"] is None:
        merged["ctc_weight"] = MODE_CTC_WEIGHT[merged["mode"]]
    return merged


def _decode_config(merged: dict, mode: str | None = None) -> DecodeConfig:
    mode = mode or merged["mode"]
    ctc_weight = merged["ctc_weight"]
    if mode != "ar":
        ctc_weight = 0.0
    return DecodeConfig(
        beam_size=int(merged["beam_size"]),
        p_thres=float(merged["p_thres"]),
        max_iteration=int(merged["max_iteration"]),
        ctc_weight=float(ctc_weight),
        mode=mode,
        nar_iterations=int(merged["nar_iterations"]),
        sequential_refine=bool(merged["sequential_refine"]),
    )


def _build_scorer(merged: dict, vocab: Vocabulary, utterances: list[Utterance]) -> Scorer:
    kind = merged["scorer"]
    if kind == "oracle":
        return OracleScorer(vocab, float(merged["correct_mass"]), seed=int(merged["seed"]))
    if kind == "ngram":
        source = merged["ngram_train"]
        if source == "refs":
            lines = [u.reference for u in utterances if u.reference]
            if not lines:
                raise SystemExit("ngram scorer with --ngram-train refs needs references")
        else:
            lines = [
                line.strip()
                for line in Path(source).read_text(encoding="utf-8").splitlines()
                if line.strip()
            ]
        return NgramScorer(vocab, lines, int(merged["ngram_order"]), float(merged["ngram_alpha"]))
    raise SystemExit(f"unknown scorer {kind!r}")


def _decode_one(payload) -> DecodeReport:
    utt, scorer, cfg, vocab = payload
    x = EncoderOutput(
        utt.utterance_id,
        {"reference": utt.reference} if utt.reference is not None else {},
    )
    return decode_utterance(utt.posterior, scorer, cfg, vocab, x=x)


def _decode_corpus(
    vocab: Vocabulary,
    utterances: list[Utterance],
    scorer: Scorer,
    cfg: DecodeConfig,
    jobs: int,
    timing: bool,
) -> list[DecodeReport]:
    payloads = [(u, scorer, cfg, vocab) for u in utterances]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            reports = list(pool.map(_decode_one, payloads, chunksize=4))
    else:
        reports = [_decode_one(p) for p in payloads]
    if not timing:
        for r in reports:
            r.elapsed_ns = 0
    return reports


def _write_reports(path: str, reports: list[DecodeReport]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for r in reports:
            f.write(json.dumps(r.to_json_dict()) + "\n")


def _file_sha256(path: str) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def cmd_synth(args: argparse.Namespace) -> int:
    spec = SynthSpec(
        utterances=args.utterances,
        min_tokens=args.min_tokens,
        max_tokens=args.max_tokens,
        frames_per_token=args.frames_per_token,
        low_confidence_rate=args.low_conf_rate,
        low_confidence_strength=args.low_conf_strength,
        substitute_rate=args.substitute_rate,
        delete_rate=args.delete_rate,
        seed=args.seed,
    )
    vocab, utterances = generate_corpus(spec)
    save_corpus(args.out, vocab, utterances)
    frac = masked_fraction(vocab, utterances, p_thres=0.95)
    print(f"wrote {len(utterances)} utterances to {args.out}")
    print(f"mean masked-token fraction at p_thres=0.95: {frac:.4f}")
    return 0


def cmd_decode(args: argparse.Namespace) -> int:
    merged = _merge_config(args)
    vocab, utterances, skipped = load_corpus(args.corpus, strict=False)
    cfg = _decode_config(merged)
    scorer = None
    if cfg.mode != "gctc":
        scorer = _build_scorer(merged, vocab, utterances)
    reports = _decode_corpus(
        vocab, utterances, scorer, cfg, int(merged["jobs"]), bool(merged["timing"])
    )
    _write_reports(args.out, reports)
    refs = {u.utterance_id: u.reference for u in utterances if u.reference is not None}
    if refs:
        pairs = [
            (refs[r.utterance_id], r.transcript)
            for r in reports
            if r.utterance_id in refs
        ]
        print(f"error_rate: {corpus_error_rate(pairs):.4f}")
    print(f"decoded {len(reports)} utterances -> {args.out}")
    if skipped:
        return 1
    if any(r.fallbacks or r.truncated for r in reports):
        return 2
    return 0


def cmd_bench(args: argparse.Namespace) -> int:
    modes = [m.strip() for m in args.modes.split(",") if m.strip()]
    if len(modes) < 2:
        raise SystemExit("bench needs at least two modes (got {!r})".format(args.modes))
    merged = _merge_config(args)
    all_reports: list[DecodeReport] = []
    corpus_hashes = set()
    for mode in modes:
        corpus_hashes.add(_file_sha256(args.corpus))
        vocab, utterances, skipped = load_corpus(args.corpus, strict=False)
        if skipped:
            raise SystemExit(f"corpus {args.corpus} has malformed lines")
        cfg = _decode_config(merged, mode=mode)
        scorer = None
        if mode != "gctc":
            scorer = _build_scorer(merged, vocab, utterances)
        all_reports.extend(
            _decode_corpus(
                vocab, utterances, scorer, cfg, int(merged["jobs"]), bool(merged["timing"])
            )
        )
    assert len(corpus_hashes) == 1, "corpus changed between modes"
    refs = {u.utterance_id: u.reference or "" for u in utterances}
    rows = aggregate_bench(all_reports, refs)
    csv_text = bench_rows_to_csv(rows)
    md_text = bench_rows_to_markdown(rows)
    Path(args.out + ".csv").write_text(csv_text, encoding="utf-8")
    Path(args.out + ".md").write_text(md_text, encoding="utf-8")
    print(md_text, end="")
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    merged = _merge_config(args)
    vocab, utterances, skipped = load_corpus(args.corpus, strict=False)
    if skipped:
        raise SystemExit(f"corpus {args.corpus} has malformed lines")
    refs = {u.utterance_id: u.reference or "" for u in utterances}
    p_grid = [float(x) for x in args.p_thres_grid.split(",") if x]
    mi_grid = [int(x) for x in args.max_iteration_grid.split(",") if x]
    beam_grid = (
        [int(x) for x in args.beam_grid.split(",") if x] if args.beam_grid else [None]
    )
    if not p_grid or not mi_grid:
        raise SystemExit("sweep grids must be non-empty")
    scorer = _build_scorer(merged, vocab, utterances)
    lines = []
    header = "p_thres,max_iteration,error_rate,mean_calls"
    if beam_grid != [None]:
        header = "beam_size," + header
    lines.append(header)
    for beam in beam_grid:
        for p_thres in p_grid:
            for mi in mi_grid:
                cfg = _decode_config({**merged, "p_thres": p_thres, "max_iteration": mi}, mode="par")
                if beam is not None:
                    cfg = replace(cfg, beam_size=beam)
                reports = _decode_corpus(
                    vocab, utterances, scorer, cfg, int(merged["jobs"]), False
                )
                pairs = [(refs[r.utterance_id], r.transcript) for r in reports]
                err = corpus_error_rate(pairs)
                calls = sum(r.decoder_calls for r in reports) / len(reports)
                row = f"{p_thres:g},{mi},{err:.6g},{calls:.6g}"
                if beam is not None:
                    row = f"{beam}," + row
                lines.append(row)
    text = "\n".join(lines) + "\n"
    Path(args.out).write_text(text, encoding="utf-8")
    print(text, end="")
    return 0


def _add_decode_flags(sp: argparse.ArgumentParser) -> None:
    sp.add_argument("--corpus", required=True, help="corpus JSONL path")
    sp.add_argument("--config", help="JSON config file; flags override it")
    sp.add_argument("--mode", choices=("ar", "gctc", "par", "nar"))
    sp.add_argument("--beam-size", type=int, dest="beam_size")
    sp.add_argument("--p-thres", type=float, dest="p_thres")
    sp.add_argument("--max-iteration", type=int, dest="max_iteration")
    sp.add_argument("--ctc-weight", type=float, dest="ctc_weight")
    sp.add_argument("--nar-iterations", type=int, dest="nar_iterations")
    sp.add_argument("--seed", type=int)
    sp.add_argument("--scorer", choices=("oracle", "ngram"))
    sp.add_argument("--correct-mass", type=float, dest="correct_mass")
    sp.add_argument("--ngram-order", type=int, dest="ngram_order")
    sp.add_argument("--ngram-alpha", type=float, dest="ngram_alpha")
    sp.add_argument(
        "--ngram-train",
        dest="ngram_train",
        help="text file for n-gram training, or 'refs' for corpus references",
    )
    sp.add_argument(
        "--sequential-refine",
        action=argparse.BooleanOptionalAction,
        dest="sequential_refine",
        default=None,
    )
    sp.add_argument("--jobs", type=int, help="utterance-level parallelism")
    sp.add_argument(
        "--timing",
        action=argparse.BooleanOptionalAction,
        default=None,
        help="include wall-clock fields (outputs stop being byte-stable)",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pardecode")
    sub = parser.add_subparsers(dest="command", required=True)

    synth = sub.add_parser("synth", help="generate a synthetic corpus")
    synth.add_argument("--out", required=True)
    synth.add_argument("--utterances", type=int, default=50)
    synth.add_argument("--min-tokens", type=int, default=20, dest="min_tokens")
    synth.add_argument("--max-tokens", type=int, default=40, dest="max_tokens")
    synth.add_argument("--frames-per-token", type=int, default=3, dest="frames_per_token")
    synth.add_argument("--low-conf-rate", type=float, default=0.06, dest="low_conf_rate")
    synth.add_argument(
        "--low-conf-strength", type=float, default=0.5, dest="low_conf_strength"
    )
    synth.add_argument("--substitute-rate", type=float, default=0.0, dest="substitute_rate")
    synth.add_argument("--delete-rate", type=float, default=0.02, dest="delete_rate")
    synth.add_argument("--seed", type=int, default=0)
    synth.set_defaults(func=cmd_synth)

    dec = sub.add_parser("decode", help="decode a corpus in one mode")
    _add_decode_flags(dec)
    dec.add_argument("--out", required=True, help="reports JSONL path")
    dec.set_defaults(func=cmd_decode)

    bench = sub.add_parser("bench", help="compare modes on one corpus")
    _add_decode_flags(bench)
    bench.add_argument("--modes", required=True, help="comma-separated mode list")
    bench.add_argument("--out", required=True, help="output path prefix (.csv/.md)")
    bench.set_defaults(func=cmd_bench)

    sweep = sub.add_parser("sweep", help="grid-evaluate thresholds and iterations")
    _add_decode_flags(sweep)
    sweep.add_argument(
        "--p-thres-grid", required=True, dest="p_thres_grid", help="comma list"
    )
    sweep.add_argument(
        "--max-iteration-grid", required=True, dest="max_iteration_grid", help="comma list"
    )
    sweep.add_argument("--beam-grid", dest="beam_grid", help="optional comma list")
    sweep.add_argument("--out", required=True, help="CSV path")
    sweep.set_defaults(func=cmd_sweep)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
