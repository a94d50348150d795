"""Accuracy and speed measurement: edit-distance error rates, real-time
factors from synthetic audio seconds, and per-mode benchmark aggregation."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .beam import DecodeReport

FRAME_SHIFT_SECONDS = 0.04


@dataclass(frozen=True)
class ErrorBreakdown:
    substitutions: int
    insertions: int
    deletions: int
    reference_length: int

    @property
    def distance(self) -> int:
        return self.substitutions + self.insertions + self.deletions

    @property
    def rate(self) -> float:
        """(S+I+D)/N; NaN flags an empty reference."""
        if self.reference_length == 0:
            return math.nan
        return self.distance / self.reference_length


def edit_distance(ref: Sequence, hyp: Sequence) -> ErrorBreakdown:
    """Minimal unit-cost Levenshtein alignment with a deterministic
    backtrace: diagonal (match/substitution) preferred, then deletion,
    then insertion."""
    R, H = len(ref), len(hyp)
    d = np.zeros((R + 1, H + 1))
    d[:, 0] = np.arange(R + 1)
    d[0, :] = np.arange(H + 1)
    hyp_arr = np.asarray(list(hyp), dtype=object)
    for i in range(1, R + 1):
        sub = (hyp_arr != ref[i - 1]).astype(float) if H else np.empty(0)
        row = d[i]
        prev = d[i - 1]
        row[0] = i
        if H:
            g = np.minimum(prev[:-1] + sub, prev[1:] + 1.0)
            g = np.concatenate(([row[0]], g))
            idx = np.arange(H + 1)
            d[i] = np.minimum.accumulate(g - idx) + idx

    subs = ins = dels = 0
    i, j = R, H
    while i > 0 or j > 0:
        if i > 0 and j > 0 and d[i, j] == d[i - 1, j - 1] + (ref[i - 1] != hyp[j - 1]):
            if ref[i - 1] != hyp[j - 1]:
                subs += 1
            i -= 1
            j -= 1
        elif i > 0 and d[i, j] == d[i - 1, j] + 1:
            dels += 1
            i -= 1
        else:
            ins += 1
            j -= 1
    return ErrorBreakdown(subs, ins, dels, R)


def corpus_error_rate(pairs: Sequence[tuple[Sequence, Sequence]]) -> float:
    """Total edit errors over total reference length (token granularity)."""
    errors = 0
    total = 0
    for ref, hyp in pairs:
        b = edit_distance(ref, hyp)
        errors += b.distance
        total += b.reference_length
    return errors / total if total else math.nan


@dataclass(frozen=True)
class BenchRow:
    mode: str
    mean_rtf: float
    std_rtf: float
    mean_decoder_calls: float
    error_rate: float
    speedup_vs_ar: float | None


def rtf(report: DecodeReport) -> float:
    """Processing time over synthetic audio seconds (T x frame shift)."""
    if report.audio_seconds <= 0:
        return 0.0
    return (report.elapsed_ns / 1e9) / report.audio_seconds


def aggregate_bench(
    reports: Sequence[DecodeReport], refs: Mapping[str, str]
) -> list[BenchRow]:
    """Fold per-utterance reports into one row per mode; the speedup column
    is relative to the 'ar' rows when present and timed."""
    by_mode: dict[str, list[DecodeReport]] = {}
    for r in reports:
        if r.utterance_id not in refs:
            raise ValueError(f"no reference for utterance {r.utterance_id!r}")
        by_mode.setdefault(r.mode, []).append(r)

    means: dict[str, float] = {}
    rows: list[BenchRow] = []
    for mode, mode_reports in by_mode.items():
        rtfs = np.array([rtf(r) for r in mode_reports])
        means[mode] = float(rtfs.mean())
        rows.append(
            BenchRow(
                mode=mode,
                mean_rtf=float(rtfs.mean()),
                std_rtf=float(rtfs.std()),
                mean_decoder_calls=float(
                    np.mean([r.decoder_calls for r in mode_reports])
                ),
                error_rate=corpus_error_rate(
                    [(refs[r.utterance_id], r.transcript) for r in mode_reports]
                ),
                speedup_vs_ar=None,
            )
        )
    ar_mean = means.get("ar")
    if ar_mean is not None and ar_mean > 0:
        rows = [
            BenchRow(
                mode=row.mode,
                mean_rtf=row.mean_rtf,
                std_rtf=row.std_rtf,
                mean_decoder_calls=row.mean_decoder_calls,
                error_rate=row.error_rate,
                speedup_vs_ar=(ar_mean / row.mean_rtf) if row.mean_rtf > 0 else None,
            )
            for row in rows
        ]
    return rows


BENCH_COLUMNS = ("mode", "mean_rtf", "std_rtf", "mean_calls", "error_rate", "speedup")


def bench_rows_to_csv(rows: Sequence[BenchRow]) -> str:
    lines = [",".join(BENCH_COLUMNS)]
    for r in rows:
        speedup = f"{r.speedup_vs_ar:.6g}" if r.speedup_vs_ar is not None else ""
        lines.append(
            f"{r.mode},{r.mean_rtf:.6g},{r.std_rtf:.6g},"
            f"{r.mean_decoder_calls:.6g},{r.error_rate:.6g},{speedup}"
        )
    return "\n".join(lines) + "\n"


def bench_rows_to_markdown(rows: Sequence[BenchRow]) -> str:
    cells = [list(BENCH_COLUMNS)]
    for r in rows:
        speedup = f"{r.speedup_vs_ar:.4g}" if r.speedup_vs_ar is not None else "-"
        cells.append(
            [
                r.mode,
                f"{r.mean_rtf:.4g}",
                f"{r.std_rtf:.4g}",
                f"{r.mean_decoder_calls:.4g}",
                f"{r.error_rate:.4g}",
                speedup,
            ]
        )
    widths = [max(len(row[c]) for row in cells) for c in range(len(BENCH_COLUMNS))]
    out = []
    for k, row in enumerate(cells):
        out.append("| " + " | ".join(c.ljust(w) for c, w in zip(row, widths)) + " |")
        if k == 0:
            out.append("|" + "|".join("-" * (w + 2) for w in widths) + "|")
    return "\n".join(out) + "\n"
