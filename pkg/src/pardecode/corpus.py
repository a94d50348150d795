"""Corpus files and synthetic corpus generation.

A corpus is JSON Lines: the first line carries the vocabulary
(``{"vocab": {...}}``), every following line one utterance
(``{"id": ..., "frames": [[...], ...], "ref": ...}``).
"""

from __future__ import annotations

import json
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .ctc import CtcPosterior, greedy_ctc_decode
from .masking import mask_by_confidence
from .scorers import synth_posterior
from .seeding import rng_from
from .vocab import Vocabulary, build_vocabulary

DEFAULT_CHARS = "abcdefghijklmnopqrstuvwxyz_"

# small builtin lexicon so n-gram scorers have structure to learn
WORDS = (
    "the and for with that this from have been will when over under into out "
    "one two three four five time year day way man world life hand part eye "
    "place work week case point fact group number house water room mother "
    "area money story month right study book word side kind head far early "
    "night light tell ask come give look make take see know get go say feel "
    "leave call keep let begin seem help talk turn start show hear play run "
    "move like live believe hold bring happen write sit stand lose pay meet "
    "set learn change lead watch follow stop create speak read spend grow "
    "open walk win offer remember love consider appear buy wait serve die "
    "send build stay fall cut reach kill raise pass sell require report"
).split()


def default_vocabulary() -> Vocabulary:
    return build_vocabulary(list(DEFAULT_CHARS))


@dataclass
class Utterance:
    utterance_id: str
    posterior: CtcPosterior
    reference: str | None = None


def save_corpus(path: str | Path, vocab: Vocabulary, utterances: Iterable[Utterance]) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8") as f:
        f.write(json.dumps({"vocab": vocab.to_json_dict()}) + "\n")
        for u in utterances:
            record = {
                "id": u.utterance_id,
                "frames": u.posterior.frames.tolist(),
            }
            if u.reference is not None:
                record["ref"] = u.reference
            f.write(json.dumps(record) + "\n")


def load_corpus(
    path: str | Path, strict: bool = True
) -> tuple[Vocabulary, list[Utterance], int]:
    """Read a corpus file; returns (vocab, utterances, skipped-line count).

    With ``strict=False`` malformed utterance lines are skipped with a
    warning on stderr instead of raising.
    """
    path = Path(path)
    skipped = 0
    with path.open("r", encoding="utf-8") as f:
        header = f.readline()
        try:
            vocab = Vocabulary.from_json_dict(json.loads(header)["vocab"])
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ValueError(f"{path}: missing or malformed vocab header") from exc
        utterances: list[Utterance] = []
        for lineno, line in enumerate(f, start=2):
            if not line.strip():
                continue
            try:
                d = json.loads(line)
                utt = Utterance(
                    utterance_id=str(d["id"]),
                    posterior=CtcPosterior(d["frames"], utterance_id=str(d["id"])),
                    reference=d.get("ref"),
                )
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                if strict:
                    raise ValueError(f"{path}:{lineno}: malformed corpus line") from exc
                print(
                    f"warning: {path}:{lineno}: skipping malformed line ({exc})",
                    file=sys.stderr,
                )
                skipped += 1
                continue
            utterances.append(utt)
    return vocab, utterances, skipped


@dataclass
class SynthSpec:
    """Knobs for the synthetic corpus generator.

    Rates: ``low_confidence_rate`` and ``substitute_rate`` apply per token,
    ``delete_rate`` per utterance (a deletion is paired with an adjacent
    low-confidence token so the lost token sits inside a maskable slot).

    Error regions are kept non-adjacent and are never placed where the
    token after the masked span equals a token inside it: segment search
    ends a hypothesis the moment it predicts the end token, so such spans
    (doubled characters, mostly) are not searchable at character
    granularity and would measure a boundary ambiguity rather than the
    accuracy trade-off the corpus is for.
    """

    utterances: int = 50
    min_tokens: int = 20
    max_tokens: int = 40
    frames_per_token: int = 3
    low_confidence_rate: float = 0.06
    low_confidence_strength: float = 0.5
    substitute_rate: float = 0.0
    delete_rate: float = 0.02
    seed: int = 0
    id_prefix: str = "utt"


def sample_reference(rng, min_tokens: int, max_tokens: int) -> str:
    """Draw words until the character budget is met."""
    words = [WORDS[int(rng.integers(len(WORDS)))]]
    target = int(rng.integers(min_tokens, max_tokens + 1))
    while len("_".join(words)) < target:
        words.append(WORDS[int(rng.integers(len(WORDS)))])
    return "_".join(words)


def _plan_regions(rng, ref: str, spec: SynthSpec) -> list[tuple[int, int, str, float]]:
    n = len(ref)
    taken = [False] * n
    regions: list[tuple[int, int, str, float]] = []

    def free(lo: int, hi: int) -> bool:
        return not any(taken[max(lo, 0) : min(hi, n)])

    def claim(lo: int, hi: int) -> None:
        for k in range(max(lo, 0), min(hi, n)):
            taken[k] = True

    if n >= 5 and rng.random() < spec.delete_rate:
        for _ in range(20):
            p = int(rng.integers(1, n - 3))
            if not free(p - 1, p + 3):
                continue
            if ref[p + 2] in (ref[p], ref[p + 1]):
                continue  # end token inside the true fill: not searchable
            claim(p - 1, p + 3)  # margins keep other regions from merging in
            regions.append((p, p + 1, "low_confidence", spec.low_confidence_strength))
            regions.append((p + 1, p + 2, "delete_token", 0.0))
            break
    for i in range(n):
        roll = rng.random()
        if roll >= spec.low_confidence_rate + spec.substitute_rate:
            continue
        if not free(i - 1, i + 2):
            continue
        if roll < spec.low_confidence_rate:
            if i + 1 < n and ref[i + 1] == ref[i]:
                continue  # doubled character: boundary-ambiguous span
            regions.append((i, i + 1, "low_confidence", spec.low_confidence_strength))
        else:
            regions.append((i, i + 1, "substitute", 0.99))
        claim(i, i + 1)
    return sorted(regions)


def generate_corpus(spec: SynthSpec, vocab: Vocabulary | None = None) -> tuple[Vocabulary, list[Utterance]]:
    vocab = vocab or default_vocabulary()
    utterances = []
    for i in range(spec.utterances):
        rng = rng_from(spec.seed, "corpus", i)
        ref = sample_reference(rng, spec.min_tokens, spec.max_tokens)
        regions = _plan_regions(rng, ref, spec)
        uid = f"{spec.id_prefix}{i:04d}"
        posterior = synth_posterior(
            ref,
            vocab,
            spec.frames_per_token,
            regions,
            seed=spec.seed + i,
            utterance_id=uid,
        )
        utterances.append(Utterance(uid, posterior, ref))
    return vocab, utterances


def masked_fraction(
    vocab: Vocabulary, utterances: Sequence[Utterance], p_thres: float = 0.95
) -> float:
    """Mean fraction of greedy tokens that fall below the threshold."""
    fractions = []
    for u in utterances:
        g = greedy_ctc_decode(u.posterior, vocab)
        if not g.tokens:
            continue
        m = mask_by_confidence(g, p_thres)
        masked = sum(len(s.original_tokens) for s in m.slots)
        fractions.append(masked / len(g.tokens))
    return sum(fractions) / len(fractions) if fractions else 0.0
