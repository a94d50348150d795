"""Confidence masking and search-segment construction.

A greedy decode becomes a masked sequence (tokens below the confidence
threshold turn into mask slots, consecutive masked tokens merge into one
slot), and each slot becomes a search segment carrying its left context and
the fixed token that terminates hypotheses for it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

from .ctc import GreedyDecodeResult
from .vocab import Vocabulary


@dataclass(frozen=True)
class FixedToken:
    token_id: int
    confidence: float


@dataclass(frozen=True)
class MaskSlot:
    original_tokens: tuple[int, ...]

    def __post_init__(self) -> None:
        if not self.original_tokens:
            raise ValueError("a mask slot must cover at least one token")


MaskedItem = Union[FixedToken, MaskSlot]


@dataclass(frozen=True)
class MaskedSequence:
    """Alternation of fixed tokens and mask slots over a greedy decode."""

    items: tuple[MaskedItem, ...]
    source: GreedyDecodeResult

    @property
    def slots(self) -> tuple[MaskSlot, ...]:
        return tuple(it for it in self.items if isinstance(it, MaskSlot))

    @property
    def num_slots(self) -> int:
        return sum(1 for it in self.items if isinstance(it, MaskSlot))

    def reconstruct(self) -> tuple[int, ...]:
        """Original greedy token stream, slots expanded to their tokens."""
        out: list[int] = []
        for it in self.items:
            if isinstance(it, MaskSlot):
                out.extend(it.original_tokens)
            else:
                out.append(it.token_id)
        return tuple(out)

    def render(self, v: Vocabulary) -> str:
        """Debug rendering with one mask marker per slot."""
        parts = []
        for it in self.items:
            if isinstance(it, MaskSlot):
                parts.append(v.tokens[v.mask_id])
            else:
                parts.append(v.tokens[it.token_id])
        return "".join(parts)


@dataclass(frozen=True)
class Segment:
    """One mask slot prepared for beam search.

    ``left_context`` holds the raw greedy tokens before the slot, including
    the original (possibly wrong) tokens of earlier slots; hypotheses for
    the slot end when they predict ``end_token``.
    """

    index: int
    left_context: tuple[int, ...]
    end_token: int
    original_tokens: tuple[int, ...]
    is_final: bool


def mask_by_confidence(
    g: GreedyDecodeResult, p_thres: float, merge: bool = True
) -> MaskedSequence:
    """Mask every token whose confidence is strictly below ``p_thres``.

    With ``merge=True`` (the default) consecutive masked tokens collapse
    into a single slot; ``merge=False`` keeps one singleton slot per masked
    token, the shape the iterative mask filler consumes.
    """
    if not 0.0 <= p_thres <= 1.0:
        raise ValueError("p_thres must lie in [0, 1]")
    items: list[MaskedItem] = []
    pending: list[int] = []
    for tok, conf in zip(g.tokens, g.confidences):
        if conf < p_thres:
            if merge:
                pending.append(tok)
            else:
                items.append(MaskSlot((tok,)))
        else:
            if pending:
                items.append(MaskSlot(tuple(pending)))
                pending = []
            items.append(FixedToken(tok, conf))
    if pending:
        items.append(MaskSlot(tuple(pending)))
    return MaskedSequence(tuple(items), g)


def build_segments(m: MaskedSequence, v: Vocabulary) -> list[Segment]:
    """Turn each slot of a merged masked sequence into a search segment."""
    segments: list[Segment] = []
    prefix: list[int] = []
    items = m.items
    for i, it in enumerate(items):
        if isinstance(it, FixedToken):
            prefix.append(it.token_id)
            continue
        is_final = i == len(items) - 1
        if is_final:
            end_token = v.eos_id
        else:
            nxt = items[i + 1]
            if isinstance(nxt, MaskSlot):
                raise ValueError("adjacent mask slots: segments need a merged sequence")
            end_token = nxt.token_id
        segments.append(
            Segment(
                index=len(segments) + 1,
                left_context=tuple(prefix),
                end_token=end_token,
                original_tokens=it.original_tokens,
                is_final=is_final,
            )
        )
        prefix.extend(it.original_tokens)
    return segments
