"""Token vocabulary with the special symbols the decoders rely on.

Character-level tokens are the default unit; specials occupy fixed slots
(blank=0, mask=1, sos=2, eos=3) so serialized posteriors stay portable.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

BLANK_TOKEN = "<blank>"
MASK_TOKEN = "#"
SOS_TOKEN = "<sos>"
EOS_TOKEN = "<eos>"

RESERVED_TOKENS = (BLANK_TOKEN, MASK_TOKEN, SOS_TOKEN, EOS_TOKEN)

BLANK_ID = 0
MASK_ID = 1
SOS_ID = 2
EOS_ID = 3
_NUM_SPECIALS = 4


@dataclass(frozen=True)
class Vocabulary:
    """Immutable token table. Index 0..3 are blank/mask/sos/eos."""

    tokens: tuple[str, ...]
    blank_id: int = BLANK_ID
    mask_id: int = MASK_ID
    sos_id: int = SOS_ID
    eos_id: int = EOS_ID

    def __post_init__(self) -> None:
        if len(set(self.tokens)) != len(self.tokens):
            raise ValueError("vocabulary tokens must be unique")
        specials = {self.blank_id, self.mask_id, self.sos_id, self.eos_id}
        if len(specials) != 4 or not all(0 <= i < len(self.tokens) for i in specials):
            raise ValueError("special ids must be distinct and in range")
        object.__setattr__(self, "_stoi", {t: i for i, t in enumerate(self.tokens)})

    @property
    def size(self) -> int:
        return len(self.tokens)

    @property
    def special_ids(self) -> frozenset[int]:
        return frozenset((self.blank_id, self.mask_id, self.sos_id, self.eos_id))

    @property
    def surface_ids(self) -> tuple[int, ...]:
        specials = self.special_ids
        return tuple(i for i in range(len(self.tokens)) if i not in specials)

    def is_special(self, token_id: int) -> bool:
        return token_id in self.special_ids

    def token_to_id(self, token: str) -> int:
        try:
            return self._stoi[token]  # type: ignore[attr-defined]
        except KeyError:
            raise ValueError(f"unknown token {token!r}") from None

    def id_to_token(self, token_id: int) -> str:
        if not 0 <= token_id < len(self.tokens):
            raise ValueError(f"token id {token_id} out of range")
        return self.tokens[token_id]

    def encode(self, text: str) -> list[int]:
        """Character-level encoding; special symbols are not encodable."""
        ids = []
        stoi = self._stoi  # type: ignore[attr-defined]
        specials = self.special_ids
        for ch in text:
            idx = stoi.get(ch)
            if idx is None or idx in specials:
                raise ValueError(f"unknown character {ch!r}")
            ids.append(idx)
        return ids

    def decode(self, ids: Iterable[int], debug: bool = False) -> str:
        """Render ids to text. Surface mode strips specials; debug renders
        them as their marker strings ("#", "<sos>", ...)."""
        parts = []
        specials = self.special_ids
        for i in ids:
            if not 0 <= i < len(self.tokens):
                raise ValueError(f"token id {i} out of range")
            if i in specials:
                if debug:
                    parts.append(self.tokens[i])
                continue
            parts.append(self.tokens[i])
        return "".join(parts)

    def to_json_dict(self) -> dict:
        return {
            "tokens": list(self.tokens),
            "blank_id": self.blank_id,
            "mask_id": self.mask_id,
            "sos_id": self.sos_id,
            "eos_id": self.eos_id,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "Vocabulary":
        return cls(
            tokens=tuple(d["tokens"]),
            blank_id=int(d["blank_id"]),
            mask_id=int(d["mask_id"]),
            sos_id=int(d["sos_id"]),
            eos_id=int(d["eos_id"]),
        )


def build_vocabulary(token_list: Iterable[str]) -> Vocabulary:
    """Build a vocabulary from user tokens; specials are prepended at the
    fixed layout blank=0, mask=1, sos=2, eos=3."""
    user = list(token_list)
    if not user:
        raise ValueError("token list must be non-empty")
    seen: set[str] = set()
    for t in user:
        if t in RESERVED_TOKENS:
            raise ValueError(f"token {t!r} collides with a reserved special symbol")
        if t in seen:
            raise ValueError(f"duplicate token {t!r}")
        seen.add(t)
    return Vocabulary(tokens=tuple(RESERVED_TOKENS) + tuple(user))


def encode_text(v: Vocabulary, text: str) -> list[int]:
    return v.encode(text)


def decode_tokens(v: Vocabulary, ids: Iterable[int], debug: bool = False) -> str:
    return v.decode(ids, debug=debug)
