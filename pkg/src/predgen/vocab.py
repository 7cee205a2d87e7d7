"""Character-level vocabulary over a fixed small alphabet."""

from __future__ import annotations

from dataclasses import dataclass, field

PAD = 0
BOS = 1
SEP = 2
EOS = 3

SPECIAL_NAMES = {PAD: "<pad>", BOS: "<bos>", SEP: "<sep>", EOS: "<eos>"}

ALPHABET = "0123456789.-abcdefghijklmnopqrstuvwxyz "


class VocabError(ValueError):
    """A symbol or id outside the vocabulary."""


@dataclass(frozen=True)
class Vocab:
    """Dense symbol<->id map; ids 0-3 are reserved for the specials."""

    alphabet: str = ALPHABET
    _to_id: dict = field(init=False, repr=False)
    _to_sym: dict = field(init=False, repr=False)

    def __post_init__(self):
        to_id = {ch: i + 4 for i, ch in enumerate(self.alphabet)}
        to_sym = {i: ch for ch, i in to_id.items()}
        object.__setattr__(self, "_to_id", to_id)
        object.__setattr__(self, "_to_sym", to_sym)

    def __len__(self) -> int:
        return 4 + len(self.alphabet)

    def encode(self, text: str) -> list[int]:
        try:
            return [self._to_id[ch] for ch in text]
        except KeyError as exc:
            raise VocabError(f"symbol {exc.args[0]!r} not in alphabet") from None

    def decode(self, ids) -> str:
        chars = []
        for i in ids:
            i = int(i)
            if i not in self._to_sym:
                name = SPECIAL_NAMES.get(i, str(i))
                raise VocabError(f"id {name} has no character form")
            chars.append(self._to_sym[i])
        return "".join(chars)

    def contains_symbol(self, ch: str) -> bool:
        return ch in self._to_id


_DEFAULT = Vocab()


def default_vocab() -> Vocab:
    return _DEFAULT
