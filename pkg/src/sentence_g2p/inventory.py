"""Symbol inventories: graphemes, phonemes, and the decoder/CTC tables.

The phoneme set is the 39 stress-free CMU ARPABET symbols plus the reduced
vowels AX and AXR, 41 in total. Three derived tables share real-symbol ids:

  * grapheme table: <pad>=0, then ' (apostrophe), space, A..Z
  * decoder table: 41 phonemes, space, <eos>   (<eos> doubles as the
    begin-of-sequence input token)
  * ctc table:     41 phonemes, space, <blank>

Keeping phoneme/space ids identical across the decoder and CTC tables lets
decoding mix scores from both heads without remapping.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Sequence, Tuple

# 39 stress-free CMU symbols + AX, AXR (reduced vowels), alphabetical.
PHONEMES: Tuple[str, ...] = (
    "AA", "AE", "AH", "AO", "AW", "AX", "AXR", "AY",
    "B", "CH", "D", "DH", "EH", "ER", "EY", "F", "G",
    "HH", "IH", "IY", "JH", "K", "L", "M", "N", "NG",
    "OW", "OY", "P", "R", "S", "SH", "T", "TH", "UH",
    "UW", "V", "W", "Y", "Z", "ZH",
)

SPACE = " "
EOS = "<eos>"
BLANK = "<blank>"
PAD = "<pad>"

GRAPHEMES: Tuple[str, ...] = (PAD, "'", SPACE) + tuple(chr(c) for c in range(ord("A"), ord("Z") + 1))


@dataclass(frozen=True)
class SymbolTable:
    """Immutable bidirectional symbol/id mapping."""

    symbols: Tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "_index", {s: i for i, s in enumerate(self.symbols)})
        if len(self._index) != len(self.symbols):
            raise ValueError("duplicate symbols in table")

    def __len__(self) -> int:
        return len(self.symbols)

    def id(self, symbol: str) -> int:
        try:
            return self._index[symbol]
        except KeyError:
            raise KeyError(f"unknown symbol {symbol!r}") from None

    def symbol(self, idx: int) -> str:
        return self.symbols[idx]

    def encode(self, symbols: Sequence[str]) -> List[int]:
        return [self.id(s) for s in symbols]

    def decode(self, ids: Sequence[int]) -> List[str]:
        return [self.symbols[i] for i in ids]

    def __contains__(self, symbol: str) -> bool:
        return symbol in self._index

    def to_dict(self) -> Dict:
        return {"symbols": list(self.symbols)}

    @classmethod
    def from_dict(cls, d: Dict) -> "SymbolTable":
        return cls(tuple(d["symbols"]))


def grapheme_table() -> SymbolTable:
    return SymbolTable(GRAPHEMES)


def decoder_table() -> SymbolTable:
    """Phonemes + space + <eos>; output vocabulary of the attention decoder."""
    return SymbolTable(PHONEMES + (SPACE, EOS))


def ctc_table() -> SymbolTable:
    """Phonemes + space + <blank>; output vocabulary of the CTC head."""
    return SymbolTable(PHONEMES + (SPACE, BLANK))


def encode_text(text: str, table: SymbolTable) -> List[int]:
    """Character ids for an already-normalized string."""
    return [table.id(ch) for ch in text]
